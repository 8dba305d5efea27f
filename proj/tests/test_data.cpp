#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "dora/data.hpp"

using namespace dora;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir(const std::string& name) {
    path = fs::temp_directory_path() / ("dora_test_" + name);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str() const { return path.string(); }
};

// writes a tiny fake video of solid-color frames
void write_fake_video(const std::string& dir, int frames) {
  fs::create_directories(dir);
  for (int i = 0; i < frames; ++i) {
    Frame<float> f(4, 4, 3, static_cast<float>(i % 200) / 255.0f);
    write_ppm(VideoSource::frame_path(dir, i), f);
  }
}

}  // namespace

TEST_CASE("ppm round trip preserves quantized values") {
  TempDir tmp("ppm");
  Frame<float> f(5, 7, 3);
  Rng rng(1);
  for (auto& v : f.pix)
    v = static_cast<float>(rng.uniform_int(256)) / 255.0f; // exactly representable
  std::string path = tmp.str() + "/x.ppm";
  write_ppm(path, f);
  Frame<float> back = read_ppm(path);
  REQUIRE(back.height == 5);
  REQUIRE(back.width == 7);
  for (size_t i = 0; i < f.pix.size(); ++i) CHECK(back.pix[i] == f.pix[i]);
}

TEST_CASE("pgm round trip and error paths") {
  TempDir tmp("pgm");
  Tensor<float> m({3, 4});
  Rng rng(2);
  for (auto& v : m.data) v = static_cast<float>(rng.uniform_int(256)) / 255.0f;
  std::string path = tmp.str() + "/m.pgm";
  write_pgm(path, m);
  auto back = read_pgm(path);
  for (int64_t i = 0; i < m.size(); ++i) CHECK(back[i] == m[i]);

  SUBCASE("bad magic") {
    std::ofstream out(tmp.str() + "/bad.pgm", std::ios::binary);
    out << "P2\n3 4\n255\n";
    out.close();
    CHECK_THROWS_AS(read_pgm(tmp.str() + "/bad.pgm"), data_error);
  }
  SUBCASE("truncated payload") {
    std::ofstream out(tmp.str() + "/trunc.ppm", std::ios::binary);
    out << "P6\n4 4\n255\n";
    out << "xy"; // far too short
    out.close();
    CHECK_THROWS_AS(read_ppm(tmp.str() + "/trunc.ppm"), data_error);
  }
  SUBCASE("decode failure is a hard error, not a skip") {
    CHECK_THROWS_AS(read_ppm(tmp.str() + "/does_not_exist.ppm"), data_error);
  }
}

TEST_CASE("clip sampling covers exactly the valid starts") {
  TempDir tmp("clips");
  write_fake_video(tmp.str(), 211);
  auto src = VideoSource::open(tmp.str());
  REQUIRE(src.frame_count == 211);

  SUBCASE("start 0, T=8, stride 30 spans frames 0..210") {
    ClipSpec spec{0, 8, 30};
    auto idx = spec.frame_indices();
    REQUIRE(idx.size() == 8);
    CHECK(idx.front() == 0);
    CHECK(idx[1] == 30);
    CHECK(idx.back() == 210);
  }
  SUBCASE("frame_count 211 admits only start 0") {
    for (uint64_t s = 0; s < 500; ++s) {
      auto spec = sample_clip(src, 8, 30, s);
      CHECK(spec.start == 0);
    }
  }
  SUBCASE("too short videos are an error") {
    CHECK_THROWS_AS(sample_clip(src, 8, 31, 0), data_error);
  }
  SUBCASE("seeded draws cover all valid starts roughly uniformly") {
    // T=2, stride 30 on 211 frames: starts 0..180
    const int n_starts = 181;
    std::vector<int> counts(n_starts, 0);
    const int draws = 10000;
    for (uint64_t s = 0; s < draws; ++s) {
      auto spec = sample_clip(src, 2, 30, s);
      REQUIRE(spec.start >= 0);
      REQUIRE(spec.start < n_starts);
      counts[static_cast<size_t>(spec.start)]++;
    }
    // chi^2 sanity: with ~55 expected per cell, |obs - exp| should stay small
    double chi2 = 0;
    double expect = static_cast<double>(draws) / n_starts;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    CHECK(chi2 < 1.5 * n_starts); // crude bound, catches gross non-uniformity
    CHECK(*std::min_element(counts.begin(), counts.end()) > 0);
  }
}

TEST_CASE("cut-aware sampling never crosses a cut") {
  TempDir tmp("cuts");
  write_fake_video(tmp.str(), 211);

  SUBCASE("a single mid-video cut rejects the only full-length clip") {
    std::ofstream cuts(tmp.str() + "/cuts.txt");
    cuts << "100\n";
    cuts.close();
    auto src = VideoSource::open(tmp.str(), tmp.str() + "/cuts.txt");
    ClipSpec full{0, 8, 30};
    CHECK(clip_crosses_cut(src, full));
    CHECK_THROWS_AS(sample_clip_cut_aware(src, 8, 30, 0), data_error);
  }
  SUBCASE("no cuts behaves exactly like sample_clip") {
    auto src = VideoSource::open(tmp.str());
    for (uint64_t s = 0; s < 50; ++s)
      CHECK(sample_clip_cut_aware(src, 3, 10, s).start == sample_clip(src, 3, 10, s).start);
  }
  SUBCASE("cuts at 50 and 150: samples live in the brute-force valid set") {
    std::ofstream cuts(tmp.str() + "/cuts2.txt");
    cuts << "50\n150\n";
    cuts.close();
    auto src = VideoSource::open(tmp.str(), tmp.str() + "/cuts2.txt");

    // independent enumeration with the clip-span containment rule
    std::set<int> valid;
    for (int s = 0; s + 30 <= 210; ++s) {
      bool crosses = false;
      for (int c : {50, 150})
        if (c >= s && c <= s + 30) crosses = true;
      if (!crosses) valid.insert(s);
    }
    REQUIRE(!valid.empty());
    for (uint64_t s = 0; s < 2000; ++s) {
      auto spec = sample_clip_cut_aware(src, 2, 30, s);
      CHECK(valid.count(spec.start) == 1);
    }
  }
  SUBCASE("cut list must be sorted and in range") {
    std::ofstream bad1(tmp.str() + "/bad1.txt");
    bad1 << "60\n50\n";
    bad1.close();
    CHECK_THROWS_AS(VideoSource::open(tmp.str(), tmp.str() + "/bad1.txt"), data_error);
    std::ofstream bad2(tmp.str() + "/bad2.txt");
    bad2 << "9999\n";
    bad2.close();
    CHECK_THROWS_AS(VideoSource::open(tmp.str(), tmp.str() + "/bad2.txt"), data_error);
  }
}

TEST_CASE("base crop windows") {
  Rng rng(3);
  Frame<float> frame(10, 12, 3);
  for (auto& v : frame.pix) v = static_cast<float>(rng.uniform());

  SUBCASE("crop of the full frame is the identity") {
    Frame<float> square(8, 8, 3);
    for (auto& v : square.pix) v = static_cast<float>(rng.uniform());
    Rng wrng(4);
    auto w = choose_crop_window(8, 8, 8, wrng);
    CHECK(w.x0 == 0);
    CHECK(w.y0 == 0);
    auto out = base_crop(square, w);
    for (size_t i = 0; i < square.pix.size(); ++i) CHECK(out.pix[i] == square.pix[i]);
  }
  SUBCASE("window (0,0) equals the top-left block") {
    CropWindow w{0, 0, 6};
    auto out = base_crop(frame, w);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x)
        for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == frame.at(y, x, c));
  }
  SUBCASE("one window is reused across the frames of a clip") {
    Rng wrng(5);
    auto w1 = choose_crop_window(10, 12, 6, wrng);
    Rng wrng2(5);
    auto w2 = choose_crop_window(10, 12, 6, wrng2);
    CHECK(w1.x0 == w2.x0);
    CHECK(w1.y0 == w2.y0);
  }
  SUBCASE("frames smaller than the crop are an error") {
    Rng wrng(6);
    CHECK_THROWS_AS(choose_crop_window(4, 4, 6, wrng), data_error);
  }
}

TEST_CASE("make_views respects scales, determinism and pixel range") {
  Rng rng(7);
  Frame<float> base(64, 64, 3);
  for (auto& v : base.pix) v = static_cast<float>(rng.uniform());
  AugmentConfig cfg;

  SUBCASE("two globals and n_local locals at their resolutions") {
    auto views = make_views(base, cfg, Rng(8));
    REQUIRE(views.global.size() == 2);
    REQUIRE(views.local.size() == static_cast<size_t>(cfg.n_local));
    for (const auto& v : views.global) {
      CHECK(v.image.height == 64);
      CHECK(v.image.width == 64);
    }
    for (const auto& v : views.local) {
      CHECK(v.image.height == 32);
      CHECK(v.image.width == 32);
    }
  }
  SUBCASE("crop areas stay inside the configured scale ranges") {
    for (uint64_t s = 0; s < 30; ++s) {
      auto views = make_views(base, cfg, Rng(100 + s));
      for (const auto& v : views.global) {
        double area = static_cast<double>(v.geom.side) * v.geom.side / (64.0 * 64.0);
        CHECK(area >= 0.4 * 0.95);
        CHECK(area <= 1.0);
      }
      for (const auto& v : views.local) {
        double area = static_cast<double>(v.geom.side) * v.geom.side / (64.0 * 64.0);
        CHECK(area >= 0.05 * 0.9);
        CHECK(area <= 0.4 * 1.1);
      }
    }
  }
  SUBCASE("identical seeds give identical view sets") {
    auto a = make_views(base, cfg, Rng(9));
    auto b = make_views(base, cfg, Rng(9));
    for (size_t i = 0; i < a.global.size(); ++i) {
      CHECK(a.global[i].geom.x0 == b.global[i].geom.x0);
      CHECK(a.global[i].image.pix == b.global[i].image.pix);
    }
    for (size_t i = 0; i < a.local.size(); ++i)
      CHECK(a.local[i].image.pix == b.local[i].image.pix);
  }
  SUBCASE("augmented pixels stay in [0,1]") {
    for (uint64_t s = 0; s < 20; ++s) {
      auto views = make_views(base, cfg, Rng(200 + s));
      for (const auto& v : views.global)
        for (float px : v.image.pix) {
          CHECK(px >= 0.0f);
          CHECK(px <= 1.0f);
        }
      for (const auto& v : views.local)
        for (float px : v.image.pix) {
          CHECK(px >= 0.0f);
          CHECK(px <= 1.0f);
        }
    }
  }
  SUBCASE("geometry records map view pixels back into the crop window") {
    for (uint64_t s = 0; s < 10; ++s) {
      auto views = make_views(base, cfg, Rng(300 + s));
      for (const auto& v : views.local) {
        auto [y0, x0] = view_to_base(v.geom, 0, 0);
        auto [y1, x1] = view_to_base(v.geom, v.geom.out_size - 1, v.geom.out_size - 1);
        for (double coord : {y0, x0, y1, x1}) {
          CHECK(coord >= -1.0);
          CHECK(coord <= 64.0);
        }
        // the window itself
        CHECK(std::min({y0, y1}) >= v.geom.y0 - 1.0);
        CHECK(std::max({y0, y1}) <= v.geom.y0 + v.geom.side + 1.0);
        CHECK(std::min({x0, x1}) >= v.geom.x0 - 1.0);
        CHECK(std::max({x0, x1}) <= v.geom.x0 + v.geom.side + 1.0);
      }
    }
  }
}

TEST_CASE("synthetic clips carry consistent ground truth") {
  SUBCASE("single static object has identical masks across frames") {
    auto clip = gen_synthetic_clip<float>(1, 32, 4, 42, SynthMotion::none());
    REQUIRE(clip.frames.size() == 4);
    for (int t = 1; t < 4; ++t)
      CHECK(clip.masks[t][0].data == clip.masks[0][0].data);
  }
  SUBCASE("masks are pairwise disjoint in every frame") {
    auto clip = gen_synthetic_clip<float>(3, 48, 3, 77);
    for (size_t t = 0; t < clip.frames.size(); ++t)
      for (int64_t p = 0; p < clip.masks[t][0].size(); ++p) {
        int covered = 0;
        for (int j = 0; j < 3; ++j) covered += clip.masks[t][j][p] ? 1 : 0;
        CHECK(covered <= 1);
      }
  }
  SUBCASE("boxes equal the pixel-scan tight bounding boxes") {
    auto clip = gen_synthetic_clip<float>(3, 48, 2, 123);
    for (size_t t = 0; t < clip.frames.size(); ++t)
      for (int j = 0; j < 3; ++j) {
        const auto& m = clip.masks[t][j];
        int x0 = 48, y0 = 48, x1 = -1, y1 = -1;
        for (int y = 0; y < 48; ++y)
          for (int x = 0; x < 48; ++x)
            if (m(y, x)) {
              x0 = std::min(x0, x);
              x1 = std::max(x1, x);
              y0 = std::min(y0, y);
              y1 = std::max(y1, y);
            }
        CHECK(clip.boxes[t][j].x0 == x0);
        CHECK(clip.boxes[t][j].x1 == x1);
        CHECK(clip.boxes[t][j].y0 == y0);
        CHECK(clip.boxes[t][j].y1 == y1);
      }
  }
  SUBCASE("determinism by seed") {
    auto a = gen_synthetic_clip<float>(2, 32, 3, 5);
    auto b = gen_synthetic_clip<float>(2, 32, 3, 5);
    for (size_t t = 0; t < 3; ++t) CHECK(a.frames[t].pix == b.frames[t].pix);
  }
  SUBCASE("shape kinds derive from the seed") {
    auto clip = gen_synthetic_clip<float>(3, 48, 1, 10);
    for (int j = 0; j < 3; ++j)
      CHECK(static_cast<int>(clip.kinds[j]) == static_cast<int>((10 + j) % 3));
  }
  SUBCASE("frames are valid frame tensors") {
    auto clip = gen_synthetic_clip<float>(3, 32, 2, 99);
    for (const auto& f : clip.frames) validate_frame(f);
  }
}

TEST_CASE("synthetic dataset layout on disk") {
  TempDir tmp("synthds");
  write_synthetic_dataset(tmp.str(), 3, 2, 24, 2, 2024);

  auto entries = read_manifest(tmp.str());
  REQUIRE(entries.size() == 3);
  for (const auto& e : entries) {
    CHECK(e.n_objects == 2);
    CHECK(e.frames == 2);
    std::string dir = tmp.str() + "/clips/" + std::to_string(e.clip_id);
    CHECK(fs::exists(dir + "/frame_000000.ppm"));
    CHECK(fs::exists(dir + "/frame_000001.ppm"));
    CHECK(fs::exists(dir + "/mask_obj0_000000.pgm"));
    CHECK(fs::exists(dir + "/mask_obj1_000001.pgm"));
  }

  SUBCASE("regeneration is byte-identical") {
    TempDir tmp2("synthds2");
    write_synthetic_dataset(tmp2.str(), 3, 2, 24, 2, 2024);
    for (const auto& e : entries) {
      std::string p1 = tmp.str() + "/clips/" + std::to_string(e.clip_id) + "/frame_000000.ppm";
      std::string p2 = tmp2.str() + "/clips/" + std::to_string(e.clip_id) + "/frame_000000.ppm";
      std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
      std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
      std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
      CHECK(s1 == s2);
    }
  }
}
