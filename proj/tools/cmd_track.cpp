#include <cstdio>
#include <filesystem>

#include "cli_util.hpp"
#include "commands.hpp"
#include "dora/image_io.hpp"
#include "dora/tracker.hpp"
#include "dora/trainer.hpp"

namespace dora::cli {
namespace {

Tensor<float> to_gray(const Frame<float>& f) {
  Tensor<float> g({f.height, f.width});
  for (int y = 0; y < f.height; ++y)
    for (int x = 0; x < f.width; ++x) {
      if (f.channels == 3)
        g(y, x) = 0.299f * f.at(y, x, 0) + 0.587f * f.at(y, x, 1) +
                  0.114f * f.at(y, x, 2);
      else
        g(y, x) = f.at(y, x, 0);
    }
  return g;
}

}  // namespace

int cmd_track(const CommonOpts& common, const std::string& checkpoint,
              const std::string& clip_dir, const std::string& out_dir, int k,
              bool no_overlay) {
  return guarded([&]() -> int {
    if (k > 3 && !no_overlay)
      throw config_error(
          "track: overlays encode at most 3 objects in R/G/B; pass --no-overlay "
          "for k > 3 (raw maps are still written)");

    LoadedModel model = load_model(checkpoint);
    VideoSource src = VideoSource::open(clip_dir);
    std::vector<Frame<float>> frames;
    for (int t = 0; t < src.frame_count; ++t) frames.push_back(src.load_frame(t));

    SinkhornConfig sk{model.cfg.sk_epsilon, model.cfg.sk_tolerance,
                      model.cfg.sk_max_iterations};
    TrackResult<float> res =
        track_clip(model.teacher.encoder, frames, k, common.seed, sk);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    char name[64];
    for (size_t t = 0; t < frames.size(); ++t) {
      const auto& frame = frames[t];
      std::vector<ObjectMaskImage<float>> maps;
      for (int i = 0; i < k; ++i)
        maps.push_back(upsample_map(row(res.refined_maps[t].T, i), res.grid_rows,
                                    res.grid_cols, frame.height, frame.width));

      for (int i = 0; i < k; ++i) {
        std::snprintf(name, sizeof(name), "/map_obj%d_%06zu.pgm", i, t);
        write_pgm(out_dir + name, maps[static_cast<size_t>(i)]);
      }

      if (!no_overlay) {
        // objects 1..3 modulate the R, G, B channels of the grayscale frame
        Tensor<float> gray = to_gray(frame);
        Frame<float> overlay(frame.height, frame.width, 3);
        for (int y = 0; y < frame.height; ++y)
          for (int x = 0; x < frame.width; ++x)
            for (int c = 0; c < 3; ++c)
              overlay.at(y, x, c) =
                  c < k ? gray(y, x) * maps[static_cast<size_t>(c)](y, x) : 0.0f;
        std::snprintf(name, sizeof(name), "/overlay_%06zu.ppm", t);
        write_ppm(out_dir + name, overlay);
      }
    }
    std::printf("tracked %d objects over %zu frames into %s\n", k, frames.size(),
                out_dir.c_str());
    return kExitOk;
  });
}

}  // namespace dora::cli
