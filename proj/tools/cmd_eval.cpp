#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cli_util.hpp"
#include "commands.hpp"
#include "dora/eval.hpp"
#include "dora/tracker.hpp"
#include "dora/trainer.hpp"

namespace dora::cli {
namespace {

using nlohmann::json;

struct Reports {
  std::ofstream csv;
  std::ofstream jsonl;

  Reports(const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    csv.open(out_dir + "/report.csv");
    jsonl.open(out_dir + "/detail.jsonl");
    if (!csv || !jsonl) throw data_error(out_dir + ": cannot write reports");
    csv << "metric,value\n";
  }

  void metric(const std::string& name, double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    csv << name << "," << buf << "\n";
    std::printf("%s = %s\n", name.c_str(), buf);
  }

  void detail(const json& j) { jsonl << j.dump() << "\n"; }
};

Frame<float> first_frame(const std::string& dataset, const ManifestEntry& e) {
  return read_ppm(dataset + "/clips/" + std::to_string(e.clip_id) +
                  "/frame_000000.ppm");
}

BinaryMask load_gt_mask(const std::string& dataset, const ManifestEntry& e, int obj,
                        int frame) {
  char name[48];
  std::snprintf(name, sizeof(name), "/mask_obj%d_%06d.pgm", obj, frame);
  Tensor<float> raw =
      read_pgm(dataset + "/clips/" + std::to_string(e.clip_id) + name);
  BinaryMask m;
  m.shape = raw.shape;
  m.data.resize(raw.data.size());
  for (size_t i = 0; i < raw.data.size(); ++i) m.data[i] = raw.data[i] > 0.5f ? 1 : 0;
  return m;
}

Tensor<float> cls_feature(const ModelParams<float>& model, const Frame<float>& frame) {
  return encode(model.encoder, frame).cls_embedding();
}

int eval_knn(const LoadedModel& model, const std::string& dataset, int knn_k,
             Reports& rep) {
  auto entries = read_manifest(dataset);
  FeatureBank bank;
  std::vector<std::pair<int, Tensor<float>>> queries; // (label, feature)
  std::vector<int> query_ids;
  for (const auto& e : entries) {
    if (e.n_objects != 1)
      throw data_error("eval knn: needs single-object clips (labels = shape kind)");
    Tensor<float> f = cls_feature(model.teacher, first_frame(dataset, e));
    if (e.clip_id % 2 == 0) {
      bank.add(f, e.kind_of(0));
    } else {
      queries.push_back({e.kind_of(0), f});
      query_ids.push_back(e.clip_id);
    }
  }
  if (static_cast<int>(bank.size()) < knn_k)
    throw data_error("eval knn: bank smaller than k; generate more clips");
  int correct = 0;
  for (size_t i = 0; i < queries.size(); ++i) {
    int pred = knn_classify(bank, queries[i].second, knn_k);
    bool ok = pred == queries[i].first;
    correct += ok ? 1 : 0;
    rep.detail({{"image", query_ids[i]},
                {"label", queries[i].first},
                {"pred", pred},
                {"correct", ok}});
  }
  rep.metric("knn_accuracy",
             static_cast<double>(correct) / static_cast<double>(queries.size()));
  return kExitOk;
}

// LOST-style single-image discovery: average the [cls]-attention across heads,
// keep `mass` of it, box the largest component.
BoxRect discover_box(const LoadedModel& model, const Frame<float>& frame, double mass) {
  EncoderOutput<float> enc = encode(model.teacher.encoder, frame);
  Tensor<float> a = cls_attention(enc.attn);
  Tensor<float> avg({1, a.cols()});
  for (int64_t j = 0; j < a.cols(); ++j) {
    float s = 0;
    for (int64_t h = 0; h < a.rows(); ++h) s += a(h, j);
    avg[j] = s / static_cast<float>(a.rows());
  }
  const int patch = model.cfg.patch;
  const int grid = frame.height / patch;
  ObjectMaskImage<float> up = upsample_map(avg, grid, grid, frame.height, frame.width);
  BinaryMask mask = attention_to_mask(up, mass);
  return bounding_box(mask);
}

int eval_corloc(const LoadedModel& model, const std::string& dataset, double mass,
                Reports& rep) {
  auto entries = read_manifest(dataset);
  std::vector<BoxRect> preds;
  std::vector<std::vector<BoxRect>> gts;
  for (const auto& e : entries) {
    Frame<float> frame = first_frame(dataset, e);
    BoxRect pred = discover_box(model, frame, mass);
    std::vector<BoxRect> gt;
    for (int j = 0; j < e.n_objects; ++j)
      gt.push_back(bounding_box(load_gt_mask(dataset, e, j, 0)));
    double best = 0;
    for (const auto& g : gt) best = std::max(best, iou(pred, g));
    rep.detail({{"image", e.clip_id}, {"iou", best}, {"correct", best >= 0.5}});
    preds.push_back(pred);
    gts.push_back(std::move(gt));
  }
  rep.metric("corloc", corloc(preds, gts));
  return kExitOk;
}

int eval_jaccard(const LoadedModel& model, const std::string& dataset, double mass,
                 int k, Reports& rep) {
  auto entries = read_manifest(dataset);
  SinkhornConfig sk{model.cfg.sk_epsilon, model.cfg.sk_tolerance,
                    model.cfg.sk_max_iterations};
  double total = 0;
  int64_t count = 0;
  for (const auto& e : entries) {
    Frame<float> frame = first_frame(dataset, e);
    std::vector<Frame<float>> single = {frame};
    int k_here = std::min(k, e.n_objects > 0 ? std::max(e.n_objects, 1) : k);
    TrackResult<float> res = track_clip(model.teacher.encoder, single, k_here,
                                        e.seed, sk);
    std::vector<BinaryMask> pred_masks;
    for (int i = 0; i < k_here; ++i) {
      ObjectMaskImage<float> up =
          upsample_map(row(res.refined_maps[0].T, i), res.grid_rows, res.grid_cols,
                       frame.height, frame.width);
      pred_masks.push_back(attention_to_mask(up, mass));
    }
    double image_sum = 0;
    for (int j = 0; j < e.n_objects; ++j) {
      BinaryMask gt = load_gt_mask(dataset, e, j, 0);
      double best = 0;
      for (const auto& p : pred_masks) best = std::max(best, jaccard(p, gt));
      image_sum += best;
      ++count;
    }
    rep.detail({{"image", e.clip_id},
                {"jaccard", image_sum / std::max(1, e.n_objects)},
                {"correct", image_sum / std::max(1, e.n_objects) >= 0.5}});
    total += image_sum;
  }
  rep.metric("jaccard", total / static_cast<double>(count));
  return kExitOk;
}

}  // namespace

int cmd_eval(const CommonOpts& common, const std::string& checkpoint,
             const std::string& data_dir, const std::string& protocol,
             const std::string& out_dir, double mass, int knn_k) {
  (void)common;
  return guarded([&]() -> int {
    LoadedModel model = load_model(checkpoint);
    Reports rep(out_dir);
    if (protocol == "knn") return eval_knn(model, data_dir, knn_k, rep);
    if (protocol == "corloc") return eval_corloc(model, data_dir, mass, rep);
    if (protocol == "jaccard")
      return eval_jaccard(model, data_dir, mass, model.cfg.k_objects, rep);
    throw config_error("eval: unknown protocol '" + protocol +
                       "' (knn | corloc | jaccard)");
  });
}

}  // namespace dora::cli
