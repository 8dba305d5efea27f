#pragma once

#include <filesystem>
#include <string>

#include "commands.hpp"
#include "dora/config.hpp"
#include "dora/trainer.hpp"

namespace dora::cli {

inline TrainConfig load_config(const CommonOpts& common) {
  TrainConfig cfg = common.config_path.empty()
                        ? TrainConfig{}
                        : parse_train_config(common.config_path);
  for (const auto& o : common.overrides) apply_override(cfg, o);
  if (common.seed_set) cfg.seed = common.seed;
  cfg.validate();
  return cfg;
}

/// Dataset directory (manifest.txt) or single-video directory (frame files,
/// optional cuts.txt).
inline ClipSampler open_clip_sampler(const std::string& data_dir,
                                     const TrainConfig& cfg) {
  namespace fs = std::filesystem;
  if (!fs::exists(data_dir)) throw data_error(data_dir + ": no such directory");
  if (fs::exists(data_dir + "/manifest.txt"))
    return dataset_clip_sampler(data_dir, cfg.clip_frames);
  std::string cuts = fs::exists(data_dir + "/cuts.txt") ? data_dir + "/cuts.txt" : "";
  return video_clip_sampler(data_dir, cfg.clip_frames, cfg.clip_stride, cuts);
}

}  // namespace dora::cli
