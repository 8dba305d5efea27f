#pragma once

#include <cstdint>
#include <string>

#include "dora/encoder.hpp"
#include "dora/errors.hpp"

namespace dora {

/// Every knob of a training run. Defaults are the desk-scale recipe:
/// 64x64 global views with 8-pixel patches (64 tokens), 32x32 local views.
struct TrainConfig {
  // schedule
  double lr_base = 5e-4;
  double lr_min = 1e-6;
  int warmup_steps = 50;
  int total_steps = 500;
  double weight_decay = 0.04;
  std::string optimizer = "adam"; // adam | sgd
  double sgd_momentum = 0.9;

  // batch and clips
  int batch_clips = 4;
  int k_objects = 3;
  int clip_frames = 4; // T
  int clip_stride = 30;

  // entropic transport
  double sk_epsilon = 0.05;
  double sk_tolerance = 1e-6;
  int sk_max_iterations = 100;

  // teacher
  double ema_alpha = 0.996;
  std::string ema_schedule = "constant"; // constant | cosine
  double tau_student = 0.1;
  double tau_teacher = 0.04;
  double center_momentum = 0.9;
  int head_out_dim = 256;

  // encoder
  int dim = 48;
  int heads = 6;
  int heads_last = 6;
  int depth = 3;
  int patch = 8;
  std::string tracker_layer = "last"; // last | second_last

  // data and views
  int crop_size = 64; // base crop taken from each frame before multi-crop
  int global_size = 64;
  int local_size = 32;
  int n_local = 6;
  double global_scale_min = 0.4, global_scale_max = 1.0;
  double local_scale_min = 0.05, local_scale_max = 0.4;

  // run
  uint64_t seed = 0;
  int checkpoint_every = 100;

  void validate() const;
  EncoderConfig encoder_config() const;
};

/// Parses a UTF-8 `key = value` file. Blank lines and lines starting with '#'
/// are ignored; unknown keys are errors.
TrainConfig parse_train_config(const std::string& path);

/// Applies one `key=value` override; unknown keys or unparsable values are
/// errors.
void apply_override(TrainConfig& cfg, const std::string& assignment);

/// Canonical `key = value` dump; parse(dump(cfg)) == cfg.
std::string config_to_string(const TrainConfig& cfg);

TrainConfig parse_config_string(const std::string& text);

}  // namespace dora
