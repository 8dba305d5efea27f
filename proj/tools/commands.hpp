#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dora::cli {

// exit codes shared by every subcommand
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;
inline constexpr int kExitUsage = 64;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> overrides; // --set key=value
  uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_train(const CommonOpts& common, const std::string& data_dir,
              const std::string& out_dir);

int cmd_track(const CommonOpts& common, const std::string& checkpoint,
              const std::string& clip_dir, const std::string& out_dir, int k,
              bool no_overlay);

int cmd_synth(const CommonOpts& common, const std::string& out_dir, int n_clips,
              int n_objects, int size, int frames);

int cmd_eval(const CommonOpts& common, const std::string& checkpoint,
             const std::string& data_dir, const std::string& protocol,
             const std::string& out_dir, double mass, int knn_k);

/// Maps any propagated exception to the documented exit code, printing a
/// machine-readable `error:` line on stderr.
int run_guarded(int (*body)(void*), void* ctx);

template <typename Fn>
int guarded(Fn&& fn) {
  struct Ctx {
    Fn* fn;
  } ctx{&fn};
  return run_guarded(
      [](void* raw) -> int { return (*static_cast<Ctx*>(raw)->fn)(); }, &ctx);
}

}  // namespace dora::cli
