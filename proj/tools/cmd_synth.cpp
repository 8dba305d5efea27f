#include <cstdio>

#include "commands.hpp"
#include "dora/data.hpp"

namespace dora::cli {

int cmd_synth(const CommonOpts& common, const std::string& out_dir, int n_clips,
              int n_objects, int size, int frames) {
  return guarded([&]() -> int {
    if (n_clips < 1 || size < 8 || frames < 1)
      throw config_error("synth: need clips >= 1, size >= 8, frames >= 1");
    write_synthetic_dataset(out_dir, n_clips, n_objects, size, frames, common.seed);
    std::printf("wrote %d clips (%d objects, %dx%d, %d frames) to %s\n", n_clips,
                n_objects, size, size, frames, out_dir.c_str());
    return kExitOk;
  });
}

}  // namespace dora::cli
