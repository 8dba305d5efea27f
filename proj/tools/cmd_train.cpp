#include <cstdio>
#include <filesystem>
#include <fstream>

#include "cli_util.hpp"
#include "commands.hpp"
#include "dora/trainer.hpp"

namespace dora::cli {

int cmd_train(const CommonOpts& common, const std::string& data_dir,
              const std::string& out_dir) {
  return guarded([&]() -> int {
    TrainConfig cfg = load_config(common);
    ClipSampler sampler = open_clip_sampler(data_dir, cfg);

    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::ofstream metrics(out_dir + "/metrics.csv");
    if (!metrics) throw data_error(out_dir + ": cannot write metrics.csv");
    metrics << metrics_csv_header() << "\n";

    Trainer trainer(cfg, sampler);
    char ckpt_name[64];
    while (trainer.current_step() < cfg.total_steps) {
      StepMetrics m = trainer.step();
      metrics << metrics_csv_row(m) << "\n";
      metrics.flush();
      if ((m.step + 1) % 50 == 0 || m.step == 0)
        std::printf("step %lld/%d loss %.4f lr %.2e\n",
                    static_cast<long long>(m.step), cfg.total_steps, m.loss_total,
                    m.lr);
      if (cfg.checkpoint_every > 0 &&
          trainer.current_step() % cfg.checkpoint_every == 0 &&
          trainer.current_step() < cfg.total_steps) {
        std::snprintf(ckpt_name, sizeof(ckpt_name), "/checkpoint_%06lld.ckpt",
                      static_cast<long long>(trainer.current_step()));
        trainer.save(out_dir + ckpt_name);
      }
    }
    trainer.save(out_dir + "/checkpoint_final.ckpt");
    std::printf("done: %d steps, checkpoint_final.ckpt written\n", cfg.total_steps);
    return kExitOk;
  });
}

}  // namespace dora::cli
