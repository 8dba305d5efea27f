#include <CLI11.hpp>
#include <cstdio>
#include <exception>

#include "commands.hpp"
#include "dora/errors.hpp"

namespace dora::cli {

int run_guarded(int (*body)(void*), void* ctx) {
  try {
    return body(ctx);
  } catch (const dora::config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const dora::data_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const dora::numeric_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumeric;
  }
}

}  // namespace dora::cli

int main(int argc, char** argv) {
  using namespace dora::cli;

  CLI::App app{"Self-supervised video pretraining with attention-based "
               "multi-object tracking"};
  app.require_subcommand(1);

  CommonOpts common;
  auto add_common = [&common](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "key = value config file");
    sub->add_option("--set", common.overrides, "config override key=value")
        ->take_all();
    sub->add_option("--seed", common.seed, "master random seed")
        ->each([&common](const std::string&) { common.seed_set = true; });
  };

  // train
  std::string data_dir, out_dir;
  CLI::App* train = app.add_subcommand("train", "run the training loop");
  add_common(train);
  train->add_option("--data", data_dir, "dataset or video directory")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  // track
  std::string checkpoint, clip_dir;
  int k_track = 3;
  bool no_overlay = false;
  CLI::App* track = app.add_subcommand("track", "discover and track objects in a clip");
  add_common(track);
  track->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  track->add_option("--clip", clip_dir, "clip directory of frames")->required();
  track->add_option("--out", out_dir, "output directory")->required();
  track->add_option("--k", k_track, "number of objects");
  track->add_flag("--no-overlay", no_overlay, "skip RGB overlays (required for k > 3)");

  // synth
  int n_clips = 8, n_objects = 3, size = 64, frames = 4;
  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  add_common(synth);
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--clips", n_clips, "number of clips");
  synth->add_option("--objects", n_objects, "objects per clip");
  synth->add_option("--size", size, "frame size in pixels");
  synth->add_option("--frames", frames, "frames per clip");

  // eval
  std::string protocol = "knn";
  double mass = 0.8;
  int knn_k = 20;
  CLI::App* eval = app.add_subcommand("eval", "evaluate frozen features");
  add_common(eval);
  eval->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  eval->add_option("--data", data_dir, "labeled synthetic dataset")->required();
  eval->add_option("--protocol", protocol, "knn | corloc | jaccard")->required();
  eval->add_option("--out", out_dir, "output directory")->required();
  eval->add_option("--mass", mass, "attention mass to retain");
  eval->add_option("--knn-k", knn_k, "neighbours for the knn protocol");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e); // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (train->parsed()) return cmd_train(common, data_dir, out_dir);
  if (track->parsed())
    return cmd_track(common, checkpoint, clip_dir, out_dir, k_track, no_overlay);
  if (synth->parsed())
    return cmd_synth(common, out_dir, n_clips, n_objects, size, frames);
  if (eval->parsed())
    return cmd_eval(common, checkpoint, data_dir, protocol, out_dir, mass, knn_k);
  return kExitUsage;
}
