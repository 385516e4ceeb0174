#include <string>

#include <CLI11.hpp>

#include "fnav/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Fluoro-CT registration and navigation experiments"};
  app.require_subcommand(1);

  std::string spec_path, out_dir = "out", scene_dir, mode = "full", config_path;
  std::string manifest_path, stream_csv, truth_stream_csv;
  int threads = 1;

  auto* phantom = app.add_subcommand("phantom", "Generate a synthetic scene directory");
  phantom->add_option("--spec", spec_path, "Generation spec file (key=value lines)");
  phantom->add_option("--out", out_dir, "Output scene directory")->required();

  auto* reg = app.add_subcommand("register", "Register one scene and emit metrics");
  reg->add_option("--scene", scene_dir, "Scene directory")->required();
  reg->add_option("--mode", mode, "naive | poseonly | full");
  reg->add_option("--config", config_path, "Registration config file");
  reg->add_option("--out", out_dir, "Output directory")->required();

  auto* sweep = app.add_subcommand("sweep", "Run a manifest of cases and aggregate metrics");
  sweep->add_option("--manifest", manifest_path, "Manifest file")->required();
  sweep->add_option("--out", out_dir, "Output directory")->required();
  sweep->add_option("--threads", threads, "Worker threads");

  auto* roadmap = app.add_subcommand("roadmap", "Replay a tool pose stream over a scene");
  roadmap->add_option("--scene", scene_dir, "Scene directory")->required();
  roadmap->add_option("--stream", stream_csv, "Pose stream CSV")->required();
  roadmap->add_option("--truth-stream", truth_stream_csv, "Ground-truth pose stream CSV");
  roadmap->add_option("--out", out_dir, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (phantom->parsed()) return fnav::cmd_phantom(spec_path, out_dir);
  if (reg->parsed()) return fnav::cmd_register(scene_dir, mode, config_path, out_dir);
  if (sweep->parsed()) return fnav::cmd_sweep(manifest_path, out_dir, threads);
  if (roadmap->parsed()) return fnav::cmd_roadmap(scene_dir, stream_csv, out_dir, truth_stream_csv);
  return 1;
}
