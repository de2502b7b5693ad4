// vidsig: in-generation video watermarking pipeline.
//
//   vidsig <synth-data|pretrain|pas|finetune|embed|detect|attack|evaluate>
//          --config <path> [--set key=value ...] [command options]

#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vidsig/cli.hpp"

int main(int argc, char** argv) {
  using namespace vidsig;

  CLI::App app{"vidsig - in-generation video watermarking via selective decoder fine-tuning"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "pipeline config JSON")->required();
    sub->add_option("--set", overrides, "override config fields, e.g. --set train.steps=400");
  };

  auto* synth = app.add_subcommand("synth-data", "generate the synthetic clip dataset");
  add_common(synth);
  auto* pretrain = app.add_subcommand("pretrain", "train autoencoder and watermark extractor");
  add_common(pretrain);
  auto* pas = app.add_subcommand("pas", "layer sensitivity search and freeze-mask selection");
  add_common(pas);
  auto* finetune = app.add_subcommand("finetune", "fine-tune the decoder to embed the key");
  add_common(finetune);

  auto* embed = app.add_subcommand("embed", "decode a latent through the watermarked decoder");
  add_common(embed);
  std::string embed_input, embed_output = "watermarked.vst", embed_png;
  int embed_index = 0;
  embed->add_option("--input", embed_input, "input video (.vst); default: holdout clip");
  embed->add_option("--index", embed_index, "holdout clip index when no --input");
  embed->add_option("--output", embed_output, "output .vst path");
  embed->add_option("--png", embed_png, "also export frames as PNG into this directory");

  auto* detect = app.add_subcommand("detect", "detect the watermark in a video");
  add_common(detect);
  std::string detect_input, detect_key = "stored";
  detect->add_option("--input", detect_input, "video to test (.vst)")->required();
  detect->add_option("--key", detect_key, "key bit string, or 'stored' for the trained key");

  auto* attack = app.add_subcommand("attack", "apply a tamper operator to a video");
  add_common(attack);
  std::string attack_input, attack_spec, attack_output = "attacked.vst";
  attack->add_option("--input", attack_input, "video to tamper (.vst)")->required();
  attack->add_option("--attack", attack_spec, "attack spec, e.g. fa:n=3 or gauss_noise:sigma=0.05")
      ->required();
  attack->add_option("--output", attack_output, "output .vst path");

  auto* evaluate = app.add_subcommand("evaluate", "full corpus evaluation report");
  add_common(evaluate);

  CLI11_PARSE(app, argc, argv);

  return cli::run_guarded([&]() -> int {
    auto cfg = cli::load_config(config_path, overrides);
    if (synth->parsed()) return cli::cmd_synth_data(cfg);
    if (pretrain->parsed()) return cli::cmd_pretrain(cfg);
    if (pas->parsed()) return cli::cmd_pas(cfg);
    if (finetune->parsed()) return cli::cmd_finetune(cfg);
    if (embed->parsed()) return cli::cmd_embed(cfg, embed_input, embed_index, embed_output, embed_png);
    if (detect->parsed()) return cli::cmd_detect(cfg, detect_input, detect_key);
    if (attack->parsed()) return cli::cmd_attack(cfg, attack_input, attack_spec, attack_output);
    if (evaluate->parsed()) return cli::cmd_evaluate(cfg);
    return cli::kBadConfig;
  });
}
