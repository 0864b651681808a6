// altinc: command-line driver for the multi-source adaptation pipeline.
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "altinc/config.hpp"
#include "altinc/error.hpp"
#include "altinc/log.hpp"
#include "altinc/pipeline.hpp"

namespace fs = std::filesystem;
using namespace altinc;

namespace {

struct Options {
  std::string config_path;
  std::string run_dir = "run";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rounds;
  std::optional<double> tau_fraction;
  std::optional<std::string> gan;
  std::vector<std::string> sets;
};

// --config wins; otherwise later stages reuse the config echoed by earlier ones.
config::RunConfig resolve(const Options& o, bool fresh) {
  config::RunConfig cfg;
  if (!o.config_path.empty()) {
    cfg = config::load(o.config_path);
  } else if (!fresh && fs::exists(fs::path(o.run_dir) / "config.txt")) {
    cfg = config::load((fs::path(o.run_dir) / "config.txt").string());
  }
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    config::set(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = cfg.train.seed = *o.seed;
  if (o.rounds) cfg.train.max_rounds = *o.rounds;
  if (o.tau_fraction) cfg.train.tau_fraction = *o.tau_fraction;
  if (o.gan) cfg.train.gan = losses::parse_gan_kind(*o.gan);
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-source domain adaptation with alternating self-training on synthetic driving scenes"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--run-dir", o.run_dir, "run directory holding all stage artifacts")->capture_default_str();
  app.add_option("--seed", o.seed, "override the config seed");
  app.add_option("--rounds", o.rounds, "override max_rounds");
  app.add_option("--tau-fraction", o.tau_fraction, "override tau_fraction")->check(CLI::Range(0.0, 1.0));
  app.add_option("--gan", o.gan, "adversarial loss")->check(CLI::IsMember({"vanilla", "lsgan"}));
  app.add_option("--set", o.sets, "extra config override key=value (repeatable)");

  auto* gen = app.add_subcommand("gen", "generate source and target datasets");
  auto* pretrain = app.add_subcommand("pretrain", "single-source adversarial pretraining for every source");
  auto* sel = app.add_subcommand("select", "rank sources by discriminator dissimilarity");
  auto* alt = app.add_subcommand("altinc", "alternating self-training rounds");
  auto* boundless = app.add_subcommand("boundless", "open-set relabeling of the final predictions");
  auto* eval = app.add_subcommand("eval", "evaluate label dumps against target ground truth");
  auto* run = app.add_subcommand("run", "all stages: gen, pretrain, select, altinc, boundless, eval");
  auto* render = app.add_subcommand("render", "render a label map or probability map as a PPM image");
  auto* keys = app.add_subcommand("keys", "list config keys with defaults");

  std::string labels, name = "custom";
  eval->add_option("--labels", labels, "label dump directory or file (default: every stage's output)");
  eval->add_option("--name", name, "report name for --labels")->capture_default_str();
  std::string input, out;
  render->add_option("--input", input, "PGM label map or ALTPM001 probability map")->required();
  render->add_option("--out", out, "output PPM path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*keys) {
      for (const auto& k : config::documented_keys()) {
        std::cout << k.key << " = " << k.default_value << "    # " << k.doc << "\n";
      }
      return 0;
    }
    if (*render) {
      pipeline::cmd_render(input, out);
      return 0;
    }
    const fs::path dir(o.run_dir);
    const auto cfg = resolve(o, *gen || *run);
    if (*gen) pipeline::cmd_gen(cfg, dir);
    if (*pretrain) pipeline::cmd_pretrain(cfg, dir);
    if (*sel) {
      const auto r = pipeline::cmd_select(cfg, dir);
      std::cout << select::report_to_json(r);
    }
    if (*alt) pipeline::cmd_altinc(cfg, dir);
    if (*boundless) pipeline::cmd_boundless(cfg, dir);
    if (*eval) {
      const auto reports = labels.empty() ? pipeline::cmd_eval(cfg, dir)
                                          : pipeline::cmd_eval(cfg, dir, fs::path(labels), name);
      for (const auto& r : reports) {
        std::cout << "== " << r.name << "\n" << metrics::format_table(r.report, synth::class_names());
      }
    }
    if (*run) pipeline::cmd_run(cfg, dir);
  } catch (const ConfigError& e) {
    log::error(std::string("config: ") + e.what());
    return 2;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
  return 0;
}
