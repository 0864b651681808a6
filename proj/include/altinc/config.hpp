#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "altinc/data_synth.hpp"
#include "altinc/pseudo.hpp"
#include "altinc/trainer.hpp"

namespace altinc::config {

/// Optional per-domain appearance overrides; unset fields keep the derived look.
struct AppearanceOverrides {
  std::optional<double> brightness;
  std::optional<double> contrast;
  std::optional<double> noise_sigma;
  std::optional<std::size_t> stripe_period;
  std::optional<double> stripe_amplitude;
  std::optional<synth::Rgb> tint;

  synth::Appearance apply(synth::Appearance look) const;
};

/// Every tunable of a run. Text form: flat `key = value` lines, `#` comments.
struct RunConfig {
  std::uint64_t seed = 7;

  // data
  std::size_t num_sources = 3;
  std::size_t images_per_source = 200;
  std::size_t target_images = 200;
  std::size_t image_height = 32;
  std::size_t image_width = 32;
  long twin_source = -1;  // -1: no source copies the target's appearance
  double source_shift = 0.5;
  synth::Layout layout;
  synth::OpenSetConfig open;
  AppearanceOverrides target_look;
  std::vector<AppearanceOverrides> source_looks;  // indexed by source; may be shorter than num_sources

  train::TrainConfig train;

  // boundless relabeling
  double kl_kappa = 0.5;
  double kl_confident_fraction = 0.85;
  bool retrain_boundless = false;

  synth::SceneConfig target_scene() const;
  synth::SceneConfig source_scene(std::size_t i) const;
  pseudo::OpenSetSpec open_set_spec() const;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Parses `key = value` text. Unknown keys, duplicate keys and malformed
/// values raise ConfigError naming the key.
RunConfig parse(const std::string& text);
RunConfig load(const std::string& path);

/// Applies one `key=value` override on top of an existing config.
void set(RunConfig& cfg, const std::string& key, const std::string& value);

/// Canonical text listing every key with its resolved value.
std::string to_text(const RunConfig& cfg);

struct KeyDoc {
  std::string key;
  std::string default_value;
  std::string doc;
};
/// Documented keys (per-domain appearance keys shown for `target.` and `source<i>.`).
std::vector<KeyDoc> documented_keys();

}  // namespace altinc::config
