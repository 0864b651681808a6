#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "altinc/tensor.hpp"

namespace altinc::synth {

enum ClassId : std::uint8_t { kRoad = 0, kSky = 1, kTerrain = 2, kVehicle = 3, kBuilding = 4 };
inline constexpr std::size_t kNumClosed = 5;
inline constexpr std::uint8_t kOpenClass = 5;  // "rickshaw": target-only, looks like a vehicle

const std::vector<std::string>& class_names();

using Rgb = std::array<double, 3>;

std::array<Rgb, kNumClosed> default_palette();

/// Per-domain appearance. Pixel colour is
/// clamp(contrast * (base[c] + tint) + brightness + stripe + N(0, noise_sigma)).
struct Appearance {
  std::array<Rgb, kNumClosed> base = default_palette();
  Rgb tint{0.0, 0.0, 0.0};
  double brightness = 0.0;
  double contrast = 1.0;
  double noise_sigma = 0.03;
  std::size_t stripe_period = 0;  // 0 disables the diagonal stripe texture
  double stripe_amplitude = 0.0;
};

struct Layout {
  double horizon_min = 0.35;  // fraction of image height
  double horizon_max = 0.55;
  std::size_t vehicles_min = 1;
  std::size_t vehicles_max = 3;
  double building_probability = 0.7;
};

struct OpenSetConfig {
  bool enabled = false;
  double probability = 0.5;    // per image
  double perturbation = 0.35;  // colour-space distance from the vehicle base colour
  std::uint8_t similar_class = kVehicle;
};

struct SceneConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  Appearance appearance;
  Layout layout;
  OpenSetConfig open;
  std::uint64_t seed = 0;
};

struct Rect {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;  // half-open
};

struct Scene {
  Tensor image;  // [3,h,w] in [0,1]
  LabelMap gt;
  std::vector<Rect> vehicles;
};

enum class DomainKind { Source, Target };

struct DomainDataset {
  std::string name;
  DomainKind kind = DomainKind::Source;
  std::vector<std::uint8_t> classes;  // label space of this domain
  std::vector<Scene> scenes;

  std::size_t size() const { return scenes.size(); }
  std::vector<Tensor> images() const;
  std::vector<LabelMap> labels() const;
};

/// Scene i depends only on (cfg.seed, i). Throws ValueError for n_images == 0
/// or images smaller than 8x8.
DomainDataset generate_domain(const SceneConfig& cfg, std::size_t n_images, DomainKind kind, std::string name);

struct InjectStats {
  std::size_t selected = 0;
  std::size_t injected = 0;
  std::size_t skipped_no_vehicle = 0;
};

/// Converts one vehicle per selected image into the open class and repaints
/// it with the vehicle colour shifted by cfg.open.perturbation.
DomainDataset inject_open_set(DomainDataset ds, const SceneConfig& cfg, InjectStats* stats = nullptr);

struct RiggedFixture {
  std::vector<DomainDataset> sources;
  DomainDataset target;
};

/// Sources use `source_looks`, except source `twin` which copies the target's
/// appearance and differs from the target only by its seed.
RiggedFixture rigged_target_source(const SceneConfig& target_cfg, std::vector<Appearance> source_looks,
                                   std::size_t twin, std::size_t n_images);

/// Appearance shifted by `amount` along a fixed brightness/tint/noise direction.
Appearance shifted_appearance(const Appearance& base, double amount, std::size_t variant);

// On-disk dump: image_NNNN.bin (ALTINC01 file, one record "image") and gt_NNNN.pgm.
inline constexpr std::uint64_t kImageFileHash = 0x696d6167652d7631ULL;  // "image-v1"
void save_dataset(const std::filesystem::path& dir, const DomainDataset& ds);
DomainDataset load_dataset(const std::filesystem::path& dir, DomainKind kind, std::string name);

}  // namespace altinc::synth
