#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "altinc/autodiff.hpp"
#include "altinc/tensor.hpp"

namespace altinc {

/// conv(3->16,k3,p1) -> relu -> conv(16->16,k3,p1) -> relu -> conv(16->C,k1).
/// Produces per-pixel logits at input resolution.
class SegNet {
 public:
  static constexpr std::size_t kInputChannels = 3;
  static constexpr std::size_t kHidden = 16;

  SegNet() = default;
  /// Kaiming-uniform kernels (fan-in), zero biases, one seed stream per layer.
  SegNet(std::size_t num_classes, std::uint64_t seed);

  std::size_t num_classes() const { return num_classes_; }
  ad::ParameterList& params() { return params_; }
  const ad::ParameterList& params() const { return params_; }

  /// Places the parameters on `tape`; as variables when `trainable`.
  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;
  /// Logits [C,h,w] for image [3,h,w], using parameters previously bound.
  ad::Var forward(std::span<const ad::Var> bound, ad::Var image) const;

  Tensor logits(const Tensor& image) const;
  ProbMap predict(const Tensor& image) const;

  /// Copy with `extra` additional output classes whose head rows start at zero.
  SegNet widened(std::size_t extra) const;

  friend bool operator==(const SegNet&, const SegNet&);

 private:
  std::size_t num_classes_ = 0;
  ad::ParameterList params_;
};

/// conv(C->8,k3,s2,p1) -> lrelu(0.2) -> conv(8->8,k3,s2,p1) -> lrelu(0.2) -> conv(8->1,k1).
/// Logit > 0 means "looks like a source-domain prediction" (source=1, target=0).
class Discriminator {
 public:
  static constexpr std::size_t kHidden = 8;
  static constexpr double kLeakySlope = 0.2;

  Discriminator() = default;
  Discriminator(std::size_t num_classes, std::uint64_t seed);

  std::size_t num_classes() const { return num_classes_; }
  ad::ParameterList& params() { return params_; }
  const ad::ParameterList& params() const { return params_; }

  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;
  /// Logit map [1,h'',w''] for a probability map [C,h,w].
  ad::Var forward(std::span<const ad::Var> bound, ad::Var probs) const;

  Tensor logits(const ProbMap& probs) const;

  friend bool operator==(const Discriminator&, const Discriminator&);

 private:
  std::size_t num_classes_ = 0;
  ad::ParameterList params_;
};

/// One segmentation network plus one discriminator per source domain.
struct ModelBundle {
  SegNet seg;
  std::vector<Discriminator> discriminators;

  std::size_t num_classes() const { return seg.num_classes(); }
  std::uint64_t config_hash() const;

  friend bool operator==(const ModelBundle&, const ModelBundle&) = default;
};

/// Hash of the architecture (layer order, widths, class count, discriminator count).
std::uint64_t model_config_hash(std::size_t num_classes, std::size_t num_discriminators);

/// Writes an ALTINC01 parameter file.
void save_params(const ModelBundle& bundle, const std::filesystem::path& path);
/// Reads a bundle whose config hash must equal `model_config_hash(num_classes, num_discriminators)`.
ModelBundle load_params(const std::filesystem::path& path, std::size_t num_classes, std::size_t num_discriminators);

}  // namespace altinc
