#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "altinc/tensor.hpp"

namespace altinc::pseudo {

/// Per-pixel argmax labels with the winning probability as confidence.
struct PseudoLabels {
  LabelMap labels;
  std::vector<double> confidence;  // row-major, one per pixel
  std::size_t round = 0;

  friend bool operator==(const PseudoLabels&, const PseudoLabels&) = default;
};

/// Argmax over channels; ties go to the lowest class index.
PseudoLabels generate_pseudo_labels(const ProbMap& probs, std::size_t round = 0);

/// Index of the largest value; lowest index wins ties.
std::size_t argmax(std::span<const double> values);

struct OpenClass {
  std::uint8_t id = 0;
  std::vector<std::uint8_t> similar;  // closed classes that look like this open class

  friend bool operator==(const OpenClass&, const OpenClass&) = default;
};

/// Per closed class; nullopt means the class never triggers relabeling.
using ClassThresholds = std::vector<std::optional<double>>;

struct OpenSetSpec {
  std::size_t num_closed = 0;
  std::vector<OpenClass> open;
  ClassThresholds tau;  // must hold num_closed entries before relabeling

  /// Throws ValueError on empty or out-of-range similarity groups and
  /// open ids that collide with closed ids or each other.
  void validate() const;
};

/// tau_c = fraction * (max confidence among pixels labeled c). Classes never
/// predicted get nullopt.
ClassThresholds resolve_tau(std::span<const PseudoLabels> maps, std::size_t num_closed, double fraction);

struct RelabelStats {
  std::size_t relabeled = 0;
  std::size_t conflicts = 0;  // pixels eligible for more than one open class
};

/// Pixel (a,b) becomes open class o iff confidence <= tau[label] and label is
/// in o's similarity group. Several eligible o: the lowest open id wins.
LabelMap boundless_relabel(const PseudoLabels& y, const OpenSetSpec& spec, RelabelStats* stats = nullptr);

/// Mean channel distribution per closed class; nullopt for classes without samples.
using Prototypes = std::vector<std::optional<std::vector<double>>>;

/// Averages the softmax vectors of pixels whose confidence is at least
/// `confident_fraction` of their class's maximum confidence.
Prototypes class_prototypes(std::span<const ProbMap> maps, std::size_t num_closed, double confident_fraction);

/// Pixel labeled c in some similarity group becomes that group's open class iff
/// KL(pixel distribution || prototype_c) > kappa.
LabelMap kl_similarity_relabel(const ProbMap& probs, const OpenSetSpec& spec, const Prototypes& prototypes,
                               double kappa, RelabelStats* stats = nullptr);

}  // namespace altinc::pseudo
