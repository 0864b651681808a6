#include "altinc/pseudo.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "altinc/error.hpp"
#include "altinc/losses.hpp"

namespace altinc::pseudo {

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) best = k;
  }
  return best;
}

PseudoLabels generate_pseudo_labels(const ProbMap& probs, std::size_t round) {
  const std::size_t c = probs.classes(), h = probs.height(), w = probs.width(), plane = h * w;
  if (c > kIgnoreLabel) throw ValueError("too many classes for 8-bit labels");
  PseudoLabels out{LabelMap(h, w), std::vector<double>(plane), round};
  const Tensor& t = probs.tensor();
  std::vector<double> pixel(c);
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t k = 0; k < c; ++k) pixel[k] = t[k * plane + i];
    const std::size_t best = argmax(pixel);
    out.labels[i] = static_cast<std::uint8_t>(best);
    out.confidence[i] = pixel[best];
  }
  return out;
}

void OpenSetSpec::validate() const {
  std::set<std::uint8_t> ids;
  for (const auto& o : open) {
    if (o.id < num_closed || o.id == kIgnoreLabel) {
      throw ValueError("open class id " + std::to_string(o.id) + " collides with the closed set or ignore label");
    }
    if (!ids.insert(o.id).second) throw ValueError("duplicate open class id " + std::to_string(o.id));
    if (o.similar.empty()) throw ValueError("open class " + std::to_string(o.id) + " has an empty similarity group");
    for (auto c : o.similar) {
      if (c >= num_closed) {
        throw ValueError("similarity group of open class " + std::to_string(o.id) + " names non-closed class " +
                         std::to_string(c));
      }
    }
  }
}

ClassThresholds resolve_tau(std::span<const PseudoLabels> maps, std::size_t num_closed, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValueError("tau fraction must lie in (0,1]");
  std::vector<double> max_conf(num_closed, -1.0);
  for (const auto& m : maps) {
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
      const auto l = m.labels[i];
      if (l < num_closed) max_conf[l] = std::max(max_conf[l], m.confidence[i]);
    }
  }
  ClassThresholds tau(num_closed);
  for (std::size_t c = 0; c < num_closed; ++c) {
    if (max_conf[c] >= 0.0) tau[c] = fraction * max_conf[c];
  }
  return tau;
}

namespace {

// Open classes sorted by id, so the first eligible one is the lowest id.
std::vector<const OpenClass*> sorted_open(const OpenSetSpec& spec) {
  std::vector<const OpenClass*> v;
  for (const auto& o : spec.open) v.push_back(&o);
  std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->id < b->id; });
  return v;
}

template <class Eligible>
LabelMap relabel_with(const LabelMap& labels, const OpenSetSpec& spec, Eligible eligible, RelabelStats* stats) {
  const auto open = sorted_open(spec);
  LabelMap out = labels;
  RelabelStats local;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto l = labels[i];
    if (l >= spec.num_closed) continue;
    std::size_t matches = 0;
    for (const OpenClass* o : open) {
      if (std::find(o->similar.begin(), o->similar.end(), l) == o->similar.end()) continue;
      if (!eligible(i, l)) break;  // same test for every group containing l
      if (matches++ == 0) out[i] = o->id;
    }
    if (matches > 0) ++local.relabeled;
    if (matches > 1) ++local.conflicts;
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace

LabelMap boundless_relabel(const PseudoLabels& y, const OpenSetSpec& spec, RelabelStats* stats) {
  spec.validate();
  if (spec.tau.size() != spec.num_closed) {
    throw ValueError("per-class thresholds unresolved: have " + std::to_string(spec.tau.size()) + " for " +
                     std::to_string(spec.num_closed) + " closed classes");
  }
  if (y.confidence.size() != y.labels.size()) throw ShapeError("pseudo labels and confidences differ in size");
  return relabel_with(
      y.labels, spec,
      [&](std::size_t i, std::uint8_t l) { return spec.tau[l].has_value() && y.confidence[i] <= *spec.tau[l]; },
      stats);
}

Prototypes class_prototypes(std::span<const ProbMap> maps, std::size_t num_closed, double confident_fraction) {
  std::vector<PseudoLabels> labels;
  labels.reserve(maps.size());
  for (const auto& m : maps) labels.push_back(generate_pseudo_labels(m));
  const ClassThresholds floor = resolve_tau(labels, num_closed, confident_fraction);

  std::vector<std::vector<double>> sums(num_closed);
  std::vector<std::size_t> counts(num_closed, 0);
  for (std::size_t j = 0; j < maps.size(); ++j) {
    const Tensor& t = maps[j].tensor();
    const std::size_t c = maps[j].classes(), plane = maps[j].height() * maps[j].width();
    for (std::size_t i = 0; i < plane; ++i) {
      const auto l = labels[j].labels[i];
      if (l >= num_closed || !floor[l] || labels[j].confidence[i] < *floor[l]) continue;
      if (sums[l].empty()) sums[l].assign(c, 0.0);
      for (std::size_t k = 0; k < c; ++k) sums[l][k] += t[k * plane + i];
      ++counts[l];
    }
  }
  Prototypes protos(num_closed);
  for (std::size_t c = 0; c < num_closed; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
    protos[c] = std::move(sums[c]);
  }
  return protos;
}

LabelMap kl_similarity_relabel(const ProbMap& probs, const OpenSetSpec& spec, const Prototypes& prototypes,
                               double kappa, RelabelStats* stats) {
  spec.validate();
  if (!(kappa >= 0.0)) throw ValueError("kappa must be non-negative");
  for (const auto& o : spec.open) {
    for (auto c : o.similar) {
      if (c >= prototypes.size() || !prototypes[c]) {
        throw ValueError("missing prototype for class " + std::to_string(c) + " in the group of open class " +
                         std::to_string(o.id));
      }
      if (prototypes[c]->size() != probs.classes()) throw ShapeError("prototype length does not match class count");
    }
  }
  const PseudoLabels y = generate_pseudo_labels(probs);
  const std::size_t c = probs.classes(), plane = probs.height() * probs.width();
  const Tensor& t = probs.tensor();
  std::vector<double> pixel(c);
  return relabel_with(
      y.labels, spec,
      [&](std::size_t i, std::uint8_t l) {
        for (std::size_t k = 0; k < c; ++k) pixel[k] = t[k * plane + i];
        return losses::kl_divergence(pixel, *prototypes[l]) > kappa;
      },
      stats);
}

}  // namespace altinc::pseudo
