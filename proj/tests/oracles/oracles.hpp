#pragma once

// Brute-force reference implementations. Deliberately naive and written
// without calling the library routine they check.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "altinc/autodiff.hpp"
#include "altinc/tensor.hpp"

namespace oracle {

using altinc::LabelMap;
using altinc::Tensor;

// conv via an explicitly zero-padded copy of the input
Tensor conv2d(const Tensor& in, const Tensor& kernel, const Tensor* bias, std::size_t stride, std::size_t pad);

Tensor softmax(const Tensor& logits);

struct Argmax {
  LabelMap labels;
  std::vector<double> confidence;
};
// linear scan, strict > keeps the first maximum
Argmax argmax(const Tensor& probs);

// KL(p || q) with q floored at 1e-12 and renormalized
double kl(const std::vector<double>& p, const std::vector<double>& q);

struct Group {
  std::uint8_t open_id;
  std::vector<std::uint8_t> similar;
};

std::vector<std::optional<double>> tau(const std::vector<Argmax>& maps, std::size_t num_closed, double fraction);

LabelMap threshold_relabel(const Argmax& y, const std::vector<Group>& groups,
                           const std::vector<std::optional<double>>& tau, std::size_t num_closed);

std::vector<std::optional<std::vector<double>>> prototypes(const std::vector<Tensor>& probs, std::size_t num_closed,
                                                           double fraction);

LabelMap kl_relabel(const Tensor& probs, const std::vector<Group>& groups,
                    const std::vector<std::optional<std::vector<double>>>& protos, double kappa,
                    std::size_t num_closed);

// counts[gt][pred] by testing every (gt, pred) pair against every pixel
std::vector<std::vector<std::uint64_t>> confusion(const std::vector<LabelMap>& pred, const std::vector<LabelMap>& gt,
                                                  std::size_t num_classes);
std::vector<std::optional<double>> iou(const std::vector<std::vector<std::uint64_t>>& m);

// scalar loss formulas
double loss_ce(const Tensor& probs, const LabelMap& labels);
double loss_distil(const Tensor& p, const std::vector<Tensor>& teachers, const std::vector<double>& w);
double loss_disc_vanilla(const Tensor& s, const Tensor& t);
double loss_disc_ls(const Tensor& s, const Tensor& t);
double loss_adv_vanilla(const Tensor& t);
double loss_adv_ls(const Tensor& t);

// ---- random instances ----
Tensor random_tensor(std::mt19937_64& rng, altinc::Shape shape, double lo = -1.0, double hi = 1.0);
Tensor random_probs(std::mt19937_64& rng, std::size_t c, std::size_t h, std::size_t w);
LabelMap random_labels(std::mt19937_64& rng, std::size_t h, std::size_t w, std::size_t num_classes,
                       double ignore_rate = 0.0);

// ---- finite differences ----
struct GradCheck {
  std::size_t checked = 0;
  std::size_t failures = 0;
  double worst = 0.0;  // largest |a - f| / (|a| + |f|) seen among checked entries
};

/// Central differences (h = 1e-5) on `count` random entries of x0. An entry
/// passes when |a - f| <= 1e-4 * max(|a|, |f|) + 1e-7.
GradCheck check_gradient(const std::function<altinc::ad::Var(altinc::ad::Tape&, altinc::ad::Var)>& build,
                         const Tensor& x0, std::size_t count, std::mt19937_64& rng);

}  // namespace oracle
