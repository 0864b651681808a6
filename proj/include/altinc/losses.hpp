#pragma once

#include <span>
#include <string_view>

#include "altinc/autodiff.hpp"
#include "altinc/tensor.hpp"

namespace altinc::losses {

enum class GanKind { Vanilla, LeastSquares };

GanKind parse_gan_kind(std::string_view s);
std::string_view to_string(GanKind kind);

/// Weights of the supervised, pseudo-label and distillation terms.
class LossWeights {
 public:
  LossWeights() = default;
  /// Throws ValueError unless all are finite, non-negative and not all zero.
  LossWeights(double sup, double unsup, double distil);

  double sup() const { return sup_; }
  double unsup() const { return unsup_; }
  double distil() const { return distil_; }

 private:
  double sup_ = 1.0;
  double unsup_ = 0.5;
  double distil_ = 0.1;
};

/// Mean over non-ignored pixels of -log p[y]. `probs` is [C,h,w] and normally
/// the softmax of tracked logits.
ad::Var loss_sup(ad::Var probs, const LabelMap& labels);

/// Same formula as loss_sup; `pseudo_labels` are plain data, so no gradient
/// can reach whatever produced them.
ad::Var loss_unsup(ad::Var probs, const LabelMap& pseudo_labels);

/// sum_i w_i * mean over pixels of KL(p_bs || teacher_i). Teacher maps are
/// floored at 1e-12 and renormalized; log(p_bs) is clamped at 1e-12.
/// Weights must be non-negative and sum to 1 (+-1e-9).
ad::Var loss_distil(ad::Var p_bs, std::span<const ProbMap> teachers, std::span<const double> weights);

ad::Var loss_overall(ad::Var sup, ad::Var unsup, ad::Var distil, const LossWeights& lw);
double loss_overall(double sup, double unsup, double distil, const LossWeights& lw);

/// Discriminator objective: source maps toward label 1, target maps toward 0.
ad::Var loss_disc(ad::Var source_logits, ad::Var target_logits, GanKind kind);

/// Segmentation-side adversarial objective: target maps toward label 1.
ad::Var loss_adv(ad::Var target_logits, GanKind kind);

/// KL(p || q) for one pixel, with q floored at 1e-12 and renormalized and
/// p's log clamped at 1e-12.
double kl_divergence(std::span<const double> p, std::span<const double> q);

}  // namespace altinc::losses
