#include "altinc/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "altinc/error.hpp"

namespace altinc::losses {

namespace {

constexpr double kFloor = 1e-12;

ad::Var zero_scalar(ad::Tape& tape) { return tape.constant(Tensor::scalar(0.0)); }

// log of a teacher map after flooring at 1e-12 and renormalizing each pixel.
Tensor floored_log(const ProbMap& q) {
  const std::size_t c = q.classes(), plane = q.height() * q.width();
  const Tensor& t = q.tensor();
  Tensor out(t.shape());
  for (std::size_t i = 0; i < plane; ++i) {
    double z = 0.0;
    for (std::size_t k = 0; k < c; ++k) z += std::max(t[k * plane + i], kFloor);
    for (std::size_t k = 0; k < c; ++k) out[k * plane + i] = std::log(std::max(t[k * plane + i], kFloor) / z);
  }
  return out;
}

}  // namespace

GanKind parse_gan_kind(std::string_view s) {
  if (s == "vanilla") return GanKind::Vanilla;
  if (s == "lsgan" || s == "least-squares") return GanKind::LeastSquares;
  throw ConfigError("unknown gan kind '" + std::string(s) + "' (expected vanilla or lsgan)");
}

std::string_view to_string(GanKind kind) { return kind == GanKind::Vanilla ? "vanilla" : "lsgan"; }

LossWeights::LossWeights(double sup, double unsup, double distil) : sup_(sup), unsup_(unsup), distil_(distil) {
  for (double v : {sup, unsup, distil}) {
    if (!std::isfinite(v) || v < 0.0) throw ValueError("loss weights must be finite and non-negative");
  }
  if (sup == 0.0 && unsup == 0.0 && distil == 0.0) throw ValueError("loss weights must not all be zero");
}

ad::Var loss_sup(ad::Var probs, const LabelMap& labels) {
  auto picked = ad::gather_channels(probs, labels);
  if (picked.value().size() == 0) return zero_scalar(*probs.tape);
  return ad::scale(ad::mean(ad::log(picked)), -1.0);
}

ad::Var loss_unsup(ad::Var probs, const LabelMap& pseudo_labels) { return loss_sup(probs, pseudo_labels); }

ad::Var loss_distil(ad::Var p_bs, std::span<const ProbMap> teachers, std::span<const double> weights) {
  if (teachers.empty()) throw ValueError("distillation needs at least one teacher map");
  if (teachers.size() != weights.size()) {
    throw ShapeError("distillation: " + std::to_string(teachers.size()) + " teacher maps but " +
                     std::to_string(weights.size()) + " weights");
  }
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValueError("distillation weights must be non-negative");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-9) throw ValueError("distillation weights sum to " + std::to_string(wsum));
  const Shape& shape = p_bs.value().shape();
  for (const auto& q : teachers) {
    if (q.tensor().shape() != shape) {
      throw ShapeError("distillation: teacher map " + shape_to_string(q.tensor().shape()) + " vs student map " +
                       shape_to_string(shape));
    }
  }
  ad::Tape& tape = *p_bs.tape;
  const double pixels = static_cast<double>(shape.at(1) * shape.at(2));
  const ad::Var log_p = ad::log(p_bs);
  ad::Var total = zero_scalar(tape);
  for (std::size_t i = 0; i < teachers.size(); ++i) {
    const ad::Var log_q = tape.constant(floored_log(teachers[i]));
    const ad::Var kl = ad::sum(ad::mul(p_bs, ad::sub(log_p, log_q)));
    total = ad::add(total, ad::scale(kl, weights[i] / pixels));
  }
  return total;
}

ad::Var loss_overall(ad::Var sup, ad::Var unsup, ad::Var distil, const LossWeights& lw) {
  return ad::add(ad::add(ad::scale(sup, lw.sup()), ad::scale(unsup, lw.unsup())), ad::scale(distil, lw.distil()));
}

double loss_overall(double sup, double unsup, double distil, const LossWeights& lw) {
  return lw.sup() * sup + lw.unsup() * unsup + lw.distil() * distil;
}

ad::Var loss_disc(ad::Var source_logits, ad::Var target_logits, GanKind kind) {
  if (kind == GanKind::Vanilla) {
    // BCE-with-logits: label 1 -> softplus(-x), label 0 -> softplus(x).
    return ad::add(ad::mean(ad::softplus(ad::scale(source_logits, -1.0))), ad::mean(ad::softplus(target_logits)));
  }
  return ad::add(ad::mean(ad::square(ad::add_scalar(ad::sigmoid(source_logits), -1.0))),
                 ad::mean(ad::square(ad::sigmoid(target_logits))));
}

ad::Var loss_adv(ad::Var target_logits, GanKind kind) {
  if (kind == GanKind::Vanilla) return ad::mean(ad::softplus(ad::scale(target_logits, -1.0)));
  return ad::mean(ad::square(ad::add_scalar(ad::sigmoid(target_logits), -1.0)));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("kl_divergence: distributions differ in length");
  double z = 0.0;
  for (double v : q) z += std::max(v, kFloor);
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    kl += p[k] * (std::log(std::max(p[k], kFloor)) - std::log(std::max(q[k], kFloor) / z));
  }
  return kl;
}

}  // namespace altinc::losses
