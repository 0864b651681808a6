#include "altinc/source_select.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "altinc/error.hpp"

namespace altinc::select {

double mean_source_probability(const SegNet& seg, const Discriminator& disc, const Tensor& image) {
  const Tensor logits = disc.logits(seg.predict(image));
  double s = 0.0;
  for (double z : logits.values()) s += z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return s / static_cast<double>(logits.size());
}

double dissimilarity_from_means(std::span<const double> per_image_means) {
  if (per_image_means.empty()) throw ValueError("dissimilarity needs at least one target image");
  double s = 0.0;
  for (double m : per_image_means) s += m;
  const double d = 1.0 - s / static_cast<double>(per_image_means.size());
  return std::clamp(d, 0.0, 1.0);
}

double dissimilarity(const SegNet& seg, const Discriminator& disc, std::span<const Tensor> target_images) {
  std::vector<double> means;
  means.reserve(target_images.size());
  for (const auto& img : target_images) means.push_back(mean_source_probability(seg, disc, img));
  return dissimilarity_from_means(means);
}

std::size_t select_best_source(std::span<const double> d) {
  if (d.size() < 2) {
    throw ValueError("best-source selection needs at least 2 sources, got " + std::to_string(d.size()));
  }
  std::size_t best = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) throw ValueError("dissimilarity of source " + std::to_string(i) + " is not finite");
    if (d[i] < d[best]) best = i;
  }
  return best;
}

std::vector<double> distillation_weights(std::span<const double> d, std::size_t best, double beta) {
  if (d.size() < 2) throw ValueError("distillation weights need at least 2 sources");
  if (best >= d.size()) throw ValueError("best source index out of range");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ValueError("beta must be positive");
  double lo = INFINITY;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i != best) lo = std::min(lo, d[i]);
  }
  std::vector<double> w;
  double z = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i == best) continue;
    w.push_back(std::exp(-beta * (d[i] - lo)));
    z += w.back();
  }
  for (double& v : w) v /= z;
  return w;
}

DissimilarityReport make_report(std::vector<double> d, double beta, std::size_t num_target_images) {
  DissimilarityReport r;
  r.best_source = select_best_source(d);
  r.weights = distillation_weights(d, r.best_source, beta);
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (i != r.best_source) r.teachers.push_back(i);
  }
  r.dissimilarity = std::move(d);
  r.beta = beta;
  r.num_target_images = num_target_images;
  return r;
}

std::string report_to_json(const DissimilarityReport& report) {
  nlohmann::ordered_json j;
  j["best_source"] = report.best_source;
  j["beta"] = report.beta;
  j["num_target_images"] = report.num_target_images;
  j["dissimilarity"] = report.dissimilarity;
  j["teachers"] = report.teachers;
  j["weights"] = report.weights;
  return j.dump(2) + "\n";
}

DissimilarityReport report_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    DissimilarityReport r;
    r.best_source = j.at("best_source").get<std::size_t>();
    r.beta = j.at("beta").get<double>();
    r.num_target_images = j.at("num_target_images").get<std::size_t>();
    r.dissimilarity = j.at("dissimilarity").get<std::vector<double>>();
    r.teachers = j.at("teachers").get<std::vector<std::size_t>>();
    r.weights = j.at("weights").get<std::vector<double>>();
    if (r.teachers.size() != r.weights.size() || r.best_source >= r.dissimilarity.size()) {
      throw FormatError("dissimilarity report is inconsistent");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("dissimilarity report: ") + e.what());
  }
}

}  // namespace altinc::select
