#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "altinc/models.hpp"
#include "altinc/tensor.hpp"

namespace altinc::select {

/// Discriminators label source predictions 1 and target predictions 0, so a
/// target set the discriminator scores close to 1 is close to that source.
/// d_i = 1 - mean over target images and output locations of sigmoid(D_i(softmax(seg_i(x)))).
struct DissimilarityReport {
  std::vector<double> dissimilarity;  // one per source
  std::size_t best_source = 0;
  std::vector<std::size_t> teachers;  // non-best source indices, ascending
  std::vector<double> weights;        // aligned with `teachers`, sums to 1
  double beta = 5.0;
  std::size_t num_target_images = 0;

  friend bool operator==(const DissimilarityReport&, const DissimilarityReport&) = default;
};

/// Mean sigmoid of the discriminator's logit map over all output locations.
double mean_source_probability(const SegNet& seg, const Discriminator& disc, const Tensor& image);

/// 1 - average of per-image mean source probabilities. Throws on an empty list.
double dissimilarity_from_means(std::span<const double> per_image_means);

double dissimilarity(const SegNet& seg, const Discriminator& disc, std::span<const Tensor> target_images);

/// Argmin with lowest-index tie-break; needs at least two sources.
std::size_t select_best_source(std::span<const double> d);

/// Softmax of -beta * d over the non-best sources, in ascending source order.
std::vector<double> distillation_weights(std::span<const double> d, std::size_t best, double beta);

DissimilarityReport make_report(std::vector<double> d, double beta, std::size_t num_target_images);

std::string report_to_json(const DissimilarityReport& report);
DissimilarityReport report_from_json(const std::string& text);

}  // namespace altinc::select
