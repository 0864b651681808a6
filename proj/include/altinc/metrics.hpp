#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altinc/tensor.hpp"

namespace altinc::metrics {

/// Pixel counts indexed (ground truth, prediction).
class ConfusionMatrix {
 public:
  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t num_classes) : n_(num_classes), counts_(num_classes * num_classes, 0) {}

  std::size_t num_classes() const { return n_; }
  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts_[gt * n_ + pred]; }
  std::uint64_t& at(std::size_t gt, std::size_t pred) { return counts_[gt * n_ + pred]; }

  std::uint64_t row_sum(std::size_t gt) const;
  std::uint64_t col_sum(std::size_t pred) const;
  std::uint64_t total() const;
  std::uint64_t trace() const;

  /// Adds every pixel of (pred, gt); pixels where either is 255 are skipped.
  void accumulate(const LabelMap& pred, const LabelMap& gt);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<std::uint64_t> counts_;
};

ConfusionMatrix confusion(const LabelMap& pred, const LabelMap& gt, std::size_t num_classes);

struct EvalReport {
  std::vector<std::optional<double>> iou;  // nullopt: class absent from both prediction and ground truth
  std::vector<std::size_t> shared;
  std::vector<std::size_t> private_classes;
  std::optional<double> miou_shared;
  std::optional<double> miou_private;
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

/// IoU_c = m[c,c] / (row_c + col_c - m[c,c]); undefined classes are left out of
/// the means. `shared` and `private_classes` must partition the class ids.
EvalReport iou_report(const ConfusionMatrix& m, std::span<const std::size_t> shared,
                      std::span<const std::size_t> private_classes);

/// Mean of the defined IoUs among `classes`.
std::optional<double> mean_iou(const EvalReport& report, std::span<const std::size_t> classes);

/// Aligned text table, percentages.
std::string format_table(const EvalReport& report, std::span<const std::string> class_names);
/// One JSON record per class followed by summary records.
std::string to_json_lines(const EvalReport& report, std::span<const std::string> class_names);

}  // namespace altinc::metrics
