#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace altinc {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles. A plain value type; gradient tracking
/// lives on the Tape, not here.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // [c, h, w] accessors for rank-3 tensors.
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }

  double item() const;
  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

inline constexpr std::uint8_t kIgnoreLabel = 255;

/// Per-pixel integer class labels, h x w, row-major.
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t height, std::size_t width, std::uint8_t fill = 0)
      : height_(height), width_(width), labels_(height * width, fill) {}
  LabelMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return labels_.size(); }

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels_[y * width_ + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels_[y * width_ + x]; }
  std::uint8_t& operator[](std::size_t i) { return labels_[i]; }
  std::uint8_t operator[](std::size_t i) const { return labels_[i]; }

  std::span<const std::uint8_t> labels() const { return labels_; }
  std::span<std::uint8_t> labels() { return labels_; }

  friend bool operator==(const LabelMap& a, const LabelMap& b) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> labels_;
};

/// Per-pixel class distribution, [classes, h, w], each pixel summing to 1.
class ProbMap {
 public:
  ProbMap() = default;
  /// Validates rank 3, non-negative entries and channel sums within `tolerance` of 1.
  explicit ProbMap(Tensor probs, double tolerance = 1e-6);

  std::size_t classes() const { return probs_.dim(0); }
  std::size_t height() const { return probs_.dim(1); }
  std::size_t width() const { return probs_.dim(2); }
  double at(std::size_t c, std::size_t y, std::size_t x) const { return probs_.at(c, y, x); }
  const Tensor& tensor() const { return probs_; }

  friend bool operator==(const ProbMap& a, const ProbMap& b) = default;

 private:
  Tensor probs_;
};

}  // namespace altinc
