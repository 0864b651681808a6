#include "altinc/tensor.hpp"

#include <cmath>
#include <sstream>

#include "altinc/error.hpp"

namespace altinc {

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor of shape " + shape_to_string(shape_) + " given " + std::to_string(values_.size()) +
                     " values");
  }
}

double Tensor::item() const {
  if (values_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_to_string(shape_));
  return values_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

LabelMap::LabelMap(std::size_t height, std::size_t width, std::vector<std::uint8_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
  if (labels_.size() != height_ * width_) {
    throw ShapeError("label map " + std::to_string(height_) + "x" + std::to_string(width_) + " given " +
                     std::to_string(labels_.size()) + " labels");
  }
}

ProbMap::ProbMap(Tensor probs, double tolerance) : probs_(std::move(probs)) {
  if (probs_.rank() != 3) throw ShapeError("probability map must be rank 3, got " + shape_to_string(probs_.shape()));
  const std::size_t c = probs_.dim(0), h = probs_.dim(1), w = probs_.dim(2);
  if (c == 0) throw ShapeError("probability map has no channels");
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double sum = 0.0;
      for (std::size_t k = 0; k < c; ++k) {
        const double p = probs_.at(k, y, x);
        if (!(p >= 0.0) || !std::isfinite(p)) {
          throw ValueError("probability map entry at (" + std::to_string(k) + "," + std::to_string(y) + "," +
                           std::to_string(x) + ") is not a probability");
        }
        sum += p;
      }
      if (std::abs(sum - 1.0) > tolerance) {
        std::ostringstream os;
        os << "probability map channel sum " << sum << " at pixel (" << y << "," << x << ") violates normalization";
        throw ValueError(os.str());
      }
    }
  }
}

}  // namespace altinc
