#include "semlogue/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace semlogue {

std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

ShapeError::ShapeError(std::string_view primitive, const Shape& a, const Shape& b)
    : std::invalid_argument(std::string(primitive) + ": incompatible shapes " + shape_str(a) +
                            " and " + shape_str(b)),
      primitive_(primitive) {}

ShapeError::ShapeError(std::string_view primitive, std::string_view detail)
    : std::invalid_argument(std::string(primitive) + ": " + std::string(detail)),
      primitive_(primitive) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor", "zero extent in shape " + shape_str(shape_));
  }
  values_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor", "zero extent in shape " + shape_str(shape_));
  }
  if (shape_numel(shape_) != values_.size()) {
    throw ShapeError("tensor", "shape " + shape_str(shape_) + " does not match " +
                                   std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::from(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item", "expected one element, got shape " + shape_str(shape_));
  }
  return values_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != values_.size()) throw ShapeError("reshape", shape_, shape);
  return Tensor(std::move(shape), values_);
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

}  // namespace semlogue
