#include "qmamba/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qmamba {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShape: return "shape error";
    case ErrorCode::kValidation: return "validation error";
    case ErrorCode::kHeader: return "header error";
    case ErrorCode::kTruncated: return "payload truncated";
    case ErrorCode::kWeightMismatch: return "weight mismatch";
    case ErrorCode::kFormat: return "format error";
    case ErrorCode::kIo: return "io error";
    case ErrorCode::kNumeric: return "numeric error";
  }
  return "error";
}

std::string shape_str(const Shape& shape) {
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

static void check_dims(const Shape& shape) {
  if (shape.empty()) throw Error(ErrorCode::kShape, "tensor rank must be at least 1");
  for (auto d : shape)
    if (d == 0) throw Error(ErrorCode::kShape, "zero-sized dimension in " + shape_str(shape));
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (data_.size() != shape_numel(shape_))
    throw Error(ErrorCode::kShape, "data length " + std::to_string(data_.size()) + " does not match shape " +
                                       shape_str(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw Error(ErrorCode::kShape, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  return shape_[axis];
}

std::size_t Tensor::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size())
    throw Error(ErrorCode::kShape, "index rank mismatch for " + shape_str(shape_));
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw Error(ErrorCode::kShape, "index out of range for " + shape_str(shape_));
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double& Tensor::at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
double Tensor::at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw Error(ErrorCode::kShape, "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice0(std::size_t i) const {
  if (shape_.size() < 2) throw Error(ErrorCode::kShape, "slice0 needs rank >= 2, got " + shape_str(shape_));
  if (i >= shape_[0]) throw Error(ErrorCode::kShape, "slice index out of range for " + shape_str(shape_));
  Shape inner(shape_.begin() + 1, shape_.end());
  const std::size_t n = shape_numel(inner);
  return Tensor(std::move(inner), std::vector<double>(data_.begin() + i * n, data_.begin() + (i + 1) * n));
}

void expect_shape(const Tensor& t, const Shape& expected, std::string_view what) {
  if (t.shape() != expected)
    throw Error(ErrorCode::kShape,
                std::string(what) + ": expected " + shape_str(expected) + ", got " + shape_str(t.shape()));
}

void expect_rank(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.rank() != rank)
    throw Error(ErrorCode::kShape, std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                                       shape_str(t.shape()));
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw Error(ErrorCode::kShape, "stack of zero tensors");
  Shape shape{items.size()};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const auto& t : items) {
    expect_shape(t, items[0].shape(), "stack");
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

double dot(const Tensor& a, const Tensor& b) {
  expect_shape(b, a.shape(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  expect_shape(b, a.shape(), "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_rel_error(const Tensor& a, const Tensor& b) {
  const double diff = max_abs_diff(a, b);
  const double scale = max_abs(b);
  return scale > 0.0 ? diff / scale : diff;
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace qmamba
