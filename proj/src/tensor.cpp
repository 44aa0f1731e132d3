#include "spikegrid/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

namespace spikegrid {

int max_threads() {
  int hw = static_cast<int>(std::thread::hardware_concurrency());
  if (hw < 1) hw = 1;
  if (const char* env = std::getenv("SPIKEGRID_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end == env || v < 1) throw ConfigError("SPIKEGRID_THREADS must be a positive integer");
    if (v < hw) hw = static_cast<int>(v);
  }
  return hw;
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ']';
  return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

static void check_shape(const Shape& s) {
  for (int64_t d : s) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(s));
  }
}

Tensor Tensor::zeros(Shape shape, DType dt) {
  check_shape(shape);
  Tensor t;
  t.numel_ = shape_numel(shape);
  t.shape_ = std::move(shape);
  t.dtype_ = dt;
  t.data_ = std::make_shared<const std::vector<double>>(static_cast<size_t>(t.numel_), 0.0);
  return t;
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
  check_shape(shape);
  Tensor t;
  t.numel_ = shape_numel(shape);
  t.shape_ = std::move(shape);
  t.dtype_ = dt;
  t.data_ = std::make_shared<const std::vector<double>>(static_cast<size_t>(t.numel_),
                                                        quantize(value, dt));
  return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({1}, value, dt); }

Tensor Tensor::from(Shape shape, std::vector<double> values, DType dt) {
  check_shape(shape);
  int64_t n = shape_numel(shape);
  if (n != static_cast<int64_t>(values.size())) {
    throw DimensionError("tensor data size " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
  }
  if (dt == DType::f32) {
    for (double& v : values) v = quantize(v, DType::f32);
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.numel_ = n;
  t.dtype_ = dt;
  t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
  return t;
}

std::span<const double> Tensor::data() const {
  static const std::vector<double> kEmpty;
  const std::vector<double>& v = data_ ? *data_ : kEmpty;
  return {v.data(), v.size()};
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  if (static_cast<int>(idx.size()) != ndim()) {
    throw DimensionError("index rank does not match tensor rank");
  }
  int64_t off = 0;
  int i = 0;
  for (int64_t ix : idx) {
    int64_t d = shape_[static_cast<size_t>(i)];
    if (ix < 0 || ix >= d) throw DimensionError("index out of range");
    off = off * d + ix;
    ++i;
  }
  return (*data_)[static_cast<size_t>(off)];
}

bool Tensor::all_finite() const {
  for (double v : data()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::reshaped(Shape shape) const {
  check_shape(shape);
  if (shape_numel(shape) != numel_) {
    throw DimensionError("reshape from " + shape_str(shape_) + " to " + shape_str(shape) +
                         " changes element count");
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tensor::astype(DType dt) const {
  if (dt == dtype_) return *this;
  std::vector<double> v(data().begin(), data().end());
  return Tensor::from(shape_, std::move(v), dt);
}

}  // namespace spikegrid
