#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spikegrid/common.hpp"

namespace spikegrid {

// Numeric precision of a tensor. Storage is always 64-bit; with f32 every
// kernel computes in single precision and each stored value round-trips
// through float exactly, so f32 arithmetic is genuine while serialization
// stays uniform.
enum class DType : uint8_t { f32 = 0, f64 = 1 };

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

// Immutable dense row-major value. Copies are O(1); the payload is shared.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dt = DType::f64);
  static Tensor full(Shape shape, double value, DType dt = DType::f64);
  static Tensor scalar(double value, DType dt = DType::f64);
  // Takes ownership of `values`; quantizes through float when dt == f32.
  static Tensor from(Shape shape, std::vector<double> values,
                     DType dt = DType::f64);

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return numel_; }
  DType dtype() const { return dtype_; }
  bool defined() const { return static_cast<bool>(data_); }

  std::span<const double> data() const;
  double operator[](int64_t i) const { return (*data_)[static_cast<size_t>(i)]; }
  double at(std::initializer_list<int64_t> idx) const;

  bool all_finite() const;
  // Same storage viewed under a different shape; element count must match.
  Tensor reshaped(Shape shape) const;
  Tensor astype(DType dt) const;

 private:
  Shape shape_;
  int64_t numel_ = 0;
  DType dtype_ = DType::f64;
  std::shared_ptr<const std::vector<double>> data_;
};

// Round a double through the target precision.
inline double quantize(double v, DType dt) {
  return dt == DType::f32 ? static_cast<double>(static_cast<float>(v)) : v;
}

}  // namespace spikegrid
