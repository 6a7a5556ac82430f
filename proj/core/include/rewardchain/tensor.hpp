#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rc {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Arithmetic precision of a tape.
///
/// `f32` is the production mode: every stored value and gradient is rounded to
/// binary32 after each operation, while reductions run in binary64 before the
/// final rounding. `f64` skips the rounding and exists for finite-difference
/// oracles, which need more headroom than binary32 offers at h = 1e-3.
enum class Precision { f32, f64 };

inline double round_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

/// Dense row-major tensor. A rank-0 tensor holds a single value.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);
  Tensor(Shape shape, std::initializer_list<double> values);

  static Tensor scalar(double v);
  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, double v);
  static Tensor from_floats(Shape shape, std::span<const float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return data_.size(); }
  /// Rows/cols of a rank-2 view; rank-1 tensors are treated as a single row.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  /// Value of a single-element tensor; throws otherwise.
  double item() const;
  std::vector<float> to_floats() const;
  Tensor reshaped(Shape shape) const;
  Tensor row(std::size_t r) const;

  void round_to(Precision p);
  bool all_finite() const;
  /// Equality of shape and of every value's binary32 bit pattern.
  bool bit_equal(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double l2_norm(const Tensor& t);
double max_abs(const Tensor& t);

}  // namespace rc
