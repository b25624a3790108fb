#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rbp {

/// Dense row-major tensor of 64-bit reals. Shapes must match exactly in all
/// arithmetic; there is no broadcasting. Tensors are plain values: copyable,
/// movable, and safe to hand between threads.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> shape);
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  Tensor(const Tensor& other);
  Tensor(Tensor&& other) noexcept;
  Tensor& operator=(const Tensor& other);
  Tensor& operator=(Tensor&& other) noexcept;
  ~Tensor();

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::int64_t> shape);
  static Tensor ones(std::vector<std::int64_t> shape);
  static Tensor full(std::vector<std::int64_t> shape, double v);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return {data_.data(), data_.size()}; }

  double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // 2-D element access; no bounds checks beyond asserts in debug builds.
  double& at(std::int64_t r, std::int64_t c) {
    return data_[static_cast<std::size_t>(r * shape_[1] + c)];
  }
  double at(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * shape_[1] + c)];
  }

  bool all_finite() const;

  // Buffer accounting, used by tests to pin down memory contracts
  // (e.g. that truncated solvers use storage independent of K).
  static std::int64_t live_buffers();
  static std::int64_t peak_buffers();
  static void reset_peak_buffers();

 private:
  void count_up();
  void count_down();

  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

std::int64_t shape_size(std::span<const std::int64_t> shape);
std::string shape_str(std::span<const std::int64_t> shape);

// Plain (non-recorded) vector arithmetic used by the iterative solvers.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scaled(const Tensor& a, double c);
// y += c * x, in place.
void axpy(Tensor& y, const Tensor& x, double c);
double dot(const Tensor& a, const Tensor& b);
double norm_inf(const Tensor& a);
double norm_l2(const Tensor& a);

}  // namespace rbp
