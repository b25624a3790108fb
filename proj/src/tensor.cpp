#include "rbp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rbp/errors.hpp"

namespace rbp {

namespace {
std::atomic<std::int64_t> g_live_buffers{0};
std::atomic<std::int64_t> g_peak_buffers{0};

void bump_peak(std::int64_t live) {
  std::int64_t peak = g_peak_buffers.load(std::memory_order_relaxed);
  while (live > peak &&
         !g_peak_buffers.compare_exchange_weak(peak, live, std::memory_order_relaxed)) {
  }
}
}  // namespace

void Tensor::count_up() {
  if (!data_.empty()) bump_peak(g_live_buffers.fetch_add(1, std::memory_order_relaxed) + 1);
}

void Tensor::count_down() {
  if (!data_.empty()) g_live_buffers.fetch_sub(1, std::memory_order_relaxed);
}

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  data_.assign(static_cast<std::size_t>(shape_size(shape_)), 0.0);
  count_up();
}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  if (shape_size(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str(shape_));
  }
  count_up();
}

Tensor::Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_) { count_up(); }

Tensor::Tensor(Tensor&& other) noexcept
    : shape_(std::move(other.shape_)), data_(std::move(other.data_)) {
  other.shape_.clear();
  other.data_.clear();
}

Tensor& Tensor::operator=(const Tensor& other) {
  if (this != &other) {
    count_down();
    shape_ = other.shape_;
    data_ = other.data_;
    count_up();
  }
  return *this;
}

Tensor& Tensor::operator=(Tensor&& other) noexcept {
  if (this != &other) {
    count_down();
    shape_ = std::move(other.shape_);
    data_ = std::move(other.data_);
    other.shape_.clear();
    other.data_.clear();
  }
  return *this;
}

Tensor::~Tensor() { count_down(); }

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::ones(std::vector<std::int64_t> shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(std::vector<std::int64_t> shape, double v) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = v;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::int64_t Tensor::live_buffers() { return g_live_buffers.load(std::memory_order_relaxed); }
std::int64_t Tensor::peak_buffers() { return g_peak_buffers.load(std::memory_order_relaxed); }
void Tensor::reset_peak_buffers() {
  g_peak_buffers.store(g_live_buffers.load(std::memory_order_relaxed),
                       std::memory_order_relaxed);
}

std::int64_t shape_size(std::span<const std::int64_t> shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(std::span<const std::int64_t> shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor scaled(const Tensor& a, double c) {
  Tensor out(a.shape());
  for (std::int64_t i = 0; i < a.size(); ++i) out[i] = c * a[i];
  return out;
}

void axpy(Tensor& y, const Tensor& x, double c) {
  require_same_shape(y, x, "axpy");
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] += c * x[i];
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm_inf(const Tensor& a) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i]));
  return m;
}

double norm_l2(const Tensor& a) { return std::sqrt(dot(a, a)); }

}  // namespace rbp
