#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "rbp/system.hpp"
#include "rbp/tensor.hpp"

namespace rbp {

/// Inner objective ½·Σ q_i(θ_i − c_i)², one parameter group. Deterministic
/// and strongly convex, so the unrolled optimizer has a genuine fixed point.
struct QuadraticInner {
  Tensor curvature;  // q, entrywise positive
  Tensor target;     // c
};

/// Fully connected net with tanh hidden layers and a linear output, trained
/// with a mean squared error. `widths` runs input..output; every weight and
/// bias tensor is its own hyperparameter group. The training batch arrives
/// packed in the system input (see pack_batch), and the gradient of the
/// inner loss is spelled out in primitives so the whole optimizer step stays
/// first-order differentiable.
struct MlpInner {
  std::vector<int> widths;
  int batch_size = 0;
};

/// Training viewed as a recurrent system: the state stacks the flattened
/// inner parameters and their velocities, and one transition is one
/// SGD-with-momentum step
///   v' = sigmoid(m)⊙v − exp(s)⊙∇ℓ(θ),   θ' = θ + v'
/// with one (s, m) hyperparameter pair per parameter group. The readout is
/// the inner loss itself.
struct UnrolledSgdMeta {
  std::variant<QuadraticInner, MlpInner> inner;
  ParamBundle hyperparams;  // "<group>.log_lr", "<group>.momentum_logit", all shape {1}

  /// Hyperparameters start at learning rate exp(−1) and momentum 0.5.
  static UnrolledSgdMeta quadratic(Tensor curvature, Tensor target);
  static UnrolledSgdMeta mlp(std::vector<int> widths, int batch_size);

  struct Group {
    std::string name;
    std::vector<std::int64_t> shape;
    std::int64_t offset;  // into the flattened parameter block
    std::int64_t size;
  };
  const std::vector<Group>& groups() const { return groups_; }
  std::int64_t theta_size() const { return theta_size_; }
  std::int64_t state_size() const { return 2 * theta_size_; }

  ConvergentSystem system() const;

  /// State with seeded parameters and zero velocities.
  Tensor initial_state(double init_scale, std::uint64_t seed) const;
  /// Inner loss at the parameters held in `state`, as a plain value.
  double inner_loss_value(const Tensor& state, const Tensor& x) const;
  /// One recorded optimizer step as a plain value computation.
  Tensor step(const Tensor& state, const Tensor& x) const;

  static Tensor pack_batch(const Tensor& inputs, const Tensor& targets);

 private:
  void finalize_groups();
  std::vector<Group> groups_;
  std::int64_t theta_size_ = 0;
};

}  // namespace rbp
