#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>

#include "rbp/dynamics.hpp"
#include "rbp/system.hpp"

namespace rbp {

enum class Method { kBptt, kTbptt, kRbp, kCgRbp, kNeumannRbp };

std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

/// Gradients of the loss with respect to both parameter bundles, plus method
/// diagnostics. `residual` is populated only by the solver-based methods
/// (rbp, cg-rbp); `bound` only when a truncation-error bound was attached.
struct GradientReport {
  ParamBundle transition_grads;
  ParamBundle readout_grads;
  Method method = Method::kBptt;
  int k_used = 0;
  std::optional<double> residual;
  std::optional<double> bound;
};

/// The loss linearized at a converged steady state: the cotangent seed
/// (∂L/∂y·∂y/∂h*)ᵀ plus matrix-free products with the transition Jacobian at
/// (x, w, h*). This is the only forward information the constant-memory
/// methods receive; a trajectory cannot be supplied through this type.
class SteadyLinearization {
 public:
  SteadyLinearization(const ConvergentSystem& system, const Tensor& x, const Tensor& target,
                      const ForwardResult& forward);

  const Tensor& seed() const { return seed_; }
  const Tensor& steady_state() const { return readout_rec_.h_value; }
  double loss_value() const { return loss_value_; }
  std::int64_t state_size() const { return seed_.size(); }

  Tensor jt_product(const Tensor& v) const;  // Jᵀ v
  Tensor j_product(const Tensor& u) const;   // J u

  /// zᵀ·∂transition/∂w at the steady state, one reverse sweep.
  ParamBundle transition_grads(const Tensor& z) const;
  /// ∂L/∂(readout params) holding h* fixed.
  ParamBundle readout_grads() const;

 private:
  struct ReadoutRecording {
    Tape tape;
    Var x, target, h, y, loss;
    std::vector<Var> params;
    Tensor h_value;
  };

  TransitionRecording transition_rec_;
  ReadoutRecording readout_rec_;
  Tensor seed_;
  double loss_value_ = 0.0;
  std::vector<std::string> transition_param_names_;
  std::vector<std::string> readout_param_names_;
};

SteadyLinearization linearize(const ConvergentSystem& system, const Tensor& x,
                              const Tensor& target, const ForwardResult& forward);

ParamBundle grad_output_params(const SteadyLinearization& lin);

/// Exact gradient through the entire stored trajectory.
GradientReport bptt(const ConvergentSystem& system, const Tensor& x, const Tensor& target,
                    const ForwardResult& forward);

/// Backward pass truncated to the trailing window: parameter contributions
/// are accumulated at the applications producing h^T … h^(T−K), so k=0..K
/// Jacobian powers appear, clipped at the start of the trajectory.
/// Requires 1 ≤ k ≤ steps_taken; k = steps_taken reproduces bptt exactly.
GradientReport tbptt(const ConvergentSystem& system, const Tensor& x, const Tensor& target,
                     const ForwardResult& forward, int k);

enum class RbpInit { kZeros, kSeededUniform };

/// Fixed-point iteration z ← Jᵀz + seed until the max-norm update drops
/// below epsilon. Failure to converge within max_iter is a hard error; the
/// thrown ConvergenceError carries the last residual.
GradientReport rbp(const SteadyLinearization& lin, double epsilon, int max_iter,
                   RbpInit init = RbpInit::kZeros, std::uint64_t seed = 0);

/// The same update run for exactly `steps` iterations from z0 = 0, with no
/// convergence requirement. Matches the truncated usage in the experiment
/// protocols and the k-step equivalence suites.
GradientReport rbp_fixed_steps(const SteadyLinearization& lin, int steps);

/// Conjugate gradient on the normal equations
///   (I−J)(I−Jᵀ) z = (I−J)·seed,
/// matrix-free: each iteration costs one Jᵀv and one Jv. Hitting max_iter is
/// best-effort (check `residual`); non-positive curvature beyond roundoff is
/// an error.
GradientReport cg_rbp(const SteadyLinearization& lin, int max_iter, double tol);

/// Truncated Neumann-series gradient: v and g start at the cotangent seed;
/// K repeats of v ← Jᵀv, g ← g + v. Auxiliary storage is two state-sized
/// vectors regardless of K. A positive v_tol stops early once ‖v‖∞ falls
/// below it (0 disables early stopping, keeping k-step arithmetic exact).
GradientReport neumann_rbp(const SteadyLinearization& lin, int k, double v_tol = 0.0);

/// ‖(I−J)⁻¹‖·‖J‖^(K+1) with ‖(I−J)⁻¹‖ bounded by 1/(1−‖J‖).
/// Vacuous (an error) when the norm estimate reaches 1.
double truncation_error_bound(double mu_bound, int k);
double truncation_error_bound(const ContractionEstimate& estimate, int k);

}  // namespace rbp
