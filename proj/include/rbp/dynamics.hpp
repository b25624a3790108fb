#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rbp/system.hpp"
#include "rbp/tensor.hpp"

namespace rbp {

/// Outcome of running a system forward to (or toward) its fixed point.
struct ForwardResult {
  Tensor steady_state;
  int steps_taken = 0;
  bool converged = false;
  std::vector<double> diff_norms;  // ‖h_t − h_{t−1}‖∞ per step
  std::optional<std::vector<Tensor>> trajectory;  // h^0..h^T when requested
};

/// Applies h ← transition(x, w, h) until the max-norm step difference drops
/// below `tol` or `max_steps` is reached. Non-convergence is reported, not
/// thrown; a non-finite state is an error carrying the step index.
/// Storage is independent of steps_taken unless `store_trajectory` is set.
ForwardResult iterate(const ConvergentSystem& system, const Tensor& x, const Tensor& h0,
                      int max_steps, double tol, bool store_trajectory = false);

/// Power-iteration estimates of the transition Jacobian's spectral radius and
/// operator 2-norm at a steady state.
struct ContractionEstimate {
  double rho_hat = 0.0;   // spectral radius estimate
  double mu_bound = 0.0;  // largest singular value estimate; rho_hat ≤ mu_bound
  int iterations = 0;
};

ContractionEstimate spectral_estimate(const ConvergentSystem& system, const Tensor& x,
                                      const Tensor& h_star, int iters, std::uint64_t seed);

}  // namespace rbp
