#pragma once

#include <cstdint>
#include <utility>

#include "rbp/system.hpp"
#include "rbp/tensor.hpp"

namespace rbp {

/// Continuous associative-memory network. The state vector stacks observed,
/// hidden and output neurons; observed entries are clamped to the presented
/// pixels after every update. One update is an explicit Euler step of
///   dh_i/dt = −gain·h_i / time_constant + Σ_j w_ij·φ(gain·h_j) + I_i
/// with φ the sigmoid and w the symmetrized coupling (M + Mᵀ)/2, which is
/// what makes the energy below a descent function.
struct HopfieldNet {
  int n_observed = 0;
  int n_hidden = 0;
  int n_output = 0;
  double time_constant = 1.0;  // divides the leak term
  double gain = 0.5;           // slope inside the activation
  double euler_step = 0.5;
  Tensor coupling_raw;  // unconstrained M; the effective weights are (M+Mᵀ)/2

  static HopfieldNet create(int n_observed, int n_hidden, int n_output, double init_scale,
                            std::uint64_t seed);

  int total_neurons() const { return n_observed + n_hidden + n_output; }

  /// The convergent system: transition = one clamped Euler step driven by the
  /// observed pixels, readout = activations of the output neurons, loss = L1
  /// distance between the readout and the presented pattern.
  ConvergentSystem system() const;

  /// One Euler step as a plain value computation.
  Tensor step(const Tensor& h, const Tensor& pixels) const;

  /// Energy of the state; non-increasing along trajectories for small Euler
  /// steps. The observed pixel drive is read off the clamped entries of h.
  /// `shifted` adds ln2 per neuron so a quiescent activation scores zero.
  double energy(const Tensor& h, bool shifted = true) const;

  /// Continuous output-neuron activations and their binarization (x > 0.5).
  std::pair<Tensor, Tensor> readout(const Tensor& h) const;

  /// Symmetrized coupling matrix (M + Mᵀ)/2 as a plain value.
  Tensor effective_coupling() const;
};

/// Zeroes an exact count ⌊rate·nnz⌋ of the nonzero entries, chosen uniformly
/// without replacement; zero entries are untouched.
Tensor corrupt_pattern(const Tensor& pattern, double rate, std::uint64_t seed);

}  // namespace rbp
