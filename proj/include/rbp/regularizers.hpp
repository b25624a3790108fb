#pragma once

#include <cstdint>
#include <functional>

#include "rbp/grad_methods.hpp"
#include "rbp/tensor.hpp"

namespace rbp {

/// maxᵢ(max(0, ‖J(:,i)‖₁ − eta))² — per-column L1 contraction penalty,
/// hinged so columns already within eta contribute nothing.
double column_l1_penalty(const Tensor& jacobian, double eta);

/// With A = (I−J)ᵀ(I−J): max(0, √n·‖A−I‖_F − 1). Zero exactly when the
/// Frobenius bound certifies λ_min(A) ≥ 1 − √n‖A−I‖_F ≥ 0.
double gershgorin_hinge(const Tensor& jacobian);

struct MinEigEstimate {
  double lambda_min_hat = 0.0;
  int lanczos_steps = 0;      // < m signals early breakdown
  double ritz_residual = 0.0;
};

using MatVecFn = std::function<Tensor(const Tensor&)>;

/// m-step Lanczos with full reorthogonalization on a symmetric operator of
/// dimension n; the smallest eigenvalue of the tridiagonal projection is
/// extracted by bisection on Sturm sequence sign counts.
MinEigEstimate lanczos_min_eig(const MatVecFn& matvec, std::int64_t n, int m,
                               std::uint64_t seed);

/// max(0, −λ_min): penalty pushing the smallest eigenvalue positive.
double min_eig_hinge(const MinEigEstimate& estimate);

/// v ↦ (I−J)ᵀ(I−J)v + shift·v from the matrix-free products of a steady-state
/// linearization. The optional shift compensates a merely positive
/// semi-definite operator.
MatVecFn make_gram_matvec(const SteadyLinearization& lin, double diag_shift = 0.0);

}  // namespace rbp
