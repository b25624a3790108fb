#include "rbp/dynamics.hpp"

#include <cmath>
#include <utility>

#include "rbp/errors.hpp"
#include "rbp/rng.hpp"

namespace rbp {

TransitionRecording record_transition(const ConvergentSystem& system, const Tensor& x,
                                      const Tensor& h) {
  TransitionRecording rec;
  rec.x = rec.tape.input(x);
  for (const Tensor& w : system.transition_params.values) rec.params.push_back(rec.tape.input(w));
  rec.h = rec.tape.input(h);
  rec.out = system.transition(rec.tape, rec.x, rec.params, rec.h);
  if (!rec.out.value().same_shape(h)) {
    throw ShapeError("transition must preserve the hidden-state shape, got " +
                     shape_str(rec.out.shape()) + " from " + shape_str(h.shape()));
  }
  return rec;
}

Tensor apply_transition(const ConvergentSystem& system, const Tensor& x, const Tensor& h) {
  return record_transition(system, x, h).out.value();
}

ForwardResult iterate(const ConvergentSystem& system, const Tensor& x, const Tensor& h0,
                      int max_steps, double tol, bool store_trajectory) {
  if (max_steps < 1) throw ConfigError("iterate: max_steps must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("iterate: tol must be > 0");

  ForwardResult result;
  result.steady_state = h0;
  if (store_trajectory) {
    result.trajectory.emplace();
    result.trajectory->push_back(h0);
  }

  for (int step = 1; step <= max_steps; ++step) {
    Tensor next;
    try {
      next = apply_transition(system, x, result.steady_state);
    } catch (const NonFiniteError&) {
      throw NonFiniteError("iterate: state diverged at step", step);
    }
    const double diff = norm_inf(sub(next, result.steady_state));
    result.diff_norms.push_back(diff);
    result.steady_state = std::move(next);
    result.steps_taken = step;
    if (store_trajectory) result.trajectory->push_back(result.steady_state);
    if (diff < tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

ContractionEstimate spectral_estimate(const ConvergentSystem& system, const Tensor& x,
                                      const Tensor& h_star, int iters, std::uint64_t seed) {
  if (iters < 1) throw ConfigError("spectral_estimate: iters must be >= 1");
  TransitionRecording rec = record_transition(system, x, h_star);
  const Var jac_wrt[] = {rec.h};

  auto j_product = [&](const Tensor& v) {
    const Var seeds[] = {rec.h};
    const Tensor tangents[] = {v};
    return rec.tape.forward_tangent(rec.out, seeds, tangents);
  };
  auto jt_product = [&](const Tensor& v) { return rec.tape.adjoints(rec.out, v, jac_wrt)[0]; };

  auto start_vector = [&](Rng& rng) {
    Tensor v(h_star.shape());
    for (std::int64_t i = 0; i < v.size(); ++i) v[i] = rng.uniform(-1.0, 1.0);
    const double n = norm_l2(v);
    if (n > 0.0) {
      for (std::int64_t i = 0; i < v.size(); ++i) v[i] /= n;
    }
    return v;
  };

  Rng rng(seed);
  Tensor v = start_vector(rng);
  if (norm_l2(v) == 0.0) v = start_vector(rng);  // reseed once
  if (norm_l2(v) == 0.0) throw Error("spectral_estimate: start vector vanished");

  ContractionEstimate est;
  est.iterations = iters;

  // Spectral radius: power iteration on v ↦ Jv. The per-step growth ratios
  // oscillate when the dominant eigenvalues are a complex pair, so the
  // estimate averages log-growth over the trailing half of the run.
  {
    Tensor u = v;
    double log_acc = 0.0;
    int acc_count = 0;
    const int burn_in = iters / 2;
    for (int it = 0; it < iters; ++it) {
      Tensor ju = j_product(u);
      const double growth = norm_l2(ju);
      if (growth == 0.0) {
        est.rho_hat = 0.0;
        acc_count = -1;
        break;
      }
      if (it >= burn_in) {
        log_acc += std::log(growth);
        ++acc_count;
      }
      for (std::int64_t i = 0; i < ju.size(); ++i) ju[i] /= growth;
      u = std::move(ju);
    }
    if (acc_count > 0) est.rho_hat = std::exp(log_acc / acc_count);
  }

  // Operator norm: power iteration on the symmetric map v ↦ JᵀJv, then a
  // square root of the Rayleigh quotient.
  {
    Tensor u = start_vector(rng);
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
      Tensor bu = jt_product(j_product(u));
      lambda = dot(u, bu);
      const double n = norm_l2(bu);
      if (n == 0.0) {
        lambda = 0.0;
        break;
      }
      for (std::int64_t i = 0; i < bu.size(); ++i) bu[i] /= n;
      u = std::move(bu);
    }
    est.mu_bound = std::sqrt(std::max(0.0, lambda));
  }
  return est;
}

}  // namespace rbp
