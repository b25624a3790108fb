#include "rbp/grad_methods.hpp"

#include <cmath>
#include <utility>

#include "rbp/errors.hpp"
#include "rbp/rng.hpp"

namespace rbp {

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kBptt: return "bptt";
    case Method::kTbptt: return "tbptt";
    case Method::kRbp: return "rbp";
    case Method::kCgRbp: return "cg-rbp";
    case Method::kNeumannRbp: return "neumann-rbp";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "bptt") return Method::kBptt;
  if (name == "tbptt") return Method::kTbptt;
  if (name == "rbp") return Method::kRbp;
  if (name == "cg-rbp") return Method::kCgRbp;
  if (name == "neumann-rbp") return Method::kNeumannRbp;
  return std::nullopt;
}

namespace {

// Records loss(target, readout(x, w, h)) at a given state and returns the
// pieces a backward pass needs. Used by the BPTT family, which must also
// work on non-converged forwards.
struct ReadoutPass {
  Tensor seed;  // adjoint of h
  ParamBundle readout_grads;
  double loss = 0.0;
};

ReadoutPass run_readout(const ConvergentSystem& system, const Tensor& x, const Tensor& target,
                        const Tensor& h) {
  Tape tape;
  Var xv = tape.input(x);
  std::vector<Var> wv;
  for (const Tensor& w : system.readout_params.values) wv.push_back(tape.input(w));
  Var hv = tape.input(h);
  Var tv = tape.input(target);
  Var y = system.readout(tape, xv, wv, hv);
  Var loss = system.loss(tape, tv, y);
  if (loss.value().size() != 1) {
    throw ShapeError("loss must be scalar, got " + shape_str(loss.shape()));
  }
  std::vector<Var> wrt = wv;
  wrt.push_back(hv);
  std::vector<Tensor> adj = tape.adjoints(loss, Tensor::scalar(1.0), wrt);

  ReadoutPass pass;
  pass.loss = loss.value()[0];
  for (std::size_t i = 0; i < system.readout_params.size(); ++i) {
    pass.readout_grads.add(system.readout_params.names[i], std::move(adj[i]));
  }
  pass.seed = std::move(adj.back());
  return pass;
}

void require_trajectory(const ForwardResult& forward, const char* who) {
  if (!forward.trajectory.has_value()) {
    throw Error(std::string(who) + ": forward result carries no trajectory");
  }
}

// Shared backward sweep over the trailing `window` transition applications.
GradientReport unrolled_backward(const ConvergentSystem& system, const Tensor& x,
                                 const Tensor& target, const ForwardResult& forward,
                                 int window, Method method, int k_used) {
  const auto& traj = *forward.trajectory;
  const int last = forward.steps_taken;  // traj has states 0..last

  ReadoutPass pass = run_readout(system, x, target, traj[static_cast<std::size_t>(last)]);
  Tensor cotangent = std::move(pass.seed);
  ParamBundle grads = system.transition_params.zeros_like();

  const int first = std::max(last - window + 1, 1);
  for (int t = last; t >= first; --t) {
    TransitionRecording rec =
        record_transition(system, x, traj[static_cast<std::size_t>(t - 1)]);
    std::vector<Var> wrt = rec.params;
    wrt.push_back(rec.h);
    std::vector<Tensor> adj = rec.tape.adjoints(rec.out, cotangent, wrt);
    for (std::size_t i = 0; i < grads.size(); ++i) {
      axpy(grads.values[i], adj[i], 1.0);
    }
    cotangent = std::move(adj.back());
  }

  GradientReport report;
  report.transition_grads = std::move(grads);
  report.readout_grads = std::move(pass.readout_grads);
  report.method = method;
  report.k_used = k_used;
  return report;
}

}  // namespace

SteadyLinearization::SteadyLinearization(const ConvergentSystem& system, const Tensor& x,
                                         const Tensor& target, const ForwardResult& forward) {
  if (!forward.converged) {
    throw Error("linearize: forward result is not converged; steady-state methods need a "
                "fixed point");
  }
  const Tensor& h_star = forward.steady_state;
  transition_rec_ = record_transition(system, x, h_star);
  transition_param_names_ = system.transition_params.names;

  readout_rec_.x = readout_rec_.tape.input(x);
  for (const Tensor& w : system.readout_params.values) {
    readout_rec_.params.push_back(readout_rec_.tape.input(w));
  }
  readout_rec_.h = readout_rec_.tape.input(h_star);
  readout_rec_.target = readout_rec_.tape.input(target);
  readout_rec_.y = system.readout(readout_rec_.tape, readout_rec_.x, readout_rec_.params,
                                  readout_rec_.h);
  readout_rec_.loss = system.loss(readout_rec_.tape, readout_rec_.target, readout_rec_.y);
  if (readout_rec_.loss.value().size() != 1) {
    throw ShapeError("loss must be scalar, got " + shape_str(readout_rec_.loss.shape()));
  }
  readout_rec_.h_value = h_star;
  readout_param_names_ = system.readout_params.names;
  loss_value_ = readout_rec_.loss.value()[0];

  const Var wrt[] = {readout_rec_.h};
  seed_ = readout_rec_.tape.adjoints(readout_rec_.loss, Tensor::scalar(1.0), wrt)[0];
}

Tensor SteadyLinearization::jt_product(const Tensor& v) const {
  const Var wrt[] = {transition_rec_.h};
  return transition_rec_.tape.adjoints(transition_rec_.out, v, wrt)[0];
}

Tensor SteadyLinearization::j_product(const Tensor& u) const {
  const Var seeds[] = {transition_rec_.h};
  const Tensor tangents[] = {u};
  return transition_rec_.tape.forward_tangent(transition_rec_.out, seeds, tangents);
}

ParamBundle SteadyLinearization::transition_grads(const Tensor& z) const {
  std::vector<Tensor> adj =
      transition_rec_.tape.adjoints(transition_rec_.out, z, transition_rec_.params);
  ParamBundle out;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    out.add(transition_param_names_[i], std::move(adj[i]));
  }
  return out;
}

ParamBundle SteadyLinearization::readout_grads() const {
  std::vector<Tensor> adj = readout_rec_.tape.adjoints(readout_rec_.loss, Tensor::scalar(1.0),
                                                       readout_rec_.params);
  ParamBundle out;
  for (std::size_t i = 0; i < adj.size(); ++i) {
    out.add(readout_param_names_[i], std::move(adj[i]));
  }
  return out;
}

SteadyLinearization linearize(const ConvergentSystem& system, const Tensor& x,
                              const Tensor& target, const ForwardResult& forward) {
  return SteadyLinearization(system, x, target, forward);
}

ParamBundle grad_output_params(const SteadyLinearization& lin) { return lin.readout_grads(); }

GradientReport bptt(const ConvergentSystem& system, const Tensor& x, const Tensor& target,
                    const ForwardResult& forward) {
  require_trajectory(forward, "bptt");
  return unrolled_backward(system, x, target, forward, forward.steps_taken, Method::kBptt,
                           forward.steps_taken);
}

GradientReport tbptt(const ConvergentSystem& system, const Tensor& x, const Tensor& target,
                     const ForwardResult& forward, int k) {
  require_trajectory(forward, "tbptt");
  if (k < 1 || k > forward.steps_taken) {
    throw ConfigError("tbptt: k must be in [1, steps_taken=" +
                      std::to_string(forward.steps_taken) + "], got " + std::to_string(k));
  }
  // Window of k+1 applications so Jacobian powers 0..k all contribute,
  // clipped at the start of the trajectory (k = steps_taken is exact BPTT).
  return unrolled_backward(system, x, target, forward, k + 1, Method::kTbptt, k);
}

namespace {
GradientReport report_from_z(const SteadyLinearization& lin, const Tensor& z, Method method,
                             int k_used, std::optional<double> residual) {
  GradientReport report;
  report.transition_grads = lin.transition_grads(z);
  report.readout_grads = lin.readout_grads();
  report.method = method;
  report.k_used = k_used;
  report.residual = residual;
  return report;
}
}  // namespace

GradientReport rbp(const SteadyLinearization& lin, double epsilon, int max_iter, RbpInit init,
                   std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw ConfigError("rbp: epsilon must be > 0");
  if (max_iter < 1) throw ConfigError("rbp: max_iter must be >= 1");

  Tensor z = Tensor::zeros(lin.seed().shape());
  if (init == RbpInit::kSeededUniform) {
    Rng rng(seed);
    for (std::int64_t i = 0; i < z.size(); ++i) z[i] = rng.uniform();
  }

  double diff = 0.0;
  for (int it = 1; it <= max_iter; ++it) {
    Tensor next = add(lin.jt_product(z), lin.seed());
    if (!next.all_finite()) {
      throw NonFiniteError("rbp: adjoint iteration diverged at iteration", it);
    }
    diff = norm_inf(sub(next, z));
    z = std::move(next);
    if (diff < epsilon) {
      return report_from_z(lin, z, Method::kRbp, it, diff);
    }
  }
  throw ConvergenceError("rbp: fixed-point iteration did not reach epsilon within " +
                             std::to_string(max_iter) + " iterations",
                         diff);
}

GradientReport rbp_fixed_steps(const SteadyLinearization& lin, int steps) {
  if (steps < 1) throw ConfigError("rbp_fixed_steps: steps must be >= 1");
  Tensor z = Tensor::zeros(lin.seed().shape());
  double diff = 0.0;
  for (int it = 1; it <= steps; ++it) {
    Tensor next = add(lin.jt_product(z), lin.seed());
    if (!next.all_finite()) {
      throw NonFiniteError("rbp_fixed_steps: adjoint iteration diverged at iteration", it);
    }
    diff = norm_inf(sub(next, z));
    z = std::move(next);
  }
  return report_from_z(lin, z, Method::kRbp, steps, diff);
}

GradientReport cg_rbp(const SteadyLinearization& lin, int max_iter, double tol) {
  if (max_iter < 1) throw ConfigError("cg_rbp: max_iter must be >= 1");
  if (!(tol > 0.0)) throw ConfigError("cg_rbp: tol must be > 0");

  auto normal_op = [&lin](const Tensor& p) {
    Tensor u = sub(p, lin.jt_product(p));  // (I−Jᵀ) p
    return sub(u, lin.j_product(u));       // (I−J) (I−Jᵀ) p
  };

  Tensor rhs = sub(lin.seed(), lin.j_product(lin.seed()));
  Tensor z = Tensor::zeros(lin.seed().shape());
  Tensor r = rhs;
  Tensor p = r;
  double rs = dot(r, r);
  int k_used = 0;

  while (std::sqrt(rs) >= tol && k_used < max_iter) {
    Tensor ap = normal_op(p);
    const double pap = dot(p, ap);
    if (pap <= 0.0) {
      if (pap < -1e-12 * dot(p, p)) {
        throw Error("cg_rbp: breakdown, non-positive curvature " + std::to_string(pap));
      }
      break;  // flat direction at roundoff level; no further progress possible
    }
    const double alpha = rs / pap;
    axpy(z, p, alpha);
    axpy(r, ap, -alpha);
    const double rs_next = dot(r, r);
    ++k_used;
    const double beta = rs_next / rs;
    rs = rs_next;
    Tensor p_next = r;
    axpy(p_next, p, beta);
    p = std::move(p_next);
  }
  return report_from_z(lin, z, Method::kCgRbp, k_used, std::sqrt(rs));
}

GradientReport neumann_rbp(const SteadyLinearization& lin, int k, double v_tol) {
  if (k < 0) throw ConfigError("neumann_rbp: k must be >= 0");
  Tensor v = lin.seed();
  Tensor g = lin.seed();
  int k_used = 0;
  for (int t = 1; t <= k; ++t) {
    v = lin.jt_product(v);
    if (!v.all_finite()) {
      throw NonFiniteError("neumann_rbp: series diverged at step", t);
    }
    axpy(g, v, 1.0);
    k_used = t;
    if (v_tol > 0.0 && norm_inf(v) < v_tol) break;
  }
  GradientReport report = report_from_z(lin, g, Method::kNeumannRbp, k_used, std::nullopt);
  return report;
}

double truncation_error_bound(double mu_bound, int k) {
  if (k < 0) throw ConfigError("truncation_error_bound: k must be >= 0");
  if (!(mu_bound >= 0.0) || mu_bound >= 1.0) {
    throw Error("truncation_error_bound: vacuous for norm estimate " +
                std::to_string(mu_bound) + " >= 1");
  }
  return std::pow(mu_bound, k + 1) / (1.0 - mu_bound);
}

double truncation_error_bound(const ContractionEstimate& estimate, int k) {
  return truncation_error_bound(estimate.mu_bound, k);
}

}  // namespace rbp
