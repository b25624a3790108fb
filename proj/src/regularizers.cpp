#include "rbp/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "rbp/errors.hpp"
#include "rbp/rng.hpp"

namespace rbp {

namespace {
void require_square(const Tensor& j, const char* who) {
  if (j.rank() != 2 || j.dim(0) != j.dim(1)) {
    throw ShapeError(std::string(who) + ": expects a square matrix, got " +
                     shape_str(j.shape()));
  }
}
}  // namespace

double column_l1_penalty(const Tensor& jacobian, double eta) {
  require_square(jacobian, "column_l1_penalty");
  if (!(eta > 0.0 && eta < 1.0)) {
    throw ConfigError("column_l1_penalty: eta must lie in (0, 1)");
  }
  const std::int64_t n = jacobian.dim(0);
  double worst = 0.0;
  for (std::int64_t c = 0; c < n; ++c) {
    double col = 0.0;
    for (std::int64_t r = 0; r < n; ++r) col += std::fabs(jacobian.at(r, c));
    const double excess = std::max(0.0, col - eta);
    worst = std::max(worst, excess * excess);
  }
  return worst;
}

double gershgorin_hinge(const Tensor& jacobian) {
  require_square(jacobian, "gershgorin_hinge");
  const std::int64_t n = jacobian.dim(0);
  // A = (I−J)ᵀ(I−J), accumulated column by column; only ‖A − I‖_F is needed.
  std::vector<double> residual_col(static_cast<std::size_t>(n));
  double fro_sq = 0.0;
  for (std::int64_t c = 0; c < n; ++c) {
    for (std::int64_t r = 0; r < n; ++r) {
      residual_col[static_cast<std::size_t>(r)] =
          (r == c ? 1.0 : 0.0) - jacobian.at(r, c);  // (I−J)(:,c)
    }
    for (std::int64_t r = 0; r < n; ++r) {
      double a_rc = 0.0;  // (I−J)ᵀ(I−J) entry (r, c)
      for (std::int64_t k = 0; k < n; ++k) {
        const double m_kr = (k == r ? 1.0 : 0.0) - jacobian.at(k, r);
        a_rc += m_kr * residual_col[static_cast<std::size_t>(k)];
      }
      const double d = a_rc - (r == c ? 1.0 : 0.0);
      fro_sq += d * d;
    }
  }
  return std::max(0.0, std::sqrt(static_cast<double>(n)) * std::sqrt(fro_sq) - 1.0);
}

namespace {

// Eigenvalue count of a symmetric tridiagonal below x, via the Sturm pivot
// recurrence d_i = (a_i − x) − b_{i−1}²/d_{i−1}.
int sturm_count_below(const std::vector<double>& diag, const std::vector<double>& off,
                      double x) {
  int count = 0;
  double d = 1.0;
  for (std::size_t i = 0; i < diag.size(); ++i) {
    const double b2 = i == 0 ? 0.0 : off[i - 1] * off[i - 1];
    d = diag[i] - x - b2 / d;
    if (d == 0.0) d = -1e-300;
    if (d < 0.0) ++count;
  }
  return count;
}

double tridiag_min_eig(const std::vector<double>& diag, const std::vector<double>& off) {
  // Gershgorin interval of the projection
  double lo = diag[0], hi = diag[0];
  for (std::size_t i = 0; i < diag.size(); ++i) {
    double radius = 0.0;
    if (i > 0) radius += std::fabs(off[i - 1]);
    if (i + 1 < diag.size()) radius += std::fabs(off[i]);
    lo = std::min(lo, diag[i] - radius);
    hi = std::max(hi, diag[i] + radius);
  }
  const double scale = std::max({std::fabs(lo), std::fabs(hi), 1.0});
  for (int it = 0; it < 200 && hi - lo > 1e-15 * scale; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sturm_count_below(diag, off, mid) >= 1) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Eigenvector of the tridiagonal for the given eigenvalue, by a few inverse
// iterations with a slightly shifted Thomas solve (partial pivoting).
std::vector<double> tridiag_eigvec(const std::vector<double>& diag,
                                   const std::vector<double>& off, double lambda) {
  const std::size_t m = diag.size();
  std::vector<double> v(m, 1.0 / std::sqrt(static_cast<double>(m)));
  double scale = 0.0;
  for (double a : diag) scale = std::max(scale, std::fabs(a));
  for (double b : off) scale = std::max(scale, std::fabs(b));
  const double shift = lambda - 1e-12 * std::max(scale, 1.0);

  for (int sweep = 0; sweep < 3; ++sweep) {
    // Solve (T - shift I) y = v by LU with partial pivoting on the tridiagonal.
    std::vector<double> a(m), b(m, 0.0), c(m, 0.0), rhs = v;
    for (std::size_t i = 0; i < m; ++i) a[i] = diag[i] - shift;
    for (std::size_t i = 0; i + 1 < m; ++i) {
      b[i] = off[i];  // superdiagonal
      c[i] = off[i];  // subdiagonal entry below row i
    }
    std::vector<double> extra(m, 0.0);  // fill-in from row swaps
    for (std::size_t i = 0; i + 1 < m; ++i) {
      if (std::fabs(c[i]) > std::fabs(a[i])) {
        std::swap(a[i], c[i]);
        std::swap(b[i], a[i + 1]);
        std::swap(extra[i], b[i + 1]);
        std::swap(rhs[i], rhs[i + 1]);
      }
      if (a[i] == 0.0) a[i] = 1e-300;
      const double factor = c[i] / a[i];
      a[i + 1] -= factor * b[i];
      b[i + 1] -= factor * extra[i];
      rhs[i + 1] -= factor * rhs[i];
      c[i] = 0.0;
    }
    if (a[m - 1] == 0.0) a[m - 1] = 1e-300;
    std::vector<double> y(m, 0.0);
    for (std::size_t ii = m; ii-- > 0;) {
      double s = rhs[ii];
      if (ii + 1 < m) s -= b[ii] * y[ii + 1];
      if (ii + 2 < m) s -= extra[ii] * y[ii + 2];
      y[ii] = s / a[ii];
    }
    double nrm = 0.0;
    for (double e : y) nrm += e * e;
    nrm = std::sqrt(nrm);
    if (nrm == 0.0) break;
    for (std::size_t i = 0; i < m; ++i) v[i] = y[i] / nrm;
  }
  return v;
}

}  // namespace

MinEigEstimate lanczos_min_eig(const MatVecFn& matvec, std::int64_t n, int m,
                               std::uint64_t seed) {
  if (m < 1 || m > n) {
    throw ConfigError("lanczos_min_eig: need 1 <= m <= n, got m=" + std::to_string(m) +
                      ", n=" + std::to_string(n));
  }

  Rng rng(seed);
  Tensor q(std::vector<std::int64_t>{n});
  for (std::int64_t i = 0; i < n; ++i) q[i] = rng.uniform(-1.0, 1.0);
  {
    const double nrm = norm_l2(q);
    if (nrm == 0.0) throw Error("lanczos_min_eig: start vector vanished");
    for (std::int64_t i = 0; i < n; ++i) q[i] /= nrm;
  }

  std::vector<Tensor> basis;  // kept for full reorthogonalization
  basis.push_back(q);
  std::vector<double> alpha, beta;
  double last_beta = 0.0;
  int steps = 0;

  const double breakdown_tol = 1e-13;
  for (int j = 0; j < m; ++j) {
    Tensor w = matvec(basis.back());
    if (!w.same_shape(q)) {
      throw ShapeError("lanczos_min_eig: matvec changed the vector shape");
    }
    if (j > 0) axpy(w, basis[static_cast<std::size_t>(j - 1)], -beta[static_cast<std::size_t>(j - 1)]);
    const double a = dot(basis.back(), w);
    alpha.push_back(a);
    axpy(w, basis.back(), -a);
    // Reorthogonalize twice against the whole basis; removes the ghost
    // eigenvalues classical Lanczos suffers from.
    for (int pass = 0; pass < 2; ++pass) {
      for (const Tensor& b : basis) axpy(w, b, -dot(b, w));
    }
    ++steps;
    last_beta = norm_l2(w);
    if (j + 1 == m) break;
    if (last_beta < breakdown_tol) break;  // invariant subspace found early
    beta.push_back(last_beta);
    Tensor next(w.shape());
    for (std::int64_t i = 0; i < w.size(); ++i) next[i] = w[i] / last_beta;
    basis.push_back(std::move(next));
  }

  MinEigEstimate est;
  est.lanczos_steps = steps;
  est.lambda_min_hat = tridiag_min_eig(alpha, beta);
  std::vector<double> s = tridiag_eigvec(alpha, beta, est.lambda_min_hat);
  // ‖A y − λ y‖ for the Ritz pair equals |β_m · s_m| when the recursion ran
  // its full course; after a breakdown the subspace is invariant and the
  // residual is the breakdown norm itself.
  est.ritz_residual = std::fabs(last_beta * s.back());
  return est;
}

double min_eig_hinge(const MinEigEstimate& estimate) {
  return std::max(0.0, -estimate.lambda_min_hat);
}

MatVecFn make_gram_matvec(const SteadyLinearization& lin, double diag_shift) {
  return [&lin, diag_shift](const Tensor& v) {
    Tensor u = sub(v, lin.j_product(v));   // (I−J) v
    Tensor out = sub(u, lin.jt_product(u));  // (I−Jᵀ)(I−J) v
    if (diag_shift != 0.0) axpy(out, v, diag_shift);
    return out;
  };
}

}  // namespace rbp
