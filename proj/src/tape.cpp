#include "rbp/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "rbp/errors.hpp"

namespace rbp {

const Tensor& Var::value() const { return tape->value(index); }
const std::vector<std::int64_t>& Var::shape() const { return value().shape(); }

namespace {

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor matmul_plain(const Tensor& a, const Tensor& b) {
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      if (aip == 0.0) continue;
      for (std::int64_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
    }
  }
  return out;
}

// Aᵀ B with A (k×m), B (k×n) -> (m×n)
Tensor matmul_trans_a(const Tensor& a, const Tensor& b) {
  const std::int64_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor out({m, n});
  for (std::int64_t p = 0; p < k; ++p) {
    for (std::int64_t i = 0; i < m; ++i) {
      const double api = a.at(p, i);
      if (api == 0.0) continue;
      for (std::int64_t j = 0; j < n; ++j) out.at(i, j) += api * b.at(p, j);
    }
  }
  return out;
}

// A Bᵀ with A (m×k), B (n×k) -> (m×n)
Tensor matmul_trans_b(const Tensor& a, const Tensor& b) {
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor out({m, n});
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(j, p);
      out.at(i, j) = s;
    }
  }
  return out;
}

Tensor matvec_plain(const Tensor& a, const Tensor& x) {
  const std::int64_t m = a.dim(0), k = a.dim(1);
  Tensor out({m});
  for (std::int64_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::int64_t p = 0; p < k; ++p) s += a.at(i, p) * x[p];
    out[i] = s;
  }
  return out;
}

// Aᵀ y with A (m×k), y (m) -> (k)
Tensor matvec_trans_a(const Tensor& a, const Tensor& y) {
  const std::int64_t m = a.dim(0), k = a.dim(1);
  Tensor out({k});
  for (std::int64_t i = 0; i < m; ++i) {
    const double yi = y[i];
    if (yi == 0.0) continue;
    for (std::int64_t p = 0; p < k; ++p) out[p] += a.at(i, p) * yi;
  }
  return out;
}

Tensor transpose_plain(const Tensor& a) {
  const std::int64_t m = a.dim(0), n = a.dim(1);
  Tensor out({n, m});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

Tape* common_tape(std::span<const Var> vars, const char* op) {
  require(!vars.empty(), std::string(op) + ": no operands");
  Tape* t = vars[0].tape;
  for (const Var& v : vars) {
    require(v.valid() && v.tape == t, std::string(op) + ": operands must live on one tape");
  }
  return t;
}

}  // namespace

Var Tape::input(Tensor value) {
  nodes_.push_back(Node{Op::kInput, {}, std::move(value), 0.0, {}});
  const int idx = static_cast<int>(nodes_.size()) - 1;
  if (!nodes_.back().value.all_finite()) {
    throw NonFiniteError("non-finite tape input", idx);
  }
  return Var{this, idx};
}

Var Tape::emit(Op op, std::vector<int> parents, double scale_factor,
               std::vector<std::int64_t> aux) {
  Node n{op, std::move(parents), Tensor{}, scale_factor, std::move(aux)};
  n.value = eval_node(n);
  nodes_.push_back(std::move(n));
  const int idx = static_cast<int>(nodes_.size()) - 1;
  if (!nodes_.back().value.all_finite()) {
    throw NonFiniteError("non-finite intermediate value", idx);
  }
  return Var{this, idx};
}

Tensor Tape::eval_node(const Node& n) const {
  auto parent = [&](int i) -> const Tensor& {
    return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(i)])].value;
  };
  switch (n.op) {
    case Op::kInput:
      return n.value;
    case Op::kAdd: {
      const Tensor &a = parent(0), &b = parent(1);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
      return out;
    }
    case Op::kSub: {
      const Tensor &a = parent(0), &b = parent(1);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
      return out;
    }
    case Op::kMul: {
      const Tensor &a = parent(0), &b = parent(1);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
      return out;
    }
    case Op::kScalarMul: {
      const double s = parent(0)[0];
      const Tensor& t = parent(1);
      Tensor out(t.shape());
      for (std::int64_t i = 0; i < t.size(); ++i) out[i] = s * t[i];
      return out;
    }
    case Op::kScale: {
      const Tensor& a = parent(0);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = n.scale * a[i];
      return out;
    }
    case Op::kMatMul:
      return matmul_plain(parent(0), parent(1));
    case Op::kMatVec:
      return matvec_plain(parent(0), parent(1));
    case Op::kTranspose:
      return transpose_plain(parent(0));
    case Op::kSigmoid: {
      const Tensor& a = parent(0);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = stable_sigmoid(a[i]);
      return out;
    }
    case Op::kTanh: {
      const Tensor& a = parent(0);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = std::tanh(a[i]);
      return out;
    }
    case Op::kExp: {
      const Tensor& a = parent(0);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
      return out;
    }
    case Op::kSquare: {
      const Tensor& a = parent(0);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = a[i] * a[i];
      return out;
    }
    case Op::kAbs: {
      const Tensor& a = parent(0);
      Tensor out(a.shape());
      for (std::int64_t i = 0; i < a.size(); ++i) out[i] = std::fabs(a[i]);
      return out;
    }
    case Op::kSum: {
      const Tensor& a = parent(0);
      double s = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) s += a[i];
      return Tensor::scalar(s);
    }
    case Op::kMean: {
      const Tensor& a = parent(0);
      double s = 0.0;
      for (std::int64_t i = 0; i < a.size(); ++i) s += a[i];
      return Tensor::scalar(s / static_cast<double>(a.size()));
    }
    case Op::kConcat: {
      const int axis = static_cast<int>(n.aux[0]);
      if (parent(0).rank() == 1 || axis == 0) {
        std::vector<std::int64_t> shape = parent(0).shape();
        std::int64_t total0 = 0;
        for (std::size_t p = 0; p < n.parents.size(); ++p)
          total0 += nodes_[static_cast<std::size_t>(n.parents[p])].value.dim(0);
        shape[0] = total0;
        Tensor out(shape);
        std::int64_t off = 0;
        for (std::size_t p = 0; p < n.parents.size(); ++p) {
          const Tensor& part = nodes_[static_cast<std::size_t>(n.parents[p])].value;
          std::memcpy(out.data() + off, part.data(),
                      static_cast<std::size_t>(part.size()) * sizeof(double));
          off += part.size();
        }
        return out;
      }
      // axis 1: matrices side by side
      const std::int64_t rows = parent(0).dim(0);
      std::int64_t cols = 0;
      for (std::size_t p = 0; p < n.parents.size(); ++p)
        cols += nodes_[static_cast<std::size_t>(n.parents[p])].value.dim(1);
      Tensor out({rows, cols});
      std::int64_t col_off = 0;
      for (std::size_t p = 0; p < n.parents.size(); ++p) {
        const Tensor& part = nodes_[static_cast<std::size_t>(n.parents[p])].value;
        for (std::int64_t r = 0; r < rows; ++r)
          for (std::int64_t c = 0; c < part.dim(1); ++c)
            out.at(r, col_off + c) = part.at(r, c);
        col_off += part.dim(1);
      }
      return out;
    }
    case Op::kSlice: {
      const Tensor& a = parent(0);
      const std::int64_t off = n.aux[0], len = n.aux[1];
      Tensor out({len});
      std::memcpy(out.data(), a.data() + off, static_cast<std::size_t>(len) * sizeof(double));
      return out;
    }
    case Op::kGather: {
      const Tensor& a = parent(0);
      Tensor out({static_cast<std::int64_t>(n.aux.size())});
      for (std::size_t i = 0; i < n.aux.size(); ++i) out[static_cast<std::int64_t>(i)] = a[n.aux[i]];
      return out;
    }
    case Op::kReshape: {
      const Tensor& a = parent(0);
      return Tensor(n.aux, std::vector<double>(a.data(), a.data() + a.size()));
    }
    case Op::kLogSoftmax: {
      const Tensor& a = parent(0);
      const std::int64_t rows = a.rank() == 2 ? a.dim(0) : 1;
      const std::int64_t cols = a.rank() == 2 ? a.dim(1) : a.size();
      Tensor out(a.shape());
      for (std::int64_t r = 0; r < rows; ++r) {
        const double* row = a.data() + r * cols;
        double* orow = out.data() + r * cols;
        double mx = row[0];
        for (std::int64_t c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double lse = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) lse += std::exp(row[c] - mx);
        lse = mx + std::log(lse);
        for (std::int64_t c = 0; c < cols; ++c) orow[c] = row[c] - lse;
      }
      return out;
    }
  }
  throw Error("unhandled op");
}

std::vector<Tensor> Tape::adjoints(Var output, const Tensor& cotangent,
                                   std::span<const Var> wrt) const {
  require(output.valid() && output.tape == this, "adjoints: output not on this tape");
  const Tensor& out_val = value(output.index);
  if (!cotangent.same_shape(out_val)) {
    throw ShapeError("adjoints: cotangent shape " + shape_str(cotangent.shape()) +
                     " does not match output shape " + shape_str(out_val.shape()));
  }
  std::vector<Tensor> adj(static_cast<std::size_t>(output.index) + 1);
  std::vector<bool> live(static_cast<std::size_t>(output.index) + 1, false);
  adj[static_cast<std::size_t>(output.index)] = cotangent;
  live[static_cast<std::size_t>(output.index)] = true;

  auto accumulate = [&](int idx, Tensor&& contribution) {
    auto& slot = adj[static_cast<std::size_t>(idx)];
    if (!live[static_cast<std::size_t>(idx)]) {
      slot = std::move(contribution);
      live[static_cast<std::size_t>(idx)] = true;
    } else {
      for (std::int64_t i = 0; i < slot.size(); ++i) slot[i] += contribution[i];
    }
  };

  for (int i = output.index; i >= 0; --i) {
    if (!live[static_cast<std::size_t>(i)]) continue;
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.op == Op::kInput) continue;
    const Tensor& g = adj[static_cast<std::size_t>(i)];
    auto pval = [&](int p) -> const Tensor& {
      return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(p)])].value;
    };
    auto pidx = [&](int p) { return n.parents[static_cast<std::size_t>(p)]; };

    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kAdd:
        accumulate(pidx(0), Tensor(g));
        accumulate(pidx(1), Tensor(g));
        break;
      case Op::kSub: {
        accumulate(pidx(0), Tensor(g));
        Tensor neg(g.shape());
        for (std::int64_t k = 0; k < g.size(); ++k) neg[k] = -g[k];
        accumulate(pidx(1), std::move(neg));
        break;
      }
      case Op::kMul: {
        const Tensor &a = pval(0), &b = pval(1);
        Tensor da(a.shape()), db(b.shape());
        for (std::int64_t k = 0; k < a.size(); ++k) {
          da[k] = g[k] * b[k];
          db[k] = g[k] * a[k];
        }
        accumulate(pidx(0), std::move(da));
        accumulate(pidx(1), std::move(db));
        break;
      }
      case Op::kScalarMul: {
        const double s = pval(0)[0];
        const Tensor& t = pval(1);
        double ds = 0.0;
        Tensor dt(t.shape());
        for (std::int64_t k = 0; k < t.size(); ++k) {
          ds += g[k] * t[k];
          dt[k] = s * g[k];
        }
        accumulate(pidx(0), Tensor::scalar(ds));
        accumulate(pidx(1), std::move(dt));
        break;
      }
      case Op::kScale: {
        Tensor da(g.shape());
        for (std::int64_t k = 0; k < g.size(); ++k) da[k] = n.scale * g[k];
        accumulate(pidx(0), std::move(da));
        break;
      }
      case Op::kMatMul: {
        accumulate(pidx(0), matmul_trans_b(g, pval(1)));   // g Bᵀ
        accumulate(pidx(1), matmul_trans_a(pval(0), g));   // Aᵀ g
        break;
      }
      case Op::kMatVec: {
        const Tensor &a = pval(0), &x = pval(1);
        Tensor da(a.shape());
        for (std::int64_t r = 0; r < a.dim(0); ++r)
          for (std::int64_t c = 0; c < a.dim(1); ++c) da.at(r, c) = g[r] * x[c];
        accumulate(pidx(0), std::move(da));
        accumulate(pidx(1), matvec_trans_a(a, g));
        break;
      }
      case Op::kTranspose:
        accumulate(pidx(0), transpose_plain(g));
        break;
      case Op::kSigmoid: {
        const Tensor& y = n.value;
        Tensor da(y.shape());
        for (std::int64_t k = 0; k < y.size(); ++k) da[k] = g[k] * y[k] * (1.0 - y[k]);
        accumulate(pidx(0), std::move(da));
        break;
      }
      case Op::kTanh: {
        const Tensor& y = n.value;
        Tensor da(y.shape());
        for (std::int64_t k = 0; k < y.size(); ++k) da[k] = g[k] * (1.0 - y[k] * y[k]);
        accumulate(pidx(0), std::move(da));
        break;
      }
      case Op::kExp: {
        const Tensor& y = n.value;
        Tensor da(y.shape());
        for (std::int64_t k = 0; k < y.size(); ++k) da[k] = g[k] * y[k];
        accumulate(pidx(0), std::move(da));
        break;
      }
      case Op::kSquare: {
        const Tensor& x = pval(0);
        Tensor da(x.shape());
        for (std::int64_t k = 0; k < x.size(); ++k) da[k] = 2.0 * g[k] * x[k];
        accumulate(pidx(0), std::move(da));
        break;
      }
      case Op::kAbs: {
        // subgradient at 0 fixed to 0
        const Tensor& x = pval(0);
        Tensor da(x.shape());
        for (std::int64_t k = 0; k < x.size(); ++k)
          da[k] = x[k] > 0.0 ? g[k] : (x[k] < 0.0 ? -g[k] : 0.0);
        accumulate(pidx(0), std::move(da));
        break;
      }
      case Op::kSum: {
        const Tensor& x = pval(0);
        accumulate(pidx(0), Tensor::full(x.shape(), g[0]));
        break;
      }
      case Op::kMean: {
        const Tensor& x = pval(0);
        accumulate(pidx(0), Tensor::full(x.shape(), g[0] / static_cast<double>(x.size())));
        break;
      }
      case Op::kConcat: {
        const int axis = static_cast<int>(n.aux[0]);
        if (pval(0).rank() == 1 || axis == 0) {
          std::int64_t off = 0;
          for (std::size_t p = 0; p < n.parents.size(); ++p) {
            const Tensor& part = pval(static_cast<int>(p));
            Tensor dp(part.shape());
            std::memcpy(dp.data(), g.data() + off,
                        static_cast<std::size_t>(part.size()) * sizeof(double));
            off += part.size();
            accumulate(pidx(static_cast<int>(p)), std::move(dp));
          }
        } else {
          std::int64_t col_off = 0;
          for (std::size_t p = 0; p < n.parents.size(); ++p) {
            const Tensor& part = pval(static_cast<int>(p));
            Tensor dp(part.shape());
            for (std::int64_t r = 0; r < part.dim(0); ++r)
              for (std::int64_t c = 0; c < part.dim(1); ++c)
                dp.at(r, c) = g.at(r, col_off + c);
            col_off += part.dim(1);
            accumulate(pidx(static_cast<int>(p)), std::move(dp));
          }
        }
        break;
      }
      case Op::kSlice: {
        const Tensor& x = pval(0);
        Tensor dp(x.shape());
        const std::int64_t off = n.aux[0], len = n.aux[1];
        for (std::int64_t k = 0; k < len; ++k) dp[off + k] = g[k];
        accumulate(pidx(0), std::move(dp));
        break;
      }
      case Op::kGather: {
        const Tensor& x = pval(0);
        Tensor dp(x.shape());
        for (std::size_t k = 0; k < n.aux.size(); ++k)
          dp[n.aux[k]] += g[static_cast<std::int64_t>(k)];
        accumulate(pidx(0), std::move(dp));
        break;
      }
      case Op::kReshape: {
        const Tensor& x = pval(0);
        accumulate(pidx(0),
                   Tensor(x.shape(), std::vector<double>(g.data(), g.data() + g.size())));
        break;
      }
      case Op::kLogSoftmax: {
        const Tensor& y = n.value;  // log-probabilities
        const std::int64_t rows = y.rank() == 2 ? y.dim(0) : 1;
        const std::int64_t cols = y.rank() == 2 ? y.dim(1) : y.size();
        Tensor da(y.shape());
        for (std::int64_t r = 0; r < rows; ++r) {
          double gsum = 0.0;
          for (std::int64_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
          for (std::int64_t c = 0; c < cols; ++c) {
            da[r * cols + c] = g[r * cols + c] - std::exp(y[r * cols + c]) * gsum;
          }
        }
        accumulate(pidx(0), std::move(da));
        break;
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Var& v : wrt) {
    require(v.valid() && v.tape == this, "adjoints: wrt var not on this tape");
    if (v.index <= output.index && live[static_cast<std::size_t>(v.index)]) {
      out.push_back(adj[static_cast<std::size_t>(v.index)]);
    } else {
      out.push_back(Tensor::zeros(value(v.index).shape()));
    }
  }
  return out;
}

Tensor Tape::forward_tangent(Var output, std::span<const Var> seed_vars,
                             std::span<const Tensor> seed_tangents) const {
  require(output.valid() && output.tape == this, "forward_tangent: output not on this tape");
  require(seed_vars.size() == seed_tangents.size(), "forward_tangent: seed size mismatch");
  std::vector<Tensor> tan(static_cast<std::size_t>(output.index) + 1);
  std::vector<bool> live(static_cast<std::size_t>(output.index) + 1, false);
  for (std::size_t s = 0; s < seed_vars.size(); ++s) {
    const Var& v = seed_vars[s];
    require(v.valid() && v.tape == this, "forward_tangent: seed var not on this tape");
    if (!seed_tangents[s].same_shape(value(v.index))) {
      throw ShapeError("forward_tangent: tangent shape " + shape_str(seed_tangents[s].shape()) +
                       " does not match input shape " + shape_str(value(v.index).shape()));
    }
    if (v.index <= output.index) {
      tan[static_cast<std::size_t>(v.index)] = seed_tangents[s];
      live[static_cast<std::size_t>(v.index)] = true;
    }
  }

  auto tangent_of = [&](int idx) -> const Tensor* {
    return live[static_cast<std::size_t>(idx)] ? &tan[static_cast<std::size_t>(idx)] : nullptr;
  };

  for (int i = 0; i <= output.index; ++i) {
    const Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.op == Op::kInput) continue;
    auto pt = [&](int p) { return tangent_of(n.parents[static_cast<std::size_t>(p)]); };
    auto pval = [&](int p) -> const Tensor& {
      return nodes_[static_cast<std::size_t>(n.parents[static_cast<std::size_t>(p)])].value;
    };
    bool any = false;
    for (int p : n.parents) {
      if (live[static_cast<std::size_t>(p)]) {
        any = true;
        break;
      }
    }
    if (!any) continue;

    Tensor result;
    switch (n.op) {
      case Op::kInput:
        break;
      case Op::kAdd: {
        const Tensor* ta = pt(0);
        const Tensor* tb = pt(1);
        result = ta ? (tb ? rbp::add(*ta, *tb) : Tensor(*ta)) : Tensor(*tb);
        break;
      }
      case Op::kSub: {
        const Tensor* ta = pt(0);
        const Tensor* tb = pt(1);
        if (ta && tb) {
          result = rbp::sub(*ta, *tb);
        } else if (ta) {
          result = *ta;
        } else {
          result = scaled(*tb, -1.0);
        }
        break;
      }
      case Op::kMul: {
        const Tensor &a = pval(0), &b = pval(1);
        result = Tensor::zeros(n.value.shape());
        if (const Tensor* ta = pt(0))
          for (std::int64_t k = 0; k < a.size(); ++k) result[k] += (*ta)[k] * b[k];
        if (const Tensor* tb = pt(1))
          for (std::int64_t k = 0; k < a.size(); ++k) result[k] += a[k] * (*tb)[k];
        break;
      }
      case Op::kScalarMul: {
        const double s = pval(0)[0];
        const Tensor& t = pval(1);
        result = Tensor::zeros(t.shape());
        if (const Tensor* ts = pt(0)) axpy(result, t, (*ts)[0]);
        if (const Tensor* tt = pt(1)) axpy(result, *tt, s);
        break;
      }
      case Op::kScale:
        result = scaled(*pt(0), n.scale);
        break;
      case Op::kMatMul: {
        result = Tensor::zeros(n.value.shape());
        if (const Tensor* ta = pt(0)) result = matmul_plain(*ta, pval(1));
        if (const Tensor* tb = pt(1)) {
          Tensor second = matmul_plain(pval(0), *tb);
          for (std::int64_t k = 0; k < result.size(); ++k) result[k] += second[k];
        }
        break;
      }
      case Op::kMatVec: {
        result = Tensor::zeros(n.value.shape());
        if (const Tensor* ta = pt(0)) result = matvec_plain(*ta, pval(1));
        if (const Tensor* tx = pt(1)) {
          Tensor second = matvec_plain(pval(0), *tx);
          for (std::int64_t k = 0; k < result.size(); ++k) result[k] += second[k];
        }
        break;
      }
      case Op::kTranspose:
        result = transpose_plain(*pt(0));
        break;
      case Op::kSigmoid: {
        const Tensor& y = n.value;
        const Tensor& t = *pt(0);
        result = Tensor(y.shape());
        for (std::int64_t k = 0; k < y.size(); ++k) result[k] = t[k] * y[k] * (1.0 - y[k]);
        break;
      }
      case Op::kTanh: {
        const Tensor& y = n.value;
        const Tensor& t = *pt(0);
        result = Tensor(y.shape());
        for (std::int64_t k = 0; k < y.size(); ++k) result[k] = t[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case Op::kExp: {
        const Tensor& y = n.value;
        const Tensor& t = *pt(0);
        result = Tensor(y.shape());
        for (std::int64_t k = 0; k < y.size(); ++k) result[k] = t[k] * y[k];
        break;
      }
      case Op::kSquare: {
        const Tensor& x = pval(0);
        const Tensor& t = *pt(0);
        result = Tensor(x.shape());
        for (std::int64_t k = 0; k < x.size(); ++k) result[k] = 2.0 * x[k] * t[k];
        break;
      }
      case Op::kAbs: {
        const Tensor& x = pval(0);
        const Tensor& t = *pt(0);
        result = Tensor(x.shape());
        for (std::int64_t k = 0; k < x.size(); ++k)
          result[k] = x[k] > 0.0 ? t[k] : (x[k] < 0.0 ? -t[k] : 0.0);
        break;
      }
      case Op::kSum: {
        const Tensor& t = *pt(0);
        double s = 0.0;
        for (std::int64_t k = 0; k < t.size(); ++k) s += t[k];
        result = Tensor::scalar(s);
        break;
      }
      case Op::kMean: {
        const Tensor& t = *pt(0);
        double s = 0.0;
        for (std::int64_t k = 0; k < t.size(); ++k) s += t[k];
        result = Tensor::scalar(s / static_cast<double>(t.size()));
        break;
      }
      case Op::kConcat: {
        const int axis = static_cast<int>(n.aux[0]);
        result = Tensor::zeros(n.value.shape());
        if (pval(0).rank() == 1 || axis == 0) {
          std::int64_t off = 0;
          for (std::size_t p = 0; p < n.parents.size(); ++p) {
            const Tensor& part = pval(static_cast<int>(p));
            if (const Tensor* tp = tangent_of(n.parents[p]))
              std::memcpy(result.data() + off, tp->data(),
                          static_cast<std::size_t>(part.size()) * sizeof(double));
            off += part.size();
          }
        } else {
          std::int64_t col_off = 0;
          for (std::size_t p = 0; p < n.parents.size(); ++p) {
            const Tensor& part = pval(static_cast<int>(p));
            if (const Tensor* tp = tangent_of(n.parents[p]))
              for (std::int64_t r = 0; r < part.dim(0); ++r)
                for (std::int64_t c = 0; c < part.dim(1); ++c)
                  result.at(r, col_off + c) = tp->at(r, c);
            col_off += part.dim(1);
          }
        }
        break;
      }
      case Op::kSlice: {
        const Tensor& t = *pt(0);
        const std::int64_t off = n.aux[0], len = n.aux[1];
        result = Tensor({len});
        std::memcpy(result.data(), t.data() + off, static_cast<std::size_t>(len) * sizeof(double));
        break;
      }
      case Op::kGather: {
        const Tensor& t = *pt(0);
        result = Tensor({static_cast<std::int64_t>(n.aux.size())});
        for (std::size_t k = 0; k < n.aux.size(); ++k)
          result[static_cast<std::int64_t>(k)] = t[n.aux[k]];
        break;
      }
      case Op::kReshape: {
        const Tensor& t = *pt(0);
        result = Tensor(n.aux, std::vector<double>(t.data(), t.data() + t.size()));
        break;
      }
      case Op::kLogSoftmax: {
        const Tensor& y = n.value;
        const Tensor& u = *pt(0);
        const std::int64_t rows = y.rank() == 2 ? y.dim(0) : 1;
        const std::int64_t cols = y.rank() == 2 ? y.dim(1) : y.size();
        result = Tensor(y.shape());
        for (std::int64_t r = 0; r < rows; ++r) {
          double pu = 0.0;
          for (std::int64_t c = 0; c < cols; ++c) pu += std::exp(y[r * cols + c]) * u[r * cols + c];
          for (std::int64_t c = 0; c < cols; ++c) result[r * cols + c] = u[r * cols + c] - pu;
        }
        break;
      }
    }
    tan[static_cast<std::size_t>(i)] = std::move(result);
    live[static_cast<std::size_t>(i)] = true;
  }

  if (!live[static_cast<std::size_t>(output.index)]) {
    return Tensor::zeros(value(output.index).shape());
  }
  return tan[static_cast<std::size_t>(output.index)];
}

int Tape::replay_mismatch() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::kInput) continue;
    Tensor again = eval_node(n);
    if (again.size() != n.value.size()) return static_cast<int>(i);
    if (std::memcmp(again.data(), n.value.data(),
                    static_cast<std::size_t>(again.size()) * sizeof(double)) != 0) {
      return static_cast<int>(i);
    }
  }
  return -1;
}

// --- primitive builders -----------------------------------------------------

namespace {
void require_binary_same_shape(Var a, Var b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}
}  // namespace

Var add(Var a, Var b) {
  Var ops[] = {a, b};
  Tape* t = common_tape(ops, "add");
  require_binary_same_shape(a, b, "add");
  return t->emit(Tape::Op::kAdd, {a.index, b.index}, 0.0, {});
}

Var sub(Var a, Var b) {
  Var ops[] = {a, b};
  Tape* t = common_tape(ops, "sub");
  require_binary_same_shape(a, b, "sub");
  return t->emit(Tape::Op::kSub, {a.index, b.index}, 0.0, {});
}

Var mul(Var a, Var b) {
  Var ops[] = {a, b};
  Tape* t = common_tape(ops, "mul");
  require_binary_same_shape(a, b, "mul");
  return t->emit(Tape::Op::kMul, {a.index, b.index}, 0.0, {});
}

Var smul(Var s, Var t) {
  Var ops[] = {s, t};
  Tape* tp = common_tape(ops, "smul");
  require(s.value().size() == 1, "smul: first operand must have a single element");
  return tp->emit(Tape::Op::kScalarMul, {s.index, t.index}, 0.0, {});
}

Var scale(Var a, double c) {
  require(a.valid(), "scale: invalid operand");
  return a.tape->emit(Tape::Op::kScale, {a.index}, c, {});
}

Var matmul(Var a, Var b) {
  Var ops[] = {a, b};
  Tape* t = common_tape(ops, "matmul");
  require(a.value().rank() == 2 && b.value().rank() == 2, "matmul: operands must be matrices");
  require(a.value().dim(1) == b.value().dim(0),
          "matmul: inner dimensions differ, " + shape_str(a.shape()) + " vs " +
              shape_str(b.shape()));
  return t->emit(Tape::Op::kMatMul, {a.index, b.index}, 0.0, {});
}

Var matvec(Var a, Var x) {
  Var ops[] = {a, x};
  Tape* t = common_tape(ops, "matvec");
  require(a.value().rank() == 2 && x.value().rank() == 1, "matvec: expects matrix and vector");
  require(a.value().dim(1) == x.value().dim(0),
          "matvec: dimensions differ, " + shape_str(a.shape()) + " vs " + shape_str(x.shape()));
  return t->emit(Tape::Op::kMatVec, {a.index, x.index}, 0.0, {});
}

Var transpose(Var a) {
  require(a.valid(), "transpose: invalid operand");
  require(a.value().rank() == 2, "transpose: expects a matrix");
  return a.tape->emit(Tape::Op::kTranspose, {a.index}, 0.0, {});
}

namespace {
Var unary(Var a, Tape::Op op, const char* name) {
  require(a.valid(), std::string(name) + ": invalid operand");
  return a.tape->emit(op, {a.index}, 0.0, {});
}
}  // namespace

Var sigmoid(Var a) { return unary(a, Tape::Op::kSigmoid, "sigmoid"); }
Var tanh(Var a) { return unary(a, Tape::Op::kTanh, "tanh"); }
Var exp(Var a) { return unary(a, Tape::Op::kExp, "exp"); }
Var square(Var a) { return unary(a, Tape::Op::kSquare, "square"); }
Var abs(Var a) { return unary(a, Tape::Op::kAbs, "abs"); }
Var sum(Var a) { return unary(a, Tape::Op::kSum, "sum"); }
Var mean(Var a) { return unary(a, Tape::Op::kMean, "mean"); }

Var concat(std::span<const Var> parts, int axis) {
  Tape* t = common_tape(parts, "concat");
  require(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  const int rank = parts[0].value().rank();
  require(rank == 1 || rank == 2, "concat: expects vectors or matrices");
  require(rank == 2 || axis == 0, "concat: axis 1 needs matrices");
  std::vector<int> parents;
  for (const Var& p : parts) {
    require(p.value().rank() == rank, "concat: mixed ranks");
    if (rank == 2) {
      if (axis == 0)
        require(p.value().dim(1) == parts[0].value().dim(1), "concat: column counts differ");
      else
        require(p.value().dim(0) == parts[0].value().dim(0), "concat: row counts differ");
    }
    parents.push_back(p.index);
  }
  return t->emit(Tape::Op::kConcat, std::move(parents), 0.0, {axis});
}

Var slice(Var a, std::int64_t offset, std::int64_t length) {
  require(a.valid(), "slice: invalid operand");
  require(offset >= 0 && length > 0 && offset + length <= a.value().size(),
          "slice: range out of bounds");
  return a.tape->emit(Tape::Op::kSlice, {a.index}, 0.0, {offset, length});
}

Var gather(Var a, std::span<const std::int64_t> indices) {
  require(a.valid(), "gather: invalid operand");
  require(!indices.empty(), "gather: empty index set");
  for (std::int64_t idx : indices)
    require(idx >= 0 && idx < a.value().size(), "gather: index out of bounds");
  return a.tape->emit(Tape::Op::kGather, {a.index}, 0.0,
                      std::vector<std::int64_t>(indices.begin(), indices.end()));
}

Var reshape(Var a, std::vector<std::int64_t> shape) {
  require(a.valid(), "reshape: invalid operand");
  require(shape_size(shape) == a.value().size(),
          "reshape: size mismatch, " + shape_str(a.shape()) + " to " + shape_str(shape));
  return a.tape->emit(Tape::Op::kReshape, {a.index}, 0.0, std::move(shape));
}

Var log_softmax(Var a) {
  require(a.valid(), "log_softmax: invalid operand");
  require(a.value().rank() == 1 || a.value().rank() == 2, "log_softmax: expects vector or matrix");
  return unary(a, Tape::Op::kLogSoftmax, "log_softmax");
}

}  // namespace rbp
