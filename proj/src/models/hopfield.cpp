#include "rbp/models/hopfield.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "rbp/errors.hpp"
#include "rbp/rng.hpp"

namespace rbp {

HopfieldNet HopfieldNet::create(int n_observed, int n_hidden, int n_output, double init_scale,
                                std::uint64_t seed) {
  HopfieldNet net;
  net.n_observed = n_observed;
  net.n_hidden = n_hidden;
  net.n_output = n_output;
  const std::int64_t n = net.total_neurons();
  net.coupling_raw = Tensor({n, n});
  Rng rng(seed);
  for (std::int64_t i = 0; i < net.coupling_raw.size(); ++i) {
    net.coupling_raw[i] = rng.uniform(-init_scale, init_scale);
  }
  return net;
}

Tensor HopfieldNet::effective_coupling() const {
  const std::int64_t n = total_neurons();
  Tensor w({n, n});
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < n; ++j)
      w.at(i, j) = 0.5 * (coupling_raw.at(i, j) + coupling_raw.at(j, i));
  return w;
}

ConvergentSystem HopfieldNet::system() const {
  const std::int64_t n = total_neurons();
  const std::int64_t n_obs = n_observed;
  const std::int64_t n_free = n - n_obs;
  const std::int64_t out_offset = n_observed + n_hidden;
  const std::int64_t n_out = n_output;
  const double leak = gain / time_constant;
  const double dt = euler_step;
  const double g = gain;

  Tensor mask_free({n});
  Tensor mask_obs({n});
  for (std::int64_t i = 0; i < n; ++i) {
    mask_free[i] = i < n_obs ? 0.0 : 1.0;
    mask_obs[i] = i < n_obs ? 1.0 : 0.0;
  }

  ConvergentSystem sys;
  sys.transition_params.add("coupling", coupling_raw);

  sys.transition = [n, n_obs, n_free, leak, dt, g, mask_free, mask_obs](
                       Tape& tape, Var x, std::span<const Var> w, Var h) {
    if (x.value().size() != n_obs) {
      throw ShapeError("hopfield transition: pixel input has wrong length " +
                       shape_str(x.shape()));
    }
    Var coupling = scale(add(w[0], transpose(w[0])), 0.5);
    Var drive = n_free > 0
                    ? concat(std::array<Var, 2>{x, tape.input(Tensor::zeros({n_free}))}, 0)
                    : x;
    Var activation = sigmoid(scale(h, g));
    Var rhs = add(sub(matvec(coupling, activation), scale(h, leak)), drive);
    Var unclamped = add(h, scale(rhs, dt));
    Var clamp_free = mul(tape.input(Tensor(mask_free)), unclamped);
    Var clamp_obs = mul(tape.input(Tensor(mask_obs)), drive);
    return add(clamp_free, clamp_obs);
  };

  sys.readout = [out_offset, n_out, g](Tape&, Var, std::span<const Var>, Var h) {
    return sigmoid(scale(slice(h, out_offset, n_out), g));
  };

  sys.loss = [](Tape&, Var target, Var prediction) {
    return sum(abs(sub(prediction, target)));
  };
  return sys;
}

Tensor HopfieldNet::step(const Tensor& h, const Tensor& pixels) const {
  if (h.size() != total_neurons()) {
    throw ShapeError("hopfield step: state length " + std::to_string(h.size()) +
                     " != neuron count " + std::to_string(total_neurons()));
  }
  if (pixels.size() != n_observed) {
    throw ShapeError("hopfield step: pixel length " + std::to_string(pixels.size()) +
                     " != observed count " + std::to_string(n_observed));
  }
  return apply_transition(system(), pixels, h);
}

namespace {
// ∫₀ˣ logit(t) dt = x·ln x + (1−x)·ln(1−x), extended by its limits at 0 and 1.
double logit_antiderivative(double x) {
  double v = 0.0;
  if (x > 0.0) v += x * std::log(x);
  if (x < 1.0) v += (1.0 - x) * std::log(1.0 - x);
  return v;
}
}  // namespace

double HopfieldNet::energy(const Tensor& h, bool shifted) const {
  const std::int64_t n = total_neurons();
  std::vector<double> x(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double z = gain * h[i];
    x[static_cast<std::size_t>(i)] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                              : std::exp(z) / (1.0 + std::exp(z));
  }

  const double ln2 = 0.6931471805599453;
  double e = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    double integral = logit_antiderivative(xi);
    if (shifted) integral += ln2;
    const double pixel_drive = i < n_observed ? h[i] : 0.0;  // clamped entries carry the input
    e += integral / time_constant - pixel_drive * xi;
  }

  const Tensor w = effective_coupling();
  for (std::int64_t i = 0; i < n; ++i) {
    const double xi = x[static_cast<std::size_t>(i)];
    for (std::int64_t j = 0; j < n; ++j) {
      e -= 0.5 * w.at(i, j) * xi * x[static_cast<std::size_t>(j)];
    }
  }
  return e;
}

std::pair<Tensor, Tensor> HopfieldNet::readout(const Tensor& h) const {
  const std::int64_t off = n_observed + n_hidden;
  Tensor cont({static_cast<std::int64_t>(n_output)});
  Tensor binary({static_cast<std::int64_t>(n_output)});
  for (std::int64_t i = 0; i < n_output; ++i) {
    const double z = gain * h[off + i];
    const double x = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    cont[i] = x;
    binary[i] = x > 0.5 ? 1.0 : 0.0;
  }
  return {std::move(cont), std::move(binary)};
}

Tensor corrupt_pattern(const Tensor& pattern, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate > 1.0) throw ConfigError("corrupt_pattern: rate must lie in [0, 1]");
  std::vector<std::int64_t> nonzero;
  for (std::int64_t i = 0; i < pattern.size(); ++i) {
    if (pattern[i] != 0.0) nonzero.push_back(i);
  }
  const auto n_corrupt =
      static_cast<std::size_t>(rate * static_cast<double>(nonzero.size()));
  Tensor out = pattern;
  Rng rng(seed);
  // partial Fisher-Yates over the nonzero positions
  for (std::size_t k = 0; k < n_corrupt; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(rng.index(nonzero.size() - k));
    std::swap(nonzero[k], nonzero[pick]);
    out[nonzero[k]] = 0.0;
  }
  return out;
}

}  // namespace rbp
