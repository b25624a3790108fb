#include "rbp/models/gnn.hpp"

#include <array>
#include <set>
#include <string>

#include "rbp/errors.hpp"
#include "rbp/rng.hpp"

namespace rbp {

Tensor normalized_adjacency(int num_nodes, const std::vector<std::pair<int, int>>& edges) {
  std::set<std::pair<int, int>> directed;
  for (auto [a, b] : edges) {
    if (a < 0 || b < 0 || a >= num_nodes || b >= num_nodes) {
      throw ConfigError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") outside node range [0, " + std::to_string(num_nodes) + ")");
    }
    directed.insert({a, b});
    directed.insert({b, a});
  }
  Tensor adj({num_nodes, num_nodes});
  std::vector<int> degree(static_cast<std::size_t>(num_nodes), 0);
  for (auto [a, b] : directed) {
    adj.at(a, b) = 1.0;
    ++degree[static_cast<std::size_t>(a)];
  }
  for (int i = 0; i < num_nodes; ++i) {
    if (degree[static_cast<std::size_t>(i)] == 0) continue;
    const double inv = 1.0 / degree[static_cast<std::size_t>(i)];
    for (int j = 0; j < num_nodes; ++j) adj.at(i, j) *= inv;
  }
  return adj;
}

GruGraphNet GruGraphNet::create(int num_nodes, int feature_dim, int hidden_dim, int num_classes,
                                const std::vector<std::pair<int, int>>& edges,
                                double init_scale, std::uint64_t seed) {
  GruGraphNet net;
  net.num_nodes = num_nodes;
  net.feature_dim = feature_dim;
  net.hidden_dim = hidden_dim;
  net.num_classes = num_classes;
  net.adjacency_norm = normalized_adjacency(num_nodes, edges);

  Rng rng(seed);
  auto init = [&rng, init_scale](std::vector<std::int64_t> shape) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-init_scale, init_scale);
    return t;
  };

  const std::int64_t d = hidden_dim, f = feature_dim, c = num_classes;
  net.transition_params.add("msg_w", init({d, d}));
  for (const char* gate : {"update", "reset", "cand"}) {
    net.transition_params.add(std::string(gate) + "_w", init({d, d + f}));
    net.transition_params.add(std::string(gate) + "_u", init({d, d}));
    net.transition_params.add(std::string(gate) + "_b", Tensor::zeros({1, d}));
  }
  net.readout_params.add("out_w", init({c, d}));
  net.readout_params.add("out_b", Tensor::zeros({1, c}));
  return net;
}

ConvergentSystem GruGraphNet::system() const {
  const std::int64_t n = num_nodes, d = hidden_dim;
  const Tensor adj = adjacency_norm;

  ConvergentSystem sys;
  sys.transition_params = transition_params;
  sys.readout_params = readout_params;

  sys.transition = [n, d, adj](Tape& tape, Var x, std::span<const Var> w, Var h) {
    // w layout: msg_w, update_{w,u,b}, reset_{w,u,b}, cand_{w,u,b}
    Var adj_c = tape.input(Tensor(adj));
    Var ones_col = tape.input(Tensor::ones({n, 1}));
    Var ones_nd = tape.input(Tensor::ones({n, d}));

    Var message = matmul(adj_c, matmul(h, transpose(w[0])));
    Var gru_in = concat(std::array<Var, 2>{message, x}, 1);

    auto affine = [&](Var in_w, Var rec_u, Var bias, Var state) {
      return add(add(matmul(gru_in, transpose(in_w)), matmul(state, transpose(rec_u))),
                 matmul(ones_col, bias));
    };
    Var update = sigmoid(affine(w[1], w[2], w[3], h));
    Var reset = sigmoid(affine(w[4], w[5], w[6], h));
    Var candidate = tanh(affine(w[7], w[8], w[9], mul(reset, h)));
    return add(mul(sub(ones_nd, update), h), mul(update, candidate));
  };

  sys.readout = [n](Tape& tape, Var, std::span<const Var> w, Var h) {
    Var ones_col = tape.input(Tensor::ones({n, 1}));
    return add(matmul(h, transpose(w[0])), matmul(ones_col, w[1]));
  };

  sys.loss = [](Tape&, Var target, Var prediction) {
    return scale(sum(mul(target, log_softmax(prediction))), -1.0);
  };
  return sys;
}

Tensor GruGraphNet::step(const Tensor& features, const Tensor& h) const {
  return apply_transition(system(), features, h);
}

}  // namespace rbp
