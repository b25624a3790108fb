#pragma once

#include <cstdint>
#include <vector>

#include "rbp/system.hpp"
#include "rbp/tensor.hpp"

namespace rbp {

/// Graph network whose propagation step is a GRU update per node. The
/// message to node i is the in-degree-normalized sum of W_msg·h_j over
/// neighbors j (zero for isolated nodes); the GRU input concatenates that
/// message with the node's own feature row, so the fixed point depends on
/// both graph structure and features.
struct GruGraphNet {
  int num_nodes = 0;
  int feature_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;
  Tensor adjacency_norm;  // n×n, row i scaled by 1/deg(i)
  ParamBundle transition_params;
  ParamBundle readout_params;

  static GruGraphNet create(int num_nodes, int feature_dim, int hidden_dim, int num_classes,
                            const std::vector<std::pair<int, int>>& edges, double init_scale,
                            std::uint64_t seed);

  /// x is the n×f feature matrix; the loss target is an n×C matrix whose rows
  /// weight each node's one-hot label (zero rows are unlabeled). The loss is
  /// −Σ target ⊙ log_softmax(logits); pre-scale the target rows by 1/#labeled
  /// to get a mean.
  ConvergentSystem system() const;

  /// One propagation step as a plain value computation.
  Tensor step(const Tensor& features, const Tensor& h) const;

  Tensor zero_state() const { return Tensor::zeros({num_nodes, hidden_dim}); }
};

/// Row-normalized adjacency from an undirected edge list (duplicates and
/// direction flips collapse; self-loops kept once).
Tensor normalized_adjacency(int num_nodes, const std::vector<std::pair<int, int>>& edges);

}  // namespace rbp
