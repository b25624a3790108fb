#pragma once

#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rbp/tape.hpp"
#include "rbp/tensor.hpp"

namespace rbp {

/// Ordered collection of named tensors (parameters or their gradients).
struct ParamBundle {
  std::vector<std::string> names;
  std::vector<Tensor> values;

  void add(std::string name, Tensor value) {
    names.push_back(std::move(name));
    values.push_back(std::move(value));
  }
  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }

  Tensor* find(std::string_view name) {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &values[i];
    return nullptr;
  }
  const Tensor* find(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &values[i];
    return nullptr;
  }

  /// Gradient-shaped bundle of zeros with the same names.
  ParamBundle zeros_like() const {
    ParamBundle out;
    for (std::size_t i = 0; i < values.size(); ++i)
      out.add(names[i], Tensor::zeros(values[i].shape()));
    return out;
  }
};

/// A recurrent system whose forward pass is run to a fixed point:
///   h'  = transition(x, transition_params, h)   (state-preserving shape)
///   y   = readout(x, readout_params, h)
///   L   = loss(target, y)                       (scalar)
/// The closures record onto a caller-supplied tape, so every derivative the
/// gradient methods need comes from the same primitive set.
struct ConvergentSystem {
  std::function<Var(Tape&, Var x, std::span<const Var> w, Var h)> transition;
  std::function<Var(Tape&, Var x, std::span<const Var> w, Var h)> readout;
  std::function<Var(Tape&, Var target, Var prediction)> loss;
  ParamBundle transition_params;
  ParamBundle readout_params;
};

/// Records one transition evaluation at (x, params, h) and keeps the var
/// handles for derivative products.
struct TransitionRecording {
  Tape tape;
  Var x;
  std::vector<Var> params;
  Var h;
  Var out;
};

TransitionRecording record_transition(const ConvergentSystem& system, const Tensor& x,
                                      const Tensor& h);

/// Evaluates the transition once and returns the next state value.
Tensor apply_transition(const ConvergentSystem& system, const Tensor& x, const Tensor& h);

}  // namespace rbp
