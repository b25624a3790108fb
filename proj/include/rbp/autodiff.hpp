#pragma once

#include <cstdint>
#include <functional>

#include "rbp/tape.hpp"
#include "rbp/tensor.hpp"

namespace rbp {

/// A differentiable map R^n -> R^m expressed as a tape builder: given a tape
/// and an input var, it records the computation and returns the output var.
using TapeFn = std::function<Var(Tape&, Var)>;

/// Runs f at x and returns the primal output. A fresh tape is recorded per
/// call; derivative entry points below re-record at their own point.
Tensor evaluate(const TapeFn& f, const Tensor& x);

/// Jᵀ·cotangent at `point` (reverse mode).
Tensor vjp(const TapeFn& f, const Tensor& point, const Tensor& cotangent);

/// J·tangent at `point` (forward mode).
Tensor jvp(const TapeFn& f, const Tensor& point, const Tensor& tangent);

/// Assembles the full Jacobian row by row from basis-cotangent reverse
/// sweeps. Guarded by an element cap so it is only usable at test scale.
Tensor dense_jacobian(const TapeFn& f, const Tensor& point,
                      std::int64_t element_cap = 1'000'000);

/// f recorded once at a fixed point, supporting repeated derivative products
/// without re-recording.
class Recording {
 public:
  Recording(const TapeFn& f, const Tensor& point);

  const Tensor& value() const { return out_.value(); }
  const Tensor& point() const { return in_.value(); }
  Tensor vjp(const Tensor& cotangent) const;
  Tensor jvp(const Tensor& tangent) const;
  bool replays_exactly() const { return tape_.replay_mismatch() < 0; }

 private:
  Tape tape_;
  Var in_;
  Var out_;
};

}  // namespace rbp
