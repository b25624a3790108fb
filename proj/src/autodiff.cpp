#include "rbp/autodiff.hpp"

#include "rbp/errors.hpp"

namespace rbp {

Tensor evaluate(const TapeFn& f, const Tensor& x) {
  Tape tape;
  Var in = tape.input(x);
  Var out = f(tape, in);
  return out.value();
}

Tensor vjp(const TapeFn& f, const Tensor& point, const Tensor& cotangent) {
  Tape tape;
  Var in = tape.input(point);
  Var out = f(tape, in);
  const Var wrt[] = {in};
  return tape.adjoints(out, cotangent, wrt)[0];
}

Tensor jvp(const TapeFn& f, const Tensor& point, const Tensor& tangent) {
  Tape tape;
  Var in = tape.input(point);
  Var out = f(tape, in);
  const Var seeds[] = {in};
  const Tensor tangents[] = {tangent};
  return tape.forward_tangent(out, seeds, tangents);
}

Tensor dense_jacobian(const TapeFn& f, const Tensor& point, std::int64_t element_cap) {
  Tape tape;
  Var in = tape.input(point);
  Var out = f(tape, in);
  const std::int64_t n_in = point.size();
  const std::int64_t n_out = out.value().size();
  if (n_in * n_out > element_cap) {
    throw Error("dense_jacobian: " + std::to_string(n_out) + "x" + std::to_string(n_in) +
                " exceeds element cap " + std::to_string(element_cap));
  }
  Tensor jac({n_out, n_in});
  const Var wrt[] = {in};
  for (std::int64_t r = 0; r < n_out; ++r) {
    Tensor basis = Tensor::zeros(out.value().shape());
    basis[r] = 1.0;
    Tensor row = tape.adjoints(out, basis, wrt)[0];
    for (std::int64_t c = 0; c < n_in; ++c) jac.at(r, c) = row[c];
  }
  return jac;
}

Recording::Recording(const TapeFn& f, const Tensor& point) {
  in_ = tape_.input(point);
  out_ = f(tape_, in_);
}

Tensor Recording::vjp(const Tensor& cotangent) const {
  const Var wrt[] = {in_};
  return tape_.adjoints(out_, cotangent, wrt)[0];
}

Tensor Recording::jvp(const Tensor& tangent) const {
  const Var seeds[] = {in_};
  const Tensor tangents[] = {tangent};
  return tape_.forward_tangent(out_, seeds, tangents);
}

}  // namespace rbp
