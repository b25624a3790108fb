#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rbp/tensor.hpp"

namespace rbp {

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; only valid for the
/// lifetime of the owning tape.
struct Var {
  Tape* tape = nullptr;
  int index = -1;

  bool valid() const { return tape != nullptr && index >= 0; }
  const Tensor& value() const;
  const std::vector<std::int64_t>& shape() const;
};

/// Append-only record of a primitive-operation DAG. Recording happens
/// eagerly: each primitive computes its value when pushed, so the tape holds
/// both the program and all intermediate results. Derivative products
/// (reverse-mode adjoints, forward-mode tangents) replay the stored graph and
/// can be taken repeatedly without re-recording.
///
/// A tape is confined to one thread; independent tapes may run concurrently.
class Tape {
 public:
  enum class Op : std::uint8_t {
    kInput,
    kAdd,
    kSub,
    kMul,        // elementwise product
    kScalarMul,  // product of a shape-{1} var with a tensor var
    kScale,      // product with a compile-time constant
    kMatMul,
    kMatVec,
    kTranspose,
    kSigmoid,
    kTanh,
    kExp,
    kSquare,
    kAbs,
    kSum,
    kMean,
    kConcat,  // along axis 0 or 1
    kSlice,   // contiguous range of the flattened value, yields 1-D
    kGather,  // arbitrary flat indices, yields 1-D
    kReshape,
    kLogSoftmax,  // per row for matrices, whole vector for 1-D
  };

  struct Node {
    Op op;
    std::vector<int> parents;
    Tensor value;
    double scale = 0.0;              // kScale factor
    std::vector<std::int64_t> aux;   // op-specific (indices, axis, target shape)
  };

  Var input(Tensor value);

  int size() const { return static_cast<int>(nodes_.size()); }
  const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
  const Tensor& value(int i) const { return nodes_[static_cast<std::size_t>(i)].value; }

  /// Reverse sweep from `output` seeded with `cotangent`; returns the adjoint
  /// of every var in `wrt`, in order. Adjoints of all other nodes are
  /// computed and discarded.
  std::vector<Tensor> adjoints(Var output, const Tensor& cotangent,
                               std::span<const Var> wrt) const;

  /// Forward sweep propagating the given tangents (zero for unlisted inputs);
  /// returns the tangent of `output`.
  Tensor forward_tangent(Var output, std::span<const Var> seed_vars,
                         std::span<const Tensor> seed_tangents) const;

  /// Recomputes every node from its parents and compares bit-for-bit with the
  /// recorded values. Returns the index of the first mismatch, or -1.
  int replay_mismatch() const;

  /// Low-level node constructor used by the primitive builders below.
  Var emit(Op op, std::vector<int> parents, double scale_factor,
           std::vector<std::int64_t> aux);

 private:
  Tensor eval_node(const Node& n) const;

  std::vector<Node> nodes_;
};

// Primitive builders. All validate shapes and record onto the operands' tape.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var smul(Var s, Var t);
Var scale(Var a, double c);
Var matmul(Var a, Var b);
Var matvec(Var a, Var x);
Var transpose(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var square(Var a);
Var abs(Var a);
Var sum(Var a);
Var mean(Var a);
Var concat(std::span<const Var> parts, int axis);
Var slice(Var a, std::int64_t offset, std::int64_t length);
Var gather(Var a, std::span<const std::int64_t> indices);
Var reshape(Var a, std::vector<std::int64_t> shape);
Var log_softmax(Var a);

}  // namespace rbp
