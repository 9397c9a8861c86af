#ifndef KED_AUTODIFF_HPP
#define KED_AUTODIFF_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include "ked/tensor.hpp"

namespace ked::ag {

class Tape;

/// Handle to a node on a tape. Cheap to copy; only valid while its tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  /// Gradient accumulated by the last backward pass; zeros for nodes off the
  /// path to the loss.
  Tensor grad() const;

  Tape* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

/// Reverse-mode tape over tensor-level operations. Each recorded node stores
/// its value and a callback that scatters the upstream gradient into the
/// node's parents. One tape serves one backward pass; distinct tapes are
/// independent.
class Tape {
 public:
  using Vjp = std::function<void(Tape&, const Tensor& upstream)>;

  /// Tracked input (parameter); participates in gradients.
  Var leaf(Tensor value);
  /// Untracked input; backward never propagates into it.
  Var constant(Tensor value);

  /// Records an op node. `requires_grad` is derived from the parents.
  Var make(Tensor value, const std::vector<Var>& parents, Vjp vjp,
           const char* op_name);

  /// Seeds d(output)/d(output) = 1 and sweeps the tape in reverse order.
  /// `output` must be scalar (numel == 1).
  void backward(const Var& output);

  const Tensor& value(int id) const { return nodes_[id].value; }
  Tensor grad(int id) const;
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  /// Adds `g` into the gradient of node `id` (no-op for untracked nodes).
  void add_grad(int id, const Tensor& g);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    Vjp vjp;
  };
  std::vector<Node> nodes_;
};

// ---- differentiable ops ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var hadamard(Var a, Var b);
Var scale(Var a, double s);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var relu(Var a);
Var softmax(Var x, int axis);
Var avg_pool_1d(Var x, int kernel);
Var circular_roll(Var x, long tau);
Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var slice_rows(Var x, Index begin, Index end);
Var slice_cols(Var x, Index begin, Index end);
Var add_row_bias(Var x, Var bias);
/// out[i] = x[idx[i]] for a rank-1 x.
Var gather(Var x, std::vector<Index> idx);
Var sum_all(Var x);
Var mean_all(Var x);
/// Mean squared error between same-shape tensors, as a scalar node.
Var mse(Var pred, Var target);

/// Scalar-valued function of one tensor, built on a caller-provided tape.
using ScalarFn = std::function<Var(Tape&, Var)>;

/// Compares the tape gradient of f at x against central differences.
/// Returns max over coordinates of |ad - fd| / max(1e-8, |fd|).
double check_gradient(const ScalarFn& f, const Tensor& x, double eps);

/// Scalar-valued function of a parameter list.
using ParamsScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  Index coords_checked = 0;
};

/// Central-difference check over up to `max_coords` coordinates sampled
/// uniformly (deterministically, from `seed`) across all parameters.
GradCheckReport check_gradient_params(const ParamsScalarFn& f,
                                      const std::vector<Tensor>& params,
                                      double eps, Index max_coords,
                                      std::uint64_t seed);

}  // namespace ked::ag

#endif  // KED_AUTODIFF_HPP
