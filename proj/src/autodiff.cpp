#include "ked/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <utility>

namespace ked::ag {

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape() != b.tape()) {
    throw ConfigError(std::string(op) + ": operands live on different tapes");
  }
}

}  // namespace

const Tensor& Var::value() const { return tape_->value(id_); }

Tensor Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = false;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::make(Tensor value, const std::vector<Var>& parents, Vjp vjp,
               const char* op_name) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op_name) + ": non-finite values produced");
  }
  Node n;
  n.value = std::move(value);
  for (Var p : parents) {
    if (p.tape() != this) {
      throw ConfigError(std::string(op_name) + ": operand from another tape");
    }
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.vjp = std::move(vjp);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::backward(const Var& output) {
  if (output.tape() != this) throw ConfigError("backward: output from another tape");
  if (value(output.id()).numel() != 1) {
    throw DimensionError("backward: output must be scalar");
  }
  Node& out = nodes_[output.id()];
  out.grad = Tensor::full(out.value.shape(), 1.0);
  out.has_grad = true;
  for (int id = output.id(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.has_grad && n.vjp) n.vjp(*this, n.grad);
  }
}

Tensor Tape::grad(int id) const {
  const Node& n = nodes_[id];
  if (!n.has_grad) return Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::add_grad(int id, const Tensor& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = Tensor::zeros(n.value.shape());
    n.has_grad = true;
  }
  if (!n.grad.same_shape(g)) {
    throw DimensionError("add_grad: gradient shape mismatch");
  }
  n.grad.flat() += g.flat();
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tape& t = *a.tape();
  return t.make(a.value() + b.value(), {a, b},
                [a, b](Tape& tp, const Tensor& g) {
                  tp.add_grad(a.id(), g);
                  tp.add_grad(b.id(), g);
                },
                "add");
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  Tape& t = *a.tape();
  return t.make(a.value() - b.value(), {a, b},
                [a, b](Tape& tp, const Tensor& g) {
                  tp.add_grad(a.id(), g);
                  tp.add_grad(b.id(), -g);
                },
                "sub");
}

Var neg(Var a) { return scale(a, -1.0); }

Var hadamard(Var a, Var b) {
  require_same_tape(a, b, "hadamard");
  Tape& t = *a.tape();
  return t.make(ked::hadamard(a.value(), b.value()), {a, b},
                [a, b](Tape& tp, const Tensor& g) {
                  if (tp.requires_grad(a.id()))
                    tp.add_grad(a.id(), ked::hadamard(g, tp.value(b.id())));
                  if (tp.requires_grad(b.id()))
                    tp.add_grad(b.id(), ked::hadamard(g, tp.value(a.id())));
                },
                "hadamard");
}

Var scale(Var a, double s) {
  Tape& t = *a.tape();
  return t.make(a.value() * s, {a},
                [a, s](Tape& tp, const Tensor& g) { tp.add_grad(a.id(), g * s); },
                "scale");
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  return t.make(ked::matmul(a.value(), b.value()), {a, b},
                [a, b](Tape& tp, const Tensor& g) {
                  const Tensor& av = tp.value(a.id());
                  const Tensor& bv = tp.value(b.id());
                  if (tp.requires_grad(a.id())) {
                    Tensor da({av.rows(), av.cols()});
                    da.mat().noalias() = g.mat() * bv.mat().transpose();
                    tp.add_grad(a.id(), da);
                  }
                  if (tp.requires_grad(b.id())) {
                    Tensor db({bv.rows(), bv.cols()});
                    db.mat().noalias() = av.mat().transpose() * g.mat();
                    tp.add_grad(b.id(), db);
                  }
                },
                "matmul");
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  return t.make(ked::transpose(a.value()), {a},
                [a](Tape& tp, const Tensor& g) {
                  tp.add_grad(a.id(), ked::transpose(g));
                },
                "transpose");
}

Var relu(Var a) {
  Tape& t = *a.tape();
  return t.make(ked::relu(a.value()), {a},
                [a](Tape& tp, const Tensor& g) {
                  const Tensor& av = tp.value(a.id());
                  Tensor da = g;
                  da.flat() *= (av.flat() > 0.0).cast<double>();
                  tp.add_grad(a.id(), da);
                },
                "relu");
}

Var softmax(Var x, int axis) {
  Tape& t = *x.tape();
  // The vjp recomputes y from the stored input; cheaper than holding a copy.
  return t.make(ked::softmax(x.value(), axis), {x},
                [x, axis](Tape& tp, const Tensor& g) {
                  Tensor y = ked::softmax(tp.value(x.id()), axis);
                  Tensor dx = g;
                  auto ym = y.mat();
                  auto gm = g.mat();
                  auto dm = dx.mat();
                  if (y.rank() == 1 || axis == 0) {
                    for (Index c = 0; c < ym.cols(); ++c) {
                      const double dot = (gm.col(c).array() * ym.col(c).array()).sum();
                      dm.col(c) = (gm.col(c).array() - dot) * ym.col(c).array();
                    }
                  } else {
                    for (Index r = 0; r < ym.rows(); ++r) {
                      const double dot = (gm.row(r).array() * ym.row(r).array()).sum();
                      dm.row(r) = (gm.row(r).array() - dot) * ym.row(r).array();
                    }
                  }
                  tp.add_grad(x.id(), dx);
                },
                "softmax");
}

Var avg_pool_1d(Var x, int kernel) {
  Tape& t = *x.tape();
  return t.make(ked::avg_pool_1d(x.value(), kernel), {x},
                [x, kernel](Tape& tp, const Tensor& g) {
                  const Index L = g.rows();
                  const Index d = g.cols();
                  const Index h = kernel / 2;
                  Tensor dx = Tensor::zeros(tp.value(x.id()).shape());
                  auto gm = g.mat();
                  auto dm = dx.mat();
                  const double inv = 1.0 / kernel;
                  for (Index tt = 0; tt < L; ++tt) {
                    for (Index j = tt - h; j <= tt + h; ++j) {
                      const Index jc = std::clamp<Index>(j, 0, L - 1);
                      for (Index c = 0; c < d; ++c) dm(jc, c) += gm(tt, c) * inv;
                    }
                  }
                  tp.add_grad(x.id(), dx);
                },
                "avg_pool_1d");
}

Var circular_roll(Var x, long tau) {
  Tape& t = *x.tape();
  return t.make(ked::circular_roll(x.value(), tau), {x},
                [x, tau](Tape& tp, const Tensor& g) {
                  tp.add_grad(x.id(), ked::circular_roll(g, -tau));
                },
                "circular_roll");
}

Var concat_rows(Var a, Var b) {
  require_same_tape(a, b, "concat_rows");
  Tape& t = *a.tape();
  const Index ra = a.value().rows();
  return t.make(ked::concat_rows(a.value(), b.value()), {a, b},
                [a, b, ra](Tape& tp, const Tensor& g) {
                  if (tp.requires_grad(a.id()))
                    tp.add_grad(a.id(), ked::slice_rows(g, 0, ra));
                  if (tp.requires_grad(b.id()))
                    tp.add_grad(b.id(), ked::slice_rows(g, ra, g.rows()));
                },
                "concat_rows");
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b, "concat_cols");
  Tape& t = *a.tape();
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.rows() != bv.rows()) {
    throw DimensionError("concat_cols: incompatible shapes");
  }
  Tensor out({av.rows(), av.cols() + bv.cols()});
  out.mat().leftCols(av.cols()) = av.mat();
  out.mat().rightCols(bv.cols()) = bv.mat();
  const Index ca = av.cols();
  return t.make(std::move(out), {a, b},
                [a, b, ca](Tape& tp, const Tensor& g) {
                  if (tp.requires_grad(a.id()))
                    tp.add_grad(a.id(), ked::slice_cols(g, 0, ca));
                  if (tp.requires_grad(b.id()))
                    tp.add_grad(b.id(), ked::slice_cols(g, ca, g.cols()));
                },
                "concat_cols");
}

Var slice_rows(Var x, Index begin, Index end) {
  Tape& t = *x.tape();
  return t.make(ked::slice_rows(x.value(), begin, end), {x},
                [x, begin, end](Tape& tp, const Tensor& g) {
                  Tensor dx = Tensor::zeros(tp.value(x.id()).shape());
                  dx.mat().middleRows(begin, end - begin) = g.mat();
                  tp.add_grad(x.id(), dx);
                },
                "slice_rows");
}

Var slice_cols(Var x, Index begin, Index end) {
  Tape& t = *x.tape();
  return t.make(ked::slice_cols(x.value(), begin, end), {x},
                [x, begin, end](Tape& tp, const Tensor& g) {
                  Tensor dx = Tensor::zeros(tp.value(x.id()).shape());
                  dx.mat().middleCols(begin, end - begin) = g.mat();
                  tp.add_grad(x.id(), dx);
                },
                "slice_cols");
}

Var add_row_bias(Var x, Var bias) {
  require_same_tape(x, bias, "add_row_bias");
  Tape& t = *x.tape();
  return t.make(ked::add_row_bias(x.value(), bias.value()), {x, bias},
                [x, bias](Tape& tp, const Tensor& g) {
                  tp.add_grad(x.id(), g);
                  if (tp.requires_grad(bias.id())) {
                    Tensor db({g.cols()});
                    Eigen::Map<Eigen::VectorXd>(db.flat().data(), g.cols()) =
                        g.mat().colwise().sum();
                    tp.add_grad(bias.id(), db);
                  }
                },
                "add_row_bias");
}

Var gather(Var x, std::vector<Index> idx) {
  Tape& t = *x.tape();
  const Tensor& xv = x.value();
  if (xv.rank() != 1) throw DimensionError("gather: rank-1 tensor required");
  Tensor out({static_cast<Index>(idx.size())});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= xv.numel()) {
      throw DimensionError("gather: index out of range");
    }
    out(static_cast<Index>(i)) = xv(idx[i]);
  }
  return t.make(std::move(out), {x},
                [x, idx = std::move(idx)](Tape& tp, const Tensor& g) {
                  Tensor dx = Tensor::zeros(tp.value(x.id()).shape());
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    dx(idx[i]) += g(static_cast<Index>(i));
                  }
                  tp.add_grad(x.id(), dx);
                },
                "gather");
}

Var sum_all(Var x) {
  Tape& t = *x.tape();
  return t.make(Tensor::full({1}, ked::sum_all(x.value())), {x},
                [x](Tape& tp, const Tensor& g) {
                  tp.add_grad(x.id(), Tensor::full(tp.value(x.id()).shape(), g(0)));
                },
                "sum_all");
}

Var mean_all(Var x) {
  Tape& t = *x.tape();
  const double n = static_cast<double>(x.value().numel());
  return t.make(Tensor::full({1}, ked::mean_all(x.value())), {x},
                [x, n](Tape& tp, const Tensor& g) {
                  tp.add_grad(x.id(),
                              Tensor::full(tp.value(x.id()).shape(), g(0) / n));
                },
                "mean_all");
}

Var mse(Var pred, Var target) {
  require_same_tape(pred, target, "mse");
  Tape& t = *pred.tape();
  const Tensor& p = pred.value();
  const Tensor& y = target.value();
  if (!p.same_shape(y)) throw DimensionError("mse: shape mismatch");
  const double n = static_cast<double>(p.numel());
  const double v = (p.flat() - y.flat()).square().sum() / n;
  return t.make(Tensor::full({1}, v), {pred, target},
                [pred, target, n](Tape& tp, const Tensor& g) {
                  Tensor diff = tp.value(pred.id()) - tp.value(target.id());
                  diff.flat() *= 2.0 * g(0) / n;
                  tp.add_grad(pred.id(), diff);
                  if (tp.requires_grad(target.id())) tp.add_grad(target.id(), -diff);
                },
                "mse");
}

namespace {

double eval_scalar(const ScalarFn& f, const Tensor& x) {
  Tape t;
  Var out = f(t, t.constant(x));
  const Tensor& v = out.value();
  if (v.numel() != 1) throw DimensionError("check_gradient: f must be scalar");
  return v(0);
}

}  // namespace

double check_gradient(const ScalarFn& f, const Tensor& x, double eps) {
  Tape t;
  Var vx = t.leaf(x);
  Var out = f(t, vx);
  if (out.value().numel() != 1) {
    throw DimensionError("check_gradient: f must be scalar");
  }
  if (!out.value().all_finite()) {
    throw NumericError("check_gradient: f(x) is not finite");
  }
  t.backward(out);
  const Tensor g_ad = vx.grad();

  double worst = 0.0;
  Tensor xp = x;
  for (Index i = 0; i < x.numel(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + eps;
    const double fp = eval_scalar(f, xp);
    xp(i) = orig - eps;
    const double fm = eval_scalar(f, xp);
    xp(i) = orig;
    const double fd = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(g_ad(i) - fd) / std::max(1e-8, std::abs(fd));
    worst = std::max(worst, rel);
  }
  return worst;
}

GradCheckReport check_gradient_params(const ParamsScalarFn& f,
                                      const std::vector<Tensor>& params,
                                      double eps, Index max_coords,
                                      std::uint64_t seed) {
  Tape t;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const Tensor& p : params) vars.push_back(t.leaf(p));
  Var out = f(t, vars);
  if (out.value().numel() != 1) {
    throw DimensionError("check_gradient_params: f must be scalar");
  }
  if (!out.value().all_finite()) {
    throw NumericError("check_gradient_params: f(params) is not finite");
  }
  t.backward(out);
  std::vector<Tensor> grads;
  grads.reserve(vars.size());
  for (Var v : vars) grads.push_back(v.grad());

  std::vector<std::pair<std::size_t, Index>> coords;
  for (std::size_t p = 0; p < params.size(); ++p) {
    for (Index i = 0; i < params[p].numel(); ++i) coords.emplace_back(p, i);
  }
  std::mt19937_64 rng(seed);
  const Index total = static_cast<Index>(coords.size());
  const Index n_check = std::min(max_coords, total);
  // Partial Fisher-Yates: the first n_check entries are a uniform sample.
  for (Index i = 0; i < n_check; ++i) {
    const Index j = i + static_cast<Index>(rng() % static_cast<std::uint64_t>(total - i));
    std::swap(coords[i], coords[j]);
  }

  auto eval = [&](const std::vector<Tensor>& ps) {
    Tape tt;
    std::vector<Var> vs;
    vs.reserve(ps.size());
    for (const Tensor& p : ps) vs.push_back(tt.constant(p));
    Var o = f(tt, vs);
    return o.value()(0);
  };

  GradCheckReport report;
  report.coords_checked = n_check;
  std::vector<Tensor> work = params;
  for (Index s = 0; s < n_check; ++s) {
    const auto [p, i] = coords[s];
    const double orig = work[p](i);
    work[p](i) = orig + eps;
    const double fp = eval(work);
    work[p](i) = orig - eps;
    const double fm = eval(work);
    work[p](i) = orig;
    const double fd = (fp - fm) / (2.0 * eps);
    const double rel =
        std::abs(grads[p](i) - fd) / std::max(1e-8, std::abs(fd));
    report.max_rel_err = std::max(report.max_rel_err, rel);
  }
  return report;
}

}  // namespace ked::ag
