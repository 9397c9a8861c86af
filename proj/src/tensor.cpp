#include "ked/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace ked {

namespace {

Index checked_numel(const std::vector<Index>& shape) {
  Index n = 1;
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n *= d;
  }
  return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
  }
}

}  // namespace

Tensor::Tensor(std::vector<Index> shape) : shape_(std::move(shape)) {
  data_ = Eigen::ArrayXd::Zero(checked_numel(shape_));
}

Tensor Tensor::zeros(std::vector<Index> shape) { return Tensor(std::move(shape)); }

Tensor Tensor::full(std::vector<Index> shape, double value) {
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

Tensor Tensor::from_flat(std::vector<Index> shape, std::vector<double> data) {
  Tensor t;
  t.shape_ = std::move(shape);
  if (checked_numel(t.shape_) != static_cast<Index>(data.size())) {
    throw DimensionError("from_flat: shape does not match data length");
  }
  t.data_ = Eigen::Map<const Eigen::ArrayXd>(data.data(), data.size());
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
  Tensor t({r, c});
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) {
      throw DimensionError("matrix: ragged row lengths");
    }
    for (double v : row) t.data_[i++] = v;
  }
  return t;
}

Tensor Tensor::vector(std::initializer_list<double> entries) {
  return vector(std::vector<double>(entries));
}

Tensor Tensor::vector(std::vector<double> entries) {
  const Index n = static_cast<Index>(entries.size());
  return from_flat({n}, std::move(entries));
}

Index Tensor::rows() const {
  if (shape_.empty()) return 0;
  return shape_[0];
}

Index Tensor::cols() const {
  if (shape_.size() <= 1) return shape_.empty() ? 0 : 1;
  Index c = 1;
  for (size_t i = 1; i < shape_.size(); ++i) c *= shape_[i];
  return c;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape_.size(); ++i) {
    if (i) os << 'x';
    os << shape_[i];
  }
  os << ']';
  return os.str();
}

void ensure_finite(const Tensor& t, const std::string& context) {
  if (!t.all_finite()) {
    throw NumericError(context + ": non-finite values encountered");
  }
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  out.flat() += b.flat();
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  out.flat() -= b.flat();
  return out;
}

Tensor operator-(const Tensor& a) { return a * -1.0; }

Tensor operator*(const Tensor& a, double s) {
  Tensor out = a;
  out.flat() *= s;
  return out;
}

Tensor operator*(double s, const Tensor& a) { return a * s; }

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  out.flat() *= b.flat();
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw DimensionError("matmul: operands must be rank-2, got " +
                         a.shape_str() + " and " + b.shape_str());
  }
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " + a.shape_str() +
                         " x " + b.shape_str());
  }
  Tensor out({a.rows(), b.cols()});
  out.mat().noalias() = a.mat() * b.mat();
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: rank-2 tensor required");
  Tensor out({a.cols(), a.rows()});
  out.mat().noalias() = a.mat().transpose();
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  out.flat() = out.flat().max(0.0);
  return out;
}

Tensor softmax(const Tensor& x, int axis) {
  if (x.rank() == 1) {
    if (axis != 0) throw DimensionError("softmax: axis out of range for rank-1");
  } else if (x.rank() == 2) {
    if (axis != 0 && axis != 1) throw DimensionError("softmax: axis must be 0 or 1");
  } else {
    throw DimensionError("softmax: rank-1 or rank-2 tensor required");
  }
  Tensor out = x;
  auto m = out.mat();
  if (x.rank() == 1 || axis == 0) {
    for (Index c = 0; c < m.cols(); ++c) {
      const double mx = m.col(c).maxCoeff();
      m.col(c) = (m.col(c).array() - mx).exp();
      m.col(c) /= m.col(c).sum();
    }
  } else {
    for (Index r = 0; r < m.rows(); ++r) {
      const double mx = m.row(r).maxCoeff();
      m.row(r) = (m.row(r).array() - mx).exp();
      m.row(r) /= m.row(r).sum();
    }
  }
  return out;
}

double sum_all(const Tensor& x) { return x.flat().sum(); }

double mean_all(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean_all: empty tensor");
  return x.flat().mean();
}

Tensor col_mean(const Tensor& x) {
  Tensor out({x.cols()});
  Eigen::Map<Eigen::VectorXd>(out.flat().data(), x.cols()) =
      x.mat().colwise().mean();
  return out;
}

Tensor avg_pool_1d(const Tensor& x, int kernel) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError("avg_pool_1d: kernel must be odd and positive, got " +
                      std::to_string(kernel));
  }
  const Index L = x.rows();
  const Index d = x.cols();
  const Index h = kernel / 2;
  Tensor out = x;  // preserves shape metadata
  auto xin = x.mat();
  auto m = out.mat();
  for (Index t = 0; t < L; ++t) {
    for (Index c = 0; c < d; ++c) {
      const double center = xin(t, c);
      double acc = 0.0;
      for (Index j = t - h; j <= t + h; ++j) {
        const Index jc = std::clamp<Index>(j, 0, L - 1);
        acc += xin(jc, c) - center;
      }
      m(t, c) = center + acc / kernel;
    }
  }
  return out;
}

Tensor circular_roll(const Tensor& x, long tau) {
  const Index L = x.rows();
  if (L == 0) return x;
  Index shift = static_cast<Index>(((tau % L) + L) % L);
  Tensor out = x;
  auto xin = x.mat();
  auto m = out.mat();
  for (Index t = 0; t < L; ++t) {
    m.row(t) = xin.row((t + shift) % L);
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols() || a.rank() != b.rank()) {
    throw DimensionError("concat_rows: incompatible shapes " + a.shape_str() +
                         " and " + b.shape_str());
  }
  std::vector<Index> shape = a.shape();
  shape[0] = a.rows() + b.rows();
  Tensor out(std::move(shape));
  out.mat().topRows(a.rows()) = a.mat();
  out.mat().bottomRows(b.rows()) = b.mat();
  return out;
}

Tensor slice_rows(const Tensor& x, Index begin, Index end) {
  if (begin < 0 || end > x.rows() || begin >= end) {
    throw DimensionError("slice_rows: invalid range");
  }
  std::vector<Index> shape = x.shape();
  shape[0] = end - begin;
  Tensor out(std::move(shape));
  out.mat() = x.mat().middleRows(begin, end - begin);
  return out;
}

Tensor slice_cols(const Tensor& x, Index begin, Index end) {
  if (x.rank() != 2) throw DimensionError("slice_cols: rank-2 tensor required");
  if (begin < 0 || end > x.cols() || begin >= end) {
    throw DimensionError("slice_cols: invalid range");
  }
  Tensor out({x.rows(), end - begin});
  out.mat() = x.mat().middleCols(begin, end - begin);
  return out;
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rank() != 1 || bias.numel() != x.cols()) {
    throw DimensionError("add_row_bias: bias length must equal cols()");
  }
  Tensor out = x;
  out.mat().rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(bias.flat().data(), bias.numel());
  return out;
}

}  // namespace ked
