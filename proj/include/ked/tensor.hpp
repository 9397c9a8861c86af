#ifndef KED_TENSOR_HPP
#define KED_TENSOR_HPP

#include <Eigen/Dense>

#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace ked {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense tensor of doubles with explicit shape metadata and flat row-major
/// storage. Rank 1 and rank 2 cover every carrier in the model; for uniform
/// handling a rank-1 tensor of length n is viewed as an n x 1 matrix.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<Index> shape);

  static Tensor zeros(std::vector<Index> shape);
  static Tensor full(std::vector<Index> shape, double value);
  static Tensor from_flat(std::vector<Index> shape, std::vector<double> data);
  /// Rank-2 tensor from nested row lists.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  /// Rank-1 tensor from a flat list.
  static Tensor vector(std::initializer_list<double> entries);
  static Tensor vector(std::vector<double> entries);

  Index rank() const { return static_cast<Index>(shape_.size()); }
  const std::vector<Index>& shape() const { return shape_; }
  Index numel() const { return data_.size(); }

  /// Unified 2-D extents: rank-1 tensors act as a single column.
  Index rows() const;
  Index cols() const;

  double operator()(Index i) const { return data_[i]; }
  double& operator()(Index i) { return data_[i]; }
  double operator()(Index r, Index c) const { return data_[r * cols() + c]; }
  double& operator()(Index r, Index c) { return data_[r * cols() + c]; }

  Eigen::ArrayXd& flat() { return data_; }
  const Eigen::ArrayXd& flat() const { return data_; }

  MatMap mat() { return MatMap(data_.data(), rows(), cols()); }
  ConstMatMap mat() const { return ConstMatMap(data_.data(), rows(), cols()); }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const { return data_.allFinite(); }
  std::string shape_str() const;

 private:
  std::vector<Index> shape_;
  Eigen::ArrayXd data_;
};

/// Throws NumericError naming `context` if any entry is NaN or infinite.
void ensure_finite(const Tensor& t, const std::string& context);

// ---- elementwise arithmetic (shapes must match exactly) ----
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- nonlinearities / reductions ----
Tensor relu(const Tensor& x);
/// Numerically stable softmax along `axis` (rank-1: axis 0; rank-2: 0 = down
/// columns, 1 = across rows). Each slice sums to one.
Tensor softmax(const Tensor& x, int axis);
double sum_all(const Tensor& x);
double mean_all(const Tensor& x);
/// Column means of the unified 2-D view, as a rank-1 tensor of length cols().
Tensor col_mean(const Tensor& x);

// ---- sequence ops (operate on the L x d view, L = rows) ----

/// Centered moving average with replicate-edge padding; output length equals
/// input length. Window means are accumulated as deviations from the window
/// center so a constant series is reproduced exactly.
Tensor avg_pool_1d(const Tensor& x, int kernel);

/// out[t] = x[(t + tau) mod L]: shift toward the front, entries leaving at the
/// front reappear at the end. tau may be any integer.
Tensor circular_roll(const Tensor& x, long tau);

Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor slice_rows(const Tensor& x, Index begin, Index end);
Tensor slice_cols(const Tensor& x, Index begin, Index end);
/// Adds a rank-1 bias of length cols() to every row.
Tensor add_row_bias(const Tensor& x, const Tensor& bias);

}  // namespace ked

#endif  // KED_TENSOR_HPP
