#ifndef KED_ATTENTION_HPP
#define KED_ATTENTION_HPP

#include <vector>

#include "ked/autodiff.hpp"
#include "ked/tensor.hpp"

namespace ked {

enum class AttentionVariant {
  KEDatt,    ///< query selection + lag-correlation aggregation
  KEDatt_f,  ///< same pipeline with the query-selection filter disabled
  Canonical  ///< scaled dot-product attention
};

/// Knobs shared by every attention position. The derived counts
/// k = ceil(factor_c * ln L) (lags) and u = ceil(factor_c * ln L_Q)
/// (selected queries) are clamped to [1, L].
struct AttentionConfig {
  double factor_c = 3.0;
  int heads = 8;
  AttentionVariant variant = AttentionVariant::KEDatt;
};

/// Top-correlated circular lags with their softmax-normalized weights,
/// ordered by descending correlation (ties toward the smaller lag).
struct LagSet {
  std::vector<long> lags;
  std::vector<double> weights;
};

/// ceil(factor_c * ln(length)) clamped to [1, length].
Index derived_top_count(double factor_c, Index length);

/// Deterministic evenly strided sample of m key positions out of length.
std::vector<Index> strided_key_sample(Index length, Index m);

/// Scaled dot-product attention, Softmax(Q K^T / sqrt(d)) V. Streams over
/// query-row blocks so the score matrix never materializes in full.
Tensor canonical_attention(const Tensor& Q, const Tensor& K, const Tensor& V);

/// Distillation measure per query: log-sum-exp of the scaled scores minus
/// their mean. Scores are sorted before reduction so the result is bit-exact
/// under any permutation of the keys.
Tensor sparsity_measure(const Tensor& Q, const Tensor& K);

/// Indices of the u largest measures, ties toward the lower index; returned
/// in ascending index order.
std::vector<Index> select_top_queries(const Tensor& M, Index u);

/// Masked circular lag correlation:
///   R(tau) = (1 / (|selected| * d)) * sum_{t in selected} sum_c
///            Q[t,c] * K[(t - tau) mod L, c]
/// evaluated for all tau in [0, L) via exact-length FFTs.
Tensor lag_correlation(const Tensor& Q, const Tensor& K,
                       const std::vector<Index>& selected);

/// The k lags with the largest correlation (ties toward the smaller lag),
/// weighted by a softmax over their correlation values.
LagSet top_k_lags(const Tensor& R, Index k);

/// Convex combination of circularly rolled value sequences:
/// sum_i weights[i] * roll(V, lags[i]).
Tensor time_delay_aggregate(const Tensor& V, const LagSet& lags);

/// Multi-head attention dispatching on cfg.variant; heads are column blocks
/// of width d_model / heads, processed independently, concatenated, and
/// projected by w_out. For the KEDatt variant the query-selection measure is
/// estimated against a strided key subsample of size ceil(c * ln L_K), which
/// keeps the whole pipeline O(L log L).
Tensor keda_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                      const Tensor& w_out, const AttentionConfig& cfg);

namespace ag {

Var canonical_attention(Var q, Var k, Var v);

/// Differentiable masked lag correlation; the selection itself is treated as
/// a constant of the backward pass.
Var masked_lag_correlation(Var q, Var k, std::vector<Index> selected);

/// Differentiable aggregation given fixed lags; gradients flow into the
/// values and the weights.
Var time_delay_aggregate(Var v, Var weights, std::vector<long> lags);

Var keda_attention(Var q, Var k, Var v, Var w_out, const AttentionConfig& cfg);

}  // namespace ag

/// Lag indices of the k largest entries of R (ties toward the smaller lag),
/// in descending-value order. Shared by the plain and tape pipelines so both
/// aggregate in the same order.
std::vector<Index> top_k_lag_indices(const Tensor& R, Index k);

}  // namespace ked

#endif  // KED_ATTENTION_HPP
