#include "ked/attention.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

#include "ked/fft.hpp"

namespace ked {

namespace {

using fft::Complex;

void require_qkv(const Tensor& Q, const Tensor& K, const Tensor& V) {
  if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2) {
    throw DimensionError("attention: rank-2 operands required");
  }
  if (Q.cols() != K.cols()) {
    throw DimensionError("attention: query/key feature dims disagree");
  }
  if (K.rows() != V.rows()) {
    throw DimensionError("attention: key/value lengths disagree");
  }
}

// Shared by the plain and tape paths so forward values agree bitwise.
Tensor tda_forward(const Tensor& V, const double* weights, const long* lags,
                   std::size_t k) {
  Tensor out = Tensor::zeros(V.shape());
  for (std::size_t i = 0; i < k; ++i) {
    Tensor rolled = circular_roll(V, lags[i]);
    out.flat() += weights[i] * rolled.flat();
  }
  return out;
}

Tensor masked_corr_forward(const Tensor& Q, const Tensor& K,
                           const std::vector<Index>& selected) {
  const Index L = Q.rows();
  const Index d = Q.cols();
  std::vector<char> mask(static_cast<std::size_t>(L), 0);
  for (Index idx : selected) {
    if (idx < 0 || idx >= L) throw ConfigError("lag_correlation: index out of range");
    mask[static_cast<std::size_t>(idx)] = 1;
  }
  // Accumulate Q_c * conj(K_c) over channels in the frequency domain; one
  // inverse transform yields the channel-summed correlation for every lag.
  std::vector<Complex> acc(static_cast<std::size_t>(L), Complex(0.0, 0.0));
  std::vector<Complex> qa(static_cast<std::size_t>(L));
  std::vector<Complex> kb(static_cast<std::size_t>(L));
  for (Index c = 0; c < d; ++c) {
    for (Index t = 0; t < L; ++t) {
      qa[static_cast<std::size_t>(t)] =
          Complex(mask[static_cast<std::size_t>(t)] ? Q(t, c) : 0.0, 0.0);
      kb[static_cast<std::size_t>(t)] = Complex(K(t, c), 0.0);
    }
    const auto fq = fft::dft(qa, false);
    const auto fk = fft::dft(kb, false);
    for (std::size_t f = 0; f < acc.size(); ++f) acc[f] += fq[f] * std::conj(fk[f]);
  }
  const auto corr = fft::dft(acc, true);
  const double scale = 1.0 / (static_cast<double>(selected.size()) * d);
  Tensor out({L});
  for (Index tau = 0; tau < L; ++tau) {
    out(tau) = corr[static_cast<std::size_t>(tau)].real() * scale;
  }
  return out;
}

std::vector<Index> all_indices(Index n) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

}  // namespace

Index derived_top_count(double factor_c, Index length) {
  if (length < 1) throw ConfigError("derived_top_count: empty sequence");
  const auto raw = static_cast<Index>(
      std::ceil(factor_c * std::log(static_cast<double>(length))));
  return std::clamp<Index>(raw, 1, length);
}

std::vector<Index> strided_key_sample(Index length, Index m) {
  m = std::clamp<Index>(m, 1, length);
  std::vector<Index> idx(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = (i * length) / m;
  return idx;
}

Tensor canonical_attention(const Tensor& Q, const Tensor& K, const Tensor& V) {
  require_qkv(Q, K, V);
  const Index Lq = Q.rows();
  const Index Lk = K.rows();
  const Index d = Q.cols();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor out({Lq, V.cols()});
  constexpr Index kBlock = 256;
  RowMatrix scores;
  for (Index i0 = 0; i0 < Lq; i0 += kBlock) {
    const Index ib = std::min<Index>(kBlock, Lq - i0);
    scores.resize(ib, Lk);
    scores.noalias() = Q.mat().middleRows(i0, ib) * K.mat().transpose();
    scores *= inv_sqrt_d;
    for (Index r = 0; r < ib; ++r) {
      const double mx = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - mx).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    out.mat().middleRows(i0, ib).noalias() = scores * V.mat();
  }
  return out;
}

Tensor sparsity_measure(const Tensor& Q, const Tensor& K) {
  if (Q.rank() != 2 || K.rank() != 2 || Q.cols() != K.cols()) {
    throw DimensionError("sparsity_measure: incompatible shapes");
  }
  const Index Lq = Q.rows();
  const Index Lk = K.rows();
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  RowMatrix scores(Lq, Lk);
  scores.noalias() = Q.mat() * K.mat().transpose();
  scores *= inv_sqrt_d;
  Tensor m({Lq});
  std::vector<double> row(static_cast<std::size_t>(Lk));
  for (Index i = 0; i < Lq; ++i) {
    for (Index j = 0; j < Lk; ++j) row[static_cast<std::size_t>(j)] = scores(i, j);
    // Sorting fixes the reduction order, making the measure independent of
    // how the keys were ordered, bit for bit.
    std::sort(row.begin(), row.end());
    const double mx = row.back();
    double sum_exp = 0.0;
    double sum = 0.0;
    for (double s : row) {
      sum_exp += std::exp(s - mx);
      sum += s;
    }
    m(i) = mx + std::log(sum_exp) - sum / static_cast<double>(Lk);
  }
  return m;
}

std::vector<Index> select_top_queries(const Tensor& M, Index u) {
  if (M.rank() != 1) throw DimensionError("select_top_queries: rank-1 measure required");
  const Index n = M.numel();
  if (u < 1 || u > n) {
    throw ConfigError("select_top_queries: u out of range [1, " +
                      std::to_string(n) + "]");
  }
  std::vector<Index> idx = all_indices(n);
  std::partial_sort(idx.begin(), idx.begin() + u, idx.end(),
                    [&M](Index a, Index b) {
                      if (M(a) != M(b)) return M(a) > M(b);
                      return a < b;
                    });
  idx.resize(static_cast<std::size_t>(u));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Tensor lag_correlation(const Tensor& Q, const Tensor& K,
                       const std::vector<Index>& selected) {
  if (Q.rank() != 2 || K.rank() != 2 || !Q.same_shape(K)) {
    throw DimensionError("lag_correlation: Q and K must share an LxD shape");
  }
  if (selected.empty()) {
    throw ConfigError("lag_correlation: selection must not be empty");
  }
  return masked_corr_forward(Q, K, selected);
}

std::vector<Index> top_k_lag_indices(const Tensor& R, Index k) {
  if (R.rank() != 1) throw DimensionError("top_k_lags: rank-1 correlation required");
  const Index n = R.numel();
  if (k < 1 || k > n) {
    throw ConfigError("top_k_lags: k out of range [1, " + std::to_string(n) + "]");
  }
  std::vector<Index> idx = all_indices(n);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&R](Index a, Index b) {
                      if (R(a) != R(b)) return R(a) > R(b);
                      return a < b;
                    });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

LagSet top_k_lags(const Tensor& R, Index k) {
  const std::vector<Index> idx = top_k_lag_indices(R, k);
  Tensor gathered({static_cast<Index>(idx.size())});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    gathered(static_cast<Index>(i)) = R(idx[i]);
  }
  const Tensor w = softmax(gathered, 0);
  LagSet out;
  out.lags.reserve(idx.size());
  out.weights.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    out.lags.push_back(static_cast<long>(idx[i]));
    out.weights.push_back(w(static_cast<Index>(i)));
  }
  return out;
}

Tensor time_delay_aggregate(const Tensor& V, const LagSet& lags) {
  if (lags.lags.size() != lags.weights.size() || lags.lags.empty()) {
    throw ConfigError("time_delay_aggregate: malformed lag set");
  }
  return tda_forward(V, lags.weights.data(), lags.lags.data(), lags.lags.size());
}

namespace {

struct HeadLayout {
  Index heads;
  Index head_dim;
};

HeadLayout head_layout(const Tensor& Q, const AttentionConfig& cfg) {
  if (cfg.heads < 1 || Q.cols() % cfg.heads != 0) {
    throw ConfigError("keda_attention: head count must divide the model dim (" +
                      std::to_string(Q.cols()) + " % " +
                      std::to_string(cfg.heads) + " != 0)");
  }
  return {cfg.heads, Q.cols() / cfg.heads};
}

std::vector<Index> keda_selection(const Tensor& Qh, const Tensor& Kh,
                                  const AttentionConfig& cfg) {
  const Index L = Qh.rows();
  if (cfg.variant == AttentionVariant::KEDatt_f) return all_indices(L);
  const Index u = derived_top_count(cfg.factor_c, L);
  // Estimating the measure against a log-sized key sample keeps selection
  // O(L log L); the exact measure over all keys would be quadratic.
  const Index m = derived_top_count(cfg.factor_c, Kh.rows());
  const std::vector<Index> sample = strided_key_sample(Kh.rows(), m);
  Tensor k_sub({static_cast<Index>(sample.size()), Kh.cols()});
  for (std::size_t i = 0; i < sample.size(); ++i) {
    k_sub.mat().row(static_cast<Index>(i)) = Kh.mat().row(sample[i]);
  }
  const Tensor measure = sparsity_measure(Qh, k_sub);
  return select_top_queries(measure, u);
}

}  // namespace

Tensor keda_attention(const Tensor& Q, const Tensor& K, const Tensor& V,
                      const Tensor& w_out, const AttentionConfig& cfg) {
  require_qkv(Q, K, V);
  if (V.cols() != Q.cols()) {
    throw DimensionError("keda_attention: value dim must match model dim");
  }
  const auto [heads, head_dim] = head_layout(Q, cfg);
  Tensor concat({Q.rows(), Q.cols()});
  for (Index h = 0; h < heads; ++h) {
    const Index c0 = h * head_dim;
    const Tensor Qh = slice_cols(Q, c0, c0 + head_dim);
    const Tensor Kh = slice_cols(K, c0, c0 + head_dim);
    const Tensor Vh = slice_cols(V, c0, c0 + head_dim);
    Tensor head_out;
    if (cfg.variant == AttentionVariant::Canonical) {
      head_out = canonical_attention(Qh, Kh, Vh);
    } else {
      if (Qh.rows() != Kh.rows()) {
        throw DimensionError(
            "keda_attention: KEDatt requires equal query/key lengths; resize "
            "keys first");
      }
      const std::vector<Index> sel = keda_selection(Qh, Kh, cfg);
      const Tensor corr = lag_correlation(Qh, Kh, sel);
      const Index k = derived_top_count(cfg.factor_c, corr.numel());
      const LagSet lags = top_k_lags(corr, k);
      head_out = time_delay_aggregate(Vh, lags);
    }
    concat.mat().middleCols(c0, head_dim) = head_out.mat();
  }
  return matmul(concat, w_out);
}

namespace ag {

Var canonical_attention(Var q, Var k, Var v) {
  require_qkv(q.value(), k.value(), v.value());
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.value().cols()));
  Var scores = scale(matmul(q, transpose(k)), inv_sqrt_d);
  Var probs = softmax(scores, 1);
  return matmul(probs, v);
}

Var masked_lag_correlation(Var q, Var k, std::vector<Index> selected) {
  Tape& t = *q.tape();
  if (q.tape() != k.tape()) {
    throw ConfigError("masked_lag_correlation: operands on different tapes");
  }
  const Tensor& Qv = q.value();
  const Tensor& Kv = k.value();
  if (!Qv.same_shape(Kv) || Qv.rank() != 2) {
    throw DimensionError("masked_lag_correlation: Q and K must share an LxD shape");
  }
  if (selected.empty()) {
    throw ConfigError("masked_lag_correlation: selection must not be empty");
  }
  Tensor value = masked_corr_forward(Qv, Kv, selected);
  return t.make(
      std::move(value), {q, k},
      [q, k, selected = std::move(selected)](Tape& tp, const Tensor& g) {
        const Tensor& Qv = tp.value(q.id());
        const Tensor& Kv = tp.value(k.id());
        const Index L = Qv.rows();
        const Index d = Qv.cols();
        const double s = 1.0 / (static_cast<double>(selected.size()) * d);
        std::vector<char> mask(static_cast<std::size_t>(L), 0);
        for (Index idx : selected) mask[static_cast<std::size_t>(idx)] = 1;
        Eigen::ArrayXd gv(L);
        for (Index tau = 0; tau < L; ++tau) gv[tau] = g(tau);
        const bool need_q = tp.requires_grad(q.id());
        const bool need_k = tp.requires_grad(k.id());
        Tensor dq = need_q ? Tensor::zeros(Qv.shape()) : Tensor();
        Tensor dk = need_k ? Tensor::zeros(Kv.shape()) : Tensor();
        Eigen::ArrayXd col(L);
        for (Index c = 0; c < d; ++c) {
          if (need_q) {
            // dR/dQ[t,c] = s * mask[t] * K[(t - tau) mod L, c]
            for (Index t2 = 0; t2 < L; ++t2) col[t2] = Kv(t2, c);
            Eigen::ArrayXd conv = fft::circ_convolve(gv, col);
            for (Index t2 = 0; t2 < L; ++t2) {
              if (mask[static_cast<std::size_t>(t2)]) dq(t2, c) = s * conv[t2];
            }
          }
          if (need_k) {
            // dR/dK[s',c] = s * sum_{t in sel} Q[t,c] * g[(t - s') mod L]
            for (Index t2 = 0; t2 < L; ++t2) {
              col[t2] = mask[static_cast<std::size_t>(t2)] ? Qv(t2, c) : 0.0;
            }
            Eigen::ArrayXd corr = fft::circ_correlate(col, gv);
            for (Index t2 = 0; t2 < L; ++t2) dk(t2, c) = s * corr[t2];
          }
        }
        if (need_q) tp.add_grad(q.id(), dq);
        if (need_k) tp.add_grad(k.id(), dk);
      },
      "masked_lag_correlation");
}

Var time_delay_aggregate(Var v, Var weights, std::vector<long> lags) {
  Tape& t = *v.tape();
  if (v.tape() != weights.tape()) {
    throw ConfigError("time_delay_aggregate: operands on different tapes");
  }
  const Tensor& Vv = v.value();
  const Tensor& Wv = weights.value();
  if (Wv.rank() != 1 || static_cast<std::size_t>(Wv.numel()) != lags.size()) {
    throw DimensionError("time_delay_aggregate: weights/lags length mismatch");
  }
  Tensor value = tda_forward(Vv, Wv.flat().data(), lags.data(), lags.size());
  return t.make(
      std::move(value), {v, weights},
      [v, weights, lags = std::move(lags)](Tape& tp, const Tensor& g) {
        const Tensor& Vv = tp.value(v.id());
        const Tensor& Wv = tp.value(weights.id());
        if (tp.requires_grad(v.id())) {
          Tensor dv = Tensor::zeros(Vv.shape());
          for (std::size_t i = 0; i < lags.size(); ++i) {
            Tensor rolled = ked::circular_roll(g, -lags[i]);
            dv.flat() += Wv(static_cast<Index>(i)) * rolled.flat();
          }
          tp.add_grad(v.id(), dv);
        }
        if (tp.requires_grad(weights.id())) {
          Tensor dw({Wv.numel()});
          for (std::size_t i = 0; i < lags.size(); ++i) {
            Tensor rolled = ked::circular_roll(Vv, lags[i]);
            dw(static_cast<Index>(i)) = (g.flat() * rolled.flat()).sum();
          }
          tp.add_grad(weights.id(), dw);
        }
      },
      "time_delay_aggregate");
}

Var keda_attention(Var q, Var k, Var v, Var w_out, const AttentionConfig& cfg) {
  require_qkv(q.value(), k.value(), v.value());
  if (v.value().cols() != q.value().cols()) {
    throw DimensionError("keda_attention: value dim must match model dim");
  }
  const auto [heads, head_dim] = head_layout(q.value(), cfg);
  Var concat;
  for (Index h = 0; h < heads; ++h) {
    const Index c0 = h * head_dim;
    Var qh = slice_cols(q, c0, c0 + head_dim);
    Var kh = slice_cols(k, c0, c0 + head_dim);
    Var vh = slice_cols(v, c0, c0 + head_dim);
    Var head_out;
    if (cfg.variant == AttentionVariant::Canonical) {
      head_out = canonical_attention(qh, kh, vh);
    } else {
      if (qh.value().rows() != kh.value().rows()) {
        throw DimensionError(
            "keda_attention: KEDatt requires equal query/key lengths; resize "
            "keys first");
      }
      const std::vector<Index> sel = keda_selection(qh.value(), kh.value(), cfg);
      Var corr = masked_lag_correlation(qh, kh, sel);
      const Index kk = derived_top_count(cfg.factor_c, corr.value().numel());
      const std::vector<Index> idx = top_k_lag_indices(corr.value(), kk);
      Var w = softmax(gather(corr, idx), 0);
      std::vector<long> lags(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) lags[i] = static_cast<long>(idx[i]);
      head_out = time_delay_aggregate(vh, w, std::move(lags));
    }
    concat = (h == 0) ? head_out : concat_cols(concat, head_out);
  }
  return matmul(concat, w_out);
}

}  // namespace ag

}  // namespace ked
