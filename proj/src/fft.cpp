#include "ked/fft.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <unordered_map>
#include <utility>

namespace ked::fft {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
void fft_pow2(std::vector<Complex>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * kPi / static_cast<double>(len);
    const Complex wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      Complex w(1.0, 0.0);
      for (std::size_t j = 0; j < len / 2; ++j) {
        const Complex u = a[i + j];
        const Complex v = a[i + j + len / 2] * w;
        a[i + j] = u + v;
        a[i + j + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

struct BluesteinPlan {
  std::size_t n = 0;
  std::size_t m = 0;                  // padded power-of-two length
  std::vector<Complex> chirp;         // e^{-i pi k^2 / n}, k in [0, n)
  std::vector<Complex> kernel_freq;   // FFT of the chirp-conjugate kernel
};

BluesteinPlan make_plan(std::size_t n) {
  BluesteinPlan p;
  p.n = n;
  p.m = next_pow2(2 * n - 1);
  p.chirp.resize(n);
  // k^2 mod 2n keeps the phase argument small without changing the twiddle.
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t q = (static_cast<std::uint64_t>(k) * k) % (2 * n);
    const double ang = -kPi * static_cast<double>(q) / static_cast<double>(n);
    p.chirp[k] = Complex(std::cos(ang), std::sin(ang));
  }
  std::vector<Complex> kernel(p.m, Complex(0.0, 0.0));
  kernel[0] = std::conj(p.chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    kernel[k] = std::conj(p.chirp[k]);
    kernel[p.m - k] = std::conj(p.chirp[k]);
  }
  fft_pow2(kernel, false);
  p.kernel_freq = std::move(kernel);
  return p;
}

const BluesteinPlan& plan_for(std::size_t n) {
  thread_local std::unordered_map<std::size_t, BluesteinPlan> cache;
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_plan(n)).first;
  return it->second;
}

std::vector<Complex> bluestein(const std::vector<Complex>& x) {
  const std::size_t n = x.size();
  const BluesteinPlan& p = plan_for(n);
  std::vector<Complex> a(p.m, Complex(0.0, 0.0));
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * p.chirp[k];
  fft_pow2(a, false);
  for (std::size_t k = 0; k < p.m; ++k) a[k] *= p.kernel_freq[k];
  fft_pow2(a, true);
  const double scale = 1.0 / static_cast<double>(p.m);
  std::vector<Complex> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * scale * p.chirp[k];
  return out;
}

}  // namespace

std::vector<Complex> dft(const std::vector<Complex>& x, bool inverse) {
  const std::size_t n = x.size();
  if (n <= 1) return x;
  std::vector<Complex> out;
  if (!inverse) {
    if (is_pow2(n)) {
      out = x;
      fft_pow2(out, false);
    } else {
      out = bluestein(x);
    }
    return out;
  }
  // idft(x) = conj(dft(conj(x))) / n
  std::vector<Complex> c(n);
  for (std::size_t k = 0; k < n; ++k) c[k] = std::conj(x[k]);
  c = dft(c, false);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t k = 0; k < n; ++k) c[k] = std::conj(c[k]) * scale;
  return c;
}

std::vector<Complex> real_fft(const std::vector<double>& x) {
  if (x.empty()) throw DimensionError("real_fft: empty input");
  std::vector<Complex> cx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = Complex(x[i], 0.0);
  cx = dft(cx, false);
  cx.resize(x.size() / 2 + 1);
  return cx;
}

std::vector<double> inverse_real_fft(const std::vector<Complex>& half, Index n) {
  if (n < 1) throw DimensionError("inverse_real_fft: length must be >= 1");
  const std::size_t un = static_cast<std::size_t>(n);
  if (half.size() != un / 2 + 1) {
    throw DimensionError("inverse_real_fft: spectrum size does not match length");
  }
  std::vector<Complex> full(un);
  for (std::size_t k = 0; k < half.size(); ++k) full[k] = half[k];
  for (std::size_t k = half.size(); k < un; ++k) full[k] = std::conj(full[un - k]);
  full = dft(full, true);
  std::vector<double> out(un);
  for (std::size_t k = 0; k < un; ++k) out[k] = full[k].real();
  return out;
}

namespace {

Eigen::ArrayXd spectral_combine(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b,
                                bool conjugate_b) {
  if (a.size() != b.size()) {
    throw DimensionError("circular fft op: length mismatch");
  }
  const std::size_t n = static_cast<std::size_t>(a.size());
  std::vector<Complex> fa(n), fb(n);
  for (std::size_t i = 0; i < n; ++i) {
    fa[i] = Complex(a[static_cast<Index>(i)], 0.0);
    fb[i] = Complex(b[static_cast<Index>(i)], 0.0);
  }
  fa = dft(fa, false);
  fb = dft(fb, false);
  for (std::size_t i = 0; i < n; ++i) {
    fa[i] *= conjugate_b ? std::conj(fb[i]) : fb[i];
  }
  fa = dft(fa, true);
  Eigen::ArrayXd out(a.size());
  for (std::size_t i = 0; i < n; ++i) out[static_cast<Index>(i)] = fa[i].real();
  return out;
}

}  // namespace

Eigen::ArrayXd circ_correlate(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  return spectral_combine(a, b, /*conjugate_b=*/true);
}

Eigen::ArrayXd circ_convolve(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b) {
  return spectral_combine(a, b, /*conjugate_b=*/false);
}

}  // namespace ked::fft
