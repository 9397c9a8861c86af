#ifndef KED_FFT_HPP
#define KED_FFT_HPP

#include <Eigen/Dense>

#include <complex>
#include <vector>

#include "ked/tensor.hpp"

namespace ked::fft {

using Complex = std::complex<double>;

/// Discrete Fourier transform at the exact input length. Power-of-two lengths
/// use an iterative radix-2 kernel; every other length goes through Bluestein's
/// chirp-z reformulation, which pads to a power of two internally but returns
/// the exact-length transform. The inverse includes the 1/n factor.
std::vector<Complex> dft(const std::vector<Complex>& x, bool inverse);

/// Forward transform of a real sequence; returns the non-redundant half
/// spectrum of floor(n/2)+1 bins.
std::vector<Complex> real_fft(const std::vector<double>& x);

/// Reconstructs a length-n real sequence from its half spectrum.
std::vector<double> inverse_real_fft(const std::vector<Complex>& half, Index n);

/// Circular cross-correlation: out[tau] = sum_t a[t] * b[(t - tau) mod n].
Eigen::ArrayXd circ_correlate(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

/// Circular convolution: out[t] = sum_tau a[tau] * b[(t - tau) mod n].
Eigen::ArrayXd circ_convolve(const Eigen::ArrayXd& a, const Eigen::ArrayXd& b);

}  // namespace ked::fft

#endif  // KED_FFT_HPP
