#ifndef KED_DATA_HPP
#define KED_DATA_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "ked/tensor.hpp"

namespace ked {

/// Immutable multivariate series: strictly increasing timestamps and a
/// [T x D] value block with named features.
struct SeriesFrame {
  std::vector<std::string> timestamps;  ///< original text, one per row
  std::vector<std::int64_t> time_index; ///< parsed ordering key
  Tensor values;                        ///< [T x D]
  std::vector<std::string> feature_names;

  Index length() const { return values.rows(); }
  Index dims() const { return values.cols(); }
  SeriesFrame segment(Index begin, Index end) const;
};

struct LoadOptions {
  bool forward_fill = false;  ///< fill gaps from the previous row; else reject
};

/// Reads a CSV whose first column is a timestamp (ISO-8601 date/datetime or
/// integer epoch) and whose remaining columns are numeric features. A header
/// row is detected by an unparseable first field.
SeriesFrame load_csv(const std::string& path, const LoadOptions& opts = {});

void write_csv(const std::string& path, const SeriesFrame& frame);

struct SplitSpec {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
  void validate() const;
};

struct Splits {
  SeriesFrame train, val, test;
};

/// Contiguous chronological segments; boundaries at floor(ratio * T). Every
/// segment must be at least `min_len` rows long.
Splits chronological_split(const SeriesFrame& frame, const SplitSpec& spec,
                           Index min_len = 1);

/// Per-feature affine scaler fitted on training data only.
struct Scaler {
  Eigen::ArrayXd mu;
  Eigen::ArrayXd sigma;  ///< floored at 1e-8
  Tensor transform(const Tensor& x) const;
  Tensor inverse(const Tensor& x) const;
};

Scaler fit_scaler(const SeriesFrame& train);
/// Fits on `train` and rescales every listed frame in place.
Scaler standardize(SeriesFrame& train, std::vector<SeriesFrame*> others);

void save_scaler(const std::string& path, const Scaler& scaler,
                 const std::vector<std::string>& feature_names);
Scaler load_scaler(const std::string& path);

/// One rolling-forecast pair: y starts immediately after x.
struct WindowSample {
  Tensor x;  ///< [I x D]
  Tensor y;  ///< [O x D]
  Index origin = 0;
};

Index window_count(Index T, Index I, Index O, Index stride = 1);
WindowSample window_at(const SeriesFrame& frame, Index I, Index O, Index stride,
                       Index idx);
std::vector<WindowSample> windows(const SeriesFrame& frame, Index I, Index O,
                                  Index stride = 1);

enum class SynthKind { sine_trend, multi_period, random_walk };

SynthKind parse_synth_kind(const std::string& name);
std::string synth_kind_name(SynthKind kind);

/// Closed forms (t = 0..T-1, per feature f with phase offset 7f):
///   sine_trend:   0.0005 t + sin(2 pi (t + 7f) / period) + noise * N(0,1)
///   multi_period: sin(2 pi (t + 7f) / 24) + 0.7 sin(2 pi (t + 7f) / 168)
///                 + noise * N(0,1)
///   random_walk:  cumulative sum of noise * N(0,1) steps (noise 0 -> flat)
struct SynthSpec {
  SynthKind kind = SynthKind::sine_trend;
  Index T = 2000;
  Index D = 1;
  double noise = 0.1;
  double period = 24.0;
  std::uint64_t seed = 1;
};

/// Deterministic for a fixed spec; timestamps are hourly epochs.
SeriesFrame synth_generate(const SynthSpec& spec);

}  // namespace ked

#endif  // KED_DATA_HPP
