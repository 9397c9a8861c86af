#ifndef KED_BENCH_HPP
#define KED_BENCH_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ked/tensor.hpp"

namespace ked {

struct BenchRow {
  std::string mechanism;  ///< "canonical" or "kedatt"
  Index length = 0;
  double seconds = 0.0;   ///< median per-forward time
};

struct BenchConfig {
  std::vector<Index> lengths{256, 512, 1024, 2048, 4096, 8192};
  int reps = 5;
  Index d_model = 64;
  int heads = 8;
  double factor_c = 3.0;
  std::uint64_t seed = 42;
  /// Each timed measurement repeats the forward until it accumulates at least
  /// this much wall time, then divides; keeps small-L points measurable.
  double min_measure_seconds = 5e-3;
};

/// Times single-threaded forward passes of the canonical and KEDatt
/// mechanisms over the length grid; reports the median of `reps`
/// measurements per point.
std::vector<BenchRow> run_attention_bench(const BenchConfig& cfg);

/// Least-squares slope of log(seconds) against log(length).
double fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

/// Fitted slope per mechanism from a result table.
std::map<std::string, double> slopes_by_mechanism(const std::vector<BenchRow>& rows);

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows);

}  // namespace ked

#endif  // KED_BENCH_HPP
