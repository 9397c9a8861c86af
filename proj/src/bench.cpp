#include "ked/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "ked/attention.hpp"
#include "ked/rng.hpp"

namespace ked {

namespace {

Tensor random_tensor(std::vector<Index> shape, std::mt19937_64& gen) {
  Tensor t(std::move(shape));
  for (Index i = 0; i < t.numel(); ++i) t(i) = rng::uniform(gen, -1.0, 1.0);
  return t;
}

template <typename F>
double timed_once(const F& fn, double min_seconds) {
  using clock = std::chrono::steady_clock;
  long iters = 0;
  const auto start = clock::now();
  double elapsed = 0.0;
  do {
    fn();
    ++iters;
    elapsed = std::chrono::duration<double>(clock::now() - start).count();
  } while (elapsed < min_seconds);
  return elapsed / static_cast<double>(iters);
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<BenchRow> run_attention_bench(const BenchConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("bench: reps must be >= 1");
  if (cfg.d_model % cfg.heads != 0) {
    throw ConfigError("bench: heads must divide d_model");
  }
  std::vector<BenchRow> rows;
  std::mt19937_64 gen(cfg.seed);
  AttentionConfig canonical;
  canonical.variant = AttentionVariant::Canonical;
  canonical.heads = cfg.heads;
  canonical.factor_c = cfg.factor_c;
  AttentionConfig kedatt = canonical;
  kedatt.variant = AttentionVariant::KEDatt;

  for (Index L : cfg.lengths) {
    const Tensor Q = random_tensor({L, cfg.d_model}, gen);
    const Tensor K = random_tensor({L, cfg.d_model}, gen);
    const Tensor V = random_tensor({L, cfg.d_model}, gen);
    const Tensor Wo = random_tensor({cfg.d_model, cfg.d_model}, gen);
    volatile double sink = 0.0;  // keep the forward from being elided
    for (const auto& [name, acfg] : {std::pair{"canonical", &canonical},
                                     std::pair{"kedatt", &kedatt}}) {
      std::vector<double> times;
      times.reserve(static_cast<std::size_t>(cfg.reps));
      for (int r = 0; r < cfg.reps; ++r) {
        times.push_back(timed_once(
            [&] {
              const Tensor out = keda_attention(Q, K, V, Wo, *acfg);
              sink = sink + out(0, 0);
            },
            cfg.min_measure_seconds));
      }
      rows.push_back({name, L, median(times)});
    }
  }
  return rows;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw ConfigError("slope fit needs at least two points");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(points.size());
  for (const auto& [x, y] : points) {
    const double lx = std::log(x);
    const double ly = std::log(y);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::map<std::string, double> slopes_by_mechanism(const std::vector<BenchRow>& rows) {
  std::map<std::string, std::vector<std::pair<double, double>>> pts;
  for (const BenchRow& r : rows) {
    pts[r.mechanism].emplace_back(static_cast<double>(r.length), r.seconds);
  }
  std::map<std::string, double> slopes;
  for (const auto& [name, p] : pts) slopes[name] = fit_loglog_slope(p);
  return slopes;
}

void write_bench_csv(const std::string& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "mechanism,L,seconds\n";
  char buf[32];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.9g", r.seconds);
    out << r.mechanism << ',' << r.length << ',' << buf << '\n';
  }
}

}  // namespace ked
