#include "ked/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "ked/rng.hpp"

namespace ked {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool days_in_month_ok(int y, int m, int d) {
  static const int dim[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m < 1 || m > 12 || d < 1) return false;
  int limit = dim[m - 1];
  const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
  if (m == 2 && leap) limit = 29;
  return d <= limit;
}

// Days since 1970-01-01 for a proleptic Gregorian date (civil calendar).
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Parses integer epochs and "YYYY-MM-DD[{ |T}HH:MM[:SS]]" timestamps into a
/// comparable ordering key. Returns nothing when the field is not a
/// timestamp (used for header detection).
std::optional<std::int64_t> parse_timestamp(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty()) return std::nullopt;
  // plain integer epoch
  {
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (end && *end == '\0') return static_cast<std::int64_t>(v);
  }
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
  char sep = 0;
  int n = std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h,
                      &mi, &sec);
  if (n >= 3) {
    if (n > 3 && sep != ' ' && sep != 'T') return std::nullopt;
    if (!days_in_month_ok(y, mo, d)) return std::nullopt;
    if (h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60) {
      return std::nullopt;
    }
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + sec;
  }
  return std::nullopt;
}

std::optional<double> parse_value(const std::string& raw) {
  const std::string s = trim(raw);
  if (s.empty() || s == "NaN" || s == "nan" || s == "NA") return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (!end || *end != '\0') return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

SeriesFrame SeriesFrame::segment(Index begin, Index end) const {
  if (begin < 0 || end > length() || begin >= end) {
    throw DimensionError("segment: invalid range");
  }
  SeriesFrame out;
  out.feature_names = feature_names;
  out.timestamps.assign(timestamps.begin() + begin, timestamps.begin() + end);
  out.time_index.assign(time_index.begin() + begin, time_index.begin() + end);
  out.values = slice_rows(values, begin, end);
  return out;
}

SeriesFrame load_csv(const std::string& path, const LoadOptions& opts) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  Index line_no = 0;
  SeriesFrame frame;
  std::vector<double> flat;
  Index D = -1;
  bool have_prev_row = false;
  std::vector<double> prev_row;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() < 2) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": expected a timestamp and at least one feature");
    }
    const auto ts = parse_timestamp(fields[0]);
    if (!ts) {
      if (frame.timestamps.empty() && frame.feature_names.empty()) {
        // header row: remaining fields name the features
        for (std::size_t i = 1; i < fields.size(); ++i) {
          frame.feature_names.push_back(trim(fields[i]));
        }
        continue;
      }
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": unparseable timestamp '" + fields[0] + "'");
    }
    if (D < 0) {
      D = static_cast<Index>(fields.size()) - 1;
    } else if (static_cast<Index>(fields.size()) - 1 != D) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": inconsistent column count");
    }
    if (!frame.time_index.empty() && *ts <= frame.time_index.back()) {
      throw DataError(path + ":" + std::to_string(line_no) +
                      ": timestamps must be strictly increasing (row '" +
                      fields[0] + "')");
    }
    std::vector<double> row(static_cast<std::size_t>(D));
    for (Index c = 0; c < D; ++c) {
      const auto v = parse_value(fields[static_cast<std::size_t>(c) + 1]);
      if (v) {
        row[static_cast<std::size_t>(c)] = *v;
      } else if (opts.forward_fill && have_prev_row) {
        row[static_cast<std::size_t>(c)] = prev_row[static_cast<std::size_t>(c)];
      } else {
        throw DataError(path + ":" + std::to_string(line_no) +
                        ": missing or unparseable value in column " +
                        std::to_string(c + 1));
      }
    }
    frame.timestamps.push_back(trim(fields[0]));
    frame.time_index.push_back(*ts);
    flat.insert(flat.end(), row.begin(), row.end());
    prev_row = std::move(row);
    have_prev_row = true;
  }
  if (frame.time_index.empty()) throw DataError(path + ": no data rows");
  if (frame.feature_names.empty()) {
    for (Index c = 0; c < D; ++c) {
      frame.feature_names.push_back("f" + std::to_string(c));
    }
  } else if (static_cast<Index>(frame.feature_names.size()) != D) {
    throw DataError(path + ": header names " +
                    std::to_string(frame.feature_names.size()) +
                    " features but rows have " + std::to_string(D));
  }
  frame.values = Tensor::from_flat(
      {static_cast<Index>(frame.time_index.size()), D}, std::move(flat));
  return frame;
}

void write_csv(const std::string& path, const SeriesFrame& frame) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << "date";
  for (const auto& name : frame.feature_names) out << ',' << name;
  out << '\n';
  char buf[32];
  for (Index t = 0; t < frame.length(); ++t) {
    out << frame.timestamps[static_cast<std::size_t>(t)];
    for (Index c = 0; c < frame.dims(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", frame.values(t, c));
      out << ',' << buf;
    }
    out << '\n';
  }
}

void SplitSpec::validate() const {
  if (train < 0 || val < 0 || test < 0) {
    throw ConfigError("split ratios must be non-negative");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
}

Splits chronological_split(const SeriesFrame& frame, const SplitSpec& spec,
                           Index min_len) {
  spec.validate();
  const Index T = frame.length();
  // the guard keeps exact-rational ratios like 0.7 + 0.1 from landing one
  // row short of the intended boundary
  const Index b1 = static_cast<Index>(std::floor(spec.train * T + 1e-9));
  const Index b2 =
      static_cast<Index>(std::floor((spec.train + spec.val) * T + 1e-9));
  const Index lens[3] = {b1, b2 - b1, T - b2};
  const char* names[3] = {"train", "val", "test"};
  for (int i = 0; i < 3; ++i) {
    if (lens[i] < min_len) {
      throw DataError(std::string("insufficient data: ") + names[i] +
                      " split has " + std::to_string(lens[i]) +
                      " rows, need at least " + std::to_string(min_len));
    }
  }
  Splits out;
  out.train = frame.segment(0, b1);
  out.val = frame.segment(b1, b2);
  out.test = frame.segment(b2, T);
  return out;
}

Tensor Scaler::transform(const Tensor& x) const {
  if (x.cols() != mu.size()) throw DimensionError("scaler: feature count mismatch");
  Tensor out = x;
  auto m = out.mat();
  for (Index c = 0; c < m.cols(); ++c) {
    m.col(c) = (m.col(c).array() - mu[c]) / sigma[c];
  }
  return out;
}

Tensor Scaler::inverse(const Tensor& x) const {
  if (x.cols() != mu.size()) throw DimensionError("scaler: feature count mismatch");
  Tensor out = x;
  auto m = out.mat();
  for (Index c = 0; c < m.cols(); ++c) {
    m.col(c) = m.col(c).array() * sigma[c] + mu[c];
  }
  return out;
}

Scaler fit_scaler(const SeriesFrame& train) {
  if (train.length() < 1) throw DataError("fit_scaler: empty training frame");
  Scaler s;
  const Index D = train.dims();
  s.mu.resize(D);
  s.sigma.resize(D);
  auto m = train.values.mat();
  for (Index c = 0; c < D; ++c) {
    // mean as deviations from a reference value: exact for constant columns,
    // which the 1e-8 sigma floor would otherwise amplify
    const double ref = m(0, c);
    const double mean = ref + (m.col(c).array() - ref).mean();
    const double var = (m.col(c).array() - mean).square().mean();
    s.mu[c] = mean;
    s.sigma[c] = std::max(std::sqrt(var), 1e-8);
  }
  return s;
}

Scaler standardize(SeriesFrame& train, std::vector<SeriesFrame*> others) {
  Scaler s = fit_scaler(train);
  train.values = s.transform(train.values);
  for (SeriesFrame* f : others) {
    if (f) f->values = s.transform(f->values);
  }
  return s;
}

void save_scaler(const std::string& path, const Scaler& scaler,
                 const std::vector<std::string>& feature_names) {
  nlohmann::json j;
  j["mu"] = std::vector<double>(scaler.mu.data(), scaler.mu.data() + scaler.mu.size());
  j["sigma"] = std::vector<double>(scaler.sigma.data(),
                                   scaler.sigma.data() + scaler.sigma.size());
  j["feature_names"] = feature_names;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write scaler to " + path);
  out << j.dump(2) << '\n';
}

Scaler load_scaler(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read scaler from " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed scaler " + path + ": " + e.what());
  }
  const auto mu = j.at("mu").get<std::vector<double>>();
  const auto sigma = j.at("sigma").get<std::vector<double>>();
  if (mu.size() != sigma.size()) throw DataError("malformed scaler " + path);
  Scaler s;
  s.mu = Eigen::Map<const Eigen::ArrayXd>(mu.data(), static_cast<Index>(mu.size()));
  s.sigma =
      Eigen::Map<const Eigen::ArrayXd>(sigma.data(), static_cast<Index>(sigma.size()));
  return s;
}

Index window_count(Index T, Index I, Index O, Index stride) {
  if (stride < 1) throw ConfigError("window stride must be >= 1");
  if (T < I + O) {
    throw DataError("insufficient data: need at least I + O = " +
                    std::to_string(I + O) + " rows, have " + std::to_string(T));
  }
  return (T - I - O) / stride + 1;
}

WindowSample window_at(const SeriesFrame& frame, Index I, Index O, Index stride,
                       Index idx) {
  const Index n = window_count(frame.length(), I, O, stride);
  if (idx < 0 || idx >= n) throw DimensionError("window_at: index out of range");
  WindowSample s;
  s.origin = idx * stride;
  s.x = slice_rows(frame.values, s.origin, s.origin + I);
  s.y = slice_rows(frame.values, s.origin + I, s.origin + I + O);
  return s;
}

std::vector<WindowSample> windows(const SeriesFrame& frame, Index I, Index O,
                                  Index stride) {
  const Index n = window_count(frame.length(), I, O, stride);
  std::vector<WindowSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) out.push_back(window_at(frame, I, O, stride, i));
  return out;
}

SynthKind parse_synth_kind(const std::string& name) {
  if (name == "sine_trend") return SynthKind::sine_trend;
  if (name == "multi_period") return SynthKind::multi_period;
  if (name == "random_walk") return SynthKind::random_walk;
  throw ConfigError("unknown synthetic kind '" + name +
                    "' (sine_trend|multi_period|random_walk)");
}

std::string synth_kind_name(SynthKind kind) {
  switch (kind) {
    case SynthKind::sine_trend: return "sine_trend";
    case SynthKind::multi_period: return "multi_period";
    case SynthKind::random_walk: return "random_walk";
  }
  return "?";
}

SeriesFrame synth_generate(const SynthSpec& spec) {
  if (spec.T < 1 || spec.D < 1) throw ConfigError("synth_generate: T, D must be positive");
  if (spec.period <= 0) throw ConfigError("synth_generate: period must be positive");
  std::mt19937_64 gen(spec.seed);
  SeriesFrame frame;
  frame.values = Tensor({spec.T, spec.D});
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  for (Index c = 0; c < spec.D; ++c) {
    frame.feature_names.push_back("f" + std::to_string(c));
    const double phase = 7.0 * static_cast<double>(c);
    double walk = 0.0;
    for (Index t = 0; t < spec.T; ++t) {
      double v = 0.0;
      switch (spec.kind) {
        case SynthKind::sine_trend:
          v = 5e-4 * static_cast<double>(t) +
              std::sin(kTwoPi * (t + phase) / spec.period) +
              spec.noise * rng::gaussian(gen);
          break;
        case SynthKind::multi_period:
          v = std::sin(kTwoPi * (t + phase) / 24.0) +
              0.7 * std::sin(kTwoPi * (t + phase) / 168.0) +
              spec.noise * rng::gaussian(gen);
          break;
        case SynthKind::random_walk:
          walk += spec.noise * rng::gaussian(gen);
          v = walk;
          break;
      }
      frame.values(t, c) = v;
    }
  }
  frame.timestamps.reserve(static_cast<std::size_t>(spec.T));
  frame.time_index.reserve(static_cast<std::size_t>(spec.T));
  for (Index t = 0; t < spec.T; ++t) {
    const std::int64_t epoch = 1'600'000'000LL + 3600LL * t;
    frame.time_index.push_back(epoch);
    frame.timestamps.push_back(std::to_string(epoch));
  }
  return frame;
}

}  // namespace ked
