#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "ked/data.hpp"
#include "ked/attention.hpp"
#include "test_helpers.hpp"

using namespace ked;
using test::max_abs_diff;

namespace {

struct TempCsv {
  std::string path;
  explicit TempCsv(const std::string& name, const std::string& content)
      : path(name) {
    std::ofstream out(path);
    out << content;
  }
  ~TempCsv() { std::remove(path.c_str()); }
};

SeriesFrame toy_frame(Index T, Index D, std::uint64_t seed = 3) {
  SynthSpec spec;
  spec.kind = SynthKind::sine_trend;
  spec.T = T;
  spec.D = D;
  spec.noise = 0.2;
  spec.seed = seed;
  return synth_generate(spec);
}

}  // namespace

TEST_CASE("load_csv parses a small file") {
  TempCsv f("toy.csv",
            "2021-01-01 00:00:00,1.0,10\n"
            "2021-01-01 01:00:00,2.0,20\n"
            "2021-01-01 02:00:00,3.0,30\n");
  const SeriesFrame frame = load_csv(f.path);
  CHECK(frame.length() == 3);
  CHECK(frame.dims() == 2);
  CHECK(frame.values(2, 1) == 30.0);
  CHECK(frame.feature_names[0] == "f0");
}

TEST_CASE("load_csv rejects out-of-order rows naming the line") {
  TempCsv f("shuffled.csv",
            "2021-01-01 00:00:00,1.0\n"
            "2021-01-01 02:00:00,2.0\n"
            "2021-01-01 01:00:00,3.0\n");
  CHECK_THROWS_WITH_AS(load_csv(f.path),
                       doctest::Contains("shuffled.csv:3"), DataError);
}

TEST_CASE("load_csv accepts an ETT-style header") {
  TempCsv f("ett.csv",
            "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n"
            "2016-07-01 00:00:00,5.8,2.0,1.6,0.4,4.3,1.2,30.5\n"
            "2016-07-01 01:00:00,5.7,2.1,1.6,0.4,4.1,1.2,27.8\n");
  const SeriesFrame frame = load_csv(f.path);
  CHECK(frame.dims() == 7);
  CHECK(frame.feature_names[0] == "HUFL");
  CHECK(frame.feature_names[6] == "OT");
}

TEST_CASE("load_csv error paths") {
  CHECK_THROWS_AS(load_csv("no_such_file.csv"), DataError);
  TempCsv bad("badrow.csv",
              "2021-01-01,1.0\n"
              "not-a-date,2.0\n");
  CHECK_THROWS_WITH_AS(load_csv(bad.path), doctest::Contains("badrow.csv:2"),
                       DataError);
  TempCsv gap("gap.csv",
              "1000,1.0\n"
              "2000,\n"
              "3000,3.0\n");
  CHECK_THROWS_AS(load_csv(gap.path), DataError);
  LoadOptions ff;
  ff.forward_fill = true;
  const SeriesFrame filled = load_csv(gap.path, ff);
  CHECK(filled.values(1, 0) == 1.0);
}

TEST_CASE("epoch timestamps are accepted") {
  TempCsv f("epoch.csv", "100,1\n200,2\n300,3\n");
  const SeriesFrame frame = load_csv(f.path);
  CHECK(frame.time_index == std::vector<std::int64_t>{100, 200, 300});
}

TEST_CASE("chronological split boundaries") {
  const SeriesFrame frame = toy_frame(10, 1);
  SUBCASE("6:2:2") {
    const Splits s = chronological_split(frame, {0.6, 0.2, 0.2});
    CHECK(s.train.length() == 6);
    CHECK(s.val.length() == 2);
    CHECK(s.test.length() == 2);
  }
  SUBCASE("7:1:2") {
    const Splits s = chronological_split(frame, {0.7, 0.1, 0.2});
    CHECK(s.train.length() == 7);
    CHECK(s.val.length() == 1);
    CHECK(s.test.length() == 2);
  }
  SUBCASE("degenerate ratios fail") {
    CHECK_THROWS_AS(chronological_split(frame, {1.0, 0.0, 0.0}), DataError);
  }
  SUBCASE("ratios must sum to one") {
    CHECK_THROWS_AS(chronological_split(frame, {0.5, 0.1, 0.2}), ConfigError);
  }
}

TEST_CASE("split segments tile the frame") {
  const SeriesFrame frame = toy_frame(103, 2);
  const Splits s = chronological_split(frame, {0.61, 0.2, 0.19});
  CHECK(s.train.length() + s.val.length() + s.test.length() == 103);
  CHECK(s.train.time_index.back() < s.val.time_index.front());
  CHECK(s.val.time_index.back() < s.test.time_index.front());
  CHECK(max_abs_diff(slice_rows(frame.values, 0, s.train.length()),
                     s.train.values) == 0.0);
}

TEST_CASE("standardization uses train statistics only") {
  SeriesFrame train = toy_frame(200, 2, 5);
  SeriesFrame test = toy_frame(50, 2, 6);
  const Tensor test_before = test.values;
  const Scaler scaler = standardize(train, {&test});

  // train is now ~zero-mean unit-variance
  for (Index c = 0; c < 2; ++c) {
    CHECK(std::abs(train.values.mat().col(c).mean()) < 1e-9);
  }
  // altering the test slice must not change the scaler
  SeriesFrame train2 = toy_frame(200, 2, 5);
  SeriesFrame test2 = toy_frame(50, 2, 999);
  const Scaler scaler2 = standardize(train2, {&test2});
  CHECK((scaler.mu == scaler2.mu).all());
  CHECK((scaler.sigma == scaler2.sigma).all());
  // altering the train slice must
  SeriesFrame train3 = toy_frame(200, 2, 77);
  SeriesFrame test3 = toy_frame(50, 2, 6);
  const Scaler scaler3 = standardize(train3, {&test3});
  CHECK(!(scaler.mu == scaler3.mu).all());

  // already standardized input is a fixed point
  SeriesFrame again = train;
  const Scaler s4 = standardize(again, {});
  CHECK(max_abs_diff(again.values, train.values) < 1e-9);

  // round trip back to original units
  CHECK(max_abs_diff(scaler.inverse(test.values), test_before) < 1e-10);
}

TEST_CASE("constant features are floored, not NaN") {
  SeriesFrame frame = toy_frame(50, 1);
  frame.values = Tensor::full({50, 1}, 4.2);
  const Scaler s = fit_scaler(frame);
  const Tensor scaled = s.transform(frame.values);
  CHECK(scaled.all_finite());
  CHECK((scaled.flat() == 0.0).all());
}

TEST_CASE("window counting") {
  CHECK(window_count(100, 96, 4) == 1);
  CHECK(window_count(200, 96, 24) == 81);
  CHECK(window_count(120, 96, 24) == 1);
  CHECK_THROWS_AS(window_count(119, 96, 24), DataError);

  std::mt19937_64 gen(8);
  for (int rep = 0; rep < 50; ++rep) {
    const Index I = 1 + static_cast<Index>(gen() % 20);
    const Index O = 1 + static_cast<Index>(gen() % 10);
    const Index T = I + O + static_cast<Index>(gen() % 60);
    const Index stride = 1 + static_cast<Index>(gen() % 5);
    // explicit enumeration
    Index n = 0;
    for (Index t = 0; t + I + O <= T; t += stride) ++n;
    CHECK(window_count(T, I, O, stride) == n);
  }
}

TEST_CASE("windows are chronology-preserving x/y pairs") {
  const SeriesFrame frame = toy_frame(40, 2);
  const auto ws = windows(frame, 10, 5, 1);
  REQUIRE(ws.size() == 26);
  for (std::size_t i = 0; i < ws.size(); ++i) {
    CHECK(ws[i].origin == static_cast<Index>(i));
    CHECK(max_abs_diff(ws[i].x, slice_rows(frame.values, ws[i].origin,
                                           ws[i].origin + 10)) == 0.0);
    CHECK(max_abs_diff(ws[i].y, slice_rows(frame.values, ws[i].origin + 10,
                                           ws[i].origin + 15)) == 0.0);
  }
}

TEST_CASE("synthetic series are deterministic in the seed") {
  SynthSpec spec;
  spec.kind = SynthKind::random_walk;
  spec.T = 64;
  spec.seed = 42;
  const SeriesFrame a = synth_generate(spec);
  const SeriesFrame b = synth_generate(spec);
  CHECK(max_abs_diff(a.values, b.values) == 0.0);
  spec.seed = 43;
  const SeriesFrame c = synth_generate(spec);
  CHECK(max_abs_diff(a.values, c.values) > 0.0);
}

TEST_CASE("noise-free sine_trend has an exactly periodic residual") {
  SynthSpec spec;
  spec.T = 96;
  spec.noise = 0.0;
  const SeriesFrame frame = synth_generate(spec);
  for (Index t = 0; t + 24 < 96; ++t) {
    const double detrended_a = frame.values(t, 0) - 5e-4 * t;
    const double detrended_b = frame.values(t + 24, 0) - 5e-4 * (t + 24);
    CHECK(detrended_a == doctest::Approx(detrended_b).epsilon(1e-12));
  }
}

TEST_CASE("multi_period correlation peaks at both periods") {
  SynthSpec spec;
  spec.kind = SynthKind::multi_period;
  spec.T = 1680;  // ten weekly cycles
  spec.noise = 0.01;
  spec.seed = 9;
  const SeriesFrame frame = synth_generate(spec);
  const Tensor x = frame.values;
  std::vector<Index> all;
  for (Index i = 0; i < spec.T; ++i) all.push_back(i);
  const Tensor R = lag_correlation(x, x, all);
  CHECK(R(24) > R(23));
  CHECK(R(24) > R(25));
  CHECK(R(168) > R(167));
  CHECK(R(168) > R(169));
  CHECK(R(168) > R(24));  // both components align at the weekly lag
}
