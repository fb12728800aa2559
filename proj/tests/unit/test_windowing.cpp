#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "support/synthetic.hpp"
#include "vmdnet/error.hpp"
#include "vmdnet/windowing.hpp"

using namespace vmdnet;
using namespace vmdnet::testing;
using windowing::WindowSpec;

namespace {

Series ramp(std::size_t n) {
  Series s;
  for (std::size_t i = 0; i < n; ++i) s.values.push_back(static_cast<double>(i + 1));
  return s;
}

Series from(std::vector<double> v) {
  Series s;
  s.values = std::move(v);
  return s;
}

vmd::VmdConfig vmd_cfg(int k, double alpha) {
  vmd::VmdConfig c;
  c.num_modes = k;
  c.alpha = alpha;
  return c;
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("make_windows endpoints and contents") {
  const auto ds = windowing::make_windows(ramp(10), {4, 2, 1});
  REQUIRE(ds.size() == 5);
  CHECK(ds.endpoints == std::vector<std::size_t>{4, 5, 6, 7, 8});
  // ramp value at 1-based index i is i.
  for (std::size_t b = 0; b < ds.size(); ++b) {
    const auto t = static_cast<double>(ds.endpoints[b]);
    CHECK(ds.input(b).front() == t - 3);
    CHECK(ds.input(b).back() == t);
    CHECK(ds.target(b)[0] == t + 1);
    CHECK(ds.target(b)[1] == t + 2);
  }
}

TEST_CASE("make_windows boundary and Electricity Demand sized counts") {
  CHECK(windowing::make_windows(ramp(14), {10, 4, 1}).size() == 1);
  CHECK(windowing::window_count(30216, {336, 96, 1}) == 29785);
  CHECK_THROWS_AS(windowing::make_windows(ramp(13), {10, 4, 1}), Error);
}

TEST_CASE("window count matches naive enumeration") {
  Rng rng(42);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t p = 1 + rng() % 12;
    const std::size_t f = 1 + rng() % 6;
    const std::size_t s = 1 + rng() % 5;
    const std::size_t t = p + f + rng() % 40;
    std::size_t naive = 0;
    for (std::size_t end = p; end + f <= t; end += s) ++naive;
    CHECK(windowing::window_count(t, {p, f, s}) == naive);
    const auto ds = windowing::make_windows(ramp(t), {p, f, s});
    CHECK(ds.size() == naive);
    for (std::size_t b = 0; b < ds.size(); ++b) CHECK(ds.endpoints[b] == p + b * s);
  }
}

TEST_CASE("calendar features") {
  // 2021-01-04 00:00 UTC was a Monday.
  const auto monday = windowing::calendar_features(1609718400);
  CHECK(monday[0] == doctest::Approx(0.0));
  CHECK(monday[1] == doctest::Approx(1.0));
  CHECK(monday[2] == doctest::Approx(0.0));
  CHECK(monday[3] == doctest::Approx(1.0));
  const auto six_am = windowing::calendar_features(1609718400 + 6 * 3600);
  CHECK(six_am[0] == doctest::Approx(1.0));
}

TEST_CASE("split_and_normalize") {
  SUBCASE("lengths") {
    const auto s = windowing::split_and_normalize(from(gaussian_noise(1000, 1, 1)), {0.7, 0.1, 0.2}, 10);
    CHECK(s.train.size() == 700);
    CHECK(s.val.size() == 100);
    CHECK(s.test.size() == 200);
  }
  SUBCASE("statistics come from the training part only") {
    auto v = gaussian_noise(1000, 1, 2);
    for (std::size_t i = 700; i < 1000; ++i) v[i] += 5.0;
    const auto s = windowing::split_and_normalize(from(v), {0.7, 0.1, 0.2}, 10);
    double m_train = 0, m_val = 0;
    for (double x : s.train.values) m_train += x;
    for (double x : s.val.values) m_val += x;
    CHECK(m_train / 700 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(m_val / 100 > 3.0);
  }
  SUBCASE("constant series") {
    try {
      windowing::split_and_normalize(from(std::vector<double>(100, 4.0)), {0.7, 0.1, 0.2}, 5);
      FAIL("expected NonFiniteNormalization");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteNormalization);
    }
  }
  SUBCASE("degenerate part") {
    try {
      windowing::split_and_normalize(from(gaussian_noise(100, 1, 1)), {0.7, 0.1, 0.2}, 11);
      FAIL("expected DegenerateSplit");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::DegenerateSplit);
    }
  }
  SUBCASE("bad fractions") {
    CHECK_THROWS_AS(windowing::split_and_normalize(from(gaussian_noise(100, 1, 1)), {0.7, 0.1, 0.1}, 1),
                    Error);
  }
}

TEST_CASE("decompose_windows") {
  SUBCASE("single window equals a direct decomposition") {
    const auto x = two_tone(128);
    const auto ds = windowing::make_windows(from(x), {120, 8, 1});
    REQUIRE(ds.size() == 1);
    const auto cfg = vmd_cfg(2, 2000);
    const auto dec = windowing::decompose_windows(ds, cfg);
    const auto direct = vmd::decompose(ds.input(0), cfg);
    CHECK(dec.batch == 1);
    CHECK(dec.modes == 2);
    CHECK(dec.lookback == 120);
    CHECK(dec.U == direct.modes);
    CHECK(dec.omega == direct.center_frequencies);
  }
  SUBCASE("output does not depend on the worker count") {
    const auto ds = windowing::make_windows(from(three_tone(900)), {96, 12, 7});
    const auto cfg = vmd_cfg(3, 1000);
    const auto one = windowing::decompose_windows(ds, cfg, 1);
    const auto four = windowing::decompose_windows(ds, cfg, 4);
    CHECK(one.U == four.U);
    CHECK(one.omega == four.omega);
  }
  SUBCASE("causality: samples after t_b never influence window b") {
    const auto base = three_tone(600, 3);
    const WindowSpec spec{64, 8, 5};
    const auto cfg = vmd_cfg(3, 1500);
    const auto ref = windowing::decompose_windows(windowing::make_windows(from(base), spec), cfg);
    Rng rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t b = rng() % ref.batch;
      const std::size_t t_b = ref.endpoints[b];
      auto mutated = base;
      const std::size_t idx = t_b + rng() % (mutated.size() - t_b);  // 0-based, > t_b in 1-based terms
      mutated[idx] += 10.0 * standard_normal(rng);
      const auto dec = windowing::decompose_windows(windowing::make_windows(from(mutated), spec), cfg);
      const auto a = ref.modes_of(b);
      const auto c = dec.modes_of(b);
      CHECK(std::equal(a.begin(), a.end(), c.begin()));
      CHECK(std::equal(ref.omega_of(b).begin(), ref.omega_of(b).end(), dec.omega_of(b).begin()));
    }
  }
  SUBCASE("two tones are recovered window by window") {
    const auto ds = windowing::make_windows(from(two_tone(3000)), {400, 10, 50});
    const auto dec = windowing::decompose_windows(ds, vmd_cfg(2, 2000));
    std::size_t good = 0;
    for (std::size_t b = 0; b < dec.batch; ++b) {
      const auto w = dec.omega_of(b);
      if (std::abs(w[0] - 0.01) <= 0.001 && std::abs(w[1] - 0.12) <= 0.012) ++good;
    }
    CHECK(static_cast<double>(good) >= 0.9 * static_cast<double>(dec.batch));
  }
  SUBCASE("stacked reconstruction with dual ascent") {
    const auto ds = windowing::make_windows(from(two_tone(2000)), {256, 16, 40});
    auto cfg = vmd_cfg(2, 2000);
    cfg.tau = 0.1;
    cfg.max_iterations = 3000;
    const auto dec = windowing::decompose_windows(ds, cfg);
    double mean_err = 0;
    for (double e : dec.reconstruction_error) mean_err += e;
    CHECK(mean_err / static_cast<double>(dec.batch) <= 0.02);
    for (std::size_t b = 1; b < dec.batch; ++b) {
      const auto w = dec.omega_of(b);
      CHECK(w[0] <= w[1]);
    }
  }
  SUBCASE("errors carry the window index") {
    auto x = two_tone(200);
    x[150] = NAN;
    const auto ds = windowing::make_windows(from(x), {40, 5, 10});
    try {
      windowing::decompose_windows(ds, vmd_cfg(2, 500), 3);
      FAIL("expected NonFiniteInput");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteInput);
      // Window b covers 0-based samples [10b, 10b + 40); b = 12 is the first to reach 150.
      CHECK(std::string(e.what()).find("window 12 ") != std::string::npos);
    }
  }
}

TEST_CASE("raw dataset is a single unmodified mode") {
  const auto ds = windowing::make_windows(from(two_tone(100)), {20, 5, 3});
  const auto raw = windowing::raw_dataset(ds);
  CHECK(raw.modes == 1);
  CHECK(raw.U == ds.inputs);
  for (double w : raw.omega) CHECK(w == 0.0);
}

TEST_CASE("decomposition cache") {
  const auto dir = temp_dir("vmdnet_cache_test");
  const auto ds = windowing::make_windows(from(three_tone(500)), {64, 8, 9});
  const auto cfg = vmd_cfg(3, 1200);
  const auto path = dir / windowing::cache_key(ds, cfg);

  windowing::DecomposedDataset cold;
  CHECK_FALSE(windowing::load_or_decompose(path, ds, cfg, 2, cold));
  CHECK(std::filesystem::exists(path));
  windowing::DecomposedDataset warm;
  CHECK(windowing::load_or_decompose(path, ds, cfg, 2, warm));
  CHECK(warm.U == cold.U);
  CHECK(warm.omega == cold.omega);
  CHECK(warm.targets == cold.targets);
  CHECK(warm.reconstruction_error.size() == cold.batch);

  SUBCASE("header layout") {
    std::ifstream in(path, std::ios::binary);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "VMDNCACH");
    CHECK(bytes[8] == 1);
    CHECK(bytes[16] == cold.batch);
    CHECK(bytes[24] == 3);
    CHECK(bytes[32] == 64);
    CHECK(bytes[40] == 8);
    CHECK(bytes.size() == 64 + 8 * (cold.batch * 3 * 64 + cold.batch * 3 + cold.batch * 8));
    double alpha = 0;
    std::memcpy(&alpha, bytes.data() + 48, 8);
    CHECK(alpha == 1200.0);
  }
  SUBCASE("corruption is detected") {
    {
      std::fstream io(path, std::ios::binary | std::ios::in | std::ios::out);
      io.seekp(100);
      io.put('\x7f');
    }
    windowing::DecomposedDataset out;
    try {
      windowing::read_cache(path, out);
      FAIL("expected CacheCorrupt");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::CacheCorrupt);
    }
    // and a damaged cache is rebuilt transparently
    CHECK_FALSE(windowing::load_or_decompose(path, ds, cfg, 1, out));
    CHECK(out.U == cold.U);
  }
  SUBCASE("different alpha uses a different key") {
    auto other = cfg;
    other.alpha = 1300;
    CHECK(windowing::cache_key(ds, other) != windowing::cache_key(ds, cfg));
  }
}
