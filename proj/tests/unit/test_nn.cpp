#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "doctest.h"
#include "vmdnet/error.hpp"
#include "vmdnet/nn/checkpoint.hpp"
#include "vmdnet/nn/gradcheck.hpp"
#include "vmdnet/nn/ops.hpp"
#include "vmdnet/nn/optim.hpp"

using namespace vmdnet;
using namespace vmdnet::nn;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = scale * standard_normal(rng);
  return t;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
}

// Runs the finite-difference check on a store whose loss projects an op's
// output onto fixed random weights.
double check_op(ParamStore& store, const std::function<Var(Tape&)>& op, Rng& rng) {
  Tensor weights;
  {
    Tape probe;
    weights = random_tensor(op(probe).shape(), rng);
  }
  const auto report = gradcheck(store, [&](Tape& t) { return weighted_sum(op(t), weights); });
  INFO("worst entry " << report.worst);
  CHECK(report.checked == store.scalar_count());
  return report.max_rel_error;
}

constexpr double kTol = 1e-4;
constexpr int kSeeds = 25;

}  // namespace

TEST_CASE("linear examples") {
  ParamStore s;
  s.add("x", Tensor({1, 1}, 2.0));
  s.add("w", Tensor({1, 1}, 3.0));
  s.add("b", Tensor({1}, 1.0));
  Tape t;
  const Var y = linear(t.param(s, "x"), t.param(s, "w"), t.param(s, "b"));
  CHECK(y.value().data[0] == 7.0);
  t.backward(y);
  CHECK(s.at("w").grad.data[0] == 2.0);
  CHECK(s.at("x").grad.data[0] == 3.0);
  CHECK(s.at("b").grad.data[0] == 1.0);

  Rng rng(1);
  Tensor eye({4, 4});
  for (int i = 0; i < 4; ++i) eye.data[i * 4 + i] = 1.0;
  Tape t2;
  const Tensor x = random_tensor({3, 2, 4}, rng);
  const Var out = linear(t2.constant(x), t2.constant(eye), t2.constant(Tensor({4})));
  CHECK(out.value().data == x.data);
  CHECK(out.shape() == Shape{3, 2, 4});

  Tape t3;
  CHECK_THROWS_AS(linear(t3.constant(Tensor({2, 3})), t3.constant(Tensor({4, 2}))), Error);
}

TEST_CASE("linear gradient matches finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(100 + seed);
    const std::size_t rows = pick(rng, 1, 3);
    ParamStore s;
    s.add("x", random_tensor({rows, 4}, rng));
    s.add("w", random_tensor({4, 5}, rng));
    s.add("b", random_tensor({5}, rng));
    CHECK(check_op(s, [&](Tape& t) { return linear(t.param(s, "x"), t.param(s, "w"), t.param(s, "b")); }, rng) <= kTol);
  }
}

TEST_CASE("causal conv examples") {
  Tape t;
  Rng rng(2);
  const Tensor x = random_tensor({2, 1, 9}, rng);
  const Var id = causal_conv1d(t.constant(x), t.constant(Tensor({1, 1, 1}, 1.0)), std::nullopt, 1);
  CHECK(id.value().data == x.data);

  Tensor impulse({1, 1, 12});
  impulse.data[5] = 1.0;
  const Var y = causal_conv1d(t.constant(impulse), t.constant(Tensor({1, 1, 2}, 1.0)), std::nullopt, 2);
  for (std::size_t i = 0; i < 12; ++i) {
    INFO("t = " << i);
    CHECK(y.value().data[i] == ((i == 5 || i == 7) ? 1.0 : 0.0));
  }

  CHECK_THROWS_AS(causal_conv1d(t.constant(Tensor({1, 2, 5})), t.constant(Tensor({1, 3, 2})), std::nullopt, 1), Error);
  CHECK_THROWS_AS(causal_conv1d(t.constant(Tensor({1, 1, 5})), t.constant(Tensor({1, 1, 2})), std::nullopt, 0), Error);
}

TEST_CASE("causal conv gradient matches finite differences") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(200 + seed);
    const std::size_t b = pick(rng, 1, 2), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    const std::size_t k = pick(rng, 1, 3), d = pick(rng, 1, 3), steps = pick(rng, 4, 10);
    ParamStore s;
    s.add("x", random_tensor({b, cin, steps}, rng));
    s.add("w", random_tensor({cout, cin, k}, rng));
    s.add("b", random_tensor({cout}, rng));
    INFO("seed " << seed << " k=" << k << " d=" << d << " T=" << steps);
    CHECK(check_op(s, [&](Tape& t) {
      return causal_conv1d(t.param(s, "x"), t.param(s, "w"), t.param(s, "b"), d);
    }, rng) <= kTol);
  }
}

TEST_CASE("causal conv Jacobian is lower triangular in time") {
  Rng rng(3);
  const std::size_t steps = 12;
  for (std::size_t d : {1, 2, 3}) {
    ParamStore s;
    s.add("x", random_tensor({2, 2, steps}, rng));
    const Tensor w = random_tensor({3, 2, 3}, rng);
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t t_out = 0; t_out < steps; ++t_out) {
          s.zero_grad();
          Tape t;
          const Var y = causal_conv1d(t.param(s, "x"), t.constant(w), std::nullopt, d);
          Tensor probe(y.shape());
          probe.data[(b * 3 + c) * steps + t_out] = 1.0;
          t.backward(weighted_sum(y, probe));
          const auto& g = s.at("x").grad.data;
          for (std::size_t bi = 0; bi < 2; ++bi)
            for (std::size_t ci = 0; ci < 2; ++ci)
              for (std::size_t ti = 0; ti < steps; ++ti) {
                const double v = g[(bi * 2 + ci) * steps + ti];
                if (ti > t_out || bi != b) CHECK(v == 0.0);
              }
        }
  }
}

TEST_CASE("gelu") {
  Tape t;
  CHECK(gelu(t.constant(Tensor({1}, 0.0))).value().data[0] == 0.0);
  const double big = gelu(t.constant(Tensor({1}, 10.0))).value().data[0];
  CHECK(big == doctest::Approx(10.0));
  // Tanh form stays within 1e-3 of the exact erf form.
  for (double x : {-3.0, -1.0, -0.3, 0.5, 1.7, 2.5}) {
    const double exact = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
    CHECK(gelu(t.constant(Tensor({1}, x))).value().data[0] == doctest::Approx(exact).epsilon(1e-3));
  }

  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(300 + seed);
    ParamStore s;
    s.add("x", random_tensor({100}, rng, 2.0));
    CHECK(check_op(s, [&](Tape& tp) { return gelu(tp.param(s, "x")); }, rng) <= kTol);
  }
}

TEST_CASE("mse loss") {
  Rng rng(4);
  ParamStore s;
  s.add("x", random_tensor({3, 4}, rng));
  Tape t;
  const Var x = t.param(s, "x");
  const Var l = mse_loss(x, t.constant(s.at("x").value));
  CHECK(l.value().data[0] == 0.0);
  t.backward(l);
  for (double g : s.at("x").grad.data) CHECK(g == 0.0);

  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng r(400 + seed);
    ParamStore ps;
    ps.add("p", random_tensor({2, 3}, r));
    ps.add("q", random_tensor({2, 3}, r));
    const auto rep = gradcheck(ps, [&](Tape& tp) { return mse_loss(tp.param(ps, "p"), tp.param(ps, "q")); });
    CHECK(rep.max_rel_error <= kTol);
  }
}

TEST_CASE("dropout") {
  Rng rng(5);
  Tape t;
  const Var x = t.constant(random_tensor({1000}, rng));
  const Var same = dropout(x, 0.3, rng, false);
  CHECK(same.id == x.id);
  CHECK_THROWS_AS(dropout(x, 1.0, rng, true), Error);

  ParamStore s;
  s.add("x", Tensor({4000}, 1.0));
  Tape t2;
  const Var y = dropout(t2.param(s, "x"), 0.25, rng, true);
  std::size_t kept = 0;
  for (double v : y.value().data) {
    CHECK((v == 0.0 || v == doctest::Approx(1.0 / 0.75)));
    kept += v != 0.0;
  }
  CHECK(static_cast<double>(kept) / 4000.0 == doctest::Approx(0.75).epsilon(0.05));
  const Tensor out = y.value();
  t2.backward(weighted_sum(y, Tensor({4000}, 1.0)));
  // Backward applies the same mask.
  for (std::size_t i = 0; i < 4000; ++i) CHECK(s.at("x").grad.data[i] == out.data[i]);

  for (int seed = 0; seed < kSeeds; ++seed) {
    ParamStore ps;
    Rng r(500 + seed);
    ps.add("x", random_tensor({3, 7}, r));
    const Tensor w = random_tensor({3, 7}, r);
    const auto rep = gradcheck(ps, [&](Tape& tp) {
      Rng mask_rng(seed);
      return weighted_sum(dropout(tp.param(ps, "x"), 0.4, mask_rng, true), w);
    });
    CHECK(rep.max_rel_error <= kTol);
  }
}

TEST_CASE("broadcast adds, slicing, concat, mean, embedding gradients") {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(600 + seed);
    const std::size_t b = pick(rng, 1, 3), c = pick(rng, 1, 3), steps = pick(rng, 2, 5);
    ParamStore s;
    s.add("x", random_tensor({b, c, steps}, rng));
    s.add("y", random_tensor({b, c, steps}, rng));
    s.add("shared", random_tensor({c, steps}, rng));
    s.add("per_row", random_tensor({b, c}, rng));
    s.add("table", random_tensor({5, c}, rng));
    const std::vector<std::size_t> idx{4, 0, 4, 2};
    CHECK(check_op(s, [&](Tape& t) {
      const Var x = t.param(s, "x");
      const Var sum = add(add_time_broadcast(add_batch_broadcast(x, t.param(s, "shared")), t.param(s, "per_row")),
                          t.param(s, "y"));
      const Var pooled = mean_of({sum, x, t.param(s, "y")});
      const Var last = last_step(gelu(pooled));
      // The lookup result [4, c] serves as a weight matrix so its gradient is exercised.
      const Var e = embedding(t.param(s, "table"), idx);
      return concat_columns({last_step(gelu(pooled)), linear(t.constant(Tensor({b, 4}, 0.25)), e)});
    }, rng) <= kTol);
  }

  Tape t;
  CHECK_THROWS_AS(add(t.constant(Tensor({2, 3})), t.constant(Tensor({3, 2}))), Error);
  CHECK_THROWS_AS(add_batch_broadcast(t.constant(Tensor({2, 3, 4})), t.constant(Tensor({2, 3}))), Error);
  CHECK_THROWS_AS(add_time_broadcast(t.constant(Tensor({2, 3, 4})), t.constant(Tensor({3, 4}))), Error);
  CHECK_THROWS_AS(concat_columns({t.constant(Tensor({2, 3})), t.constant(Tensor({3, 3}))}), Error);
  const std::vector<std::size_t> bad{7};
  CHECK_THROWS_AS(embedding(t.constant(Tensor({5, 2})), bad), Error);
}

TEST_CASE("non-finite values fail fast") {
  Tape t;
  Tensor x({2}, 1.0);
  x.data[1] = NAN;
  try {
    linear(t.constant(Tensor({1, 2}, 1.0)), t.constant(Tensor({2, 1}, 1.0)), t.constant(Tensor({1}, NAN)));
    FAIL("expected NonFiniteValue");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteValue);
  }
  CHECK_THROWS_AS(gelu(t.constant(x)), Error);
}

TEST_CASE("adam") {
  ParamStore s;
  s.add("w", Tensor({3}, 0.7));
  adam_step(s, AdamConfig{});
  for (double v : s.at("w").value.data) CHECK(v == 0.7);

  ParamStore one;
  one.add("w", Tensor({1}, 0.0));
  one.at("w").grad.data[0] = 1.0;
  AdamConfig cfg;
  cfg.lr = 0.01;
  adam_step(one, cfg);
  CHECK(one.at("w").value.data[0] == doctest::Approx(-0.01).epsilon(1e-6));

  // f(w) = w^2 with lr 0.1, against the recursion written out by hand.
  ParamStore q;
  q.add("w", Tensor({1}, 1.0));
  cfg.lr = 0.1;
  double w = 1.0, m = 0.0, v = 0.0;
  for (int step = 1; step <= 10; ++step) {
    q.at("w").grad.data[0] = 2.0 * q.at("w").value.data[0];
    adam_step(q, cfg);
    const double g = 2.0 * w;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    w -= 0.1 * (m / (1.0 - std::pow(0.9, step))) / (std::sqrt(v / (1.0 - std::pow(0.999, step))) + 1e-8);
  }
  CHECK(q.at("w").value.data[0] == doctest::Approx(w).epsilon(1e-12));
  CHECK(std::abs(q.at("w").value.data[0]) < 1.0);
}

TEST_CASE("training trajectory is bit-identical for a fixed seed") {
  auto run = [] {
    Rng init(9);
    ParamStore s;
    s.add("conv", uniform_tensor({3, 2, 3}, 0.5, init));
    s.add("bias", uniform_tensor({3}, 0.5, init));
    s.add("head", uniform_tensor({3, 1}, 0.5, init));
    const Tensor x = random_tensor({4, 2, 10}, init);
    const Tensor y = random_tensor({4, 1}, init);
    Rng drop(11);
    std::vector<double> losses;
    for (int step = 0; step < 20; ++step) {
      s.zero_grad();
      Tape t;
      const Var h = dropout(gelu(causal_conv1d(t.constant(x), t.param(s, "conv"), t.param(s, "bias"), 2)), 0.2, drop, true);
      const Var l = mse_loss(linear(last_step(h), t.param(s, "head")), t.constant(y));
      losses.push_back(l.value().data[0]);
      t.backward(l);
      adam_step(s, AdamConfig{});
    }
    return losses;
  };
  const auto a = run();
  const auto b = run();
  CHECK(a == b);
  CHECK(a.back() < a.front());
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto path = (std::filesystem::temp_directory_path() / "vmdnet_test.ckpt").string();
  Rng rng(7);
  ParamStore s;
  s.add("a.w", random_tensor({2, 3}, rng));
  s.add("b", random_tensor({4}, rng));
  s.add("c.k", random_tensor({2, 1, 3}, rng));
  save_checkpoint(path, s, R"({"d_model":8})");
  const auto ck = load_checkpoint(path);
  CHECK(ck.metadata == R"({"d_model":8})");
  CHECK(ck.params.names() == s.names());
  for (const auto& name : s.names()) {
    CHECK(ck.params.at(name).value.shape == s.at(name).value.shape);
    CHECK(ck.params.at(name).value.data == s.at(name).value.data);
  }

  ParamStore target;
  target.add("a.w", Tensor({2, 3}));
  target.add("b", Tensor({4}));
  target.add("c.k", Tensor({2, 1, 3}));
  assign_parameters(target, ck.params);
  CHECK(target.at("c.k").value.data == s.at("c.k").value.data);
  ParamStore wrong;
  wrong.add("a.w", Tensor({3, 2}));
  CHECK_THROWS_AS(assign_parameters(wrong, ck.params), Error);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(40);
    f.put('\x5a');
  }
  try {
    load_checkpoint(path);
    FAIL("expected CacheCorrupt");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::CacheCorrupt);
  }
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
}
