#include "vmdnet/selfcheck.hpp"

#include <functional>
#include <numeric>

#include "vmdnet/forecaster.hpp"
#include "vmdnet/nn/gradcheck.hpp"
#include "vmdnet/nn/ops.hpp"

namespace vmdnet::selfcheck {

namespace {

using nn::ParamStore;
using nn::Tape;
using nn::Tensor;
using nn::Var;

constexpr double kOpTolerance = 1e-4;
constexpr double kModelTolerance = 1e-3;

Tensor random_tensor(nn::Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = standard_normal(rng);
  return t;
}

// Projects the op output onto fixed random weights so every output entry
// contributes to the scalar loss.
GradcheckRow check_op(const std::string& name, ParamStore& store, const std::function<Var(Tape&)>& op, Rng& rng) {
  Tensor weights;
  {
    Tape probe;
    weights = random_tensor(op(probe).shape(), rng);
  }
  const auto r = nn::gradcheck(store, [&](Tape& t) { return nn::weighted_sum(op(t), weights); });
  return {name, r.checked, r.max_rel_error, kOpTolerance, r.worst};
}

GradcheckRow check_model(Rng& rng) {
  forecast::ModelConfig c;
  c.num_modes = 2;
  c.lookback = 16;
  c.horizon = 4;
  c.d_model = 8;
  c.tcn_channels = {8};
  c.dropout = 0.0;
  c.rng_seed = rng();
  forecast::VmdNetModel model(c);

  constexpr std::size_t B = 3, K = 2, P = 16, F = 4;
  windowing::DecomposedDataset ds;
  ds.batch = B;
  ds.modes = K;
  ds.lookback = P;
  ds.horizon = F;
  for (std::size_t i = 0; i < B * K * P; ++i) ds.U.push_back(standard_normal(rng));
  for (std::size_t b = 0; b < B; ++b) {
    const double lo = 0.25 * uniform01(rng);
    ds.omega.push_back(lo);
    ds.omega.push_back(lo + 0.25 * uniform01(rng));
    ds.endpoints.push_back(P + b);
  }
  for (std::size_t i = 0; i < B * windowing::kTimeFeatures * P; ++i) ds.time_features.push_back(2.0 * uniform01(rng) - 1.0);
  for (std::size_t i = 0; i < B * F; ++i) ds.targets.push_back(standard_normal(rng));
  std::vector<std::size_t> idx(B);
  std::iota(idx.begin(), idx.end(), 0);
  const auto batch = forecast::make_batch(ds, idx);

  const auto r = nn::gradcheck(
      model.params(),
      [&](Tape& t) {
        Rng unused(0);
        const Var y = model.forward(t, batch, false, unused);
        return nn::mse_loss(y, t.constant(Tensor(y.shape(), batch.targets)));
      },
      1e-5, 50, rng());
  return {"model (K=2, P=16, F=4, d_model=8)", r.checked, r.max_rel_error, kModelTolerance, r.worst};
}

}  // namespace

std::vector<GradcheckRow> gradient_suite(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradcheckRow> rows;
  auto store = [&](std::initializer_list<std::pair<const char*, nn::Shape>> params) {
    ParamStore s;
    for (const auto& [name, shape] : params) s.add(name, random_tensor(shape, rng));
    return s;
  };

  {
    auto s = store({{"x", {2, 3, 4}}, {"w", {4, 5}}, {"b", {5}}});
    rows.push_back(check_op("linear", s, [&](Tape& t) { return nn::linear(t.param(s, "x"), t.param(s, "w"), t.param(s, "b")); }, rng));
  }
  {
    auto s = store({{"x", {2, 3, 9}}, {"w", {4, 3, 3}}, {"b", {4}}});
    rows.push_back(check_op(
        "causal_conv1d", s, [&](Tape& t) { return nn::causal_conv1d(t.param(s, "x"), t.param(s, "w"), t.param(s, "b"), 2); },
        rng));
  }
  {
    auto s = store({{"x", {3, 7}}});
    rows.push_back(check_op("gelu", s, [&](Tape& t) { return nn::gelu(t.param(s, "x")); }, rng));
  }
  {
    auto s = store({{"x", {3, 7}}});
    rows.push_back(check_op(
        "dropout", s,
        [&](Tape& t) {
          Rng mask(seed);
          return nn::dropout(t.param(s, "x"), 0.4, mask, true);
        },
        rng));
  }
  {
    auto s = store({{"p", {2, 3}}, {"q", {2, 3}}});
    const auto r = nn::gradcheck(s, [&](Tape& t) { return nn::mse_loss(t.param(s, "p"), t.param(s, "q")); });
    rows.push_back({"mse_loss", r.checked, r.max_rel_error, kOpTolerance, r.worst});
  }
  {
    auto s = store({{"a", {2, 3}}, {"b", {2, 3}}});
    rows.push_back(check_op("add", s, [&](Tape& t) { return nn::add(t.param(s, "a"), t.param(s, "b")); }, rng));
  }
  {
    auto s = store({{"x", {2, 3, 4}}, {"y", {3, 4}}});
    rows.push_back(check_op(
        "add_batch_broadcast", s, [&](Tape& t) { return nn::add_batch_broadcast(t.param(s, "x"), t.param(s, "y")); }, rng));
  }
  {
    auto s = store({{"x", {2, 3, 4}}, {"y", {2, 3}}});
    rows.push_back(check_op(
        "add_time_broadcast", s, [&](Tape& t) { return nn::add_time_broadcast(t.param(s, "x"), t.param(s, "y")); }, rng));
  }
  {
    auto s = store({{"x", {2, 3, 5}}});
    rows.push_back(check_op("last_step", s, [&](Tape& t) { return nn::last_step(t.param(s, "x")); }, rng));
  }
  {
    auto s = store({{"a", {2, 3}}, {"b", {2, 1}}, {"c", {2, 4}}});
    rows.push_back(check_op(
        "concat_columns", s,
        [&](Tape& t) { return nn::concat_columns({t.param(s, "a"), t.param(s, "b"), t.param(s, "c")}); }, rng));
  }
  {
    auto s = store({{"a", {2, 3}}, {"b", {2, 3}}, {"c", {2, 3}}});
    rows.push_back(check_op(
        "mean_of", s, [&](Tape& t) { return nn::mean_of({t.param(s, "a"), t.param(s, "b"), t.param(s, "c")}); }, rng));
  }
  {
    auto s = store({{"table", {6, 4}}});
    const std::vector<std::size_t> idx{4, 0, 4, 2, 5};
    rows.push_back(check_op("embedding", s, [&](Tape& t) { return nn::embedding(t.param(s, "table"), idx); }, rng));
  }
  rows.push_back(check_model(rng));
  return rows;
}

}  // namespace vmdnet::selfcheck
