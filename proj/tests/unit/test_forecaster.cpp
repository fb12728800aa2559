#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "vmdnet/error.hpp"
#include "vmdnet/forecaster.hpp"
#include "vmdnet/nn/checkpoint.hpp"
#include "vmdnet/nn/gradcheck.hpp"

using namespace vmdnet;
using namespace vmdnet::forecast;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

ModelConfig tiny_config(int K = 2, int P = 16, int F = 4, int d = 8) {
  ModelConfig c;
  c.num_modes = K;
  c.lookback = P;
  c.horizon = F;
  c.d_model = d;
  c.tcn_channels = {8};
  c.kernel_size = 3;
  c.dropout = 0.0;
  c.rng_seed = 11;
  return c;
}

DecomposedDataset random_dataset(std::size_t B, std::size_t K, std::size_t P, std::size_t F, Rng& rng) {
  DecomposedDataset ds;
  ds.batch = B;
  ds.modes = K;
  ds.lookback = P;
  ds.horizon = F;
  for (std::size_t i = 0; i < B * K * P; ++i) ds.U.push_back(standard_normal(rng));
  for (std::size_t b = 0; b < B; ++b) {
    std::vector<double> w(K);
    for (double& v : w) v = 0.5 * uniform01(rng);
    std::sort(w.begin(), w.end());
    ds.omega.insert(ds.omega.end(), w.begin(), w.end());
    ds.endpoints.push_back(P + b);
  }
  for (std::size_t i = 0; i < B * windowing::kTimeFeatures * P; ++i) ds.time_features.push_back(2.0 * uniform01(rng) - 1.0);
  for (std::size_t i = 0; i < B * F; ++i) ds.targets.push_back(standard_normal(rng));
  return ds;
}

Batch whole_batch(const DecomposedDataset& ds) {
  std::vector<std::size_t> idx(ds.batch);
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(ds, idx);
}

std::vector<double> run(VmdNetModel& m, const Batch& b) {
  Tape tape;
  Rng unused(0);
  const auto& y = m.forward(tape, b, false, unused).value().data;
  return {y.begin(), y.end()};
}

template <class V>
bool any_nonzero(const V& v) {
  return std::any_of(v.begin(), v.end(), [](double x) { return x != 0.0; });
}

template <class V>
bool all_zero(const V& v) {
  return !any_nonzero(v);
}

bool has_name(const nn::ParamStore& s, const std::string& fragment) {
  for (const auto& n : s.names())
    if (n.find(fragment) != std::string::npos) return true;
  return false;
}

// Output = learnable bias per horizon step.
class BiasOnly final : public Trainable {
 public:
  BiasOnly(std::size_t horizon, double init) : horizon_(horizon) {
    store_.add("b", Tensor({horizon}, init));
  }
  nn::ParamStore& params() override { return store_; }
  Var forward(Tape& tape, const Batch& batch, bool, Rng&) override {
    return nn::add_batch_broadcast(tape.constant(Tensor({batch.size, horizon_})), tape.param(store_, "b"));
  }
  std::size_t horizon() const override { return horizon_; }

 private:
  std::size_t horizon_;
  nn::ParamStore store_;
};

}  // namespace

TEST_CASE("block count and receptive field") {
  ModelConfig c;
  c.lookback = 336;
  c.kernel_size = 3;
  CHECK(c.blocks() == 7);
  CHECK(c.receptive_field() == 509);
  c.num_blocks = 3;
  CHECK(c.receptive_field() == 29);

  c.num_blocks = 0;
  c.tcn_channels = {8};
  for (int P = 2; P <= 600; ++P) {
    c.lookback = P;
    CHECK(c.receptive_field() >= P);
    if (c.blocks() > 1) CHECK(1 + 4 * ((1 << (c.blocks() - 1)) - 1) < P);
  }
  c.tcn_channels = {8, 8, 8, 8};
  c.lookback = 4;
  CHECK(c.blocks() == 4);
  CHECK(c.channels_of(9) == 8);
}

TEST_CASE("model config validation and json round trip") {
  ModelConfig c = tiny_config();
  c.d_model = 4;
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.tcn_channels.clear();
  CHECK_THROWS_AS(c.validate(), Error);
  c = tiny_config();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), Error);

  c = tiny_config(3, 20, 5, 16);
  c.tcn_channels = {8, 12};
  c.variant.use_freq_embed = false;
  c.rng_seed = 99;
  const ModelConfig r = ModelConfig::from_json(c.to_json());
  CHECK(r.to_json() == c.to_json());
  CHECK_THROWS_AS(ModelConfig::from_json("{\"d_model\": \"wide\"}"), Error);
}

TEST_CASE("embedding addends") {
  Rng rng(3);
  const DecomposedDataset ds = random_dataset(3, 3, 16, 4, rng);
  const Batch batch = whole_batch(ds);

  SUBCASE("only the positional table survives zeroed parameters") {
    VmdNetModel m(tiny_config(3));
    for (auto& [name, p] : m.params().entries()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
    const Tensor& pos = m.positional_table();
    for (std::size_t k = 0; k < 3; ++k) {
      Tape tape;
      const Tensor e = m.embed(tape, batch, k).value();
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t i = 0; i < pos.size(); ++i) CHECK(e.data[b * pos.size() + i] == pos.data[i]);
    }
  }

  SUBCASE("parts add up to the embedding") {
    VmdNetModel m(tiny_config(3));
    Tape tape;
    EmbedParts parts;
    const Tensor e = m.embed(tape, batch, 1, &parts).value();
    REQUIRE(parts.freq.has_value());
    const std::size_t d = 8, P = 16;
    for (std::size_t b = 0; b < 3; ++b)
      for (std::size_t c = 0; c < d; ++c) {
        // Constant over time within a sample.
        const double f = parts.freq->value().data[b * d + c];
        for (std::size_t t = 0; t < P; ++t) {
          const std::size_t i = (b * d + c) * P + t;
          const double sum = parts.token.value().data[i] + parts.time.value().data[i] + parts.pos.value().data[c * P + t] + f;
          CHECK(e.data[i] == doctest::Approx(sum).epsilon(1e-14));
        }
      }
  }

  SUBCASE("frequencies are ignored without the frequency embedding") {
    ModelConfig c = tiny_config(3);
    c.variant.use_freq_embed = false;
    VmdNetModel m(c);
    Batch other = batch;
    for (double& w : other.omega) w = 0.5 - w;
    for (std::size_t k = 0; k < 3; ++k) {
      Tape tape;
      const auto a = m.embed(tape, batch, k).value().data;
      CHECK(a == m.embed(tape, other, k).value().data);
    }
    CHECK_FALSE(has_name(m.params(), ".freq."));
  }

  SUBCASE("perturbing one frequency changes only that mode") {
    VmdNetModel m(tiny_config(3));
    Batch other = batch;
    other.omega[1 * 3 + 2] += 0.05;
    for (std::size_t k = 0; k < 3; ++k) {
      Tape tape;
      const auto a = m.embed(tape, batch, k).value().data;
      const auto b = m.embed(tape, other, k).value().data;
      const std::size_t per_sample = 8 * 16;
      for (std::size_t s = 0; s < 3; ++s) {
        const bool same = std::equal(a.begin() + s * per_sample, a.begin() + (s + 1) * per_sample, b.begin() + s * per_sample);
        CHECK(same == !(k == 2 && s == 1));
      }
    }
  }
}

TEST_CASE("zero kernels with an identity residual pass the embedding to the head") {
  ModelConfig c = tiny_config(2, 16, 8, 8);
  c.num_blocks = 1;
  c.tcn_channels = {8};
  VmdNetModel m(c);
  auto& store = m.params();
  for (const char* n : {"mode0.tcn.block0.conv1.w", "mode0.tcn.block0.conv1.b", "mode0.tcn.block0.conv2.w",
                        "mode0.tcn.block0.conv2.b", "mode0.head.b"}) {
    auto& v = store.at(n).value.data;
    std::fill(v.begin(), v.end(), 0.0);
  }
  CHECK_FALSE(store.contains("mode0.tcn.block0.down.w"));
  auto& head = store.at("mode0.head.w").value;
  std::fill(head.data.begin(), head.data.end(), 0.0);
  for (std::size_t i = 0; i < 8; ++i) head.data[i * 8 + i] = 1.0;

  Rng rng(5);
  const Batch batch = whole_batch(random_dataset(2, 2, 16, 8, rng));
  Tape tape;
  const Var e = m.embed(tape, batch, 0);
  const Tensor y = m.decode_branch(tape, e, 0, false, rng).value();
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t ch = 0; ch < 8; ++ch) CHECK(y.data[b * 8 + ch] == e.value().data[(b * 8 + ch) * 16 + 15]);
}

TEST_CASE("branch sensitivity ends at the receptive field") {
  ModelConfig c = tiny_config(1, 40, 4, 8);
  c.num_blocks = 3;
  REQUIRE(c.receptive_field() == 29);
  VmdNetModel m(c);
  nn::ParamStore input;
  Rng rng(8);
  Tensor e({1, 8, 40});
  for (double& v : e.data) v = standard_normal(rng);
  input.add("e", e);
  Tape tape;
  const Var y = m.decode_branch(tape, tape.param(input, "e"), 0, false, rng);
  tape.backward(nn::weighted_sum(y, Tensor({1, 4}, 1.0)));
  const auto& g = input.at("e").grad.data;
  for (std::size_t t = 0; t < 40; ++t) {
    bool nonzero = false;
    for (std::size_t ch = 0; ch < 8; ++ch) nonzero = nonzero || g[ch * 40 + t] != 0.0;
    CHECK_MESSAGE(nonzero == (t >= 40 - 29), "t = " << t);
  }
}

TEST_CASE("every parameter receives gradient") {
  Rng rng(9);
  for (int variant = 0; variant < 4; ++variant) {
    ModelConfig c = tiny_config(3);
    c.variant.use_vmd = variant != 1;
    c.variant.parallel_decoding = variant != 2;
    c.variant.use_freq_embed = variant != 3;
    VmdNetModel m(c);
    const DecomposedDataset ds = random_dataset(4, static_cast<std::size_t>(c.input_modes()), 16, 4, rng);
    const Batch batch = whole_batch(ds);
    m.params().zero_grad();
    Tape tape;
    const Var y = m.forward(tape, batch, false, rng);
    tape.backward(nn::mse_loss(y, tape.constant(Tensor(y.shape(), batch.targets))));
    for (const auto& [name, p] : m.params().entries()) CHECK_MESSAGE(any_nonzero(p.grad.data), "variant " << variant << " " << name);
  }
}

TEST_CASE("single mode") {
  VmdNetModel m(tiny_config(1));
  CHECK(m.params().at("fusion.fc1.w").value.shape == nn::Shape{4, 8});
  Rng rng(10);
  const Batch batch = whole_batch(random_dataset(5, 1, 16, 4, rng));
  Tape tape;
  const Var y = m.forward(tape, batch, false, rng);
  CHECK(y.shape() == nn::Shape{5, 4});
  CHECK(tape.size() > 0);
}

TEST_CASE("doubling the fusion output weights doubles the forecast") {
  VmdNetModel m(tiny_config(3));
  auto& b = m.params().at("fusion.fc2.b").value.data;
  std::fill(b.begin(), b.end(), 0.0);
  Rng rng(12);
  const Batch batch = whole_batch(random_dataset(4, 3, 16, 4, rng));
  const auto y1 = run(m, batch);
  for (double& w : m.params().at("fusion.fc2.w").value.data) w *= 2.0;
  const auto y2 = run(m, batch);
  for (std::size_t i = 0; i < y1.size(); ++i) CHECK(y2[i] == 2.0 * y1[i]);
}

TEST_CASE("a loss on one branch leaves every other branch untouched") {
  VmdNetModel m(tiny_config(3));
  Rng rng(13);
  const Batch batch = whole_batch(random_dataset(4, 3, 16, 4, rng));
  for (std::size_t k = 0; k < 3; ++k) {
    m.params().zero_grad();
    Tape tape;
    const auto outs = m.branch_outputs(tape, batch, false, rng);
    tape.backward(nn::weighted_sum(outs[k], Tensor({4, 4}, 1.0)));
    for (const auto& [name, p] : m.params().entries()) {
      const std::string own = "mode" + std::to_string(k) + ".";
      if (name.rfind("mode", 0) == 0 && name.rfind(own, 0) != 0) CHECK_MESSAGE(all_zero(p.grad.data), name);
      if (name.rfind("fusion.", 0) == 0) CHECK_MESSAGE(all_zero(p.grad.data), name);
      if (name.rfind(own, 0) == 0) CHECK_MESSAGE(any_nonzero(p.grad.data), name);
    }
  }
}

TEST_CASE("ablation variants expose only their own parameters") {
  SUBCASE("no decomposition") {
    ModelConfig c = tiny_config(4);
    c.variant.use_vmd = false;
    VmdNetModel m(c);
    CHECK(c.branches() == 1);
    CHECK(c.input_modes() == 1);
    CHECK_FALSE(has_name(m.params(), "mode"));
    CHECK_FALSE(has_name(m.params(), ".freq."));
    CHECK(m.params().contains("raw.token.w"));
    CHECK(m.params().contains("decoder.head.w"));
    CHECK(m.params().at("fusion.fc1.w").value.shape == nn::Shape{4, 8});
  }
  SUBCASE("mean-pooled decoding") {
    ModelConfig c = tiny_config(4);
    c.variant.parallel_decoding = false;
    VmdNetModel m(c);
    CHECK(c.branches() == 1);
    for (int k = 0; k < 4; ++k) {
      CHECK_FALSE(has_name(m.params(), "mode" + std::to_string(k) + ".tcn"));
      CHECK(m.params().contains("mode" + std::to_string(k) + ".token.w"));
      CHECK_FALSE(m.params().contains("mode" + std::to_string(k) + ".head.w"));
    }
    CHECK(m.params().contains("decoder.tcn.block0.conv1.w"));
  }
  SUBCASE("per-mode names are disjoint") {
    VmdNetModel m(tiny_config(3));
    std::size_t per_mode = 0;
    for (int k = 0; k < 3; ++k) {
      std::size_t n = 0;
      for (const auto& name : m.params().names())
        if (name.rfind("mode" + std::to_string(k) + ".", 0) == 0) ++n;
      if (k == 0) per_mode = n;
      CHECK(n == per_mode);
    }
    CHECK(per_mode > 0);
  }
}

TEST_CASE("shuffling mode order changes the forecast") {
  VmdNetModel m(tiny_config(3));
  Rng rng(14);
  const Batch batch = whole_batch(random_dataset(2, 3, 16, 4, rng));
  Batch swapped = batch;
  for (std::size_t b = 0; b < 2; ++b) {
    for (std::size_t t = 0; t < 16; ++t) std::swap(swapped.U[(b * 3 + 0) * 16 + t], swapped.U[(b * 3 + 2) * 16 + t]);
    std::swap(swapped.omega[b * 3 + 0], swapped.omega[b * 3 + 2]);
  }
  CHECK(run(m, batch) != run(m, swapped));
}

TEST_CASE("end-to-end gradient check on a tiny model") {
  VmdNetModel m(tiny_config(2, 16, 4, 8));
  Rng rng(15);
  const Batch batch = whole_batch(random_dataset(3, 2, 16, 4, rng));
  const auto report = nn::gradcheck(
      m.params(),
      [&](Tape& t) {
        Rng unused(0);
        const Var y = m.forward(t, batch, false, unused);
        return nn::mse_loss(y, t.constant(Tensor(y.shape(), batch.targets)));
      },
      1e-5, 50, 7);
  INFO("worst " << report.worst);
  CHECK(report.checked == 50);
  CHECK(report.max_rel_error <= 1e-3);
}

TEST_CASE("checkpointed parameters reproduce the forecast") {
  VmdNetModel a(tiny_config(2));
  ModelConfig other = tiny_config(2);
  other.rng_seed = 999;
  VmdNetModel b(other);
  Rng rng(16);
  const Batch batch = whole_batch(random_dataset(3, 2, 16, 4, rng));
  CHECK(run(a, batch) != run(b, batch));
  const auto path = std::filesystem::temp_directory_path() / "vmdnet_forecaster_ckpt.bin";
  nn::save_checkpoint(path.string(), a.params(), a.config().to_json());
  const auto ck = nn::load_checkpoint(path.string());
  nn::assign_parameters(b.params(), ck.params);
  CHECK(run(a, batch) == run(b, batch));
  CHECK(ModelConfig::from_json(ck.metadata).to_json() == a.config().to_json());
  std::filesystem::remove(path);
}

TEST_CASE("metrics fixtures") {
  const std::vector<double> y{1.0, -2.0, 0.5, 3.0};
  auto m = metrics(y, y, 2);
  CHECK(m.mse == 0.0);
  CHECK(m.mae == 0.0);
  CHECK(m.windows == 2);

  std::vector<double> pred{0.5, 0.5, 1.5, 1.5};
  const std::vector<double> ones(4, 1.0);
  m = metrics(pred, ones, 2);
  CHECK(m.mse == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(m.mae == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(m.mse_per_step == std::vector<double>{0.25, 0.25});

  Rng rng(17);
  std::vector<double> z(9600);
  for (double& v : z) v = standard_normal(rng);
  const double mean = std::accumulate(z.begin(), z.end(), 0.0) / z.size();
  double var = 0.0;
  for (double v : z) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / z.size());
  for (double& v : z) v = (v - mean) / sd;
  m = metrics(std::vector<double>(z.size(), 0.0), z, 96);
  CHECK(m.mse == doctest::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(metrics(pred, std::vector<double>(3, 0.0), 1), Error);
  CHECK_THROWS_AS(metrics(pred, ones, 3), Error);
}

TEST_CASE("bias-only model learns zero targets") {
  Rng rng(18);
  DecomposedDataset train_set = random_dataset(16, 1, 8, 3, rng);
  std::fill(train_set.targets.begin(), train_set.targets.end(), 0.0);
  const DecomposedDataset val_set = train_set;
  BiasOnly model(3, 0.5);
  TrainConfig cfg;
  cfg.batch_size = 4;
  cfg.lr = 0.05;
  cfg.max_epochs = 50;
  cfg.patience = 50;
  const auto h = train(model, train_set, val_set, cfg);
  CHECK(h.epochs.size() <= 50);
  CHECK(h.best_val_loss <= 1e-6);
  CHECK(evaluate(model, val_set).mse <= 1e-6);
}

TEST_CASE("eight samples are memorised") {
  Rng rng(19);
  const DecomposedDataset ds = random_dataset(8, 2, 16, 4, rng);
  VmdNetModel m(tiny_config(2, 16, 4, 8));
  TrainConfig cfg;
  cfg.batch_size = 8;
  cfg.lr = 1e-2;
  cfg.max_epochs = 500;
  cfg.patience = 500;
  const auto h = train(m, ds, ds, cfg);
  INFO("final train loss " << h.epochs.back().train_loss);
  CHECK(evaluate(m, ds).mse <= 1e-3);
}

TEST_CASE("early stopping and best-parameter restore") {
  Rng rng(20);
  DecomposedDataset train_set = random_dataset(8, 1, 8, 2, rng);
  std::fill(train_set.targets.begin(), train_set.targets.end(), 1.0);
  DecomposedDataset val_set = train_set;
  std::fill(val_set.targets.begin(), val_set.targets.end(), 0.0);
  for (int patience : {0, 2}) {
    // Every step moves the bias towards the training target and away from validation.
    BiasOnly model(2, 0.0);
    TrainConfig cfg;
    cfg.batch_size = 8;
    cfg.lr = 0.1;
    cfg.max_epochs = 20;
    cfg.patience = patience;
    const auto h = train(model, train_set, val_set, cfg);
    CHECK(h.stopped_early);
    CHECK(h.epochs.size() == static_cast<std::size_t>(patience + 2));
    CHECK(h.best_epoch == 1);
    CHECK(evaluate(model, val_set).mse == h.epochs[0].val_loss);
    CHECK(h.epochs[1].val_loss > h.epochs[0].val_loss);
  }
}

TEST_CASE("training is deterministic for a seed") {
  Rng rng(21);
  const DecomposedDataset tr = random_dataset(20, 2, 16, 4, rng);
  const DecomposedDataset va = random_dataset(6, 2, 16, 4, rng);
  auto fit = [&](std::uint64_t seed) {
    ModelConfig c = tiny_config();
    c.dropout = 0.2;
    VmdNetModel m(c);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.max_epochs = 3;
    cfg.seed = seed;
    const auto h = train(m, tr, va, cfg);
    std::vector<double> losses;
    for (const auto& e : h.epochs) losses.insert(losses.end(), {e.train_loss, e.val_loss});
    return losses;
  };
  const auto first = fit(1);
  const auto again = fit(1);
  for (std::size_t i = 0; i < first.size(); ++i) INFO(i << " " << first[i] << " " << again[i]);
  CHECK(first == again);
  CHECK(fit(1) != fit(2));
}

TEST_CASE("training errors") {
  Rng rng(22);
  DecomposedDataset tr = random_dataset(8, 2, 16, 4, rng);
  const DecomposedDataset va = random_dataset(4, 2, 16, 4, rng);
  VmdNetModel m(tiny_config());
  TrainConfig cfg;
  cfg.max_epochs = 2;

  DecomposedDataset empty = va;
  empty.batch = 0;
  CHECK_THROWS_WITH_AS(train(m, tr, empty, cfg), doctest::Contains("validation"), Error);

  const DecomposedDataset wrong = random_dataset(4, 2, 16, 5, rng);
  CHECK_THROWS_AS(train(m, tr, wrong, cfg), Error);

  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(m, tr, va, cfg), Error);
  cfg.batch_size = 8;

  tr.targets[3] = INFINITY;
  try {
    train(m, tr, va, cfg);
    FAIL("expected NonFiniteLoss");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteLoss);
    CHECK(std::string(e.what()).find("epoch 1 batch 0") != std::string::npos);
  }
}
