#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vmdnet/error.hpp"
#include "vmdnet/forecaster.hpp"
#include "vmdnet/nn/optim.hpp"

namespace vmdnet::forecast {

void TrainConfig::validate() const {
  if (batch_size < 1) fail(ErrorCode::InvalidConfig, "batch_size must be >= 1");
  if (!(lr > 0.0)) fail(ErrorCode::InvalidConfig, "lr must be > 0");
  if (max_epochs < 1) fail(ErrorCode::InvalidConfig, "max_epochs must be >= 1");
  if (patience < 0) fail(ErrorCode::InvalidConfig, "patience must be >= 0");
  if (max_batches_per_epoch < 0) fail(ErrorCode::InvalidConfig, "max_batches_per_epoch must be >= 0");
}

std::string TrainHistory::to_jsonl() const {
  std::ostringstream out;
  for (const auto& e : epochs) {
    nlohmann::json j{{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"val_loss", e.val_loss},
                     {"seconds", e.seconds},
                     {"best", e.epoch == best_epoch}};
    out << j.dump() << '\n';
  }
  return out.str();
}

namespace {

void check_compatible(Trainable& model, const DecomposedDataset& ds, const char* which) {
  if (ds.horizon != model.horizon())
    fail(ErrorCode::ShapeMismatch, std::string(which) + " set horizon " + std::to_string(ds.horizon) +
                                       " differs from the model's " + std::to_string(model.horizon()));
}

}  // namespace

std::vector<double> predict(Trainable& model, const DecomposedDataset& ds, std::size_t batch_size) {
  check_compatible(model, ds, "prediction");
  std::vector<double> out;
  out.reserve(ds.batch * ds.horizon);
  Rng unused(0);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.batch; start += batch_size) {
    idx.resize(std::min(batch_size, ds.batch - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch b = make_batch(ds, idx);
    nn::Tape tape;
    const nn::Var y = model.forward(tape, b, false, unused);
    out.insert(out.end(), y.value().data.begin(), y.value().data.end());
  }
  return out;
}

Metrics metrics(std::span<const double> predictions, std::span<const double> targets, std::size_t horizon) {
  if (predictions.size() != targets.size() || horizon == 0 || targets.size() % horizon != 0)
    fail(ErrorCode::ShapeMismatch, "predictions and targets must be equal-length multiples of the horizon");
  Metrics m;
  m.windows = targets.size() / horizon;
  m.mse_per_step.assign(horizon, 0.0);
  m.mae_per_step.assign(horizon, 0.0);
  if (m.windows == 0) return m;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = predictions[i] - targets[i];
    m.mse_per_step[i % horizon] += e * e;
    m.mae_per_step[i % horizon] += std::abs(e);
  }
  const double n = static_cast<double>(m.windows);
  for (std::size_t h = 0; h < horizon; ++h) {
    m.mse_per_step[h] /= n;
    m.mae_per_step[h] /= n;
    m.mse += m.mse_per_step[h];
    m.mae += m.mae_per_step[h];
  }
  m.mse /= static_cast<double>(horizon);
  m.mae /= static_cast<double>(horizon);
  return m;
}

Metrics evaluate(Trainable& model, const DecomposedDataset& ds, std::size_t batch_size) {
  return metrics(predict(model, ds, batch_size), ds.targets, ds.horizon);
}

TrainHistory train(Trainable& model, const DecomposedDataset& train_set, const DecomposedDataset& val_set,
                   const TrainConfig& cfg) {
  cfg.validate();
  check_compatible(model, train_set, "training");
  check_compatible(model, val_set, "validation");
  if (train_set.batch == 0) fail(ErrorCode::DegenerateSplit, "training set has no windows");
  if (val_set.batch == 0) fail(ErrorCode::DegenerateSplit, "validation set has no windows");

  nn::ParamStore& params = model.params();
  const nn::AdamConfig adam{cfg.lr};
  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  Rng dropout_rng(derive_seed(cfg.seed, "dropout"));
  std::vector<std::size_t> order(train_set.batch);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  TrainHistory history;
  double best = INFINITY;
  std::map<std::string, nn::Buffer> best_values;
  int waited = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    std::size_t n_batches = (order.size() + bs - 1) / bs;
    if (cfg.max_batches_per_epoch > 0) n_batches = std::min(n_batches, static_cast<std::size_t>(cfg.max_batches_per_epoch));

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t j = 0; j < n_batches; ++j) {
      const std::size_t start = j * bs;
      const std::span<const std::size_t> idx(order.data() + start, std::min(bs, order.size() - start));
      const Batch b = make_batch(train_set, idx);
      params.zero_grad();
      nn::Tape tape;
      double loss_value = NAN;
      try {
        const nn::Var pred = model.forward(tape, b, true, dropout_rng);
        const nn::Var loss = nn::mse_loss(pred, tape.constant(nn::Tensor(pred.shape(), b.targets)));
        loss_value = loss.value().data[0];
        tape.backward(loss);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonFiniteValue) throw;
        fail(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " + std::to_string(j) + ": " + e.what());
      }
      nn::adam_step(params, adam);
      for (const auto& [name, p] : params.entries())
        for (double v : p.value.data)
          if (!std::isfinite(v))
            fail(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " + std::to_string(j) +
                                               ": parameter " + name + " became non-finite (loss " +
                                               std::to_string(loss_value) + ")");
      loss_sum += loss_value * static_cast<double>(idx.size());
      seen += idx.size();
    }

    const double val = evaluate(model, val_set).mse;
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back({epoch, loss_sum / static_cast<double>(seen), val, seconds});
    if (!std::isfinite(val)) fail(ErrorCode::NonFiniteLoss, "epoch " + std::to_string(epoch) + ": validation loss is not finite");

    if (val < best) {
      best = val;
      history.best_epoch = epoch;
      history.best_val_loss = val;
      waited = 0;
      for (const auto& [name, p] : params.entries()) best_values[name] = p.value.data;
    } else if (++waited > cfg.patience) {
      history.stopped_early = true;
      break;
    }
  }

  for (auto& [name, p] : params.entries()) p.value.data = best_values.at(name);
  return history;
}

}  // namespace vmdnet::forecast
