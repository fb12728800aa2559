#include "vmdnet/forecaster.hpp"

#include <cmath>

#include <json.hpp>

#include "vmdnet/error.hpp"

namespace vmdnet::forecast {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

Tensor sinusoid_table(std::size_t d, std::size_t steps) {
  Tensor t({d, steps});
  for (std::size_t i = 0; i < d; ++i) {
    const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d));
    for (std::size_t s = 0; s < steps; ++s) {
      const double angle = static_cast<double>(s) * rate;
      t.data[i * steps + s] = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return t;
}

}  // namespace

void ModelConfig::validate() const {
  if (lookback < 1 || horizon < 1) fail(ErrorCode::InvalidConfig, "lookback and horizon must be >= 1");
  if (variant.use_vmd && num_modes < 1) fail(ErrorCode::InvalidConfig, "num_modes must be >= 1");
  if (d_model < 8) fail(ErrorCode::InvalidConfig, "d_model must be >= 8");
  if (tcn_channels.empty()) fail(ErrorCode::InvalidConfig, "tcn_channels must be non-empty");
  for (int c : tcn_channels)
    if (c < 1) fail(ErrorCode::InvalidConfig, "tcn_channels entries must be >= 1");
  if (kernel_size < 1) fail(ErrorCode::InvalidConfig, "kernel_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail(ErrorCode::InvalidConfig, "dropout must be in [0, 1)");
  if (num_blocks < 0 || num_blocks > 30) fail(ErrorCode::InvalidConfig, "num_blocks must be in [0, 30]");
}

int ModelConfig::blocks() const {
  if (num_blocks > 0) return num_blocks;
  int needed = 1;
  if (kernel_size > 1 && lookback > 1)
    needed = static_cast<int>(std::ceil(std::log2((lookback - 1.0) / (2.0 * (kernel_size - 1)) + 1.0)));
  return std::max(static_cast<int>(tcn_channels.size()), std::max(needed, 1));
}

int ModelConfig::receptive_field() const { return 1 + 2 * (kernel_size - 1) * ((1 << blocks()) - 1); }

int ModelConfig::channels_of(int block) const {
  return tcn_channels[std::min<std::size_t>(sz(block), tcn_channels.size() - 1)];
}

int ModelConfig::branches() const { return variant.use_vmd && variant.parallel_decoding ? num_modes : 1; }

int ModelConfig::input_modes() const { return variant.use_vmd ? num_modes : 1; }

std::string ModelConfig::to_json() const {
  nlohmann::json j{{"num_modes", num_modes},
                   {"lookback", lookback},
                   {"horizon", horizon},
                   {"d_model", d_model},
                   {"tcn_channels", tcn_channels},
                   {"kernel_size", kernel_size},
                   {"dropout", dropout},
                   {"num_blocks", num_blocks},
                   {"use_vmd", variant.use_vmd},
                   {"use_freq_embed", variant.use_freq_embed},
                   {"parallel_decoding", variant.parallel_decoding},
                   {"rng_seed", rng_seed}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.num_modes = j.value("num_modes", c.num_modes);
    c.lookback = j.value("lookback", c.lookback);
    c.horizon = j.value("horizon", c.horizon);
    c.d_model = j.value("d_model", c.d_model);
    c.tcn_channels = j.value("tcn_channels", c.tcn_channels);
    c.kernel_size = j.value("kernel_size", c.kernel_size);
    c.dropout = j.value("dropout", c.dropout);
    c.num_blocks = j.value("num_blocks", c.num_blocks);
    c.variant.use_vmd = j.value("use_vmd", c.variant.use_vmd);
    c.variant.use_freq_embed = j.value("use_freq_embed", c.variant.use_freq_embed);
    c.variant.parallel_decoding = j.value("parallel_decoding", c.variant.parallel_decoding);
    c.rng_seed = j.value("rng_seed", c.rng_seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidConfig, std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

Batch make_batch(const DecomposedDataset& ds, std::span<const std::size_t> indices) {
  Batch b;
  b.size = indices.size();
  b.modes = ds.modes;
  b.lookback = ds.lookback;
  b.horizon = ds.horizon;
  b.U.reserve(b.size * ds.modes * ds.lookback);
  b.omega.reserve(b.size * ds.modes);
  b.time_features.reserve(b.size * windowing::kTimeFeatures * ds.lookback);
  b.targets.reserve(b.size * ds.horizon);
  for (std::size_t i : indices) {
    if (i >= ds.batch) fail(ErrorCode::ShapeMismatch, "window index " + std::to_string(i) + " out of range");
    const auto u = ds.modes_of(i);
    const auto w = ds.omega_of(i);
    const auto tf = ds.time_features_of(i);
    const auto y = ds.target(i);
    b.U.insert(b.U.end(), u.begin(), u.end());
    b.omega.insert(b.omega.end(), w.begin(), w.end());
    b.time_features.insert(b.time_features.end(), tf.begin(), tf.end());
    b.targets.insert(b.targets.end(), y.begin(), y.end());
  }
  return b;
}

VmdNetModel::VmdNetModel(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(derive_seed(cfg_.rng_seed, "init"));
  const std::size_t d = sz(cfg_.d_model), k = sz(cfg_.kernel_size), f = sz(cfg_.horizon);
  auto add = [&](const std::string& name, Shape shape, std::size_t fan_in) {
    params_.add(name, nn::uniform_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)), rng));
  };

  // Embedding.
  if (cfg_.variant.use_vmd) {
    for (int m = 0; m < cfg_.num_modes; ++m) {
      const std::string p = "mode" + std::to_string(m) + ".";
      add(p + "token.w", {d, 1, 3}, 3);
      add(p + "token.b", {d}, 3);
      if (cfg_.variant.use_freq_embed) {
        add(p + "freq.w", {1, d}, 1);
        add(p + "freq.b", {d}, 1);
      }
    }
  } else {
    add("raw.token.w", {d, 1, 3}, 3);
    add("raw.token.b", {d}, 3);
  }
  add("time.w", {d, windowing::kTimeFeatures, 1}, windowing::kTimeFeatures);
  add("time.b", {d}, windowing::kTimeFeatures);
  pos_ = sinusoid_table(d, sz(cfg_.lookback));

  // Branches.
  for (int br = 0; br < cfg_.branches(); ++br) {
    const std::string p = branch_prefix(sz(br));
    std::size_t in = d;
    for (int l = 0; l < cfg_.blocks(); ++l) {
      const std::size_t out = sz(cfg_.channels_of(l));
      const std::string bp = p + "tcn.block" + std::to_string(l) + ".";
      add(bp + "conv1.w", {out, in, k}, in * k);
      add(bp + "conv1.b", {out}, in * k);
      add(bp + "conv2.w", {out, out, k}, out * k);
      add(bp + "conv2.b", {out}, out * k);
      if (in != out) {
        add(bp + "down.w", {out, in, 1}, in);
        add(bp + "down.b", {out}, in);
      }
      in = out;
    }
    add(p + "head.w", {in, f}, in);
    add(p + "head.b", {f}, in);
  }

  const std::size_t nb = sz(cfg_.branches());
  add("fusion.fc1.w", {nb * f, 2 * f}, nb * f);
  add("fusion.fc1.b", {2 * f}, nb * f);
  add("fusion.fc2.w", {2 * f, f}, 2 * f);
  add("fusion.fc2.b", {f}, 2 * f);
}

std::string VmdNetModel::branch_prefix(std::size_t branch) const {
  if (cfg_.variant.use_vmd && cfg_.variant.parallel_decoding) return "mode" + std::to_string(branch) + ".";
  return "decoder.";
}

void VmdNetModel::check_batch(const Batch& batch) const {
  if (batch.modes != sz(cfg_.input_modes()) || batch.lookback != sz(cfg_.lookback))
    fail(ErrorCode::ShapeMismatch, "batch has " + std::to_string(batch.modes) + " modes x " +
                                       std::to_string(batch.lookback) + " steps; model expects " +
                                       std::to_string(cfg_.input_modes()) + " x " + std::to_string(cfg_.lookback));
  if (batch.U.size() != batch.size * batch.modes * batch.lookback || batch.omega.size() != batch.size * batch.modes ||
      batch.time_features.size() != batch.size * windowing::kTimeFeatures * batch.lookback)
    fail(ErrorCode::ShapeMismatch, "batch buffers do not match their declared shape");
}

Var VmdNetModel::embed(Tape& tape, const Batch& batch, std::size_t mode, EmbedParts* parts) {
  check_batch(batch);
  if (mode >= batch.modes) fail(ErrorCode::ShapeMismatch, "mode index " + std::to_string(mode) + " out of range");
  const std::size_t n = batch.size, steps = batch.lookback;

  Tensor u({n, 1, steps});
  for (std::size_t b = 0; b < n; ++b)
    std::copy_n(batch.U.data() + (b * batch.modes + mode) * steps, steps, u.ptr() + b * steps);
  const std::string p = cfg_.variant.use_vmd ? "mode" + std::to_string(mode) + "." : "raw.";
  const Var token = nn::causal_conv1d(tape.constant(std::move(u)), tape.param(params_, p + "token.w"),
                                      tape.param(params_, p + "token.b"), 1);
  const Var time = nn::causal_conv1d(
      tape.constant(Tensor({n, windowing::kTimeFeatures, steps}, batch.time_features)),
      tape.param(params_, "time.w"), tape.param(params_, "time.b"), 1);
  const Var pos = tape.constant(pos_);
  Var e = nn::add_batch_broadcast(nn::add(token, time), pos);

  std::optional<Var> freq;
  if (cfg_.variant.use_vmd && cfg_.variant.use_freq_embed) {
    Tensor w({n, 1});
    for (std::size_t b = 0; b < n; ++b) w.data[b] = batch.omega[b * batch.modes + mode];
    freq = nn::linear(tape.constant(std::move(w)), tape.param(params_, p + "freq.w"), tape.param(params_, p + "freq.b"));
    e = nn::add_time_broadcast(e, *freq);
  }
  if (parts) *parts = {token, time, pos, freq};
  return e;
}

Var VmdNetModel::decode_branch(Tape& tape, Var e, std::size_t branch, bool training, Rng& dropout_rng) {
  if (branch >= sz(cfg_.branches())) fail(ErrorCode::ShapeMismatch, "branch index " + std::to_string(branch) + " out of range");
  const std::string p = branch_prefix(branch);
  Var x = e;
  std::size_t in = sz(cfg_.d_model);
  for (int l = 0; l < cfg_.blocks(); ++l) {
    const std::size_t out = sz(cfg_.channels_of(l));
    const std::size_t dilation = std::size_t{1} << l;
    const std::string bp = p + "tcn.block" + std::to_string(l) + ".";
    Var h = nn::causal_conv1d(x, tape.param(params_, bp + "conv1.w"), tape.param(params_, bp + "conv1.b"), dilation);
    h = nn::dropout(nn::gelu(h), cfg_.dropout, dropout_rng, training);
    h = nn::causal_conv1d(h, tape.param(params_, bp + "conv2.w"), tape.param(params_, bp + "conv2.b"), dilation);
    h = nn::dropout(nn::gelu(h), cfg_.dropout, dropout_rng, training);
    const Var res = in == out ? x
                              : nn::causal_conv1d(x, tape.param(params_, bp + "down.w"),
                                                  tape.param(params_, bp + "down.b"), 1);
    x = nn::add(h, res);
    in = out;
  }
  return nn::linear(nn::last_step(x), tape.param(params_, p + "head.w"), tape.param(params_, p + "head.b"));
}

std::vector<Var> VmdNetModel::branch_outputs(Tape& tape, const Batch& batch, bool training, Rng& dropout_rng) {
  check_batch(batch);
  std::vector<Var> out;
  if (cfg_.variant.use_vmd && cfg_.variant.parallel_decoding) {
    for (std::size_t m = 0; m < batch.modes; ++m)
      out.push_back(decode_branch(tape, embed(tape, batch, m), m, training, dropout_rng));
  } else if (cfg_.variant.use_vmd) {
    std::vector<Var> embeds;
    for (std::size_t m = 0; m < batch.modes; ++m) embeds.push_back(embed(tape, batch, m));
    out.push_back(decode_branch(tape, nn::mean_of(embeds), 0, training, dropout_rng));
  } else {
    out.push_back(decode_branch(tape, embed(tape, batch, 0), 0, training, dropout_rng));
  }
  return out;
}

Var VmdNetModel::fuse(Tape& tape, const std::vector<Var>& branch_out) {
  const Var stacked = branch_out.size() == 1 ? branch_out[0] : nn::concat_columns(branch_out);
  const Var h = nn::gelu(
      nn::linear(stacked, tape.param(params_, "fusion.fc1.w"), tape.param(params_, "fusion.fc1.b")));
  return nn::linear(h, tape.param(params_, "fusion.fc2.w"), tape.param(params_, "fusion.fc2.b"));
}

Var VmdNetModel::forward(Tape& tape, const Batch& batch, bool training, Rng& dropout_rng) {
  return fuse(tape, branch_outputs(tape, batch, training, dropout_rng));
}

}  // namespace vmdnet::forecast
