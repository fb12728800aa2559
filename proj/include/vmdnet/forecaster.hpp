#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmdnet/nn/ops.hpp"
#include "vmdnet/nn/tensor.hpp"
#include "vmdnet/windowing.hpp"

namespace vmdnet::forecast {

using windowing::DecomposedDataset;

struct VariantFlags {
  bool use_vmd = true;
  bool use_freq_embed = true;
  bool parallel_decoding = true;
};

struct ModelConfig {
  int num_modes = 4;  // K; ignored when use_vmd is off
  int lookback = 336;
  int horizon = 96;
  int d_model = 64;
  std::vector<int> tcn_channels{32, 64, 64};
  int kernel_size = 3;
  double dropout = 0.1;
  /// Residual blocks per TCN; 0 picks max(len(tcn_channels), smallest L whose
  /// receptive field 1 + 2 (k - 1)(2^L - 1) covers the lookback).
  int num_blocks = 0;
  VariantFlags variant;
  std::uint64_t rng_seed = 0;

  void validate() const;
  int blocks() const;
  int receptive_field() const;
  /// Width of block l; blocks past the list reuse its last width.
  int channels_of(int block) const;
  /// Number of TCN branches: K with parallel decoding, otherwise 1.
  int branches() const;
  /// Modes the model expects per sample: K with VMD, 1 (the raw window) without.
  int input_modes() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

/// Inputs for a set of samples, laid out for the model.
struct Batch {
  std::size_t size = 0;
  std::size_t modes = 0;
  std::size_t lookback = 0;
  std::size_t horizon = 0;
  std::vector<double> U;              // B x K x P
  std::vector<double> omega;          // B x K
  std::vector<double> time_features;  // B x 4 x P
  std::vector<double> targets;        // B x F
};

Batch make_batch(const DecomposedDataset& ds, std::span<const std::size_t> indices);

/// Addends of one mode's embedding, each [B, d_model, P] except freq ([B, d_model]).
struct EmbedParts {
  nn::Var token;
  nn::Var time;
  nn::Var pos;
  std::optional<nn::Var> freq;
};

/// Anything the training loop can fit: parameters plus a forward pass.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual nn::ParamStore& params() = 0;
  /// [B, F] forecast for the batch.
  virtual nn::Var forward(nn::Tape& tape, const Batch& batch, bool training, Rng& dropout_rng) = 0;
  virtual std::size_t horizon() const = 0;
};

class VmdNetModel final : public Trainable {
 public:
  explicit VmdNetModel(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamStore& params() override { return params_; }
  const nn::ParamStore& params() const { return params_; }
  std::size_t parameter_count() const { return params_.scalar_count(); }
  std::size_t horizon() const override { return static_cast<std::size_t>(cfg_.horizon); }

  /// Embedding of input mode `mode` as [B, d_model, P]. With `parts` the four
  /// addends are also returned.
  nn::Var embed(nn::Tape& tape, const Batch& batch, std::size_t mode, EmbedParts* parts = nullptr);
  /// TCN branch followed by its head: [B, C, P] -> [B, F].
  nn::Var decode_branch(nn::Tape& tape, nn::Var e, std::size_t branch, bool training, Rng& dropout_rng);
  /// Branch outputs before fusion, one [B, F] per branch.
  std::vector<nn::Var> branch_outputs(nn::Tape& tape, const Batch& batch, bool training, Rng& dropout_rng);
  nn::Var fuse(nn::Tape& tape, const std::vector<nn::Var>& branch_out);
  nn::Var forward(nn::Tape& tape, const Batch& batch, bool training, Rng& dropout_rng) override;

  /// Fixed sinusoidal table, [d_model, P].
  const nn::Tensor& positional_table() const { return pos_; }

 private:
  std::string branch_prefix(std::size_t branch) const;
  void check_batch(const Batch& batch) const;

  ModelConfig cfg_;
  nn::ParamStore params_;
  nn::Tensor pos_;
};

struct TrainConfig {
  int batch_size = 64;
  double lr = 1e-3;
  int max_epochs = 10;
  int patience = 3;
  std::uint64_t seed = 0;
  /// Caps the mini-batches per epoch (0 = all); batches are still drawn from a
  /// fresh shuffle each epoch.
  int max_batches_per_epoch = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  bool stopped_early = false;

  /// One JSON object per epoch.
  std::string to_jsonl() const;
};

/// Mini-batch MSE with Adam and early stopping on validation MSE; the best
/// validation parameters are restored at the end. Throws NonFiniteLoss with the
/// epoch and batch on divergence.
TrainHistory train(Trainable& model, const DecomposedDataset& train_set, const DecomposedDataset& val_set,
                   const TrainConfig& cfg);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
  std::vector<double> mse_per_step;  // length F
  std::vector<double> mae_per_step;
  std::size_t windows = 0;
};

/// Eval-mode forecasts, B x F row-major.
std::vector<double> predict(Trainable& model, const DecomposedDataset& ds, std::size_t batch_size = 256);
Metrics metrics(std::span<const double> predictions, std::span<const double> targets, std::size_t horizon);
/// Metrics on the normalized scale over every window of `ds`.
Metrics evaluate(Trainable& model, const DecomposedDataset& ds, std::size_t batch_size = 256);

}  // namespace vmdnet::forecast
