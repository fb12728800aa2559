#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "vmdnet/nn/tape.hpp"
#include "vmdnet/rng.hpp"

namespace vmdnet::nn {

/// x[..., d_in] W[d_in, d_out] + b[d_out]. `b` may be omitted.
Var linear(Var x, Var w, std::optional<Var> b = std::nullopt);

/// x[B, C_in, T], w[C_out, C_in, k], b[C_out] ->  y[B, C_out, T] with
///   y[b, o, t] = b[o] + sum_{i,j} w[o, i, j] x[b, i, t - (k - 1 - j) d]
/// and zeros for negative time (causal left padding of (k - 1) d).
Var causal_conv1d(Var x, Var w, std::optional<Var> b, std::size_t dilation);

/// 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Var gelu(Var x);

/// Identity unless `training` and rate > 0; then each entry is kept with
/// probability 1 - rate and scaled by 1 / (1 - rate).
Var dropout(Var x, double rate, Rng& rng, bool training);

/// mean((pred - target)^2) as a one-element tensor.
Var mse_loss(Var pred, Var target);

/// sum(x * weights) as a one-element tensor; weights are constant.
Var weighted_sum(Var x, const Tensor& weights);

Var add(Var a, Var b);
/// y has the trailing shape of x; added for every leading index.
Var add_batch_broadcast(Var x, Var y);
/// y has the leading shape of x; added across the remaining trailing dims.
Var add_time_broadcast(Var x, Var y);

/// x[B, C, T] -> x[:, :, T - 1] as [B, C].
Var last_step(Var x);
/// Concatenates rank-2 [B, n_i] tensors along the second axis.
Var concat_columns(const std::vector<Var>& xs);
/// Elementwise mean of equally shaped tensors.
Var mean_of(const std::vector<Var>& xs);
/// Rows of table[n, d] picked by index -> [len, d].
Var embedding(Var table, std::span<const std::size_t> indices);

}  // namespace vmdnet::nn
