#include "vmdnet/nn/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "vmdnet/error.hpp"

namespace vmdnet::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Eigen::Index;

Index ix(std::size_t n) { return static_cast<Index>(n); }

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  fail(ErrorCode::ShapeMismatch, std::string(op) + ": " + detail);
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) shape_error(op, shape_string(a.shape) + " vs " + shape_string(b.shape));
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (!dst) return;
  for (std::size_t i = 0; i < src.size(); ++i) dst->data[i] += src.data[i];
}

constexpr double kGeluC = 0.044715;
const double kSqrt2OverPi = std::sqrt(2.0 / std::numbers::pi);

}  // namespace

Var linear(Var x, Var w, std::optional<Var> b) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2 || xv.rank() < 1 || xv.shape.back() != wv.dim(0))
    shape_error("linear", "x " + shape_string(xv.shape) + " with w " + shape_string(wv.shape));
  const std::size_t din = wv.dim(0), dout = wv.dim(1), rows = xv.size() / din;
  if (b && (b->value().rank() != 1 || b->value().dim(0) != dout))
    shape_error("linear", "bias " + shape_string(b->value().shape) + " for d_out " + std::to_string(dout));

  Shape out_shape = xv.shape;
  out_shape.back() = dout;
  Tensor y(out_shape);
  MapMat Y(y.ptr(), ix(rows), ix(dout));
  Y.noalias() = ConstMapMat(xv.ptr(), ix(rows), ix(din)) * ConstMapMat(wv.ptr(), ix(din), ix(dout));
  if (b) Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b->value().ptr(), ix(dout));

  const std::size_t xid = x.id, wid = w.id;
  const std::optional<std::size_t> bid = b ? std::optional(b->id) : std::nullopt;
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return tape.push(std::move(y), inputs, [=](Tape& t, std::size_t self) {
    ConstMapMat G(t.grad(self).ptr(), ix(rows), ix(dout));
    if (Tensor* dx = t.grad_slot(xid))
      MapMat(dx->ptr(), ix(rows), ix(din)).noalias() += G * ConstMapMat(t.value(wid).ptr(), ix(din), ix(dout)).transpose();
    if (Tensor* dw = t.grad_slot(wid))
      MapMat(dw->ptr(), ix(din), ix(dout)).noalias() += ConstMapMat(t.value(xid).ptr(), ix(rows), ix(din)).transpose() * G;
    if (bid)
      if (Tensor* db = t.grad_slot(*bid))
        Eigen::Map<Eigen::RowVectorXd>(db->ptr(), ix(dout)) += G.colwise().sum();
  }, "linear");
}

Var causal_conv1d(Var x, Var w, std::optional<Var> b, std::size_t dilation) {
  Tape& tape = *x.tape;
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (dilation < 1) fail(ErrorCode::InvalidConfig, "causal_conv1d: dilation must be >= 1");
  if (xv.rank() != 3 || wv.rank() != 3 || wv.dim(1) != xv.dim(1) || wv.dim(2) < 1)
    shape_error("causal_conv1d", "x " + shape_string(xv.shape) + " with kernel " + shape_string(wv.shape));
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), steps = xv.dim(2);
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  if (b && (b->value().rank() != 1 || b->value().dim(0) != cout))
    shape_error("causal_conv1d", "bias " + shape_string(b->value().shape) + " for " + std::to_string(cout) + " channels");

  // Per-tap weight matrices, tap j looking back (k - 1 - j) * dilation steps.
  auto taps = [cout, cin, k](const Tensor& kernel) {
    std::vector<RowMat> out(k, RowMat(ix(cout), ix(cin)));
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t i = 0; i < cin; ++i)
        for (std::size_t j = 0; j < k; ++j) out[j](ix(o), ix(i)) = kernel.data[(o * cin + i) * k + j];
    return out;
  };
  const auto wt = taps(wv);

  Tensor y({batch, cout, steps});
  for (std::size_t bi = 0; bi < batch; ++bi) {
    ConstMapMat X(xv.ptr() + bi * cin * steps, ix(cin), ix(steps));
    MapMat Y(y.ptr() + bi * cout * steps, ix(cout), ix(steps));
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t shift = (k - 1 - j) * dilation;
      if (shift >= steps) continue;
      const Index n = ix(steps - shift);
      Y.rightCols(n).noalias() += wt[j] * X.leftCols(n);
    }
    if (b) Y.colwise() += Eigen::Map<const Eigen::VectorXd>(b->value().ptr(), ix(cout));
  }

  const std::size_t xid = x.id, wid = w.id;
  const std::optional<std::size_t> bid = b ? std::optional(b->id) : std::nullopt;
  std::vector<Var> inputs{x, w};
  if (b) inputs.push_back(*b);
  return tape.push(std::move(y), inputs, [=](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xval = t.value(xid);
    Tensor* dx = t.grad_slot(xid);
    Tensor* dw = t.grad_slot(wid);
    Tensor* db = bid ? t.grad_slot(*bid) : nullptr;
    const auto w_taps = dx ? taps(t.value(wid)) : std::vector<RowMat>{};
    std::vector<RowMat> dw_taps(dw ? k : 0, RowMat::Zero(ix(cout), ix(cin)));
    for (std::size_t bi = 0; bi < batch; ++bi) {
      ConstMapMat G(g.ptr() + bi * cout * steps, ix(cout), ix(steps));
      ConstMapMat X(xval.ptr() + bi * cin * steps, ix(cin), ix(steps));
      for (std::size_t j = 0; j < k; ++j) {
        const std::size_t shift = (k - 1 - j) * dilation;
        if (shift >= steps) continue;
        const Index n = ix(steps - shift);
        if (dx)
          MapMat(dx->ptr() + bi * cin * steps, ix(cin), ix(steps)).leftCols(n).noalias() +=
              w_taps[j].transpose() * G.rightCols(n);
        if (dw) dw_taps[j].noalias() += G.rightCols(n) * X.leftCols(n).transpose();
      }
      if (db) Eigen::Map<Eigen::VectorXd>(db->ptr(), ix(cout)) += G.rowwise().sum();
    }
    if (dw)
      for (std::size_t o = 0; o < cout; ++o)
        for (std::size_t i = 0; i < cin; ++i)
          for (std::size_t j = 0; j < k; ++j) dw->data[(o * cin + i) * k + j] += dw_taps[j](ix(o), ix(i));
  }, "causal_conv1d");
}

Var gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape);
  const auto n = ix(xv.size());
  Eigen::Map<const Eigen::ArrayXd> v(xv.data.data(), n);
  // tanh(z) = 1 - 2 / (exp(2z) + 1), kept for the backward pass.
  const Eigen::ArrayXd z = (2.0 * kSqrt2OverPi) * (v + kGeluC * v.cube());
  Buffer th(xv.size());
  Eigen::Map<Eigen::ArrayXd> thv(th.data(), n);
  thv = 1.0 - 2.0 / (z.exp() + 1.0);
  Eigen::Map<Eigen::ArrayXd>(y.data.data(), n) = 0.5 * v * (1.0 + thv);
  const std::size_t xid = x.id;
  return x.tape->push(std::move(y), {x}, [xid, th = std::move(th)](Tape& t, std::size_t self) {
    Tensor* dx = t.grad_slot(xid);
    const Tensor& xval = t.value(xid);
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < xval.size(); ++i) {
      const double v = xval.data[i];
      const double d = 0.5 * (1.0 + th[i]) + 0.5 * v * (1.0 - th[i] * th[i]) * kSqrt2OverPi * (1.0 + 3.0 * kGeluC * v * v);
      dx->data[i] += g.data[i] * d;
    }
  }, "gelu");
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorCode::InvalidConfig, "dropout rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const Tensor& xv = x.value();
  const double keep_scale = 1.0 / (1.0 - rate);
  Buffer mask(xv.size());
  // Two 32-bit uniforms per engine draw.
  const double threshold = std::ldexp(rate, 32);
  for (std::size_t i = 0; i < mask.size(); i += 2) {
    const std::uint64_t r = rng();
    mask[i] = static_cast<double>(r >> 32) >= threshold ? keep_scale : 0.0;
    if (i + 1 < mask.size()) mask[i + 1] = static_cast<double>(r & 0xffffffffu) >= threshold ? keep_scale : 0.0;
  }
  Tensor y(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) y.data[i] = xv.data[i] * mask[i];
  const std::size_t xid = x.id;
  return x.tape->push(std::move(y), {x}, [xid, mask = std::move(mask)](Tape& t, std::size_t self) {
    Tensor* dx = t.grad_slot(xid);
    const Tensor& g = t.grad(self);
    for (std::size_t i = 0; i < mask.size(); ++i) dx->data[i] += g.data[i] * mask[i];
  }, "dropout");
}

Var mse_loss(Var pred, Var target) {
  const Tensor& p = pred.value();
  const Tensor& q = target.value();
  require_same("mse_loss", p, q);
  if (p.size() == 0) shape_error("mse_loss", "empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p.data[i] - q.data[i]) * (p.data[i] - q.data[i]);
  const double n = static_cast<double>(p.size());
  const std::size_t pid = pred.id, qid = target.id;
  return pred.tape->push(Tensor({1}, s / n), {pred, target}, [pid, qid, n](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0] * 2.0 / n;
    const Tensor& pv = t.value(pid);
    const Tensor& qv = t.value(qid);
    Tensor* dp = t.grad_slot(pid);
    Tensor* dq = t.grad_slot(qid);
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double d = g * (pv.data[i] - qv.data[i]);
      if (dp) dp->data[i] += d;
      if (dq) dq->data[i] -= d;
    }
  }, "mse_loss");
}

Var weighted_sum(Var x, const Tensor& weights) {
  require_same("weighted_sum", x.value(), weights);
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += x.value().data[i] * weights.data[i];
  const std::size_t xid = x.id;
  return x.tape->push(Tensor({1}, s), {x}, [xid, weights](Tape& t, std::size_t self) {
    const double g = t.grad(self).data[0];
    Tensor* dx = t.grad_slot(xid);
    for (std::size_t i = 0; i < weights.size(); ++i) dx->data[i] += g * weights.data[i];
  }, "weighted_sum");
}

Var add(Var a, Var b) {
  require_same("add", a.value(), b.value());
  Tensor y = a.value();
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += b.value().data[i];
  const std::size_t aid = a.id, bid = b.id;
  return a.tape->push(std::move(y), {a, b}, [aid, bid](Tape& t, std::size_t self) {
    accumulate(t.grad_slot(aid), t.grad(self));
    accumulate(t.grad_slot(bid), t.grad(self));
  }, "add");
}

Var add_batch_broadcast(Var x, Var y) {
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  if (yv.rank() > xv.rank() || !std::equal(yv.shape.rbegin(), yv.shape.rend(), xv.shape.rbegin()))
    shape_error("add_batch_broadcast", shape_string(xv.shape) + " + " + shape_string(yv.shape));
  const std::size_t inner = yv.size(), outer = xv.size() / std::max<std::size_t>(inner, 1);
  Tensor out = xv;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] += yv.data[i];
  const std::size_t xid = x.id, yid = y.id;
  return x.tape->push(std::move(out), {x, y}, [xid, yid, inner, outer](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t.grad_slot(xid), g);
    if (Tensor* dy = t.grad_slot(yid))
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < inner; ++i) dy->data[i] += g.data[o * inner + i];
  }, "add_batch_broadcast");
}

Var add_time_broadcast(Var x, Var y) {
  const Tensor& xv = x.value();
  const Tensor& yv = y.value();
  if (yv.rank() > xv.rank() || !std::equal(yv.shape.begin(), yv.shape.end(), xv.shape.begin()))
    shape_error("add_time_broadcast", shape_string(xv.shape) + " + " + shape_string(yv.shape));
  const std::size_t outer = yv.size(), inner = xv.size() / std::max<std::size_t>(outer, 1);
  Tensor out = xv;
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) out.data[o * inner + i] += yv.data[o];
  const std::size_t xid = x.id, yid = y.id;
  return x.tape->push(std::move(out), {x, y}, [xid, yid, inner, outer](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    accumulate(t.grad_slot(xid), g);
    if (Tensor* dy = t.grad_slot(yid))
      for (std::size_t o = 0; o < outer; ++o) {
        double s = 0.0;
        for (std::size_t i = 0; i < inner; ++i) s += g.data[o * inner + i];
        dy->data[o] += s;
      }
  }, "add_time_broadcast");
}

Var last_step(Var x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 3 || xv.dim(2) == 0) shape_error("last_step", "expects [B, C, T], got " + shape_string(xv.shape));
  const std::size_t rows = xv.dim(0) * xv.dim(1), steps = xv.dim(2);
  Tensor y({xv.dim(0), xv.dim(1)});
  for (std::size_t r = 0; r < rows; ++r) y.data[r] = xv.data[r * steps + steps - 1];
  const std::size_t xid = x.id;
  return x.tape->push(std::move(y), {x}, [xid, rows, steps](Tape& t, std::size_t self) {
    Tensor* dx = t.grad_slot(xid);
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < rows; ++r) dx->data[r * steps + steps - 1] += g.data[r];
  }, "last_step");
}

Var concat_columns(const std::vector<Var>& xs) {
  if (xs.empty()) shape_error("concat_columns", "no inputs");
  const std::size_t rows = xs[0].value().rank() == 2 ? xs[0].value().dim(0) : 0;
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& v : xs) {
    if (v.value().rank() != 2 || v.value().dim(0) != rows)
      shape_error("concat_columns", "expects [B, n] inputs with equal B, got " + shape_string(v.value().shape));
    widths.push_back(v.value().dim(1));
    total += widths.back();
  }
  Tensor y({rows, total});
  std::size_t col = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor& v = xs[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.ptr() + r * widths[k], widths[k], y.ptr() + r * total + col);
    col += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& v : xs) ids.push_back(v.id);
  return xs[0].tape->push(std::move(y), xs, [ids, widths, rows, total](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t c = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (Tensor* dx = t.grad_slot(ids[k]))
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < widths[k]; ++j) dx->data[r * widths[k] + j] += g.data[r * total + c + j];
      c += widths[k];
    }
  }, "concat_columns");
}

Var mean_of(const std::vector<Var>& xs) {
  if (xs.empty()) shape_error("mean_of", "no inputs");
  Tensor y(xs[0].value().shape);
  for (const Var& v : xs) {
    require_same("mean_of", xs[0].value(), v.value());
    for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += v.value().data[i];
  }
  const double scale = 1.0 / static_cast<double>(xs.size());
  for (double& v : y.data) v *= scale;
  std::vector<std::size_t> ids;
  for (const Var& v : xs) ids.push_back(v.id);
  return xs[0].tape->push(std::move(y), xs, [ids, scale](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t id : ids)
      if (Tensor* dx = t.grad_slot(id))
        for (std::size_t i = 0; i < g.size(); ++i) dx->data[i] += scale * g.data[i];
  }, "mean_of");
}

Var embedding(Var table, std::span<const std::size_t> indices) {
  const Tensor& tv = table.value();
  if (tv.rank() != 2) shape_error("embedding", "table must be [n, d], got " + shape_string(tv.shape));
  const std::size_t n = tv.dim(0), d = tv.dim(1);
  Tensor y({indices.size(), d});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= n) shape_error("embedding", "index " + std::to_string(indices[r]) + " >= " + std::to_string(n));
    std::copy_n(tv.ptr() + indices[r] * d, d, y.ptr() + r * d);
  }
  const std::size_t tid = table.id;
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return table.tape->push(std::move(y), {table}, [tid, idx, d](Tape& t, std::size_t self) {
    Tensor* dt = t.grad_slot(tid);
    const Tensor& g = t.grad(self);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < d; ++j) dt->data[idx[r] * d + j] += g.data[r * d + j];
  }, "embedding");
}

}  // namespace vmdnet::nn
