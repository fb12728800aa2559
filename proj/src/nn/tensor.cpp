#include "vmdnet/nn/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "vmdnet/error.hpp"

namespace vmdnet::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, const std::vector<double>& values)
    : Tensor(std::move(s), Buffer(values.begin(), values.end())) {}

Tensor::Tensor(Shape s, Buffer values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != shape_size(shape))
    fail(ErrorCode::ShapeMismatch, "tensor of shape " + shape_string(shape) + " given " +
                                       std::to_string(data.size()) + " values");
}

void check_finite(const Tensor& t, std::string_view where) {
  // x - x is NaN exactly for inf and NaN, and the vectorized sum propagates it.
  const Eigen::Map<const Eigen::ArrayXd> a(t.data.data(), static_cast<Eigen::Index>(t.size()));
  if (!std::isnan((a - a).sum())) return;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t.data[i]))
      fail(ErrorCode::NonFiniteValue, std::string(where) + ": non-finite value at flat index " + std::to_string(i));
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = bound * (2.0 * uniform01(rng) - 1.0);
  return t;
}

Parameter& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) fail(ErrorCode::InvalidConfig, "duplicate parameter name " + name);
  Parameter p;
  p.grad = Tensor(init.shape);
  p.m = Tensor(init.shape);
  p.v = Tensor(init.shape);
  p.value = std::move(init);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorCode::InvalidConfig, "unknown parameter " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) fail(ErrorCode::InvalidConfig, "unknown parameter " + name);
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

}  // namespace vmdnet::nn
