#include "vmdnet/nn/optim.hpp"

#include <cmath>

namespace vmdnet::nn {

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  ++store.step;
  const double t = static_cast<double>(store.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : store.entries()) {
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad.data[i];
      p.m.data[i] = cfg.beta1 * p.m.data[i] + (1.0 - cfg.beta1) * g;
      p.v.data[i] = cfg.beta2 * p.v.data[i] + (1.0 - cfg.beta2) * g * g;
      p.value.data[i] -= cfg.lr * (p.m.data[i] / c1) / (std::sqrt(p.v.data[i] / c2) + cfg.eps);
    }
  }
}

}  // namespace vmdnet::nn
