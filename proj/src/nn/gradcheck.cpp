#include "vmdnet/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace vmdnet::nn {

GradcheckReport gradcheck(ParamStore& store, const LossFn& loss, double h, std::size_t max_entries,
                          std::uint64_t seed, double floor) {
  store.zero_grad();
  {
    Tape tape;
    tape.backward(loss(tape));
  }

  std::vector<std::pair<std::string, std::size_t>> entries;
  for (const auto& [name, p] : store.entries())
    for (std::size_t i = 0; i < p.value.size(); ++i) entries.emplace_back(name, i);
  if (max_entries > 0 && max_entries < entries.size()) {
    Rng rng(seed);
    std::shuffle(entries.begin(), entries.end(), rng);
    entries.resize(max_entries);
  }

  auto eval = [&] {
    Tape tape;
    return loss(tape).value().data[0];
  };

  GradcheckReport report;
  for (const auto& [name, i] : entries) {
    Parameter& p = store.at(name);
    const double saved = p.value.data[i];
    p.value.data[i] = saved + h;
    const double up = eval();
    p.value.data[i] = saved - h;
    const double down = eval();
    p.value.data[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = p.grad.data[i];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    ++report.checked;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst = name + "[" + std::to_string(i) + "]";
    }
  }
  return report;
}

}  // namespace vmdnet::nn
