#include "fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace vmdnet::detail {
namespace {

// FFTW planning is not thread-safe, execution of an existing plan on new
// arrays is. Plans are created once per (size, direction) and kept for the
// lifetime of the process. FFTW_UNALIGNED makes the plan valid for any buffer,
// so results do not depend on where std::vector happened to allocate.
class PlanCache {
 public:
  fftw_plan get(int n, int sign) {
    std::lock_guard lock(mutex_);
    auto key = std::make_pair(n, sign);
    if (auto it = plans_.find(key); it != plans_.end()) return it->second;
    fftw_complex* scratch = fftw_alloc_complex(static_cast<std::size_t>(n));
    fftw_plan plan = fftw_plan_dft_1d(n, scratch, scratch, sign,
                                      FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(scratch);
    plans_.emplace(key, plan);
    return plan;
  }

  ~PlanCache() {
    for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
  }

 private:
  std::mutex mutex_;
  std::map<std::pair<int, int>, fftw_plan> plans_;
};

PlanCache& plan_cache() {
  static PlanCache cache;
  return cache;
}

void execute(std::span<Complex> data, int sign) {
  if (data.empty()) return;
  fftw_plan plan = plan_cache().get(static_cast<int>(data.size()), sign);
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_execute_dft(plan, buf, buf);
}

}  // namespace

void fft_forward(std::span<Complex> data) { execute(data, FFTW_FORWARD); }

void fft_inverse(std::span<Complex> data) {
  execute(data, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(data.size());
  for (auto& v : data) v *= scale;
}

std::vector<Complex> fft_real(std::span<const double> x) {
  std::vector<Complex> out(x.begin(), x.end());
  fft_forward(out);
  return out;
}

}  // namespace vmdnet::detail
