#include "vmdnet/vmdnet.h"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "vmdnet/config.hpp"
#include "vmdnet/error.hpp"
#include "vmdnet/pipeline.hpp"
#include "vmdnet/selfcheck.hpp"
#include "vmdnet/vmd.hpp"

struct vmdnet_run {
  vmdnet::pipeline::Experiment experiment;
  std::string config_json;
  std::string report;
  std::string table;
};

struct vmdnet_decomposition {
  vmdnet::vmd::VmdResult result;
};

struct vmdnet_gradcheck {
  std::vector<vmdnet::selfcheck::GradcheckRow> rows;
};

namespace {

thread_local std::string last_error;
thread_local std::string last_error_name;

vmdnet_status fail_with(vmdnet_status status, std::string name, std::string message) {
  last_error_name = std::move(name);
  last_error = std::move(message);
  return status;
}

// Runs `f`, mapping exceptions to status codes and the thread's last error.
template <class F>
vmdnet_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    last_error_name.clear();
    return VMDNET_OK;
  } catch (const vmdnet::Error& e) {
    return fail_with(static_cast<vmdnet_status>(e.category()), std::string(vmdnet::to_string(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return fail_with(VMDNET_ERR_INTERNAL, "OutOfMemory", "out of memory");
  } catch (const std::exception& e) {
    return fail_with(VMDNET_ERR_INTERNAL, "Internal", e.what());
  } catch (...) {
    return fail_with(VMDNET_ERR_INTERNAL, "Internal", "unknown error");
  }
}

void require(bool condition, const char* message) {
  if (!condition) vmdnet::fail(vmdnet::ErrorCode::InvalidConfig, message);
}

std::vector<std::string> to_strings(const char* const* items, std::size_t n) {
  require(n == 0 || items != nullptr, "null override list");
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) {
    require(items[i] != nullptr, "null override");
    out.emplace_back(items[i]);
  }
  return out;
}

vmdnet_run* make_run(vmdnet::pipeline::RunConfig cfg, const char* variant) {
  const auto v = variant ? vmdnet::pipeline::parse_variant(variant) : vmdnet::pipeline::Variant::Full;
  std::string text = vmdnet::pipeline::to_json(cfg);
  return new vmdnet_run{vmdnet::pipeline::Experiment(std::move(cfg), v), std::move(text), {}, {}};
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

extern "C" {

const char* vmdnet_last_error(void) { return last_error.c_str(); }
const char* vmdnet_last_error_name(void) { return last_error_name.c_str(); }
const char* vmdnet_version(void) { return "0.1.0"; }

vmdnet_status vmdnet_run_create(const char* config_json, const char* const* overrides, size_t n_overrides,
                                const char* variant, vmdnet_run** out) {
  return guarded([&] {
    require(config_json != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    *out = make_run(vmdnet::pipeline::parse_config(config_json, to_strings(overrides, n_overrides)), variant);
  });
}

vmdnet_status vmdnet_run_load(const char* config_path, const char* const* overrides, size_t n_overrides,
                              const char* variant, vmdnet_run** out) {
  return guarded([&] {
    require(config_path != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    *out = make_run(vmdnet::pipeline::load_config(config_path, to_strings(overrides, n_overrides)), variant);
  });
}

void vmdnet_run_destroy(vmdnet_run* run) { delete run; }

size_t vmdnet_run_seed_count(const vmdnet_run* run) { return run ? run->experiment.config().seeds.size() : 0; }

uint64_t vmdnet_run_seed(const vmdnet_run* run, size_t index) {
  if (!run || index >= run->experiment.config().seeds.size()) return 0;
  return run->experiment.config().seeds[index];
}

const char* vmdnet_run_config(const vmdnet_run* run) { return run ? run->config_json.c_str() : ""; }
const char* vmdnet_run_report(const vmdnet_run* run) { return run ? run->report.c_str() : ""; }

vmdnet_status vmdnet_run_search(vmdnet_run* run, uint64_t seed, int* num_modes, double* alpha) {
  return guarded([&] {
    require(run != nullptr, "null run");
    const auto r = run->experiment.search(seed);
    if (num_modes) *num_modes = r.chosen_k;
    if (alpha) *alpha = r.chosen_alpha;
  });
}

vmdnet_status vmdnet_run_decompose(vmdnet_run* run, uint64_t seed) {
  return guarded([&] {
    require(run != nullptr, "null run");
    run->experiment.decompose(seed);
  });
}

vmdnet_status vmdnet_run_train(vmdnet_run* run, uint64_t seed, int* epochs, double* best_val_loss) {
  return guarded([&] {
    require(run != nullptr, "null run");
    const auto h = run->experiment.train(seed);
    if (epochs) *epochs = static_cast<int>(h.epochs.size());
    if (best_val_loss) *best_val_loss = h.best_val_loss;
  });
}

vmdnet_status vmdnet_run_evaluate(vmdnet_run* run, uint64_t seed, double* mse, double* mae) {
  return guarded([&] {
    require(run != nullptr, "null run");
    const auto o = run->experiment.evaluate(seed);
    if (mse) *mse = o.metrics.mse;
    if (mae) *mae = o.metrics.mae;
  });
}

vmdnet_status vmdnet_run_predict(vmdnet_run* run, uint64_t seed, double* values, size_t capacity, size_t* written) {
  return guarded([&] {
    require(run != nullptr, "null run");
    require(capacity == 0 || values != nullptr, "null output buffer");
    const auto f = run->experiment.predict(seed);
    std::copy_n(f.begin(), std::min(capacity, f.size()), values);
    if (written) *written = f.size();
  });
}

vmdnet_status vmdnet_run_experiment(vmdnet_run* run, vmdnet_summary* summary) {
  return guarded([&] {
    require(run != nullptr, "null run");
    const auto r = run->experiment.run();
    const auto& a = r.aggregate;
    if (summary) *summary = {a.successes, a.failures, a.mse_mean, a.mse_std, a.mae_mean, a.mae_std};
    const auto& cfg = run->experiment.config();
    run->report = slurp(std::filesystem::path(cfg.output_dir) / std::string(to_string(r.variant)) / "summary.json");
  });
}

vmdnet_status vmdnet_run_ablation(vmdnet_run* run, const char* const* variants, size_t n_variants, const char** table) {
  return guarded([&] {
    require(run != nullptr, "null run");
    std::vector<vmdnet::pipeline::Variant> vs;
    for (const auto& name : to_strings(variants, n_variants)) vs.push_back(vmdnet::pipeline::parse_variant(name));
    require(!vs.empty(), "no ablation variants");
    const auto t = vmdnet::pipeline::run_ablation(run->experiment.config(), vs);
    run->table = t.to_text();
    run->report = t.to_json();
    if (table) *table = run->table.c_str();
  });
}

vmdnet_vmd_options vmdnet_vmd_defaults(void) {
  const vmdnet::vmd::VmdConfig c;
  return {4, c.alpha, c.tau, c.tolerance, c.max_iterations};
}

vmdnet_status vmdnet_decompose(const double* signal, size_t length, const vmdnet_vmd_options* options,
                               vmdnet_decomposition** out) {
  return guarded([&] {
    require(out != nullptr && options != nullptr, "null argument");
    require(length == 0 || signal != nullptr, "null signal");
    *out = nullptr;
    vmdnet::vmd::VmdConfig c;
    c.num_modes = options->num_modes;
    c.alpha = options->alpha;
    c.tau = options->tau;
    c.tolerance = options->tolerance;
    c.max_iterations = options->max_iterations;
    *out = new vmdnet_decomposition{vmdnet::vmd::decompose({signal, length}, c)};
  });
}

void vmdnet_decomposition_destroy(vmdnet_decomposition* d) { delete d; }
size_t vmdnet_decomposition_modes(const vmdnet_decomposition* d) { return d ? d->result.num_modes : 0; }
size_t vmdnet_decomposition_length(const vmdnet_decomposition* d) { return d ? d->result.length : 0; }

const double* vmdnet_decomposition_mode(const vmdnet_decomposition* d, size_t k) {
  if (!d || k >= d->result.num_modes) return nullptr;
  return d->result.modes.data() + k * d->result.length;
}

double vmdnet_decomposition_omega(const vmdnet_decomposition* d, size_t k) {
  if (!d || k >= d->result.num_modes) return 0.0;
  return d->result.center_frequencies[k];
}

int vmdnet_decomposition_iterations(const vmdnet_decomposition* d) { return d ? d->result.iterations_used : 0; }
int vmdnet_decomposition_converged(const vmdnet_decomposition* d) { return d && d->result.converged ? 1 : 0; }

vmdnet_status vmdnet_gradcheck_run(uint64_t seed, vmdnet_gradcheck** out) {
  bool all_ok = true;
  const auto status = guarded([&] {
    require(out != nullptr, "null argument");
    *out = nullptr;
    auto g = new vmdnet_gradcheck{vmdnet::selfcheck::gradient_suite(seed)};
    for (const auto& row : g->rows) all_ok = all_ok && row.ok();
    *out = g;
  });
  if (status == VMDNET_OK && !all_ok)
    return fail_with(VMDNET_ERR_NUMERICAL, "GradientMismatch", "a gradient check exceeded its tolerance");
  return status;
}

void vmdnet_gradcheck_destroy(vmdnet_gradcheck* g) { delete g; }
size_t vmdnet_gradcheck_rows(const vmdnet_gradcheck* g) { return g ? g->rows.size() : 0; }

vmdnet_gradcheck_row vmdnet_gradcheck_row_at(const vmdnet_gradcheck* g, size_t index) {
  if (!g || index >= g->rows.size()) return {"", 0, 0.0, 0.0, 0};
  const auto& r = g->rows[index];
  return {r.name.c_str(), r.checked, r.max_rel_error, r.tolerance, r.ok() ? 1 : 0};
}

}  // extern "C"
