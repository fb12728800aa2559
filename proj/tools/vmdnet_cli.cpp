#include <cstdio>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vmdnet/vmdnet.h"

namespace {

struct RunOptions {
  std::string config;
  std::vector<std::string> set;
  std::string variant = "full";
  std::optional<std::uint64_t> seed;

  // Shorthands for common configuration keys.
  std::optional<std::string> data;
  std::optional<std::string> output_dir;
  std::optional<int> lookback;
  std::optional<int> horizon;
  std::optional<int> num_modes;
  std::optional<double> alpha;
  std::optional<int> max_epochs;
  std::optional<unsigned> workers;
  std::vector<std::uint64_t> seeds;
  bool original_units = false;

  std::vector<std::string> overrides() const {
    std::vector<std::string> o;
    auto add = [&](const char* key, const auto& value) {
      if (value) o.push_back(std::string(key) + "=" + to_json(*value));
    };
    add("data.path", data);
    add("output_dir", output_dir);
    add("window.lookback", lookback);
    add("window.horizon", horizon);
    add("vmd.num_modes", num_modes);
    add("vmd.alpha", alpha);
    add("train.max_epochs", max_epochs);
    add("workers", workers);
    if (!seeds.empty()) {
      std::string list = "seeds=[";
      for (std::size_t i = 0; i < seeds.size(); ++i) list += (i ? "," : "") + std::to_string(seeds[i]);
      o.push_back(list + "]");
    }
    if (original_units) o.emplace_back("original_units=true");
    o.insert(o.end(), set.begin(), set.end());
    return o;
  }

 private:
  static std::string to_json(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
      if (c == '"' || c == '\\') out += '\\';
      out += c;
    }
    return out + "\"";
  }
  template <class T>
  static std::string to_json(const T& v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
  }
};

void add_run_options(CLI::App* cmd, RunOptions& o, bool with_seed = true) {
  cmd->add_option("-c,--config", o.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--set", o.set, "Override a configuration key, e.g. --set train.lr=0.001")->type_name("KEY=VALUE");
  cmd->add_option("--variant", o.variant, "full, no_vmd, no_freq, no_parallel or fixed_params");
  if (with_seed) cmd->add_option("--seed", o.seed, "Only this seed (default: every configured seed)");
  cmd->add_option("--data", o.data, "data.path");
  cmd->add_option("--output-dir", o.output_dir, "output_dir");
  cmd->add_option("--lookback", o.lookback, "window.lookback");
  cmd->add_option("--horizon", o.horizon, "window.horizon");
  cmd->add_option("--num-modes", o.num_modes, "vmd.num_modes (disables the search)");
  cmd->add_option("--alpha", o.alpha, "vmd.alpha (disables the search)");
  cmd->add_option("--epochs", o.max_epochs, "train.max_epochs");
  cmd->add_option("--workers", o.workers, "workers");
  cmd->add_option("--seeds", o.seeds, "seeds");
  cmd->add_flag("--original-units", o.original_units, "Also report metrics in input units");
}

int report_failure(vmdnet_status status) {
  std::fprintf(stderr, "error [%s]: %s\n", vmdnet_last_error_name(), vmdnet_last_error());
  return status;
}

using RunPtr = std::unique_ptr<vmdnet_run, decltype(&vmdnet_run_destroy)>;

std::optional<RunPtr> open_run(const RunOptions& o, int& status) {
  const auto overrides = o.overrides();
  std::vector<const char*> argv;
  for (const auto& s : overrides) argv.push_back(s.c_str());
  vmdnet_run* run = nullptr;
  const auto st = vmdnet_run_load(o.config.c_str(), argv.data(), argv.size(), o.variant.c_str(), &run);
  if (st != VMDNET_OK) {
    status = report_failure(st);
    return std::nullopt;
  }
  return RunPtr(run, vmdnet_run_destroy);
}

std::vector<std::uint64_t> seeds_of(const vmdnet_run* run, const RunOptions& o) {
  if (o.seed) return {*o.seed};
  std::vector<std::uint64_t> s;
  for (std::size_t i = 0; i < vmdnet_run_seed_count(run); ++i) s.push_back(vmdnet_run_seed(run, i));
  return s;
}

// Applies `stage` to each selected seed and stops at the first failure.
template <class Stage>
int per_seed(const RunOptions& o, Stage&& stage) {
  int status = 0;
  auto run = open_run(o, status);
  if (!run) return status;
  for (std::uint64_t seed : seeds_of(run->get(), o)) {
    const auto st = stage(run->get(), seed);
    if (st != VMDNET_OK) {
      std::fprintf(stderr, "seed %llu: ", static_cast<unsigned long long>(seed));
      return report_failure(st);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VMDNet: decomposition-driven forecasting with parallel temporal convolutional decoders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", vmdnet_version());

  RunOptions opts;
  std::vector<std::string> variants{"full", "no_vmd", "no_freq", "no_parallel", "fixed_params"};
  std::uint64_t gradcheck_seed = 0;

  auto* decompose = app.add_subcommand("decompose", "Decompose the training and validation windows into the cache");
  auto* search = app.add_subcommand("search", "Bilevel search for the number of modes and the bandwidth penalty");
  auto* train = app.add_subcommand("train", "Train a model per seed and write its checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "Score the checkpoint of each seed on the test split");
  auto* predict = app.add_subcommand("predict", "Forecast the horizon after the last sample");
  auto* run = app.add_subcommand("run", "Train and evaluate every seed, then aggregate");
  auto* ablate = app.add_subcommand("ablate", "Run several variants with shared seeds and tabulate them");
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of the network gradients");

  for (auto* cmd : {decompose, search, train, evaluate, predict}) add_run_options(cmd, opts);
  add_run_options(run, opts, false);
  add_run_options(ablate, opts, false);
  ablate->add_option("--variants", variants, "Variants to compare")->delimiter(',');
  gradcheck->add_option("--seed", gradcheck_seed, "Seed for the random inputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return VMDNET_ERR_CONFIG;
  }

  if (*decompose)
    return per_seed(opts, [](vmdnet_run* r, std::uint64_t seed) {
      const auto st = vmdnet_run_decompose(r, seed);
      if (st == VMDNET_OK) std::printf("seed %llu: decomposed\n", static_cast<unsigned long long>(seed));
      return st;
    });

  if (*search)
    return per_seed(opts, [](vmdnet_run* r, std::uint64_t seed) {
      int k = 0;
      double alpha = 0.0;
      const auto st = vmdnet_run_search(r, seed, &k, &alpha);
      if (st == VMDNET_OK) std::printf("seed %llu: K=%d alpha=%.6g\n", static_cast<unsigned long long>(seed), k, alpha);
      return st;
    });

  if (*train)
    return per_seed(opts, [](vmdnet_run* r, std::uint64_t seed) {
      int epochs = 0;
      double best = 0.0;
      const auto st = vmdnet_run_train(r, seed, &epochs, &best);
      if (st == VMDNET_OK)
        std::printf("seed %llu: %d epochs, best validation mse %.6g\n", static_cast<unsigned long long>(seed), epochs, best);
      return st;
    });

  if (*evaluate)
    return per_seed(opts, [](vmdnet_run* r, std::uint64_t seed) {
      double mse = 0.0, mae = 0.0;
      const auto st = vmdnet_run_evaluate(r, seed, &mse, &mae);
      if (st == VMDNET_OK) std::printf("seed %llu: mse %.6g mae %.6g\n", static_cast<unsigned long long>(seed), mse, mae);
      return st;
    });

  if (*predict)
    return per_seed(opts, [](vmdnet_run* r, std::uint64_t seed) {
      std::vector<double> values(1024);
      std::size_t n = 0;
      auto st = vmdnet_run_predict(r, seed, values.data(), values.size(), &n);
      if (st == VMDNET_OK && n > values.size()) {
        values.resize(n);
        st = vmdnet_run_predict(r, seed, values.data(), values.size(), &n);
      }
      if (st != VMDNET_OK) return st;
      std::printf("seed %llu:", static_cast<unsigned long long>(seed));
      for (std::size_t i = 0; i < n; ++i) std::printf(" %.6g", values[i]);
      std::printf("\n");
      return st;
    });

  if (*run) {
    int status = 0;
    auto r = open_run(opts, status);
    if (!r) return status;
    vmdnet_summary s{};
    if (const auto st = vmdnet_run_experiment(r->get(), &s); st != VMDNET_OK) return report_failure(st);
    std::printf("%s\n", vmdnet_run_report(r->get()));
    if (s.successes == 0) {
      std::fprintf(stderr, "error: every seed failed\n");
      return VMDNET_ERR_DATA;
    }
    return 0;
  }

  if (*ablate) {
    int status = 0;
    auto r = open_run(opts, status);
    if (!r) return status;
    std::vector<const char*> names;
    for (const auto& v : variants) names.push_back(v.c_str());
    const char* table = nullptr;
    if (const auto st = vmdnet_run_ablation(r->get(), names.data(), names.size(), &table); st != VMDNET_OK)
      return report_failure(st);
    std::printf("%s", table);
    return 0;
  }

  if (*gradcheck) {
    vmdnet_gradcheck* g = nullptr;
    const auto st = vmdnet_gradcheck_run(gradcheck_seed, &g);
    if (!g) return report_failure(st);
    for (std::size_t i = 0; i < vmdnet_gradcheck_rows(g); ++i) {
      const auto row = vmdnet_gradcheck_row_at(g, i);
      std::printf("%-36s %4zu entries  max rel error %.3e  (tol %.0e)  %s\n", row.name, row.checked, row.max_rel_error,
                  row.tolerance, row.ok ? "ok" : "FAIL");
    }
    vmdnet_gradcheck_destroy(g);
    return st == VMDNET_OK ? 0 : report_failure(st);
  }
  return 0;
}
