#include "vmdnet/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vmdnet/ingest.hpp"
#include "vmdnet/nn/checkpoint.hpp"

namespace vmdnet::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
    out << text;
    if (!out) fail(ErrorCode::Io, "write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    fail(ErrorCode::InvalidConfig, "output directory " + dir.string() + " is not writable: " + ec.message());
}

json vmd_json(const vmd::VmdConfig& v) {
  return {{"num_modes", v.num_modes},  {"alpha", v.alpha},
          {"tau", v.tau},              {"tolerance", v.tolerance},
          {"max_iterations", v.max_iterations}, {"omega_init", static_cast<int>(v.omega_init)},
          {"mirror", v.boundary == vmd::Boundary::Mirror}, {"rng_seed", v.rng_seed}};
}

vmd::VmdConfig vmd_from_json(const json& j) {
  vmd::VmdConfig v;
  v.num_modes = j.at("num_modes").get<int>();
  v.alpha = j.at("alpha").get<double>();
  v.tau = j.at("tau").get<double>();
  v.tolerance = j.at("tolerance").get<double>();
  v.max_iterations = j.at("max_iterations").get<int>();
  v.omega_init = static_cast<vmd::OmegaInit>(j.at("omega_init").get<int>());
  v.boundary = j.at("mirror").get<bool>() ? vmd::Boundary::Mirror : vmd::Boundary::None;
  v.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  return v;
}

json metrics_json(const forecast::Metrics& m) {
  return {{"mse", m.mse}, {"mae", m.mae}, {"mse_per_step", m.mse_per_step}, {"mae_per_step", m.mae_per_step}};
}

forecast::Metrics to_original_units(forecast::Metrics m, double sd) {
  m.mse *= sd * sd;
  m.mae *= sd;
  for (double& v : m.mse_per_step) v *= sd * sd;
  for (double& v : m.mae_per_step) v *= sd;
  return m;
}

struct Restored {
  forecast::VmdNetModel model;
  vmd::VmdConfig vmd;
  windowing::NormStats norm;
};

Restored restore(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::Io, "no checkpoint at " + path.string() + "; run train first");
  const auto ck = nn::load_checkpoint(path.string());
  json meta;
  try {
    meta = json::parse(ck.metadata);
    Restored r{forecast::VmdNetModel(forecast::ModelConfig::from_json(meta.at("model").dump())),
               vmd_from_json(meta.at("vmd")),
               {meta.at("norm").at("mean").get<double>(), meta.at("norm").at("std").get<double>()}};
    nn::assign_parameters(r.model.params(), ck.params);
    return r;
  } catch (const json::exception& e) {
    fail(ErrorCode::CacheCorrupt, "checkpoint " + path.string() + " has unreadable metadata: " + e.what());
  }
}

}  // namespace

std::size_t AccessLog::count(std::string_view part, std::string_view stage) const {
  return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(), [&](const Entry& e) {
    return e.part == part && (stage.empty() || e.stage == stage);
  }));
}

Aggregate aggregate(std::span<const SeedOutcome> outcomes) {
  Aggregate a;
  std::vector<double> mse, mae;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++a.failures;
      continue;
    }
    ++a.successes;
    mse.push_back(o.metrics.mse);
    mae.push_back(o.metrics.mae);
  }
  auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
    if (v.empty()) {
      mean = sd = NAN;
      return;
    }
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  };
  mean_std(mse, a.mse_mean, a.mse_std);
  mean_std(mae, a.mae_mean, a.mae_std);
  return a;
}

Experiment::Experiment(RunConfig cfg, Variant variant, AccessLog* log)
    : cfg_(std::move(cfg)), variant_(variant), log_(log) {
  cfg_.validate();
}

fs::path Experiment::seed_dir(std::uint64_t seed) const {
  return fs::path(cfg_.output_dir) / std::string(to_string(variant_)) / ("seed_" + std::to_string(seed));
}

fs::path Experiment::search_dir(std::uint64_t seed) const {
  return fs::path(cfg_.output_dir) / "search" / ("seed_" + std::to_string(seed));
}

fs::path Experiment::cache_dir() const { return fs::path(cfg_.output_dir) / "cache"; }

const Series& Experiment::series() {
  if (!series_) series_ = io::ingest(cfg_.data_path, cfg_.timestamp_column, cfg_.value_column);
  return *series_;
}

const windowing::Split& Experiment::split() {
  if (!split_) split_ = windowing::split_and_normalize(series(), cfg_.split, cfg_.window.lookback + cfg_.window.horizon);
  return *split_;
}

const Series& Experiment::read(const std::string& part, const std::string& stage) {
  if (log_) log_->entries.push_back({part, stage});
  const auto& s = split();
  if (part == "train") return s.train;
  if (part == "val") return s.val;
  return s.test;
}

windowing::WindowedDataset Experiment::windows(const std::string& part, const std::string& stage) {
  windowing::WindowSpec spec = cfg_.window;
  if (part == "val") spec.stride = cfg_.val_stride;
  if (part == "test") spec.stride = 1;
  return windowing::make_windows(read(part, stage), spec);
}

windowing::DecomposedDataset Experiment::dataset(const windowing::WindowedDataset& w, const vmd::VmdConfig& vmd) {
  windowing::DecomposedDataset out;
  if (!uses_vmd()) {
    out = windowing::raw_dataset(w);
  } else {
    make_dir(cache_dir());
    windowing::load_or_decompose(cache_dir() / windowing::cache_key(w, vmd), w, vmd, cfg_.workers, out);
  }
  out.norm = split().stats;
  return out;
}

forecast::ModelConfig Experiment::model_config(const vmd::VmdConfig& vmd, std::uint64_t seed) const {
  forecast::ModelConfig m = cfg_.model;
  m.lookback = static_cast<int>(cfg_.window.lookback);
  m.horizon = static_cast<int>(cfg_.window.horizon);
  m.num_modes = uses_vmd() ? vmd.num_modes : 1;
  m.variant.use_vmd = uses_vmd();
  m.variant.use_freq_embed = uses_vmd() && cfg_.model.variant.use_freq_embed && variant_ != Variant::NoFreq;
  m.variant.parallel_decoding = variant_ != Variant::NoParallel;
  m.rng_seed = derive_seed(seed, "model-init");
  return m;
}

double Experiment::validation_score(const vmd::VmdConfig& vmd, std::uint64_t seed) {
  const auto train_set = dataset(windows("train", "search"), vmd);
  const auto val_set = dataset(windows("val", "search"), vmd);
  forecast::VmdNetModel model(model_config(vmd, seed));
  forecast::TrainConfig t = cfg_.train;
  t.max_epochs = cfg_.search_validation_epochs;
  t.patience = t.max_epochs;
  t.seed = seed;
  return forecast::train(model, train_set, val_set, t).best_val_loss;
}

std::string Experiment::search_key(std::uint64_t seed, bool fixed) const {
  // Everything the chosen pair depends on.
  auto doc = json::parse(to_json(cfg_));
  json key{{"seed", seed}, {"fixed", fixed}, {"data", doc["data"]}, {"split", doc["split"]}, {"vmd", doc["vmd"]},
           {"search", doc["search"]}};
  if (cfg_.search_validate) {
    key["window"] = doc["window"];
    key["model"] = doc["model"];
    key["train"] = doc["train"];
  }
  return key.dump();
}

search::SearchResult Experiment::search(std::uint64_t seed) {
  if (!uses_vmd()) fail(ErrorCode::InvalidConfig, "the no_vmd variant has no decomposition to search");
  const fs::path dir = search_dir(seed);
  make_dir(dir);
  search::SearchConfig sc = cfg_.search;
  sc.rng_seed = derive_seed(seed, "search");
  vmd::VmdConfig base = cfg_.vmd;
  if (base.omega_init == vmd::OmegaInit::SeededRandom) base.rng_seed = derive_seed(seed, "vmd-init");

  const bool fixed = variant_ == Variant::FixedParams || !cfg_.auto_vmd;
  if (fixed) {
    sc.strategy = search::Strategy::FixedPair;
    sc.fixed_k = variant_ == Variant::FixedParams ? cfg_.fixed_k : cfg_.vmd.num_modes;
    sc.fixed_alpha = variant_ == Variant::FixedParams ? cfg_.fixed_alpha : cfg_.vmd.alpha;
  }

  std::vector<double> train_values;
  if (!fixed) {
    const auto& values = read("train", "search").values;
    const std::size_t n = cfg_.search_max_length > 0 ? std::min(cfg_.search_max_length, values.size()) : values.size();
    train_values.assign(values.end() - static_cast<std::ptrdiff_t>(n), values.end());
  }
  search::VmdEvaluator eval(std::move(train_values), base, sc.ar_order, sc.mi_bins);
  search::ValidationFn validation;
  if (cfg_.search_validate && !fixed)
    validation = [&](int k, double alpha) {
      vmd::VmdConfig v = base;
      v.num_modes = k;
      v.alpha = alpha;
      return validation_score(v, seed);
    };

  const fs::path trace_path = dir / "search_trace.jsonl";
  fs::remove(trace_path);
  const auto result = search::stackelberg_search(eval, validation, cfg_.search_space, sc,
                                                 fixed ? search::TraceSink{} : search::jsonl_trace_writer(trace_path.string()));
  search::write_summary((dir / "search_summary.json").string(), result);
  vmd::VmdConfig chosen = base;
  chosen.num_modes = result.chosen_k;
  chosen.alpha = result.chosen_alpha;
  write_text(dir / "search_key.json", search_key(seed, fixed));
  write_text(dir / "vmd.json", vmd_json(chosen).dump(2));
  return result;
}

vmd::VmdConfig Experiment::vmd_config(std::uint64_t seed) {
  vmd::VmdConfig v = cfg_.vmd;
  if (v.omega_init == vmd::OmegaInit::SeededRandom) v.rng_seed = derive_seed(seed, "vmd-init");
  if (variant_ == Variant::FixedParams) {
    v.num_modes = cfg_.fixed_k;
    v.alpha = cfg_.fixed_alpha;
    return v;
  }
  if (!cfg_.auto_vmd || !uses_vmd()) return v;
  const fs::path dir = search_dir(seed);
  if (fs::exists(dir / "search_key.json") && fs::exists(dir / "vmd.json")) {
    try {
      if (read_text(dir / "search_key.json") == search_key(seed, false))
        return vmd_from_json(json::parse(read_text(dir / "vmd.json")));
    } catch (const json::exception&) {
      // Unreadable leftovers; search again.
    }
  }
  search(seed);
  return vmd_from_json(json::parse(read_text(dir / "vmd.json")));
}

void Experiment::decompose(std::uint64_t seed) {
  if (!uses_vmd()) fail(ErrorCode::InvalidConfig, "the no_vmd variant does not decompose");
  const auto v = vmd_config(seed);
  dataset(windows("train", "decompose"), v);
  dataset(windows("val", "decompose"), v);
}

forecast::TrainHistory Experiment::train(std::uint64_t seed) {
  const auto v = vmd_config(seed);
  const auto train_set = dataset(windows("train", "train"), v);
  const auto val_set = dataset(windows("val", "train"), v);
  forecast::VmdNetModel model(model_config(v, seed));
  forecast::TrainConfig t = cfg_.train;
  t.seed = seed;
  const auto history = forecast::train(model, train_set, val_set, t);

  const fs::path dir = seed_dir(seed);
  make_dir(dir);
  const json meta{{"model", json::parse(model.config().to_json())},
                  {"vmd", vmd_json(v)},
                  {"norm", {{"mean", split().stats.mean}, {"std", split().stats.std}}},
                  {"variant", to_string(variant_)},
                  {"seed", seed}};
  nn::save_checkpoint((dir / "model.ckpt").string(), model.params(), meta.dump());
  write_text(dir / "history.jsonl", history.to_jsonl());
  return history;
}

SeedOutcome Experiment::evaluate(std::uint64_t seed) {
  const fs::path dir = seed_dir(seed);
  Restored r = restore(dir / "model.ckpt");
  const auto test_set = dataset(windows("test", "evaluate"), r.vmd);

  SeedOutcome o;
  o.seed = seed;
  o.ok = true;
  o.num_modes = uses_vmd() ? r.vmd.num_modes : 0;
  o.alpha = uses_vmd() ? r.vmd.alpha : 0.0;
  o.parameters = r.model.parameter_count();
  o.metrics = forecast::evaluate(r.model, test_set);
  if (cfg_.original_units) o.original = to_original_units(o.metrics, r.norm.std);

  const auto& mc = r.model.config();
  json j{{"seed", seed},
         {"variant", to_string(variant_)},
         {"units", "normalized"},
         {"windows", o.metrics.windows},
         {"horizon", mc.horizon},
         {"parameters", o.parameters},
         {"model",
          {{"use_vmd", mc.variant.use_vmd},
           {"num_modes", mc.variant.use_vmd ? json(mc.num_modes) : json(nullptr)},
           {"alpha", mc.variant.use_vmd ? json(r.vmd.alpha) : json(nullptr)},
           {"branches", mc.branches()},
           {"parallel_decoding", mc.variant.parallel_decoding},
           {"use_freq_embed", mc.variant.use_freq_embed}}}};
  j.update(metrics_json(o.metrics));
  if (o.original) j["original_units"] = metrics_json(*o.original);
  make_dir(dir);
  write_text(dir / "metrics.json", j.dump(2));
  return o;
}

std::vector<double> Experiment::predict(std::uint64_t seed) {
  const fs::path dir = seed_dir(seed);
  Restored r = restore(dir / "model.ckpt");
  const Series& s = series();
  if (log_) log_->entries.push_back({"series", "predict"});
  const std::size_t p = cfg_.window.lookback, f = cfg_.window.horizon, n = s.size();
  if (n < p) fail(ErrorCode::SeriesTooShort, "series is shorter than the lookback");

  auto stamp = [&](std::size_t i) { return s.has_timestamps() ? s.timestamps[i] : static_cast<std::int64_t>(i) * 3600; };
  const std::int64_t step = n > 1 ? stamp(n - 1) - stamp(n - 2) : 3600;
  // The last lookback samples followed by placeholder targets form one window.
  Series tail;
  for (std::size_t i = n - p; i < n; ++i) {
    tail.values.push_back((s.values[i] - r.norm.mean) / r.norm.std);
    tail.timestamps.push_back(stamp(i));
  }
  for (std::size_t h = 1; h <= f; ++h) {
    tail.values.push_back(0.0);
    tail.timestamps.push_back(stamp(n - 1) + static_cast<std::int64_t>(h) * step);
  }
  windowing::WindowSpec spec = cfg_.window;
  spec.stride = 1;
  const auto w = windowing::make_windows(tail, spec);
  const auto ds = uses_vmd() ? windowing::decompose_windows(w, r.vmd, 1) : windowing::raw_dataset(w);
  const auto forecast = windowing::denormalize(forecast::predict(r.model, ds), r.norm);

  std::ostringstream csv;
  csv << "step,timestamp,value\n" << std::setprecision(17);
  for (std::size_t h = 0; h < f; ++h)
    csv << h + 1 << ',' << io::format_timestamp(tail.timestamps[p + h]) << ',' << forecast[h] << '\n';
  make_dir(dir);
  write_text(dir / "forecast.csv", csv.str());
  return forecast;
}

SeedOutcome Experiment::run_seed(std::uint64_t seed) {
  SeedOutcome o;
  o.seed = seed;
  try {
    const auto history = train(seed);
    o = evaluate(seed);
    o.history = history;
  } catch (const Error& e) {
    o.ok = false;
    o.error_code = e.code();
    o.error = e.what();
  }
  return o;
}

ExperimentResult Experiment::run() {
  ExperimentResult result;
  result.variant = variant_;
  for (std::uint64_t seed : cfg_.seeds) result.seeds.push_back(run_seed(seed));
  result.aggregate = aggregate(result.seeds);

  json seeds = json::array();
  for (const auto& o : result.seeds) {
    json s{{"seed", o.seed}, {"ok", o.ok}};
    if (o.ok) {
      s["mse"] = o.metrics.mse;
      s["mae"] = o.metrics.mae;
      s["num_modes"] = o.num_modes;
      s["alpha"] = o.alpha;
      if (o.original) s["original_units"] = {{"mse", o.original->mse}, {"mae", o.original->mae}};
    } else {
      s["error"] = o.error;
      s["error_code"] = std::string(vmdnet::to_string(*o.error_code));
    }
    seeds.push_back(s);
  }
  const auto& a = result.aggregate;
  const json summary{{"variant", to_string(variant_)},
                     {"seeds", seeds},
                     {"aggregate",
                      {{"successes", a.successes},
                       {"failures", a.failures},
                       {"mse_mean", a.mse_mean},
                       {"mse_std", a.mse_std},
                       {"mae_mean", a.mae_mean},
                       {"mae_std", a.mae_std}}}};
  const fs::path dir = fs::path(cfg_.output_dir) / std::string(to_string(variant_));
  make_dir(dir);
  write_text(dir / "summary.json", summary.dump(2));
  return result;
}

ExperimentResult run_experiment(const RunConfig& cfg, Variant variant, AccessLog* log) {
  return Experiment(cfg, variant, log).run();
}

std::string AblationTable::to_text() const {
  std::ostringstream out;
  out << std::left << std::setw(14) << "variant";
  if (!rows.empty())
    for (const auto& s : rows.front().seeds) out << std::setw(12) << ("mse@" + std::to_string(s.seed));
  out << std::setw(12) << "mse_mean" << std::setw(12) << "mse_std" << std::setw(12) << "mae_mean" << std::setw(12)
      << "mae_std" << "ok\n";
  out << std::fixed << std::setprecision(6);
  for (const auto& r : rows) {
    out << std::setw(14) << std::string(to_string(r.variant));
    for (const auto& s : r.seeds) {
      if (s.ok)
        out << std::setw(12) << s.metrics.mse;
      else
        out << std::setw(12) << "failed";
    }
    const auto& a = r.aggregate;
    out << std::setw(12) << a.mse_mean << std::setw(12) << a.mse_std << std::setw(12) << a.mae_mean << std::setw(12)
        << a.mae_std << a.successes << '/' << a.successes + a.failures << '\n';
  }
  return out.str();
}

std::string AblationTable::to_json() const {
  json rows_json = json::array();
  for (const auto& r : rows) {
    json seeds = json::array();
    for (const auto& s : r.seeds)
      seeds.push_back(s.ok ? json{{"seed", s.seed}, {"mse", s.metrics.mse}, {"mae", s.metrics.mae}}
                           : json{{"seed", s.seed}, {"error", s.error}});
    rows_json.push_back({{"variant", to_string(r.variant)},
                         {"seeds", seeds},
                         {"mse_mean", r.aggregate.mse_mean},
                         {"mse_std", r.aggregate.mse_std},
                         {"mae_mean", r.aggregate.mae_mean},
                         {"mae_std", r.aggregate.mae_std},
                         {"successes", r.aggregate.successes}});
  }
  return json{{"rows", rows_json}}.dump(2);
}

AblationTable run_ablation(const RunConfig& cfg, std::span<const Variant> variants, AccessLog* log) {
  AblationTable table;
  for (Variant v : variants) table.rows.push_back(run_experiment(cfg, v, log));
  make_dir(cfg.output_dir);
  write_text(fs::path(cfg.output_dir) / "ablation.txt", table.to_text());
  write_text(fs::path(cfg.output_dir) / "ablation.json", table.to_json());
  return table;
}

}  // namespace vmdnet::pipeline
