#include "vmdnet/config.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vmdnet/error.hpp"

namespace vmdnet::pipeline {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 5> kVariants{{{Variant::Full, "full"},
                                                                         {Variant::NoVmd, "no_vmd"},
                                                                         {Variant::NoFreq, "no_freq"},
                                                                         {Variant::NoParallel, "no_parallel"},
                                                                         {Variant::FixedParams, "fixed_params"}}};

[[noreturn]] void config_error(const std::string& key, const std::string& detail) {
  fail(ErrorCode::InvalidConfig, "config key '" + key + "': " + detail);
}

std::string type_name(const json& j) {
  if (j.is_number_integer()) return "integer";
  return j.type_name();
}

// A JSON object whose keys must all be consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) config_error(path_.empty() ? "<root>" : path_, "expected an object, got " + type_name(j_));
  }

  std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  bool has(const std::string& k) const { return j_.contains(k); }

  const json* take(const std::string& k) {
    allowed_.insert(k);
    const auto it = j_.find(k);
    return it == j_.end() ? nullptr : &*it;
  }

  void get(const std::string& k, std::string& out) {
    if (const json* v = take(k)) {
      if (!v->is_string()) config_error(key(k), "expected a string, got " + type_name(*v));
      out = v->get<std::string>();
    }
  }
  void get(const std::string& k, bool& out) {
    if (const json* v = take(k)) {
      if (!v->is_boolean()) config_error(key(k), "expected true or false, got " + type_name(*v));
      out = v->get<bool>();
    }
  }
  void get(const std::string& k, double& out) {
    if (const json* v = take(k)) {
      if (!v->is_number()) config_error(key(k), "expected a number, got " + type_name(*v));
      out = v->get<double>();
    }
  }
  template <std::integral T>
    requires(!std::same_as<T, bool>)
  void get(const std::string& k, T& out) {
    if (const json* v = take(k)) out = integer<T>(k, *v);
  }
  template <typename T>
  void get(const std::string& k, std::vector<T>& out) {
    if (const json* v = take(k)) {
      if (!v->is_array()) config_error(key(k), "expected a list, got " + type_name(*v));
      out.clear();
      for (std::size_t i = 0; i < v->size(); ++i) out.push_back(integer<T>(k + "[" + std::to_string(i) + "]", (*v)[i]));
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!allowed_.contains(k)) {
        std::string expected;
        for (const auto& a : allowed_) expected += (expected.empty() ? "" : ", ") + a;
        config_error(key(k), "unknown key; expected one of: " + expected);
      }
  }

 private:
  template <typename T>
  T integer(const std::string& k, const json& v) const {
    if (!v.is_number_integer()) config_error(key(k), "expected an integer, got " + type_name(v));
    if (std::is_unsigned_v<T> && v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)
      config_error(key(k), "must not be negative");
    return v.get<T>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> allowed_;
};

template <typename F>
void section(Section& parent, const std::string& k, F&& fill) {
  if (const json* v = parent.take(k)) {
    Section s(*v, parent.key(k));
    fill(s);
    s.finish();
  }
}

json parse_json(std::string_view text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, what + " is not valid JSON: " + e.what());
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    fail(ErrorCode::InvalidConfig, "override '" + assignment + "' must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) fail(ErrorCode::InvalidConfig, "override '" + assignment + "' has an empty key segment");
    // An override below "auto" replaces it; auto is then inferred from the keys.
    if (node->is_string() && *node == "auto") *node = json::object();
    if (!node->is_object()) *node = json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

vmd::OmegaInit parse_omega_init(const std::string& key, const std::string& s) {
  if (s == "uniform") return vmd::OmegaInit::UniformSpread;
  if (s == "zero") return vmd::OmegaInit::Zero;
  if (s == "random") return vmd::OmegaInit::SeededRandom;
  config_error(key, "expected uniform, zero or random, got '" + s + "'");
}

std::string omega_init_name(vmd::OmegaInit v) {
  switch (v) {
    case vmd::OmegaInit::UniformSpread: return "uniform";
    case vmd::OmegaInit::Zero: return "zero";
    case vmd::OmegaInit::SeededRandom: return "random";
  }
  return "uniform";
}

}  // namespace

std::string_view to_string(Variant v) {
  for (const auto& [variant, name] : kVariants)
    if (variant == v) return name;
  return "full";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [variant, n] : kVariants)
    if (n == name) return variant;
  fail(ErrorCode::InvalidConfig,
       "unknown variant '" + std::string(name) + "'; expected full, no_vmd, no_freq, no_parallel or fixed_params");
}

void RunConfig::validate() const {
  if (data_path.empty()) config_error("data.path", "must be set");
  if (value_column.empty()) config_error("data.value_column", "must be set");
  double total = 0.0;
  for (double f : split) {
    if (!(f > 0.0)) config_error("split", "fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) config_error("split", "fractions must sum to 1");
  window.validate();
  if (val_stride < 1) config_error("window.val_stride", "must be >= 1");
  if (auto_vmd) {
    search_space.validate();
    search.validate();
  } else {
    vmd.validate();
  }
  {
    vmd::VmdConfig probe = vmd;
    probe.num_modes = std::max(probe.num_modes, 1);
    probe.validate();
  }
  if (search_validation_epochs < 1) config_error("search.validation_epochs", "must be >= 1");
  forecast::ModelConfig m = model;
  m.lookback = static_cast<int>(window.lookback);
  m.horizon = static_cast<int>(window.horizon);
  m.num_modes = std::max(1, m.num_modes);
  m.validate();
  train.validate();
  if (fixed_k < 1) config_error("ablation.fixed_k", "must be >= 1");
  if (!(fixed_alpha > 0.0)) config_error("ablation.fixed_alpha", "must be > 0");
  if (seeds.empty()) config_error("seeds", "must list at least one seed");
  if (workers < 1) config_error("workers", "must be >= 1");
  if (output_dir.empty()) config_error("output_dir", "must be set");
}

RunConfig parse_config(std::string_view text, const std::vector<std::string>& overrides) {
  json doc = parse_json(text, "config");
  if (doc.is_null()) doc = json::object();
  for (const auto& o : overrides) apply_override(doc, o);
  if (doc.contains("vmd") && doc["vmd"].is_string()) {
    if (doc["vmd"] != "auto") config_error("vmd", "expected \"auto\" or an object");
    doc["vmd"] = json{{"auto", true}};
  }

  RunConfig c;
  Section root(doc, "");
  section(root, "data", [&](Section& s) {
    s.get("path", c.data_path);
    s.get("timestamp_column", c.timestamp_column);
    s.get("value_column", c.value_column);
  });
  if (const json* v = root.take("split")) {
    if (!v->is_array() || v->size() != 3 || !std::all_of(v->begin(), v->end(), [](const json& x) { return x.is_number(); }))
      config_error("split", "expected three numbers [train, val, test]");
    for (std::size_t i = 0; i < 3; ++i) c.split[i] = (*v)[i].get<double>();
  }
  section(root, "window", [&](Section& s) {
    s.get("lookback", c.window.lookback);
    s.get("horizon", c.window.horizon);
    s.get("stride", c.window.stride);
    s.get("val_stride", c.val_stride);
  });
  c.auto_vmd = !doc.contains("vmd");
  section(root, "vmd", [&](Section& s) {
    c.auto_vmd = !s.has("num_modes") && !s.has("alpha");
    s.get("auto", c.auto_vmd);
    s.get("num_modes", c.vmd.num_modes);
    s.get("alpha", c.vmd.alpha);
    s.get("tau", c.vmd.tau);
    s.get("tolerance", c.vmd.tolerance);
    s.get("max_iterations", c.vmd.max_iterations);
    std::string init = omega_init_name(c.vmd.omega_init);
    s.get("omega_init", init);
    c.vmd.omega_init = parse_omega_init(s.key("omega_init"), init);
    bool mirror = c.vmd.boundary == vmd::Boundary::Mirror;
    s.get("mirror", mirror);
    c.vmd.boundary = mirror ? vmd::Boundary::Mirror : vmd::Boundary::None;
  });
  section(root, "search", [&](Section& s) {
    s.get("k_min", c.search_space.k_min);
    s.get("k_max", c.search_space.k_max);
    s.get("alpha_min", c.search_space.alpha_min);
    s.get("alpha_max", c.search_space.alpha_max);
    s.get("restarts", c.search.n_restarts);
    s.get("grid_points", c.search.inner_grid_points);
    s.get("refine_iters", c.search.inner_refine_iters);
    s.get("ar_order", c.search.ar_order);
    s.get("mi_bins", c.search.mi_bins);
    s.get("max_length", c.search_max_length);
    s.get("validate", c.search_validate);
    s.get("validation_epochs", c.search_validation_epochs);
  });
  section(root, "model", [&](Section& s) {
    s.get("d_model", c.model.d_model);
    s.get("tcn_channels", c.model.tcn_channels);
    s.get("kernel_size", c.model.kernel_size);
    s.get("dropout", c.model.dropout);
    s.get("num_blocks", c.model.num_blocks);
    s.get("use_freq_embed", c.model.variant.use_freq_embed);
  });
  section(root, "train", [&](Section& s) {
    s.get("batch_size", c.train.batch_size);
    s.get("lr", c.train.lr);
    s.get("max_epochs", c.train.max_epochs);
    s.get("patience", c.train.patience);
    s.get("max_batches_per_epoch", c.train.max_batches_per_epoch);
  });
  section(root, "ablation", [&](Section& s) {
    s.get("fixed_k", c.fixed_k);
    s.get("fixed_alpha", c.fixed_alpha);
  });
  root.get("seeds", c.seeds);
  root.get("output_dir", c.output_dir);
  root.get("workers", c.workers);
  root.get("original_units", c.original_units);
  root.finish();
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidConfig, "cannot read config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), overrides);
}

std::string to_json(const RunConfig& c) {
  json vmd{{"auto", c.auto_vmd},
           {"tau", c.vmd.tau},
           {"tolerance", c.vmd.tolerance},
           {"max_iterations", c.vmd.max_iterations},
           {"omega_init", omega_init_name(c.vmd.omega_init)},
           {"mirror", c.vmd.boundary == vmd::Boundary::Mirror}};
  if (!c.auto_vmd) {
    vmd["num_modes"] = c.vmd.num_modes;
    vmd["alpha"] = c.vmd.alpha;
  }
  const json doc{
      {"data", {{"path", c.data_path}, {"timestamp_column", c.timestamp_column}, {"value_column", c.value_column}}},
      {"split", c.split},
      {"window",
       {{"lookback", c.window.lookback}, {"horizon", c.window.horizon}, {"stride", c.window.stride}, {"val_stride", c.val_stride}}},
      {"vmd", vmd},
      {"search",
       {{"k_min", c.search_space.k_min},
        {"k_max", c.search_space.k_max},
        {"alpha_min", c.search_space.alpha_min},
        {"alpha_max", c.search_space.alpha_max},
        {"restarts", c.search.n_restarts},
        {"grid_points", c.search.inner_grid_points},
        {"refine_iters", c.search.inner_refine_iters},
        {"ar_order", c.search.ar_order},
        {"mi_bins", c.search.mi_bins},
        {"max_length", c.search_max_length},
        {"validate", c.search_validate},
        {"validation_epochs", c.search_validation_epochs}}},
      {"model",
       {{"d_model", c.model.d_model},
        {"tcn_channels", c.model.tcn_channels},
        {"kernel_size", c.model.kernel_size},
        {"dropout", c.model.dropout},
        {"num_blocks", c.model.num_blocks},
        {"use_freq_embed", c.model.variant.use_freq_embed}}},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"lr", c.train.lr},
        {"max_epochs", c.train.max_epochs},
        {"patience", c.train.patience},
        {"max_batches_per_epoch", c.train.max_batches_per_epoch}}},
      {"ablation", {{"fixed_k", c.fixed_k}, {"fixed_alpha", c.fixed_alpha}}},
      {"seeds", c.seeds},
      {"output_dir", c.output_dir},
      {"workers", c.workers},
      {"original_units", c.original_units}};
  return doc.dump(2);
}

}  // namespace vmdnet::pipeline
