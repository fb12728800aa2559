#include "vmdnet/search.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "vmdnet/criteria.hpp"
#include "vmdnet/error.hpp"
#include "vmdnet/rng.hpp"

namespace vmdnet::search {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
const double kGolden = (std::sqrt(5.0) - 1.0) / 2.0;

using json = nlohmann::json;

json number_or_token(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double from_number_or_token(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::numeric_limits<double>::quiet_NaN();
}

double best_fic_of(const OuterResult& outer) {
  for (const auto& row : outer.table)
    if (row.num_modes == outer.best_k) return row.fic;
  return std::numeric_limits<double>::quiet_NaN();
}

void emit(const TraceSink& trace, const TraceRecord& rec) {
  if (trace) trace(rec);
}

}  // namespace

void SearchSpace::validate() const {
  if (k_min < 2) fail(ErrorCode::InvalidConfig, "k_min must be >= 2");
  if (k_max < k_min) fail(ErrorCode::InvalidConfig, "k_max must be >= k_min");
  if (!(alpha_min > 0.0) || !(alpha_max > alpha_min) || !std::isfinite(alpha_max))
    fail(ErrorCode::InvalidConfig, "alpha range must satisfy 0 < alpha_min < alpha_max");
}

void SearchConfig::validate() const {
  if (n_restarts < 1) fail(ErrorCode::InvalidConfig, "n_restarts must be >= 1");
  if (inner_grid_points < 3) fail(ErrorCode::InvalidConfig, "inner_grid_points must be >= 3");
  if (inner_refine_iters < 0) fail(ErrorCode::InvalidConfig, "inner_refine_iters must be >= 0");
  if (ar_order < 1) fail(ErrorCode::InvalidConfig, "ar_order must be >= 1");
  if (mi_bins < 2) fail(ErrorCode::InvalidConfig, "mi_bins must be >= 2");
  if (strategy == Strategy::FixedPair && (fixed_k < 1 || !(fixed_alpha > 0.0)))
    fail(ErrorCode::InvalidConfig, "fixed_pair strategy needs fixed_k >= 1 and fixed_alpha > 0");
}

VmdEvaluator::VmdEvaluator(std::vector<double> series, vmd::VmdConfig base, int ar_order, int mi_bins)
    : series_(std::move(series)), base_(base), ar_order_(ar_order), mi_bins_(mi_bins) {}

const vmd::VmdResult& VmdEvaluator::decomposition(int num_modes, double alpha) {
  if (num_modes != current_k_) {
    current_.clear();
    current_k_ = num_modes;
  }
  auto it = current_.find(alpha);
  if (it != current_.end()) return it->second;
  vmd::VmdConfig cfg = base_;
  cfg.num_modes = num_modes;
  cfg.alpha = alpha;
  ++decompose_calls_;
  return current_.emplace(alpha, vmd::decompose(series_, cfg)).first->second;
}

double VmdEvaluator::mic(int num_modes, double alpha) {
  const auto& r = decomposition(num_modes, alpha);
  return criteria::mic(r.modes, r.num_modes, r.length, mi_bins_);
}

double VmdEvaluator::fic(int num_modes, double alpha) {
  const auto& r = decomposition(num_modes, alpha);
  return criteria::fic(r.modes, r.num_modes, r.length, ar_order_).value;
}

InnerResult inner_alpha_search(Evaluator& eval, int num_modes, const SearchSpace& space,
                               const SearchConfig& cfg, int restart_index, const TraceSink& trace) {
  if (num_modes < 2) fail(ErrorCode::KTooSmall, "inner search needs K >= 2");
  space.validate();
  cfg.validate();

  InnerResult out;
  double best_u = 0.0;
  double best_mic = kInf;

  auto score = [&](double u) {
    const double alpha = std::exp(u);
    TraceRecord rec{restart_index, num_modes, alpha, std::nullopt, std::nullopt, {}};
    double m = kInf;
    ++out.evaluations;
    try {
      m = eval.mic(num_modes, alpha);
      if (!std::isfinite(m)) {
        rec.error = "non-finite MIC";
        m = kInf;
      } else {
        rec.mic = m;
      }
    } catch (const std::exception& e) {
      rec.error = e.what();
    }
    emit(trace, rec);
    if (m < best_mic || (m == best_mic && std::isfinite(m) && u < best_u)) {
      best_mic = m;
      best_u = u;
    }
    return m;
  };

  const double lo = std::log(space.alpha_min);
  const double hi = std::log(space.alpha_max);
  const int g = cfg.inner_grid_points;
  const double cell = (hi - lo) / g;
  Rng rng(mix64(cfg.rng_seed ^ static_cast<std::uint64_t>(restart_index)));
  const double offset = uniform01(rng);

  std::vector<double> grid(g);
  std::vector<double> values(g);
  for (int i = 0; i < g; ++i) {
    grid[i] = lo + (i + offset) * cell;
    values[i] = score(grid[i]);
  }
  const int imin = static_cast<int>(std::min_element(values.begin(), values.end()) - values.begin());

  if (cfg.inner_refine_iters > 0 && std::isfinite(values[imin])) {
    double a = imin > 0 ? grid[imin - 1] : lo;
    double b = imin + 1 < g ? grid[imin + 1] : hi;
    double c = b - kGolden * (b - a);
    double d = a + kGolden * (b - a);
    double fc = score(c);
    double fd = score(d);
    for (int it = 1; it < cfg.inner_refine_iters; ++it) {
      if (fc <= fd) {
        b = d;
        d = c;
        fd = fc;
        c = b - kGolden * (b - a);
        fc = score(c);
      } else {
        a = c;
        c = d;
        fc = fd;
        d = a + kGolden * (b - a);
        fd = score(d);
      }
    }
  }

  out.failed = !std::isfinite(best_mic);
  out.mic = best_mic;
  out.alpha = out.failed ? 0.0 : std::exp(best_u);
  return out;
}

OuterResult outer_k_search(Evaluator& eval, const SearchSpace& space, const SearchConfig& cfg,
                           int restart_index, const TraceSink& trace) {
  space.validate();
  cfg.validate();
  OuterResult out;
  out.restart = restart_index;
  double best_fic = kInf;

  for (int k = space.k_min; k <= space.k_max; ++k) {
    KRow row;
    row.num_modes = k;
    const auto inner = inner_alpha_search(eval, k, space, cfg, restart_index, trace);
    if (inner.failed) {
      row.excluded = true;
      row.reason = "every alpha failed";
      row.mic = row.fic = std::numeric_limits<double>::quiet_NaN();
      out.table.push_back(row);
      continue;
    }
    row.alpha = inner.alpha;
    row.mic = inner.mic;
    TraceRecord rec{restart_index, k, inner.alpha, inner.mic, std::nullopt, {}};
    try {
      row.fic = eval.fic(k, inner.alpha);
      if (std::isnan(row.fic)) {
        row.excluded = true;
        row.reason = "FIC is NaN";
      } else {
        rec.fic = row.fic;
      }
    } catch (const std::exception& e) {
      row.excluded = true;
      row.reason = e.what();
      row.fic = std::numeric_limits<double>::quiet_NaN();
    }
    rec.error = row.reason;
    emit(trace, rec);
    if (!row.excluded && (out.best_k == 0 || row.fic < best_fic)) {
      best_fic = row.fic;
      out.best_k = k;
      out.best_alpha = row.alpha;
    }
    out.table.push_back(std::move(row));
  }
  return out;
}

SearchResult stackelberg_search(Evaluator& train_eval, const ValidationFn& validation,
                                const SearchSpace& space, const SearchConfig& cfg,
                                const TraceSink& trace) {
  space.validate();
  cfg.validate();
  SearchResult result;
  result.strategy = cfg.strategy;

  if (cfg.strategy == Strategy::FixedPair) {
    result.chosen_k = cfg.fixed_k;
    result.chosen_alpha = cfg.fixed_alpha;
    Candidate c{cfg.fixed_k, cfg.fixed_alpha, 0, std::numeric_limits<double>::quiet_NaN(), std::nullopt};
    if (validation) c.validation = validation(c.num_modes, c.alpha);
    result.candidates.push_back(c);
    return result;
  }

  for (int r = 0; r < cfg.n_restarts; ++r) {
    auto outer = outer_k_search(train_eval, space, cfg, r, trace);
    if (outer.has_choice()) {
      auto it = std::find_if(result.candidates.begin(), result.candidates.end(), [&](const Candidate& c) {
        return c.num_modes == outer.best_k && c.alpha == outer.best_alpha;
      });
      if (it == result.candidates.end())
        result.candidates.push_back({outer.best_k, outer.best_alpha, 1, best_fic_of(outer), std::nullopt});
      else
        ++it->votes;
    }
    result.restarts.push_back(std::move(outer));
  }
  if (result.candidates.empty())
    fail(ErrorCode::EmptyCandidateSet, "no restart produced a candidate (K, alpha) pair");

  std::sort(result.candidates.begin(), result.candidates.end(), [](const Candidate& a, const Candidate& b) {
    return a.num_modes != b.num_modes ? a.num_modes < b.num_modes : a.alpha < b.alpha;
  });

  // Candidates are in (K, alpha) order, so strict comparisons keep the smaller pair on ties.
  const Candidate* best = nullptr;
  if (validation) {
    for (auto& c : result.candidates) {
      c.validation = validation(c.num_modes, c.alpha);
      if (std::isnan(*c.validation)) continue;
      if (!best || *c.validation < *best->validation) best = &c;
    }
    if (!best) fail(ErrorCode::EmptyCandidateSet, "validation loss is NaN for every candidate");
  } else {
    // Exact alpha values rarely repeat across restarts, so vote on K and take
    // that K's lowest-FIC pair.
    std::map<int, int> k_votes;
    for (const auto& c : result.candidates) k_votes[c.num_modes] += c.votes;
    int k_star = 0;
    int most = 0;
    for (const auto& [k, v] : k_votes)
      if (v > most) {
        most = v;
        k_star = k;
      }
    for (const auto& c : result.candidates)
      if (c.num_modes == k_star && (!best || c.fic < best->fic)) best = &c;
  }
  result.chosen_k = best->num_modes;
  result.chosen_alpha = best->alpha;
  return result;
}

TraceSink jsonl_trace_writer(const std::string& path) {
  auto out = std::make_shared<std::ofstream>(path, std::ios::app);
  if (!*out) fail(ErrorCode::Io, "cannot open trace file " + path);
  return [out, path](const TraceRecord& rec) {
    json j{{"restart", rec.restart}, {"K", rec.num_modes}, {"alpha", rec.alpha}};
    j["mic"] = rec.mic ? number_or_token(*rec.mic) : json(nullptr);
    j["fic"] = rec.fic ? number_or_token(*rec.fic) : json(nullptr);
    if (!rec.error.empty()) j["error"] = rec.error;
    *out << j.dump() << '\n';
    out->flush();
    if (!*out) fail(ErrorCode::Io, "write failed on trace file " + path);
  };
}

void write_summary(const std::string& path, const SearchResult& result) {
  json j;
  j["chosen_k"] = result.chosen_k;
  j["chosen_alpha"] = result.chosen_alpha;
  j["strategy"] = result.strategy == Strategy::FixedPair ? "fixed_pair" : "stackelberg";
  j["candidates"] = json::array();
  for (const auto& c : result.candidates) {
    json cj{{"K", c.num_modes}, {"alpha", c.alpha}, {"votes", c.votes}, {"fic", number_or_token(c.fic)}};
    cj["validation"] = c.validation ? number_or_token(*c.validation) : json(nullptr);
    j["candidates"].push_back(cj);
  }
  j["restarts"] = json::array();
  for (const auto& r : result.restarts) {
    json rj{{"restart", r.restart}, {"best_k", r.best_k}, {"best_alpha", r.best_alpha}};
    rj["table"] = json::array();
    for (const auto& row : r.table) {
      json t{{"K", row.num_modes},
             {"alpha", row.alpha},
             {"mic", number_or_token(row.mic)},
             {"fic", number_or_token(row.fic)},
             {"excluded", row.excluded}};
      if (!row.reason.empty()) t["reason"] = row.reason;
      rj["table"].push_back(t);
    }
    j["restarts"].push_back(rj);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open summary file " + path);
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorCode::Io, "write failed on summary file " + path);
}

SearchResult read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open summary file " + path);
  SearchResult result;
  try {
    const json j = json::parse(in);
    result.chosen_k = j.at("chosen_k").get<int>();
    result.chosen_alpha = j.at("chosen_alpha").get<double>();
    result.strategy = j.value("strategy", "stackelberg") == "fixed_pair" ? Strategy::FixedPair : Strategy::Stackelberg;
    for (const auto& cj : j.at("candidates")) {
      Candidate c{cj.at("K").get<int>(), cj.at("alpha").get<double>(), cj.at("votes").get<int>(),
                  from_number_or_token(cj.at("fic")), std::nullopt};
      if (!cj.at("validation").is_null()) c.validation = from_number_or_token(cj.at("validation"));
      result.candidates.push_back(c);
    }
    for (const auto& rj : j.at("restarts")) {
      OuterResult r;
      r.restart = rj.at("restart").get<int>();
      r.best_k = rj.at("best_k").get<int>();
      r.best_alpha = rj.at("best_alpha").get<double>();
      for (const auto& t : rj.at("table")) {
        KRow row;
        row.num_modes = t.at("K").get<int>();
        row.alpha = t.at("alpha").get<double>();
        row.mic = from_number_or_token(t.at("mic"));
        row.fic = from_number_or_token(t.at("fic"));
        row.excluded = t.at("excluded").get<bool>();
        row.reason = t.value("reason", "");
        r.table.push_back(std::move(row));
      }
      result.restarts.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::ParseError, "summary file " + path + ": " + e.what());
  }
  if (result.chosen_k < 1 || !(result.chosen_alpha > 0.0))
    fail(ErrorCode::ParseError, "summary file " + path + " has no chosen pair");
  return result;
}

}  // namespace vmdnet::search
