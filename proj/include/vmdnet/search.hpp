#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vmdnet/vmd.hpp"

namespace vmdnet::search {

struct SearchSpace {
  int k_min = 2;
  int k_max = 15;
  double alpha_min = 500.0;
  double alpha_max = 10000.0;

  void validate() const;
};

enum class Strategy { Stackelberg, FixedPair };

struct SearchConfig {
  int n_restarts = 20;
  int inner_grid_points = 8;
  int inner_refine_iters = 6;
  int ar_order = 2;
  int mi_bins = 16;
  std::uint64_t rng_seed = 0;
  Strategy strategy = Strategy::Stackelberg;
  // Used only with Strategy::FixedPair.
  int fixed_k = 0;
  double fixed_alpha = 0.0;

  void validate() const;
};

/// Scores (K, alpha) candidates. mic() is the follower objective, fic() the
/// leader objective. Either may throw; the search treats a throw as a failed
/// candidate.
class Evaluator {
 public:
  virtual ~Evaluator() = default;
  virtual double mic(int num_modes, double alpha) = 0;
  virtual double fic(int num_modes, double alpha) = 0;
};

/// Decomposes the series with VMD and scores the modes. Decompositions for the
/// most recently requested K are kept, so fic() at an alpha already passed to
/// mic() does not decompose again.
class VmdEvaluator final : public Evaluator {
 public:
  VmdEvaluator(std::vector<double> series, vmd::VmdConfig base, int ar_order = 2, int mi_bins = 16);

  double mic(int num_modes, double alpha) override;
  double fic(int num_modes, double alpha) override;

  std::size_t decompose_calls() const { return decompose_calls_; }

 private:
  const vmd::VmdResult& decomposition(int num_modes, double alpha);

  std::vector<double> series_;
  vmd::VmdConfig base_;
  int ar_order_;
  int mi_bins_;
  int current_k_ = 0;
  std::map<double, vmd::VmdResult> current_;
  std::size_t decompose_calls_ = 0;
};

/// One criterion evaluation. Unset values were not computed or failed.
struct TraceRecord {
  int restart = 0;
  int num_modes = 0;
  double alpha = 0.0;
  std::optional<double> mic;
  std::optional<double> fic;
  std::string error;
};

using TraceSink = std::function<void(const TraceRecord&)>;

struct InnerResult {
  double alpha = 0.0;
  double mic = 0.0;
  bool failed = false;  // every candidate alpha failed
  int evaluations = 0;
};

/// Follower: log-uniform grid over the alpha range, shifted by a random
/// fraction of a cell drawn from rng_seed ^ restart_index, then golden-section
/// steps in log-alpha between the neighbours of the grid minimum.
InnerResult inner_alpha_search(Evaluator& eval, int num_modes, const SearchSpace& space,
                               const SearchConfig& cfg, int restart_index,
                               const TraceSink& trace = {});

struct KRow {
  int num_modes = 0;
  double alpha = 0.0;
  double mic = 0.0;
  double fic = 0.0;
  bool excluded = false;
  std::string reason;
};

struct OuterResult {
  int restart = 0;
  std::vector<KRow> table;
  int best_k = 0;  // 0 when every K was excluded
  double best_alpha = 0.0;
  bool has_choice() const { return best_k > 0; }
};

/// Leader: FIC at each K's follower response; argmin with ties to smaller K.
OuterResult outer_k_search(Evaluator& eval, const SearchSpace& space, const SearchConfig& cfg,
                           int restart_index, const TraceSink& trace = {});

/// Validation loss of a candidate pair.
using ValidationFn = std::function<double(int num_modes, double alpha)>;

struct Candidate {
  int num_modes = 0;
  double alpha = 0.0;
  int votes = 0;  // restarts that chose exactly this pair
  double fic = 0.0;
  std::optional<double> validation;
};

struct SearchResult {
  int chosen_k = 0;
  double chosen_alpha = 0.0;
  Strategy strategy = Strategy::Stackelberg;
  std::vector<OuterResult> restarts;
  /// Distinct restart winners ordered by (K, alpha).
  std::vector<Candidate> candidates;
};

/// Runs n_restarts outer searches. With a validation function the candidate
/// with the lowest loss wins. Otherwise the K chosen by most restarts wins and,
/// within it, the pair with the lowest FIC. Ties go to smaller K, then smaller
/// alpha.
SearchResult stackelberg_search(Evaluator& train_eval, const ValidationFn& validation,
                                const SearchSpace& space, const SearchConfig& cfg,
                                const TraceSink& trace = {});

/// Appends one JSON object per record to `path`.
TraceSink jsonl_trace_writer(const std::string& path);

void write_summary(const std::string& path, const SearchResult& result);
SearchResult read_summary(const std::string& path);

}  // namespace vmdnet::search
