#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hrs/likelihood.hpp"
#include "hrs/model.hpp"
#include "hrs/optimizer.hpp"
#include "hrs/trace.hpp"

namespace hrs {

struct FitConfig {
  std::size_t max_iters = 200;
  double loss_rel_tol = 1e-6;
  double param_lower_bound = 1e-6;
  std::size_t history_size = 10;
  /// Blocks held at their initial value (indexed by ParamBlock).
  std::array<bool, 4> frozen{false, false, false, false};
  /// Optional validation probe: hit rate of the given parameters. When set,
  /// the fit stops once a probe improves on the best so far by less than
  /// `validation_min_gain` (absolute).
  std::function<double(const HrsParams&)> validation_hit_rate;
  std::size_t validation_every = 5;
  double validation_min_gain = 0.001;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  void validate() const;
};

enum class StopReason { tolerance, max_iters, validation_plateau, line_search_failure };

std::string to_string(StopReason r);

struct FitReport {
  HrsParams final_params;
  std::vector<double> loss_trajectory;  // accepted iterates, starting point first
  std::vector<OptimizerStep> log;
  std::size_t iterations = 0;
  StopReason stop_reason = StopReason::max_iters;
  std::vector<double> validation_hit_rates;
};

/// Minimizes a prepared objective from `init`, honoring bounds and frozen blocks.
FitReport fit_problem(const LikelihoodProblem& prob, const HrsParams& init, const FitConfig& cfg);

/// Offline trainer on (ds.start, ds.horizon] with hp.M samples frozen by cfg.seed.
FitReport fit(const TraceDataset& ds, const Hyperparams& hp, const HrsParams& init,
              const FitConfig& cfg);

/// `iteration,loss,grad_norm,step` lines.
void write_fit_log(std::ostream& out, const FitReport& report);

}  // namespace hrs
