#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

namespace hrs {

/// Objective callback: returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const std::vector<double>& x, std::vector<double>& grad)>;

struct BoundedLbfgsOptions {
  std::size_t max_iters = 200;
  double rel_tol = 1e-6;      // |f_k - f_{k+1}| / max(|f_k|, |f_{k+1}|, 1)
  double pgrad_tol = 1e-10;   // projected-gradient sup norm
  std::size_t history = 10;
  double first_step = 1.0;    // length of the first (steepest-descent) move
  double armijo = 1e-4;
  std::size_t max_backtracks = 50;
};

enum class OptimizerStop { converged, max_iters, line_search_failure, callback };

struct OptimizerStep {
  std::size_t iteration = 0;
  double loss = 0.0;
  double pgrad_norm = 0.0;
  double step = 0.0;  // Euclidean length of the accepted move
};

struct OptimizerResult {
  std::vector<double> x;
  double loss = 0.0;
  std::vector<OptimizerStep> steps;  // steps[0] is the starting point
  OptimizerStop stop = OptimizerStop::max_iters;
};

/// Called after every accepted iterate; returning true stops the run.
using IterateCallback = std::function<bool(const std::vector<double>& x, const OptimizerStep&)>;

/// Limited-memory BFGS with lower bounds, in the spirit of L-BFGS-B: the
/// quasi-Newton direction is computed on the free variables (those not held
/// at a bound by a positive gradient, and not listed in `fixed`), the trial
/// point is projected onto the box and accepted under an Armijo condition
/// along the projected path. Every accepted step strictly lowers f.
OptimizerResult minimize_bounded(const Objective& f, std::vector<double> x0,
                                 const std::vector<double>& lower,
                                 const std::vector<bool>& fixed,
                                 const BoundedLbfgsOptions& opts,
                                 const IterateCallback& on_iterate = nullptr);

}  // namespace hrs
