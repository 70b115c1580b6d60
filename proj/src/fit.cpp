#include "hrs/fit.hpp"

#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "hrs/format.hpp"

namespace hrs {

void FitConfig::validate() const {
  if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
  if (!(loss_rel_tol > 0.0)) throw std::invalid_argument("loss_rel_tol must be > 0");
  if (!(param_lower_bound > 0.0)) throw std::invalid_argument("param_lower_bound must be > 0");
  if (history_size < 1) throw std::invalid_argument("history_size must be >= 1");
}

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::tolerance: return "tolerance";
    case StopReason::max_iters: return "max_iters";
    case StopReason::validation_plateau: return "validation_plateau";
    case StopReason::line_search_failure: return "line_search_failure";
  }
  return "unknown";
}

FitReport fit_problem(const LikelihoodProblem& prob, const HrsParams& init, const FitConfig& cfg) {
  cfg.validate();
  init.validate();
  const std::size_t c = prob.catalog;
  if (init.size() != c) throw std::invalid_argument("initial parameters do not match catalog");

  std::vector<double> lower(4 * c, cfg.param_lower_bound);
  std::vector<bool> fixed(4 * c, false);
  for (int k = 0; k < 4; ++k)
    if (cfg.frozen[k])
      for (std::size_t i = 0; i < c; ++i) {
        fixed[k * c + i] = true;
        // A frozen value may sit below the bound; keep it where it is.
        lower[k * c + i] = std::min(cfg.param_lower_bound, init.block(static_cast<ParamBlock>(k))[i]);
      }

  // The search runs over u = log(theta): the blocks differ by orders of
  // magnitude and this keeps one step length sensible for all of them.
  // Frozen coordinates keep their exact initial values.
  const std::vector<double> theta0 = init.flatten();
  std::vector<double> u0(theta0.size()), lower_u(theta0.size());
  for (std::size_t j = 0; j < u0.size(); ++j) {
    u0[j] = std::log(theta0[j]);
    lower_u[j] = std::log(lower[j]);
  }
  auto to_theta = [&](const std::vector<double>& u) {
    std::vector<double> th(u.size());
    for (std::size_t j = 0; j < u.size(); ++j)
      th[j] = fixed[j] ? theta0[j] : u[j] <= lower_u[j] ? lower[j] : std::max(std::exp(u[j]), lower[j]);
    return th;
  };

  Objective objective = [&](const std::vector<double>& u, std::vector<double>& grad) {
    const std::vector<double> th = to_theta(u);
    LossAndGrad lg = penalized_loss_and_grad(prob, HrsParams::unflatten(th, c));
    grad.resize(u.size());
    for (std::size_t j = 0; j < u.size(); ++j) grad[j] = lg.grad[j] * th[j];
    return lg.loss;
  };

  {
    std::vector<double> g0;
    const double f0 = objective(u0, g0);
    if (!std::isfinite(f0)) throw std::runtime_error("loss is not finite at the initial point");
  }

  BoundedLbfgsOptions opts;
  opts.max_iters = cfg.max_iters;
  opts.rel_tol = cfg.loss_rel_tol;
  opts.history = cfg.history_size;
  opts.first_step = prob.hp.eta;

  FitReport report;
  double best_hit = -std::numeric_limits<double>::infinity();
  bool plateau = false;
  IterateCallback probe;
  if (cfg.validation_hit_rate) {
    best_hit = cfg.validation_hit_rate(init);
    report.validation_hit_rates.push_back(best_hit);
    probe = [&](const std::vector<double>& x, const OptimizerStep& st) {
      if (st.iteration % cfg.validation_every != 0) return false;
      const double hr = cfg.validation_hit_rate(HrsParams::unflatten(to_theta(x), c));
      report.validation_hit_rates.push_back(hr);
      const bool stop = hr - best_hit < cfg.validation_min_gain;
      best_hit = std::max(best_hit, hr);
      plateau = stop;
      return stop;
    };
  }

  OptimizerResult res = minimize_bounded(objective, u0, lower_u, fixed, opts, probe);
  report.final_params = HrsParams::unflatten(to_theta(res.x), c);
  report.log = res.steps;
  for (const auto& st : res.steps) report.loss_trajectory.push_back(st.loss);
  report.iterations = res.steps.empty() ? 0 : res.steps.back().iteration;
  switch (res.stop) {
    case OptimizerStop::converged: report.stop_reason = StopReason::tolerance; break;
    case OptimizerStop::max_iters: report.stop_reason = StopReason::max_iters; break;
    case OptimizerStop::line_search_failure:
      report.stop_reason = StopReason::line_search_failure;
      break;
    case OptimizerStop::callback:
      report.stop_reason = plateau ? StopReason::validation_plateau : StopReason::tolerance;
      break;
  }
  return report;
}

FitReport fit(const TraceDataset& ds, const Hyperparams& hp, const HrsParams& init,
              const FitConfig& cfg) {
  const LikelihoodProblem prob = LikelihoodProblem::offline(ds, hp, cfg.seed, cfg.threads);
  return fit_problem(prob, init, cfg);
}

void write_fit_log(std::ostream& out, const FitReport& report) {
  out << "iteration,loss,grad_norm,step\n";
  for (const auto& st : report.log)
    out << st.iteration << ',' << format_real(st.loss) << ',' << format_real(st.pgrad_norm) << ','
        << format_real(st.step) << '\n';
}

}  // namespace hrs
