#include "hrs/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <stdexcept>

namespace hrs {
namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

struct Pair {
  std::vector<double> s, y;
  double rho;
};

}  // namespace

OptimizerResult minimize_bounded(const Objective& f, std::vector<double> x0,
                                 const std::vector<double>& lower,
                                 const std::vector<bool>& fixed,
                                 const BoundedLbfgsOptions& opts,
                                 const IterateCallback& on_iterate) {
  const std::size_t n = x0.size();
  if (lower.size() != n || fixed.size() != n) throw std::invalid_argument("bound size mismatch");
  for (std::size_t i = 0; i < n; ++i) x0[i] = std::max(x0[i], lower[i]);

  std::vector<double> x = std::move(x0), g(n), gnew(n), xnew(n), d(n), q(n);
  double fx = f(x, g);
  if (!std::isfinite(fx)) throw std::runtime_error("objective is not finite at the start");

  auto is_active = [&](std::size_t i, const std::vector<double>& grad, const std::vector<double>& at) {
    return fixed[i] || (at[i] <= lower[i] && grad[i] > 0.0);
  };
  auto pgrad_norm = [&](const std::vector<double>& at, const std::vector<double>& grad) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (!is_active(i, grad, at)) m = std::max(m, std::abs(grad[i]));
    return m;
  };

  OptimizerResult res;
  res.steps.push_back({0, fx, pgrad_norm(x, g), 0.0});
  std::deque<Pair> mem;
  bool fresh = true;

  for (std::size_t iter = 1; iter <= opts.max_iters; ++iter) {
    if (pgrad_norm(x, g) <= opts.pgrad_tol) {
      res.stop = OptimizerStop::converged;
      break;
    }

    // Two-loop recursion restricted to the free set.
    for (std::size_t i = 0; i < n; ++i) q[i] = is_active(i, g, x) ? 0.0 : g[i];
    std::vector<double> alphas(mem.size());
    for (std::size_t k = mem.size(); k-- > 0;) {
      alphas[k] = mem[k].rho * dot(mem[k].s, q);
      for (std::size_t i = 0; i < n; ++i) q[i] -= alphas[k] * mem[k].y[i];
    }
    if (!mem.empty()) {
      const auto& last = mem.back();
      const double scale = dot(last.s, last.y) / dot(last.y, last.y);
      for (auto& v : q) v *= scale;
    }
    for (std::size_t k = 0; k < mem.size(); ++k) {
      const double b = mem[k].rho * dot(mem[k].y, q);
      for (std::size_t i = 0; i < n; ++i) q[i] += mem[k].s[i] * (alphas[k] - b);
    }
    for (std::size_t i = 0; i < n; ++i) d[i] = is_active(i, g, x) ? 0.0 : -q[i];

    if (dot(g, d) >= 0.0) {
      mem.clear();
      fresh = true;
      for (std::size_t i = 0; i < n; ++i) d[i] = is_active(i, g, x) ? 0.0 : -g[i];
    }

    double step = 1.0;
    if (fresh) step = opts.first_step / std::max(norm2(d), 1e-300);

    bool accepted = false;
    double fnew = 0.0;
    for (std::size_t bt = 0; bt < opts.max_backtracks; ++bt, step *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) xnew[i] = std::max(lower[i], x[i] + step * d[i]);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += g[i] * (xnew[i] - x[i]);
      if (decrease >= 0.0) continue;
      try {
        fnew = f(xnew, gnew);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (std::isfinite(fnew) && fnew <= fx + opts.armijo * decrease && fnew < fx) {
        accepted = true;
        break;
      }
    }

    if (!accepted) {
      if (!fresh) {
        // Stale curvature pairs; retry from steepest descent.
        mem.clear();
        fresh = true;
        --iter;
        continue;
      }
      res.stop = OptimizerStop::line_search_failure;
      break;
    }

    Pair pr;
    pr.s.resize(n);
    pr.y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      pr.s[i] = xnew[i] - x[i];
      pr.y[i] = gnew[i] - g[i];
    }
    const double sy = dot(pr.s, pr.y);
    const double moved = norm2(pr.s);
    if (sy > 1e-10 * dot(pr.y, pr.y)) {
      pr.rho = 1.0 / sy;
      mem.push_back(std::move(pr));
      if (mem.size() > opts.history) mem.pop_front();
      fresh = false;
    }

    const double rel = std::abs(fx - fnew) / std::max({std::abs(fx), std::abs(fnew), 1.0});
    x.swap(xnew);
    g.swap(gnew);
    fx = fnew;
    const OptimizerStep rec{iter, fx, pgrad_norm(x, g), moved};
    res.steps.push_back(rec);

    if (on_iterate && on_iterate(x, rec)) {
      res.stop = OptimizerStop::callback;
      break;
    }
    if (rel < opts.rel_tol) {
      res.stop = OptimizerStop::converged;
      break;
    }
    if (iter == opts.max_iters) res.stop = OptimizerStop::max_iters;
  }

  res.x = std::move(x);
  res.loss = fx;
  return res;
}

}  // namespace hrs
