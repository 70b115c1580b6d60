#include "hrs/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "hrs/format.hpp"
#include "hrs/parallel.hpp"
#include "hrs/rng.hpp"

namespace hrs {

LikelihoodProblem LikelihoodProblem::offline(const TraceDataset& ds, const Hyperparams& hp,
                                             std::uint64_t seed, unsigned threads) {
  hp.validate();
  if (!(ds.horizon > ds.start)) throw std::invalid_argument("training window must be non-empty");
  VideoTimelines tl = group_by_video(ds);
  LikelihoodProblem prob;
  prob.catalog = ds.catalog_size;
  prob.window_start = ds.start;
  prob.window_end = ds.horizon;
  prob.events = std::move(tl.events);
  prob.first_scored.assign(prob.catalog, 0);
  prob.negatives = std::move(tl.negatives);
  prob.psi0.assign(prob.catalog, 0.0);
  prob.psi_origin = ds.start;
  prob.n_base.assign(prob.catalog, 0);
  prob.samples = draw_samples(hp.M, ds.start, ds.horizon, seed);
  prob.hp = hp;
  prob.threads = threads;
  return prob;
}

std::vector<double> draw_samples(std::size_t count, double lo, double hi, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> out(count);
  for (auto& t : out) t = rng.uniform(lo, hi);
  std::sort(out.begin(), out.end());
  return out;
}

namespace {

// Decay factors between consecutive samples, shared by every video.
struct SampleDecay {
  std::vector<double> d0, d1;
};

SampleDecay sample_decay(const LikelihoodProblem& prob) {
  SampleDecay out;
  const auto& s = prob.samples;
  out.d0.resize(s.size(), 1.0);
  out.d1.resize(s.size(), 1.0);
  for (std::size_t m = 1; m < s.size(); ++m) {
    out.d0[m] = std::exp(-prob.hp.delta0 * (s[m] - s[m - 1]));
    out.d1[m] = std::exp(-prob.hp.delta1 * (s[m] - s[m - 1]));
  }
  return out;
}

// softplus and softplus_prime with one exp. Past z = 40 the correction
// terms are below half an ulp, so the shortcut returns the same doubles.
inline void softplus_both(double x, double s, double& value, double& slope) {
  const double z = x / s;
  if (z > 40.0) {
    value = x;
    slope = 1.0;
    return;
  }
  const double e = std::exp(-std::abs(z));
  const double v = z > 0.0 ? x + s * std::log1p(e) : s * std::log1p(e);
  value = std::max(v, std::numeric_limits<double>::min());
  slope = z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
}

VideoTerms sweep_video(const LikelihoodProblem& prob, VideoId i, const HrsParams& p,
                       bool with_integral, const SampleDecay* table) {
  const Hyperparams& hp = prob.hp;
  const double beta = p.beta[i], omega = p.omega[i], alpha = p.alpha[i], gamma = p.gamma[i];
  const auto& events = prob.events[i];
  const auto& negs = prob.negatives[i];
  const auto& samples = prob.samples;
  const std::size_t first_scored = prob.first_scored[i];

  double phi = 0.0, gam = 0.0, phi_t = -std::numeric_limits<double>::infinity();
  double psi = prob.psi0[i], psi_t = prob.psi_origin;
  double n = static_cast<double>(prob.n_base[i]);

  auto decay_to = [&](double t) {
    if (phi != 0.0 || gam != 0.0) {
      const double d = std::exp(-hp.delta0 * (t - phi_t));
      phi *= d;
      gam *= d;
    }
    phi_t = t;
    // History requests may precede psi_origin; Psi is only defined from there on.
    if (t > psi_t) {
      if (psi != 0.0) psi *= std::exp(-hp.delta1 * (t - psi_t));
      psi_t = t;
    }
  };

  VideoTerms out;
  double isum = 0.0, ig[4] = {0, 0, 0, 0};
  std::size_t ie = 0, in = 0, is = with_integral ? 0 : samples.size();
  const double inf = std::numeric_limits<double>::infinity();

  while (ie < events.size() || in < negs.size() || is < samples.size()) {
    const double te = ie < events.size() ? events[ie] : inf;
    const double tn = in < negs.size() ? negs[in] : inf;
    const double ts = is < samples.size() ? samples[is] : inf;

    if (ts <= te && ts <= tn) {
      if (table && is > 0 && phi_t == samples[is - 1] && psi_t == samples[is - 1]) {
        if (phi != 0.0 || gam != 0.0) {
          phi *= table->d0[is];
          gam *= table->d0[is];
        }
        if (psi != 0.0) psi *= table->d1[is];
        phi_t = psi_t = ts;
      } else {
        decay_to(ts);
      }
      const double tilde = beta + omega * phi - gamma * psi;
      double value, sp;
      softplus_both(tilde, hp.s, value, sp);
      isum += value;
      ig[0] += sp;
      ig[1] += sp * phi;
      ig[2] -= sp * omega * gam;
      ig[3] -= sp * psi;
      ++is;
    } else if (te <= tn) {
      decay_to(te);
      if (ie >= first_scored) {
        const double tilde = beta + omega * phi - gamma * psi;
        const double hat = softplus(tilde, hp.s);
        const double w = softplus_prime(tilde, hp.s) / hat;
        out.event_ll += std::log(hat);
        out.event_grad[0] += w;
        out.event_grad[1] += w * phi;
        out.event_grad[2] -= w * omega * gam;
        out.event_grad[3] -= w * psi;
      }
      n += 1.0;
      const double damp = std::exp(-alpha * n);
      phi += damp;
      gam += n * damp;
      ++ie;
    } else {
      if (psi != 0.0) psi *= std::exp(-hp.delta1 * (tn - psi_t));
      psi_t = tn;
      psi += 1.0;
      ++in;
    }
  }

  const double w = prob.sample_weight();
  out.integral = w * isum;
  for (int k = 0; k < 4; ++k) out.integral_grad[k] = w * ig[k];
  return out;
}

}  // namespace

VideoTerms evaluate_video(const LikelihoodProblem& prob, VideoId i, const HrsParams& p,
                          bool with_integral) {
  return sweep_video(prob, i, p, with_integral, nullptr);
}

Evaluation evaluate(const LikelihoodProblem& prob, const HrsParams& p, bool with_integral) {
  const std::size_t c = prob.catalog;
  if (p.size() != c) throw std::invalid_argument("parameter size does not match catalog");
  Evaluation ev;
  ev.per_video.resize(c);
  const SampleDecay table = with_integral ? sample_decay(prob) : SampleDecay{};
  parallel_for(c, prob.threads, [&](std::size_t i) {
    ev.per_video[i] = sweep_video(prob, static_cast<VideoId>(i), p, with_integral, with_integral ? &table : nullptr);
  });
  ev.event_grad.assign(4 * c, 0.0);
  ev.integral_grad.assign(4 * c, 0.0);
  for (std::size_t i = 0; i < c; ++i) {
    const VideoTerms& t = ev.per_video[i];
    if (!std::isfinite(t.event_ll) || !std::isfinite(t.integral))
      throw NonFiniteLoss(static_cast<VideoId>(i));
    ev.event_ll += t.event_ll;
    ev.integral += t.integral;
    for (int k = 0; k < 4; ++k) {
      ev.event_grad[k * c + i] = t.event_grad[k];
      ev.integral_grad[k * c + i] = t.integral_grad[k];
    }
  }
  return ev;
}

LossAndGrad penalized_loss_and_grad(const LikelihoodProblem& prob, const HrsParams& p) {
  const Evaluation ev = evaluate(prob, p, true);
  const std::size_t c = prob.catalog;
  const Hyperparams& hp = prob.hp;
  const double rho[4] = {hp.rho_beta, hp.rho_omega, hp.rho_alpha, hp.rho_gamma};
  LossAndGrad out;
  out.loss = -(ev.event_ll - ev.integral);
  out.grad.resize(4 * c);
  for (int k = 0; k < 4; ++k) {
    const auto& theta = p.block(static_cast<ParamBlock>(k));
    double sq = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
      sq += theta[i] * theta[i];
      const std::size_t j = k * c + i;
      out.grad[j] = -(ev.event_grad[j] - ev.integral_grad[j]) + rho[k] * theta[i];
    }
    out.loss += 0.5 * rho[k] * sq;
  }
  if (!std::isfinite(out.loss)) {
    for (std::size_t i = 0; i < c; ++i)
      for (int k = 0; k < 4; ++k)
        if (!std::isfinite(out.grad[k * c + i])) throw NonFiniteLoss(static_cast<VideoId>(i));
    throw NonFiniteLoss(0);
  }
  return out;
}

TermValue event_term(const TraceDataset& ds, const HrsParams& p, const Hyperparams& hp) {
  Hyperparams h = hp;
  h.M = 1;
  LikelihoodProblem prob = LikelihoodProblem::offline(ds, h, 0);
  prob.samples.clear();
  const Evaluation ev = evaluate(prob, p, false);
  return {ev.event_ll, ev.event_grad};
}

TermValue mc_integral_term(const TraceDataset& ds, const HrsParams& p, const Hyperparams& hp,
                           std::uint64_t seed) {
  const LikelihoodProblem prob = LikelihoodProblem::offline(ds, hp, seed);
  const Evaluation ev = evaluate(prob, p, true);
  return {ev.integral, ev.integral_grad};
}

LossAndGrad penalized_loss_and_grad(const WindowedLikelihoodInput& input) {
  const LikelihoodProblem prob = LikelihoodProblem::offline(input.ds, input.hp, input.rng_seed);
  return penalized_loss_and_grad(prob, input.p);
}

void write_contributions(std::ostream& out, const Evaluation& eval) {
  out << "video_id,event_ll,integral\n";
  for (std::size_t i = 0; i < eval.per_video.size(); ++i)
    out << i << ',' << format_real(eval.per_video[i].event_ll) << ','
        << format_real(eval.per_video[i].integral) << '\n';
}

}  // namespace hrs
