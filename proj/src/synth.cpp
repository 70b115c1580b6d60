#include "hrs/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>

#include "hrs/rng.hpp"

namespace hrs {
namespace {

struct VideoTrace {
  std::vector<double> events;
  std::vector<double> negatives;
};

VideoTrace generate_video(const SynthSpec& spec, VideoId i, const std::vector<double>& schedule) {
  const Hyperparams& hp = spec.hp;
  const double beta = spec.true_params.beta[i], omega = spec.true_params.omega[i];
  const double alpha = spec.true_params.alpha[i], gamma = spec.true_params.gamma[i];
  const bool cold_rule = !spec.negative_schedule.has_value();
  const double inf = std::numeric_limits<double>::infinity();

  CounterRng rng(derive_seed(spec.seed, i));
  VideoTrace out;
  double t = 0.0, phi = 0.0, psi = 0.0, n = 0.0;
  double cold_due = inf;
  std::size_t next_sched = 0;

  auto advance = [&](double to) {
    phi *= std::exp(-hp.delta0 * (to - t));
    psi *= std::exp(-hp.delta1 * (to - t));
    t = to;
  };

  while (true) {
    const double next_neg =
        cold_rule ? cold_due : (next_sched < schedule.size() ? schedule[next_sched] : inf);
    // Phi only decays and Psi only lowers the rate until the next request.
    const double bound = softplus(beta + omega * phi, hp.s);
    const double cand = t + rng.exponential(bound);
    const double u = rng.uniform();

    if (next_neg < cand && next_neg < spec.horizon) {
      advance(next_neg);
      psi += 1.0;
      out.negatives.push_back(next_neg);
      if (cold_rule)
        cold_due = inf;
      else
        ++next_sched;
      continue;
    }
    if (cand > spec.horizon) break;

    advance(cand);
    const double rate = softplus(beta + omega * phi - gamma * psi, hp.s);
    if (rate > bound * (1.0 + 1e-12))
      throw std::logic_error("thinning bound violated for video " + std::to_string(i));
    if (u * bound <= rate) {
      out.events.push_back(cand);
      n += 1.0;
      phi += std::exp(-alpha * n);
      if (cold_rule) cold_due = cand + spec.cold_period;
    }
  }
  return out;
}

}  // namespace

TraceDataset generate(const SynthSpec& spec) {
  spec.hp.validate();
  spec.true_params.validate();
  if (!(spec.horizon > 0.0)) throw std::invalid_argument("horizon must be > 0");
  const std::size_t c = spec.true_params.size();

  std::vector<std::vector<double>> schedules(c);
  if (spec.negative_schedule) {
    for (const auto& n : *spec.negative_schedule) {
      if (n.video >= c) throw std::out_of_range("scheduled negative outside catalog");
      if (n.time > 0.0 && n.time <= spec.horizon) schedules[n.video].push_back(n.time);
    }
    for (auto& s : schedules) std::sort(s.begin(), s.end());
  } else if (!(spec.cold_period > 0.0)) {
    throw std::invalid_argument("cold_period must be > 0");
  }

  TraceDataset ds;
  ds.catalog_size = c;
  ds.start = 0.0;
  ds.horizon = spec.horizon;
  ds.epoch = 0.0;
  ds.id_map.reserve(c);
  for (std::size_t i = 0; i < c; ++i) ds.id_map.push_back("v" + std::to_string(i));

  for (std::size_t i = 0; i < c; ++i) {
    const auto vid = static_cast<VideoId>(i);
    VideoTrace vt = generate_video(spec, vid, schedules[i]);
    for (double t : vt.events) {
      RequestEvent ev;
      ev.video = vid;
      ev.time = t;
      ev.user = "u";
      ev.province = "synth";
      ev.city = spec.city;
      ds.events.push_back(std::move(ev));
    }
    for (double t : vt.negatives) ds.negatives.push_back({vid, t});
  }
  auto by_time_then_id = [](const auto& a, const auto& b) {
    return a.time < b.time || (a.time == b.time && a.video < b.video);
  };
  std::sort(ds.events.begin(), ds.events.end(), by_time_then_id);
  std::sort(ds.negatives.begin(), ds.negatives.end(), by_time_then_id);
  return ds;
}

HrsParams sample_true_params(std::size_t catalog, std::uint64_t seed, const TruthRanges& r) {
  CounterRng rng(derive_seed(seed, 0x7275746875ULL));
  HrsParams p(catalog);
  for (std::size_t i = 0; i < catalog; ++i) {
    p.beta[i] = std::exp(rng.uniform(std::log(r.beta_lo), std::log(r.beta_hi)));
    p.omega[i] = rng.uniform(r.omega_lo, r.omega_hi);
    p.alpha[i] = rng.uniform(r.alpha_lo, r.alpha_hi);
    p.gamma[i] = rng.uniform(r.gamma_lo, r.gamma_hi);
  }
  return p;
}

nlohmann::json synth_manifest(const SynthSpec& spec) {
  nlohmann::json j;
  j["seed"] = spec.seed;
  j["horizon_hours"] = spec.horizon;
  j["hyperparams"] = to_json(spec.hp);
  if (spec.negative_schedule) {
    j["negatives"] = "schedule";
  } else {
    j["negatives"] = "cold_rule";
    j["cold_period_hours"] = spec.cold_period;
  }
  const HrsParams& p = spec.true_params;
  j["true_params"] = {{"beta", p.beta}, {"omega", p.omega}, {"alpha", p.alpha}, {"gamma", p.gamma}};
  return j;
}

void save_synthetic(const std::filesystem::path& dir, const TraceDataset& ds,
                    const SynthSpec& spec, nlohmann::json extra) {
  extra["synth"] = synth_manifest(spec);
  save_dataset(dir, ds, extra);
  std::ofstream out(dir / "true_params.csv");
  if (!out) throw std::runtime_error("cannot write " + (dir / "true_params.csv").string());
  write_params_csv(out, spec.true_params);
}

}  // namespace hrs
