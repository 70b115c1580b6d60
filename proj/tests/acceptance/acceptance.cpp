// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hrs/cache.hpp"
#include "hrs/fit.hpp"
#include "hrs/likelihood.hpp"
#include "hrs/online.hpp"
#include "hrs/rng.hpp"
#include "hrs/synth.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace hrs;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4g", x);
  return buf;
}

oracle::Knobs knobs(const Hyperparams& hp) { return {hp.delta0, hp.delta1, hp.s}; }

oracle::Theta theta_of(const HrsParams& p, std::size_t i) {
  return {p.beta[i], p.omega[i], p.alpha[i], p.gamma[i]};
}

TraceDataset random_instance(std::size_t videos, std::size_t events, std::size_t negatives,
                             double horizon, std::uint64_t seed) {
  CounterRng rng(seed);
  TraceDataset ds;
  ds.catalog_size = videos;
  ds.horizon = horizon;
  for (std::size_t k = 0; k < events; ++k)
    ds.events.push_back({static_cast<VideoId>(k % videos), rng.uniform(0.0, horizon), "", "", ""});
  for (std::size_t k = 0; k < negatives; ++k)
    ds.negatives.push_back({static_cast<VideoId>(k % videos), rng.uniform(0.0, horizon)});
  auto by_time = [](const auto& a, const auto& b) { return a.time < b.time; };
  std::sort(ds.events.begin(), ds.events.end(), by_time);
  std::sort(ds.negatives.begin(), ds.negatives.end(), by_time);
  return ds;
}

HrsParams random_params(std::size_t c, std::uint64_t seed) {
  CounterRng rng(seed);
  HrsParams p(c);
  for (std::size_t i = 0; i < c; ++i) {
    p.beta[i] = rng.uniform(0.2, 1.5);
    p.omega[i] = rng.uniform(0.1, 1.0);
    p.alpha[i] = rng.uniform(0.05, 0.5);
    p.gamma[i] = rng.uniform(0.05, 0.5);
  }
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HRS_BINARY) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("hrs_accept_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// ---- 1: analytic gradient vs central differences ----
Outcome gradient_check() {
  const TraceDataset ds = random_instance(5, 50, 10, 12.0, 21);
  Hyperparams hp;
  hp.M = 4000;
  const LikelihoodProblem prob = LikelihoodProblem::offline(ds, hp, 77);
  const HrsParams p = random_params(5, 22);
  const auto an = penalized_loss_and_grad(prob, p).grad;
  std::vector<double> x = p.flatten();
  double worst = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double h = 1e-5 * std::abs(x[j]);
    std::vector<double> a = x, b = x;
    a[j] += h;
    b[j] -= h;
    const double fd = (penalized_loss_and_grad(prob, HrsParams::unflatten(a, 5)).loss -
                       penalized_loss_and_grad(prob, HrsParams::unflatten(b, 5)).loss) /
                      (2 * h);
    worst = std::max(worst, oracle::rel_err(an[j], fd, 1e-8));
  }
  return {worst < 1e-4, "max relative error " + fmt(worst) + " over " + std::to_string(x.size()) + " coordinates"};
}

// ---- 2: Monte-Carlo integral vs quadrature ----
Outcome mc_integral_check() {
  const TraceDataset ds = random_instance(2, 10, 3, 10.0, 5);
  Hyperparams hp;
  hp.M = 1000000;
  const HrsParams p = random_params(2, 6);
  const double mc = mc_integral_term(ds, p, hp, 99).value;

  const VideoTimelines tl = group_by_video(ds);
  double quad = 0.0;
  for (std::size_t i = 0; i < 2; ++i)
    quad += oracle::trapezoid(
        [&](double t) { return oracle::intensity(tl.events[i], tl.negatives[i], t, theta_of(p, i), knobs(hp)); },
        ds.start, ds.horizon, 1000000);
  const double rel = oracle::rel_err(mc, quad);
  return {rel < 0.01, "MC " + fmt(mc) + " vs quadrature " + fmt(quad) + ", relative " + fmt(rel)};
}

// ---- 3: incremental refresh vs batch sums ----
Outcome incremental_check() {
  const std::size_t videos = 10;
  const double horizon = 48.0;
  const TraceDataset ds = random_instance(videos, 500, 60, horizon, 31);
  Hyperparams hp;
  CounterRng rng(32);
  HrsParams p(videos);
  for (auto& a : p.alpha) a = rng.uniform(0.001, 0.3);

  const VideoTimelines tl = group_by_video(ds);
  std::vector<oracle::Sums> ref;
  for (std::size_t i = 0; i < videos; ++i)
    ref.push_back(oracle::direct_sums(tl.events[i], tl.negatives[i], horizon, p.alpha[i], knobs(hp)));

  std::vector<std::vector<double>> partitions;
  partitions.push_back({horizon});
  {
    std::vector<double> hourly;
    for (int h = 1; h <= 48; ++h) hourly.push_back(h);
    partitions.push_back(hourly);
  }
  {
    std::vector<double> per_event;
    for (const auto& e : ds.events) per_event.push_back(e.time);
    per_event.push_back(horizon);
    partitions.push_back(per_event);
  }
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> cuts;
    const auto n = static_cast<int>(rng.uniform(1.0, 200.0));
    for (int k = 0; k < n; ++k) cuts.push_back(rng.uniform(0.0, horizon));
    cuts.push_back(horizon);
    partitions.push_back(cuts);
  }

  double worst = 0.0;
  bool n_exact = true;
  for (auto cuts : partitions) {
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    KernelState st(videos, 0.0);
    std::size_t ei = 0, ni = 0;
    for (double c : cuts) {
      std::size_t e1 = ei, n1 = ni;
      while (e1 < ds.events.size() && ds.events[e1].time <= c) ++e1;
      while (n1 < ds.negatives.size() && ds.negatives[n1].time <= c) ++n1;
      refresh_kernels_in_place(st, std::span(ds.events).subspan(ei, e1 - ei),
                               std::span(ds.negatives).subspan(ni, n1 - ni), c, hp, p);
      ei = e1;
      ni = n1;
    }
    for (VideoId i = 0; i < videos; ++i) {
      const KernelValues kv = st.at(i, hp);
      n_exact = n_exact && kv.n == ref[i].n;
      worst = std::max({worst, oracle::rel_err(kv.phi, ref[i].phi), oracle::rel_err(kv.psi, ref[i].psi),
                        oracle::rel_err(kv.gamma_acc, ref[i].gamma_acc)});
    }
  }
  return {worst <= 1e-9 && n_exact, std::to_string(partitions.size()) + " partitions, max relative " + fmt(worst) +
                                        (n_exact ? ", N exact" : ", N mismatch")};
}

// ---- 4: truncated rebuild vs full history on 30 days ----
Outcome truncation_check() {
  SynthSpec spec;
  spec.true_params = sample_true_params(40, 404);
  spec.horizon = 30 * 24.0;
  spec.seed = 405;
  const TraceDataset ds = generate(spec);
  const Hyperparams& hp = spec.hp;
  const VideoTimelines tl = group_by_video(ds);

  double worst_phi = 0.0, worst_gamma = 0.0;  // |difference| / (k_th N)
  std::size_t checks = 0;
  for (int day = 1; day <= 30; ++day) {
    const double t = 24.0 * day;
    for (VideoId i = 0; i < ds.catalog_size; ++i) {
      const double alpha = spec.true_params.alpha[i];
      std::vector<double> upto, kept;
      std::uint64_t dropped = 0;
      for (double x : tl.events[i]) {
        if (x > t) break;
        upto.push_back(x);
        if (x >= t - hp.lookback())
          kept.push_back(x);
        else
          ++dropped;
      }
      if (upto.empty()) continue;
      const auto full = oracle::direct_sums(upto, {}, t, alpha, knobs(hp));
      const KernelValues tr = rebuild_video_kernel(kept, dropped, alpha, t, hp);
      const double bound = hp.k_th * static_cast<double>(full.n);
      worst_phi = std::max(worst_phi, std::abs(tr.phi - full.phi) / bound);
      worst_gamma = std::max(worst_gamma, std::abs(tr.gamma_acc - full.gamma_acc) / bound);
      ++checks;
    }
  }
  return {worst_phi <= 1.0 && worst_gamma <= 1.0,
          std::to_string(ds.events.size()) + " requests, " + std::to_string(checks) +
              " checks, max |diff|/(k_th N): Phi " + fmt(worst_phi) + ", Gamma " + fmt(worst_gamma)};
}

// ---- 5: monotone trajectory and the Poisson special case ----
Outcome optimizer_check() {
  SynthSpec spec;
  spec.true_params = sample_true_params(20, 55);
  spec.horizon = 72.0;
  spec.seed = 56;
  const TraceDataset ds = generate(spec);
  FitConfig cfg;
  cfg.seed = 57;
  const FitReport rep = fit(ds, Hyperparams{}.with_window(72.0), HrsParams(20), cfg);
  std::size_t violations = 0;
  for (std::size_t k = 1; k < rep.loss_trajectory.size(); ++k) {
    const double prev = rep.loss_trajectory[k - 1];
    violations += rep.loss_trajectory[k] > prev + 1e-9 * std::abs(prev);
  }

  SynthSpec pois;
  pois.true_params = HrsParams(1, 5.0, 1e-6, 1e-6, 1e-6);
  pois.horizon = 240.0;
  pois.seed = 58;
  pois.negative_schedule = std::vector<NegativeEvent>{};
  const TraceDataset pds = generate(pois);
  Hyperparams hp;
  hp.rho_beta = hp.rho_omega = hp.rho_alpha = hp.rho_gamma = 0.0;
  hp.M = 20000;
  FitConfig pcfg;
  pcfg.frozen = {false, true, true, true};
  const FitReport prep = fit(pds, hp, HrsParams(1, 1.0, 1e-6, 1e-6, 1e-6), pcfg);
  const double rate = softplus(prep.final_params.beta[0], hp.s);
  const double mle = static_cast<double>(pds.events.size()) / pois.horizon;
  const bool rate_ok = std::abs(rate - 5.0) <= 0.5 && std::abs(rate - mle) <= 0.1 * mle;
  return {violations == 0 && rate_ok,
          std::to_string(rep.loss_trajectory.size()) + " accepted iterates, " + std::to_string(violations) +
              " increases; Poisson rate " + fmt(rate) + " (count/T " + fmt(mle) + ", truth 5)"};
}

// ---- 6: parameter recovery ----
// Busy videos with weak self-correction, so that omega is identifiable from
// a week of data; a weak prior and a start off the alpha plateau.
Outcome recovery_check() {
  TruthRanges ranges;
  ranges.beta_lo = 1.0;
  ranges.beta_hi = 5.0;
  ranges.omega_lo = 0.05;
  ranges.omega_hi = 0.45;
  ranges.alpha_lo = 1e-5;
  ranges.alpha_hi = 1e-4;
  SynthSpec spec;
  spec.true_params = sample_true_params(50, 606, ranges);
  spec.horizon = 7 * 24.0;
  spec.seed = 607;
  const TraceDataset ds = generate(spec);

  Hyperparams hp;
  hp.rho_beta = hp.rho_omega = hp.rho_alpha = hp.rho_gamma = 0.01;
  hp.M = 140000;
  FitConfig cfg;
  cfg.seed = 608;
  const FitReport rep = fit(ds, hp, HrsParams(50, 1.0, 0.1, 1e-3, 0.1), cfg);
  const double rw = oracle::spearman(rep.final_params.omega, spec.true_params.omega);
  const double rb = oracle::spearman(rep.final_params.beta, spec.true_params.beta);
  return {rw >= 0.8 && rb >= 0.8, std::to_string(ds.events.size()) + " requests; Spearman omega " + fmt(rw) +
                                       ", beta " + fmt(rb) + " (" + to_string(rep.stop_reason) + ")"};
}

// ---- 7: time-rescaling KS test ----
std::vector<double> rescaled_gaps(const std::vector<double>& events, const std::vector<double>& negs,
                                  const oracle::Theta& th, const oracle::Knobs& kn, double until) {
  std::vector<double> marks;
  for (double x : events)
    if (x <= until) marks.push_back(x);
  for (double x : negs)
    if (x <= until) marks.push_back(x);
  std::sort(marks.begin(), marks.end());
  std::vector<double> out;
  double lam = 0.0, last = 0.0, prev = 0.0;
  std::size_t next = 0;
  for (double m : marks) {
    if (m > prev) {
      const auto su = oracle::direct_sums(events, negs, prev, th.alpha, kn);
      auto f = [&](double t) {
        const double u = t - prev;
        return oracle::softplus_ref(
            th.beta + th.omega * su.phi * std::exp(-kn.delta0 * u) - th.gamma * su.psi * std::exp(-kn.delta1 * u),
            kn.s);
      };
      const auto n = static_cast<std::size_t>(std::max(64.0, std::ceil((m - prev) / 0.002)));
      lam += oracle::trapezoid(f, prev, m, n);
      prev = m;
    }
    while (next < events.size() && events[next] == m) {
      out.push_back(lam - last);
      last = lam;
      ++next;
    }
  }
  return out;
}

Outcome generator_check() {
  SynthSpec spec;
  spec.true_params = sample_true_params(8, 707);
  spec.horizon = 400.0;
  spec.seed = 708;
  const TraceDataset ds = generate(spec);
  if (ds.events.size() < 2000) return {false, "trace has only " + std::to_string(ds.events.size()) + " requests"};
  const double until = ds.events[1999].time;
  const VideoTimelines tl = group_by_video(ds);
  std::vector<double> gaps;
  for (std::size_t i = 0; i < ds.catalog_size; ++i) {
    const auto g = rescaled_gaps(tl.events[i], tl.negatives[i], theta_of(spec.true_params, i), knobs(spec.hp), until);
    gaps.insert(gaps.end(), g.begin(), g.end());
  }
  double d = 0.0;
  const double pval = oracle::ks_exp1_pvalue(gaps, &d);
  return {gaps.size() == 2000 && pval > 0.01,
          std::to_string(gaps.size()) + " rescaled gaps, KS D " + fmt(d) + ", p " + fmt(pval)};
}

// ---- 8: policy ordering on a synthetic city ----
Outcome ordering_check() {
  const fs::path dir = scratch("order");
  const std::string data = (dir / "city").string(), out = (dir / "sweep").string();
  if (run_cli("gen --out " + data + " --videos 200 --days 14 --seed 808") != 0) return {false, "gen failed"};
  if (run_cli("sweep --trace " + data + " --out " + out +
              " --fold 3 --capacity-pcts 1,5,25 --policies OPT,HRS,LRU --seed 809 --set samples_per_day=14400") != 0)
    return {false, "sweep failed"};
  const auto j = nlohmann::json::parse(slurp(fs::path(out) / "sweep.json"));
  std::map<std::pair<std::string, double>, double> rate;
  for (const auto& c : j.at("cells"))
    rate[{c.at("report").at("policy").get<std::string>(), c.at("capacity_pct").get<double>()}] =
        c.at("report").at("hit_rate").get<double>();
  bool ok = true;
  std::string detail;
  for (double pct : {1.0, 5.0, 25.0}) {
    const double o = rate[{"OPT", pct}], h = rate[{"HRS", pct}], l = rate[{"LRU", pct}];
    ok = ok && o >= h && h >= l;
    if (pct == 1.0) ok = ok && h > l;
    detail += fmt(pct) + "%: OPT " + fmt(o) + " HRS " + fmt(h) + " LRU " + fmt(l) + "; ";
  }
  fs::remove_all(dir);
  return {ok, detail.substr(0, detail.size() - 2)};
}

// ---- 9: OPT vs exhaustive search on short traces ----
Outcome belady_check() {
  std::size_t traces = 0, mismatches = 0;
  auto check = [&](const std::vector<std::uint32_t>& seq, const std::vector<double>& times, std::size_t cat,
                   std::size_t cap, double interval) {
    const std::vector<VideoId> req(seq.begin(), seq.end());
    const auto demand = opt_replay(req, cap, cat);
    const auto pro = opt_proactive_replay(times, req, 0.0, interval, cap, cat);
    const auto hits = [](const std::vector<bool>& h) { return static_cast<std::size_t>(std::count(h.begin(), h.end(), true)); };
    mismatches += hits(demand) != oracle::best_hits_bruteforce(seq, cap);
    mismatches += hits(pro) != oracle::best_hits_proactive(times, seq, 0.0, interval, cap, cat);
    ++traces;
  };
  // Every sequence of length <= 7 over three videos, unit spacing.
  for (std::size_t len = 1; len <= 7; ++len) {
    std::size_t total = 1;
    for (std::size_t k = 0; k < len; ++k) total *= 3;
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<std::uint32_t> seq;
      std::vector<double> times;
      for (std::size_t k = 0, c = code; k < len; ++k, c /= 3) {
        seq.push_back(static_cast<std::uint32_t>(c % 3));
        times.push_back(static_cast<double>(k + 1));
      }
      for (std::size_t cap = 1; cap <= 2; ++cap) check(seq, times, 3, cap, 2.0);
    }
  }
  // Random traces up to 12 requests with irregular timing.
  CounterRng rng(909);
  for (int rep = 0; rep < 1500; ++rep) {
    const auto len = 1 + static_cast<std::size_t>(rng.uniform() * 12);
    const auto cat = 2 + static_cast<std::size_t>(rng.uniform() * 5);
    const auto cap = 1 + static_cast<std::size_t>(rng.uniform() * static_cast<double>(cat - 1));
    std::vector<std::uint32_t> seq;
    std::vector<double> times;
    double t = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
      seq.push_back(static_cast<std::uint32_t>(rng.uniform() * static_cast<double>(cat)));
      t += rng.uniform() < 0.2 ? 0.0 : rng.uniform(0.0, 1.5);
      times.push_back(t);
    }
    check(seq, times, cat, cap, rng.uniform(0.3, 3.0));
  }
  return {mismatches == 0, std::to_string(traces) + " traces, " + std::to_string(mismatches) + " mismatches"};
}

// ---- 10: sweep determinism across thread counts ----
Outcome determinism_check() {
  const fs::path dir = scratch("det");
  const std::string data = (dir / "city").string();
  if (run_cli("gen --out " + data + " --videos 60 --days 4 --seed 1010") != 0) return {false, "gen failed"};
  const std::vector<std::pair<std::string, int>> runs{{"t1a", 1}, {"t1b", 1}, {"t8a", 8}, {"t8b", 8}};
  for (const auto& [name, threads] : runs)
    if (run_cli("sweep --trace " + data + " --out " + (dir / name).string() + " --seed 1011 --threads " +
                std::to_string(threads)) != 0)
      return {false, "sweep failed"};
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir / "t1a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), dir / "t1a");
    const std::string ref = slurp(e.path());
    ++files;
    for (const char* other : {"t1b", "t8a", "t8b"})
      differ += !fs::exists(dir / other / rel) || slurp(dir / other / rel) != ref;
  }
  for (const char* other : {"t1b", "t8a", "t8b"}) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir / other)) n += e.is_regular_file();
    differ += n != files;
  }
  fs::remove_all(dir);
  return {differ == 0 && files > 0,
          std::to_string(files) + " files per run, 4 runs, " + std::to_string(differ) + " differences"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {"gradient matches central differences", 10, gradient_check},
      {"Monte-Carlo integral matches quadrature", 30, mc_integral_check},
      {"incremental refresh equals batch sums", 5, incremental_check},
      {"truncated rebuild within k_th*N", 10, truncation_check},
      {"optimizer trajectory and Poisson rate", 60, optimizer_check},
      {"parameter recovery (Spearman)", 600, recovery_check},
      {"generator passes time-rescaling KS", 60, generator_check},
      {"policy ordering OPT >= HRS >= LRU", 600, ordering_check},
      {"OPT equals exhaustive search", 60, belady_check},
      {"sweep deterministic across threads", 300, determinism_check},
  };
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < criteria[k].limit_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::cout << (pass ? "PASS" : "FAIL") << " [" << k + 1 << "] " << criteria[k].name << ": " << o.detail << " ("
              << fmt(secs) << " s of " << fmt(criteria[k].limit_s) << " s" << (in_time ? "" : ", too slow") << ")"
              << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failed == 0 ? 0 : 1;
}
