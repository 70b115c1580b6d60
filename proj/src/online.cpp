#include "hrs/online.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hrs/likelihood.hpp"
#include "hrs/rng.hpp"

namespace hrs {
namespace {

void check_interval(double time, double lo, double hi, const char* what) {
  if (!(time > lo && time <= hi))
    throw std::invalid_argument(std::string(what) + " at " + std::to_string(time) +
                                " outside refresh interval (" + std::to_string(lo) + ", " +
                                std::to_string(hi) + "]");
}

}  // namespace

void refresh_kernels_in_place(KernelState& state, std::span<const RequestEvent> new_events,
                              std::span<const NegativeEvent> new_negatives, double t_new,
                              const Hyperparams& hp, const HrsParams& p) {
  const double t = state.last_update_time();
  if (t_new < t) throw std::invalid_argument("refresh target precedes kernel clock");
  double prev = t;
  for (const auto& ev : new_events) {
    check_interval(ev.time, t, t_new, "request");
    if (ev.time < prev) throw std::invalid_argument("requests are not time-sorted");
    prev = ev.time;
  }
  prev = t;
  for (const auto& n : new_negatives) {
    check_interval(n.time, t, t_new, "negative");
    if (n.time < prev) throw std::invalid_argument("negatives are not time-sorted");
    prev = n.time;
  }
  for (const auto& ev : new_events) state.absorb_event(ev.video, ev.time, p.alpha.at(ev.video), hp);
  for (const auto& n : new_negatives) state.absorb_negative(n.video, n.time, hp);
  state.set_last_update_time(t_new);
}

KernelState refresh_kernels(KernelState state, std::span<const RequestEvent> new_events,
                            std::span<const NegativeEvent> new_negatives, double t_new,
                            const Hyperparams& hp, const HrsParams& p) {
  refresh_kernels_in_place(state, new_events, new_negatives, t_new, hp, p);
  return state;
}

KernelValues rebuild_video_kernel(std::span<const double> times, std::uint64_t n_base,
                                  double alpha, double t, const Hyperparams& hp) {
  KernelValues out;
  double n = static_cast<double>(n_base);
  for (const double tau : times) {
    n += 1.0;
    const double k = kernel_k0(t - tau, hp);
    const double damp = std::exp(-alpha * n);
    out.phi += k * damp;
    out.gamma_acc += k * n * damp;
  }
  out.n = static_cast<std::uint64_t>(n);
  return out;
}

OnlineState OnlineState::warm(const TraceDataset& ds, HrsParams p, const Hyperparams& hp,
                              double t, std::uint64_t seed) {
  hp.validate();
  p.validate();
  if (p.size() != ds.catalog_size) throw std::invalid_argument("parameters do not match catalog");
  OnlineState os;
  os.hp = hp;
  os.seed = seed;
  os.window_start = t;
  os.state = replay_kernels(ds, p, hp, t);
  os.p = std::move(p);
  os.n_dropped.assign(ds.catalog_size, 0);
  for (const auto& ev : ds.events) {
    if (ev.time > t) break;
    os.retained.push_back({ev.video, ev.time});
  }
  os.prune(t);
  os.psi_start.resize(ds.catalog_size);
  for (std::size_t i = 0; i < ds.catalog_size; ++i)
    os.psi_start[i] = os.state.at(static_cast<VideoId>(i), t, hp).psi;
  return os;
}

void OnlineState::observe(std::span<const RequestEvent> new_events,
                          std::span<const NegativeEvent> new_negatives, double t_new) {
  refresh_kernels_in_place(state, new_events, new_negatives, t_new, hp, p);
  for (const auto& ev : new_events) retained.push_back({ev.video, ev.time});
  window_negatives.insert(window_negatives.end(), new_negatives.begin(), new_negatives.end());
}

void OnlineState::prune(double t) {
  const double cutoff = t - hp.lookback();
  std::size_t k = 0;
  while (k < retained.size() && retained[k].time < cutoff) {
    ++n_dropped[retained[k].video];
    ++k;
  }
  retained.erase(retained.begin(), retained.begin() + static_cast<std::ptrdiff_t>(k));
}

std::vector<double> OnlineState::intensities() const {
  std::vector<double> out(state.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = hat_lambda(static_cast<VideoId>(i), state, p, hp);
  return out;
}

OnlineUpdate online_update_params(OnlineState os, std::span<const RequestEvent> events,
                                  std::span<const NegativeEvent> negatives,
                                  const FitConfig& cfg) {
  const Hyperparams& hp = os.hp;
  const double T = os.window_start;
  const double end = T + hp.dT;
  const std::size_t c = os.p.size();
  const double clock = os.state.last_update_time();
  if (clock < T || clock > end)
    throw std::invalid_argument("kernel clock outside the parameter window");

  if (clock < end) {
    std::vector<RequestEvent> ev;
    std::vector<NegativeEvent> ng;
    for (const auto& e : events)
      if (e.time > clock && e.time <= end) ev.push_back(e);
    for (const auto& n : negatives)
      if (n.time > clock && n.time <= end) ng.push_back(n);
    os.observe(ev, ng, end);
  }
  os.prune(T);

  OnlineUpdate out;
  bool scored_any = false;
  for (const auto& r : os.retained)
    if (r.time >= T && r.time < end) {
      scored_any = true;
      break;
    }

  if (scored_any) {
    LikelihoodProblem prob;
    prob.catalog = c;
    prob.window_start = T;
    prob.window_end = end;
    prob.events.assign(c, {});
    prob.first_scored.assign(c, 0);
    prob.negatives.assign(c, {});
    prob.psi0 = os.psi_start;
    prob.psi_origin = T;
    prob.n_base = os.n_dropped;
    prob.hp = hp;
    prob.threads = cfg.threads;
    for (const auto& r : os.retained) {
      if (r.time >= end) break;
      if (r.time < T) ++prob.first_scored[r.video];
      prob.events[r.video].push_back(r.time);
    }
    for (const auto& n : os.window_negatives)
      if (n.time > T && n.time < end) prob.negatives[n.video].push_back(n.time);
    prob.samples = draw_samples(hp.dM, T, end, derive_seed(os.seed, os.window_index));
    out.report = fit_problem(prob, os.p, cfg);
    os.p = out.report.final_params;
  } else {
    out.report.final_params = os.p;
    out.report.stop_reason = StopReason::tolerance;
  }

  // Rebuild Phi and Gamma for the (possibly) new alpha at the window end.
  os.prune(end);
  std::vector<std::vector<double>> per_video(c);
  for (const auto& r : os.retained) per_video[r.video].push_back(r.time);
  for (std::size_t i = 0; i < c; ++i) {
    const auto vid = static_cast<VideoId>(i);
    VideoKernel& vk = os.state.raw(vid);
    const KernelValues kv = rebuild_video_kernel(per_video[i], os.n_dropped[i], os.p.alpha[i], end, hp);
    if (kv.n != vk.n) throw std::logic_error("request count drifted during kernel rebuild");
    vk.phi = kv.phi;
    vk.gamma_acc = kv.gamma_acc;
    vk.phi_time = end;
  }

  os.window_start = end;
  os.window_negatives.clear();
  for (std::size_t i = 0; i < c; ++i)
    os.psi_start[i] = os.state.at(static_cast<VideoId>(i), end, hp).psi;
  ++os.window_index;
  out.params = os.p;
  out.state = std::move(os);
  return out;
}

}  // namespace hrs
