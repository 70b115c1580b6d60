#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hrs/fit.hpp"
#include "hrs/model.hpp"
#include "hrs/trace.hpp"

namespace hrs {

/// Advances `state` from its clock t to t_new, absorbing requests and
/// negatives in (t, t_new]. Only videos that appear in the inputs are
/// touched; the others decay lazily on read. Inputs must be time-sorted.
void refresh_kernels_in_place(KernelState& state, std::span<const RequestEvent> new_events,
                              std::span<const NegativeEvent> new_negatives, double t_new,
                              const Hyperparams& hp, const HrsParams& p);

KernelState refresh_kernels(KernelState state, std::span<const RequestEvent> new_events,
                            std::span<const NegativeEvent> new_negatives, double t_new,
                            const Hyperparams& hp, const HrsParams& p);

struct RetainedEvent {
  VideoId video;
  double time;
};

/// Kernels, parameters and the truncated request history needed to refit
/// parameters on the window [window_start, window_start + dT).
struct OnlineState {
  KernelState state;
  HrsParams p;
  Hyperparams hp;
  double window_start = 0.0;
  std::vector<RetainedEvent> retained;           // time-sorted, >= window_start - lookback
  std::vector<std::uint64_t> n_dropped;          // requests pruned from `retained`
  std::vector<NegativeEvent> window_negatives;   // negatives after window_start
  std::vector<double> psi_start;                 // Psi at window_start
  std::uint64_t seed = 0;
  std::size_t window_index = 0;

  /// Replays every request and negative of `ds` up to and including t,
  /// opening the first window at t.
  static OnlineState warm(const TraceDataset& ds, HrsParams p, const Hyperparams& hp, double t,
                          std::uint64_t seed);

  /// Kernel Updater step: refresh_kernels plus bookkeeping of the
  /// truncated history.
  void observe(std::span<const RequestEvent> new_events,
               std::span<const NegativeEvent> new_negatives, double t_new);

  /// Drops retained requests older than `t - lookback`.
  void prune(double t);

  /// hat_lambda of every video at the kernel clock.
  std::vector<double> intensities() const;
};

struct OnlineUpdate {
  HrsParams params;
  OnlineState state;
  FitReport report;
};

/// Parameter Updater: refits all four parameter blocks on the window
/// [T, T + dT). Requests from the truncated look-back drive Phi and Gamma
/// (rebuilt for every trial alpha), Psi starts from its value at T, and the
/// integral uses dM fresh samples on the window. Kernels are brought to
/// T + dT first if needed (absorbing the given requests and negatives that
/// are newer than the kernel clock). Afterwards Phi and Gamma are rebuilt
/// with the new alpha from the truncated history and T advances by dT.
OnlineUpdate online_update_params(OnlineState os, std::span<const RequestEvent> events,
                                  std::span<const NegativeEvent> negatives,
                                  const FitConfig& cfg);

/// Phi and Gamma of video i at time t from `times` (sorted, all <= t), the
/// first of which is request number n_base + 1 of the video.
KernelValues rebuild_video_kernel(std::span<const double> times, std::uint64_t n_base,
                                  double alpha, double t, const Hyperparams& hp);

}  // namespace hrs
