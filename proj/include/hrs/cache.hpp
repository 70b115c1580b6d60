#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hrs/fit.hpp"
#include "hrs/online.hpp"
#include "hrs/trace.hpp"
#include "json.hpp"

namespace hrs {

enum class PolicyKind { HRS, LRU, WLFU, OPT };

std::string to_string(PolicyKind k);
PolicyKind parse_policy(const std::string& name);

struct CacheConfig {
  std::size_t capacity = 0;         // slots; all videos have unit size
  double refresh_interval = 1.0;    // hours between proactive re-rankings
  PolicyKind policy = PolicyKind::LRU;
  double wlfu_window = 24.0;        // trailing window of WLFU, hours
};

struct SimReport {
  std::string policy;
  std::size_t capacity = 0;
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
  double hit_rate = 0.0;
  std::vector<double> per_day;
  std::optional<double> wall_time;  // seconds spent in policy code, if measured
  std::size_t peak_occupancy = 0;
};

nlohmann::json to_json(const SimReport& r);
void write_report_csv_header(std::ostream& out);
void write_report_csv_row(std::ostream& out, const SimReport& r);

/// Model side of an HRS simulation: kernels and parameters warmed on all
/// history up to the test start, plus whether the Parameter Updater runs
/// every hp.dT hours during the replay.
struct HrsArtifacts {
  OnlineState online;
  bool update_params = false;
  FitConfig online_fit;
};

/// Replays the requests of `test` (a window [start, horizon]) in time order.
/// A request is a hit iff its video is cached when it arrives. HRS, WLFU and
/// OPT rebuild the cache at start + k * refresh_interval (requests in
/// (t_k, t_{k+1}] are served from the cache built at t_k, requests at the
/// start time before any ranking); LRU admits on miss. `history` feeds
/// WLFU's trailing window before the test start.
SimReport simulate(const TraceDataset& test, const CacheConfig& cfg,
                   const HrsArtifacts* hrs = nullptr, const TraceDataset* history = nullptr,
                   bool measure_time = false);

/// Ranks `scores` descending, ties to the lower id, and returns the first k ids.
std::vector<VideoId> top_k(std::span<const double> scores, std::size_t k);

/// LRU over a request sequence; returns per-request hit flags.
std::vector<bool> lru_replay(std::span<const VideoId> requests, std::size_t capacity,
                             std::size_t catalog);

/// Belady's MIN with admission on every miss; returns per-request hit flags.
std::vector<bool> opt_replay(std::span<const VideoId> requests, std::size_t capacity,
                             std::size_t catalog);

/// Clairvoyant optimum for a cache that may be reloaded freely at the refresh
/// instants start + k * interval and may admit (or bypass) on a miss: at each
/// refresh it holds the videos requested soonest, in between it runs MIN with
/// bypass. `times` are the request times, sorted.
std::vector<bool> opt_proactive_replay(std::span<const double> times,
                                       std::span<const VideoId> requests, double start,
                                       double interval, std::size_t capacity,
                                       std::size_t catalog);

/// sum hits / sum total over the reports (each weighted by its request count).
double weighted_hit_rate(std::span<const SimReport> reports);

}  // namespace hrs
