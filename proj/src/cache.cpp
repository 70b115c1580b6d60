#include "hrs/cache.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <list>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "hrs/format.hpp"

namespace hrs {
namespace {

using Clock = std::chrono::steady_clock;

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on) {}
  void start() {
    if (on_) t0_ = Clock::now();
  }
  void stop() {
    if (on_) total_ += std::chrono::duration<double>(Clock::now() - t0_).count();
  }
  std::optional<double> total() const { return on_ ? std::optional<double>(total_) : std::nullopt; }

 private:
  bool on_;
  Clock::time_point t0_{};
  double total_ = 0.0;
};

struct Tally {
  std::uint64_t hits = 0;
  std::uint64_t total = 0;
  std::vector<std::uint64_t> day_hits, day_total;

  void record(double t, double start, bool hit) {
    const auto day = static_cast<std::size_t>(std::max(0.0, std::floor((t - start) / 24.0)));
    if (day >= day_total.size()) {
      day_total.resize(day + 1, 0);
      day_hits.resize(day + 1, 0);
    }
    ++total;
    ++day_total[day];
    if (hit) {
      ++hits;
      ++day_hits[day];
    }
  }

  void finish(SimReport& r) const {
    r.hits = hits;
    r.total = total;
    r.hit_rate = total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    r.per_day.resize(day_total.size());
    for (std::size_t d = 0; d < day_total.size(); ++d)
      r.per_day[d] = day_total[d] ? static_cast<double>(day_hits[d]) / day_total[d] : 0.0;
  }
};

// Windowed request counts for WLFU.
class WindowCounter {
 public:
  WindowCounter(std::size_t catalog, double window) : counts_(catalog, 0), window_(window) {}

  void add(VideoId v, double t) {
    recent_.push_back({v, t});
    ++counts_[v];
  }

  // Keeps requests in (now - window, now].
  void expire(double now) {
    while (!recent_.empty() && recent_.front().time <= now - window_) {
      --counts_[recent_.front().video];
      recent_.pop_front();
    }
  }

  bool empty() const { return recent_.empty(); }
  const std::vector<double>& scores() {
    scores_.assign(counts_.begin(), counts_.end());
    return scores_;
  }

 private:
  std::vector<std::uint64_t> counts_;
  std::vector<double> scores_;
  std::deque<RetainedEvent> recent_;
  double window_;
};

}  // namespace

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::HRS: return "HRS";
    case PolicyKind::LRU: return "LRU";
    case PolicyKind::WLFU: return "WLFU";
    case PolicyKind::OPT: return "OPT";
  }
  return "?";
}

PolicyKind parse_policy(const std::string& name) {
  std::string up;
  for (char c : name) up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (up == "HRS") return PolicyKind::HRS;
  if (up == "LRU") return PolicyKind::LRU;
  if (up == "WLFU") return PolicyKind::WLFU;
  if (up == "OPT" || up == "OPTIMAL") return PolicyKind::OPT;
  throw std::invalid_argument("unknown policy '" + name + "'");
}

nlohmann::json to_json(const SimReport& r) {
  nlohmann::json j;
  j["policy"] = r.policy;
  j["capacity"] = r.capacity;
  j["hits"] = r.hits;
  j["total"] = r.total;
  j["hit_rate"] = r.hit_rate;
  j["per_day"] = r.per_day;
  j["wall_time_s"] = r.wall_time ? nlohmann::json(*r.wall_time) : nlohmann::json(nullptr);
  return j;
}

void write_report_csv_header(std::ostream& out) {
  out << "policy,capacity,hits,total,hit_rate,wall_time_s\n";
}

void write_report_csv_row(std::ostream& out, const SimReport& r) {
  out << r.policy << ',' << r.capacity << ',' << r.hits << ',' << r.total << ','
      << format_real(r.hit_rate) << ',' << (r.wall_time ? format_real(*r.wall_time) : "") << '\n';
}

std::vector<VideoId> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<VideoId> ids(scores.size());
  std::iota(ids.begin(), ids.end(), VideoId{0});
  k = std::min(k, ids.size());
  auto better = [&](VideoId a, VideoId b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(), better);
  ids.resize(k);
  return ids;
}

std::vector<bool> lru_replay(std::span<const VideoId> requests, std::size_t capacity,
                             std::size_t catalog) {
  std::vector<bool> hits(requests.size(), false);
  if (capacity == 0) return hits;
  std::list<VideoId> order;  // front = most recent
  std::vector<std::list<VideoId>::iterator> where(catalog, order.end());
  std::vector<char> present(catalog, 0);
  for (std::size_t k = 0; k < requests.size(); ++k) {
    const VideoId v = requests[k];
    if (present.at(v)) {
      hits[k] = true;
      order.splice(order.begin(), order, where[v]);
      continue;
    }
    if (order.size() == capacity) {
      present[order.back()] = 0;
      order.pop_back();
    }
    order.push_front(v);
    where[v] = order.begin();
    present[v] = 1;
  }
  return hits;
}

std::vector<bool> opt_replay(std::span<const VideoId> requests, std::size_t capacity,
                             std::size_t catalog) {
  const std::size_t n = requests.size();
  constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();
  std::vector<bool> hits(n, false);
  if (capacity == 0) return hits;

  std::vector<std::size_t> next(n, kNever), last(catalog, kNever);
  for (std::size_t k = n; k-- > 0;) {
    next[k] = last.at(requests[k]);
    last[requests[k]] = k;
  }

  std::set<std::pair<std::size_t, VideoId>> cache;  // (next use, video)
  std::vector<std::size_t> key(catalog, kNever);
  std::vector<char> present(catalog, 0);
  for (std::size_t k = 0; k < n; ++k) {
    const VideoId v = requests[k];
    if (present[v]) {
      hits[k] = true;
      cache.erase({key[v], v});
    } else {
      if (cache.size() == capacity) {
        auto victim = std::prev(cache.end());
        present[victim->second] = 0;
        cache.erase(victim);
      }
      present[v] = 1;
    }
    key[v] = next[k];
    cache.insert({key[v], v});
  }
  return hits;
}

std::vector<bool> opt_proactive_replay(std::span<const double> times,
                                       std::span<const VideoId> requests, double start,
                                       double interval, std::size_t capacity,
                                       std::size_t catalog) {
  const std::size_t n = requests.size();
  if (times.size() != n) throw std::invalid_argument("times and requests differ in length");
  if (!(interval > 0.0)) throw std::invalid_argument("refresh interval must be > 0");
  constexpr std::size_t kNever = std::numeric_limits<std::size_t>::max();
  std::vector<bool> hits(n, false);
  if (capacity == 0) return hits;

  std::vector<std::size_t> next(n, kNever), upcoming(catalog, kNever);
  for (std::size_t k = n; k-- > 0;) {
    next[k] = upcoming.at(requests[k]);
    upcoming[requests[k]] = k;
  }
  std::set<std::pair<std::size_t, VideoId>> future;  // every video that is requested again
  for (std::size_t v = 0; v < catalog; ++v)
    if (upcoming[v] != kNever) future.insert({upcoming[v], static_cast<VideoId>(v)});

  std::set<std::pair<std::size_t, VideoId>> cache;
  std::vector<std::size_t> key(catalog, kNever);
  std::vector<char> present(catalog, 0);
  auto segment = [&](double t) {
    return t <= start ? -1L : static_cast<long>(std::ceil((t - start) / interval)) - 1;
  };
  long loaded = -1;

  for (std::size_t k = 0; k < n; ++k) {
    const VideoId v = requests[k];
    const long seg = segment(times[k]);
    if (seg > loaded) {
      for (const auto& [use, u] : cache) present[u] = 0;
      cache.clear();
      for (auto it = future.begin(); it != future.end() && cache.size() < capacity; ++it) {
        cache.insert(*it);
        present[it->second] = 1;
        key[it->second] = it->first;
      }
      loaded = seg;
    }

    future.erase({k, v});
    if (next[k] != kNever) future.insert({next[k], v});

    if (present[v]) {
      hits[k] = true;
      cache.erase({key[v], v});
      key[v] = next[k];
      cache.insert({key[v], v});
      continue;
    }
    if (cache.size() == capacity) {
      auto far = std::prev(cache.end());
      if (next[k] >= far->first) continue;  // bypass
      present[far->second] = 0;
      cache.erase(far);
    }
    present[v] = 1;
    key[v] = next[k];
    cache.insert({key[v], v});
  }
  return hits;
}

SimReport simulate(const TraceDataset& test, const CacheConfig& cfg, const HrsArtifacts* hrs,
                   const TraceDataset* history, bool measure_time) {
  const std::size_t c = test.catalog_size;
  if (cfg.capacity > c) throw std::invalid_argument("capacity exceeds catalog size");
  if (!(cfg.refresh_interval > 0.0)) throw std::invalid_argument("refresh_interval must be > 0");

  SimReport report;
  report.policy = to_string(cfg.policy);
  report.capacity = cfg.capacity;
  Tally tally;
  Stopwatch watch(measure_time);
  const auto& events = test.events;

  if (cfg.policy == PolicyKind::LRU || cfg.policy == PolicyKind::OPT) {
    std::vector<VideoId> seq;
    std::vector<double> times;
    seq.reserve(events.size());
    times.reserve(events.size());
    for (const auto& ev : events) {
      seq.push_back(ev.video);
      times.push_back(ev.time);
    }
    watch.start();
    const auto hits = cfg.policy == PolicyKind::LRU
                          ? lru_replay(seq, cfg.capacity, c)
                          : opt_proactive_replay(times, seq, test.start, cfg.refresh_interval,
                                                 cfg.capacity, c);
    watch.stop();
    for (std::size_t k = 0; k < events.size(); ++k) tally.record(events[k].time, test.start, hits[k]);
    tally.finish(report);
    // Neither holds more than the capacity or more videos than it has seen requested.
    std::vector<char> seen(c, 0);
    std::size_t distinct = 0;
    for (VideoId v : seq) distinct += seen[v] ? 0 : (seen[v] = 1);
    report.peak_occupancy = std::min(cfg.capacity, distinct);
    report.wall_time = watch.total();
    return report;
  }

  // Proactive policies.
  std::optional<OnlineState> online;
  std::optional<WindowCounter> counter;
  if (cfg.policy == PolicyKind::HRS) {
    if (!hrs) throw std::invalid_argument("HRS simulation needs warmed model artifacts");
    if (hrs->online.state.size() != c) throw std::invalid_argument("HRS state does not match catalog");
    if (hrs->online.state.last_update_time() != test.start)
      throw std::invalid_argument("HRS state is not warmed up to the test start");
    online = hrs->online;
  } else {
    counter.emplace(c, cfg.wlfu_window);
    if (history)
      for (const auto& ev : history->events)
        if (ev.time < test.start && ev.time > test.start - cfg.wlfu_window) counter->add(ev.video, ev.time);
  }

  std::vector<char> cached(c, 0);
  std::size_t ev_pos = 0, neg_pos = 0, seen_pos = 0;
  const auto& negs = test.negatives;

  // Requests at the start time arrive before the first ranking.
  while (ev_pos < events.size() && events[ev_pos].time <= test.start) {
    tally.record(events[ev_pos].time, test.start, false);
    if (counter) counter->add(events[ev_pos].video, events[ev_pos].time);
    ++ev_pos;
  }
  seen_pos = ev_pos;
  while (neg_pos < negs.size() && negs[neg_pos].time <= test.start) ++neg_pos;

  // Feeds the HRS kernels with everything in (clock, t].
  std::size_t fed_ev = ev_pos, fed_neg = neg_pos;
  auto feed_until = [&](double t) {
    std::size_t e_end = fed_ev, n_end = fed_neg;
    while (e_end < events.size() && events[e_end].time <= t) ++e_end;
    while (n_end < negs.size() && negs[n_end].time <= t) ++n_end;
    online->observe(std::span(events).subspan(fed_ev, e_end - fed_ev),
                    std::span(negs).subspan(fed_neg, n_end - fed_neg), t);
    fed_ev = e_end;
    fed_neg = n_end;
  };

  std::size_t k = 0;
  while (true) {
    const double t_k = test.start + static_cast<double>(k) * cfg.refresh_interval;
    watch.start();
    std::vector<VideoId> chosen;
    if (online) {
      while (hrs->update_params && online->window_start + online->hp.dT <= t_k) {
        const double end = online->window_start + online->hp.dT;
        feed_until(end);
        OnlineUpdate upd = online_update_params(std::move(*online), {}, {}, hrs->online_fit);
        online = std::move(upd.state);
      }
      feed_until(t_k);
      const auto scores = online->intensities();
      chosen = top_k(scores, cfg.capacity);
    } else {
      // Requests served since the last ranking enter the trailing window.
      for (; seen_pos < ev_pos; ++seen_pos) counter->add(events[seen_pos].video, events[seen_pos].time);
      counter->expire(t_k);
      if (!counter->empty()) {
        const auto& sc = counter->scores();
        chosen = top_k(sc, cfg.capacity);
        std::vector<VideoId> positive;
        for (VideoId v : chosen)
          if (sc[v] > 0.0) positive.push_back(v);
        chosen.swap(positive);
      } else {
        chosen.clear();
        for (std::size_t v = 0; v < c; ++v)
          if (cached[v]) chosen.push_back(static_cast<VideoId>(v));
      }
    }
    std::fill(cached.begin(), cached.end(), 0);
    for (VideoId v : chosen) cached[v] = 1;
    report.peak_occupancy = std::max(report.peak_occupancy, chosen.size());
    watch.stop();

    const double t_next = t_k + cfg.refresh_interval;
    while (ev_pos < events.size() && events[ev_pos].time <= t_next) {
      tally.record(events[ev_pos].time, test.start, cached[events[ev_pos].video] != 0);
      ++ev_pos;
    }
    if (ev_pos >= events.size()) break;
    ++k;
  }

  tally.finish(report);
  report.wall_time = watch.total();
  return report;
}

double weighted_hit_rate(std::span<const SimReport> reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to aggregate");
  std::uint64_t hits = 0, total = 0;
  for (const auto& r : reports) {
    hits += r.hits;
    total += r.total;
  }
  return total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
}

}  // namespace hrs
