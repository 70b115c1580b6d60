#include <algorithm>
#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hrs/cache.hpp"
#include "hrs/rng.hpp"
#include "hrs/synth.hpp"
#include "oracles.hpp"

using namespace hrs;

namespace {

TraceDataset from_sequence(const std::vector<VideoId>& seq, std::size_t catalog, double spacing = 1.0) {
  TraceDataset ds;
  ds.catalog_size = catalog;
  for (std::size_t k = 0; k < seq.size(); ++k)
    ds.events.push_back({seq[k], spacing * static_cast<double>(k + 1), "", "", ""});
  ds.horizon = spacing * static_cast<double>(seq.size() + 1);
  return ds;
}

SimReport run(const TraceDataset& ds, PolicyKind k, std::size_t cap) {
  CacheConfig cfg;
  cfg.policy = k;
  cfg.capacity = cap;
  return simulate(ds, cfg);
}

// Hits of a proactive top-S-by-window-count policy, recomputed from scratch.
std::uint64_t wlfu_oracle(const TraceDataset& all, double start, double interval, double window,
                          std::size_t cap) {
  std::uint64_t hits = 0;
  std::vector<char> cache(all.catalog_size, 0);
  long last_k = -1;
  for (const auto& ev : all.events) {
    if (ev.time <= start) continue;
    const long k = static_cast<long>(std::ceil((ev.time - start) / interval)) - 1;
    for (long j = last_k + 1; j <= k; ++j) {
      const double tk = start + interval * j;
      std::vector<double> counts(all.catalog_size, 0.0);
      bool any = false;
      for (const auto& e : all.events)
        if (e.time > tk - window && e.time <= tk) {
          counts[e.video] += 1;
          any = true;
        }
      if (!any) continue;
      std::vector<VideoId> ids(all.catalog_size);
      for (VideoId i = 0; i < ids.size(); ++i) ids[i] = i;
      std::stable_sort(ids.begin(), ids.end(), [&](VideoId a, VideoId b) { return counts[a] > counts[b]; });
      std::fill(cache.begin(), cache.end(), 0);
      for (std::size_t r = 0; r < cap && counts[ids[r]] > 0; ++r) cache[ids[r]] = 1;
    }
    last_k = std::max(last_k, k);
    hits += cache[ev.video];
  }
  return hits;
}

TraceDataset synthetic_city(std::size_t videos, double hours, std::uint64_t seed) {
  SynthSpec spec;
  spec.true_params = sample_true_params(videos, seed);
  spec.horizon = hours;
  spec.seed = seed;
  return generate(spec);
}

}  // namespace

TEST_CASE("zero capacity never hits") {
  const TraceDataset ds = from_sequence({0, 0, 1, 0}, 2);
  for (PolicyKind k : {PolicyKind::LRU, PolicyKind::OPT, PolicyKind::WLFU}) {
    const SimReport r = run(ds, k, 0);
    CHECK(r.hit_rate == 0.0);
    CHECK(r.total == 4);
  }
}

TEST_CASE("LRU hand replays") {
  // A,B,A,C,A,B with two slots: hits at positions 3 and 5.
  const std::vector<VideoId> seq{0, 1, 0, 2, 0, 1};
  CHECK(lru_replay(seq, 2, 3) == std::vector<bool>{false, false, true, false, true, false});
  CHECK(run(from_sequence(seq, 3), PolicyKind::LRU, 2).hit_rate == doctest::Approx(2.0 / 6.0));
  CHECK(lru_replay(std::vector<VideoId>{0, 0}, 1, 1) == std::vector<bool>{false, true});
  CHECK(lru_replay(std::vector<VideoId>{0, 1, 2, 0}, 2, 3) == std::vector<bool>{false, false, false, false});
  for (std::size_t cap : {1, 3}) {
    const SimReport r = run(from_sequence(std::vector<VideoId>(9, 0), 4), PolicyKind::LRU, cap);
    CHECK(r.hit_rate == doctest::Approx(8.0 / 9.0));
  }
}

TEST_CASE("Belady on the textbook trace") {
  // A,B,C,A,B with two slots: one hit, and no schedule does better.
  const std::vector<VideoId> seq{0, 1, 2, 0, 1};
  const auto hits = opt_replay(seq, 2, 3);
  CHECK(std::count(hits.begin(), hits.end(), true) == 1);
  CHECK(hits[3]);
  CHECK(oracle::best_hits_bruteforce({0, 1, 2, 0, 1}, 2) == 1);
}

TEST_CASE("Belady equals exhaustive search on small traces") {
  CounterRng rng(99);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t len = 1 + rng.next_u64() % 12, cat = 2 + rng.next_u64() % 4;
    const std::size_t cap = 1 + rng.next_u64() % 3;
    std::vector<VideoId> seq(len);
    for (auto& v : seq) v = static_cast<VideoId>(rng.next_u64() % cat);
    const auto hits = opt_replay(seq, cap, cat);
    const std::vector<std::uint32_t> s32(seq.begin(), seq.end());
    CHECK(static_cast<std::size_t>(std::count(hits.begin(), hits.end(), true)) ==
          oracle::best_hits_bruteforce(s32, cap));
  }
}

TEST_CASE("each video once: demand policies never hit") {
  const std::vector<VideoId> seq{0, 1, 2, 3, 4};
  CHECK(run(from_sequence(seq, 5), PolicyKind::LRU, 3).hits == 0);
  const auto hits = opt_replay(seq, 3, 5);
  CHECK(std::count(hits.begin(), hits.end(), true) == 0);
}

TEST_CASE("proactive OPT equals exhaustive search on small traces") {
  CounterRng rng(123);
  for (int rep = 0; rep < 300; ++rep) {
    const std::size_t len = 1 + rng.next_u64() % 12, cat = 2 + rng.next_u64() % 4;
    const std::size_t cap = 1 + rng.next_u64() % 3;
    const double interval = rng.uniform(0.5, 4.0);
    std::vector<double> times(len);
    for (auto& t : times) t = std::floor(rng.uniform(0.0, 10.0));  // ties and start-time requests
    std::sort(times.begin(), times.end());
    std::vector<VideoId> seq(len);
    for (auto& v : seq) v = static_cast<VideoId>(rng.next_u64() % cat);
    const auto hits = opt_proactive_replay(times, seq, 0.0, interval, cap, cat);
    const std::vector<std::uint32_t> s32(seq.begin(), seq.end());
    CHECK(static_cast<std::size_t>(std::count(hits.begin(), hits.end(), true)) ==
          oracle::best_hits_proactive(times, s32, 0.0, interval, cap, cat));
  }
}

TEST_CASE("OPT dominates on synthetic traces and never overfills") {
  const TraceDataset ds = synthetic_city(40, 72.0, 3);
  Hyperparams hp;
  for (std::size_t cap : {1, 2, 5, 10, 20}) {
    const SimReport opt = run(ds, PolicyKind::OPT, cap);
    const SimReport lru = run(ds, PolicyKind::LRU, cap);
    const SimReport wlfu = run(ds, PolicyKind::WLFU, cap);
    HrsArtifacts art{OnlineState::warm(ds, sample_true_params(40, 3), hp, 0.0, 0), false, {}};
    CacheConfig cfg;
    cfg.policy = PolicyKind::HRS;
    cfg.capacity = cap;
    const SimReport hrs = simulate(ds, cfg, &art);
    CHECK(opt.hits >= lru.hits);
    CHECK(opt.hits >= wlfu.hits);
    CHECK(opt.hits >= hrs.hits);
    for (const auto* r : {&opt, &lru, &wlfu, &hrs}) {
      CHECK(r->peak_occupancy <= cap);
      CHECK(r->hits <= r->total);
    }
  }
}

TEST_CASE("nested rankings: hit rate grows with capacity") {
  const TraceDataset ds = synthetic_city(30, 72.0, 4);
  Hyperparams hp;
  const HrsParams p = sample_true_params(30, 4);
  std::uint64_t prev[3] = {0, 0, 0};
  for (std::size_t cap = 0; cap <= 30; cap += 3) {
    HrsArtifacts art{OnlineState::warm(ds, p, hp, 0.0, 0), false, {}};
    CacheConfig cfg;
    cfg.capacity = cap;
    cfg.policy = PolicyKind::HRS;
    const std::uint64_t h[3] = {simulate(ds, cfg, &art).hits, run(ds, PolicyKind::WLFU, cap).hits,
                                run(ds, PolicyKind::OPT, cap).hits};
    for (int k = 0; k < 3; ++k) {
      CHECK(h[k] >= prev[k]);
      prev[k] = h[k];
    }
  }
}

TEST_CASE("HRS with the whole catalog hits everything after the first ranking") {
  TraceDataset ds = synthetic_city(10, 48.0, 5);
  const double start = 24.0;
  const TraceDataset test = slice(ds, start, ds.horizon);
  Hyperparams hp;
  HrsArtifacts art{OnlineState::warm(ds, HrsParams(10), hp, start, 0), false, {}};
  CacheConfig cfg;
  cfg.policy = PolicyKind::HRS;
  cfg.capacity = 10;
  const SimReport r = simulate(test, cfg, &art);
  std::uint64_t before = 0;
  for (const auto& e : test.events) before += e.time <= start;
  CHECK(r.total == test.events.size());
  CHECK(r.hits == r.total - before);
}

TEST_CASE("HRS needs a state warmed to the test start") {
  const TraceDataset ds = synthetic_city(5, 48.0, 6);
  const TraceDataset test = slice(ds, 24.0, 48.0);
  HrsArtifacts art{OnlineState::warm(ds, HrsParams(5), Hyperparams{}, 12.0, 0), false, {}};
  CacheConfig cfg;
  cfg.policy = PolicyKind::HRS;
  cfg.capacity = 2;
  CHECK_THROWS(simulate(test, cfg, &art));
  CHECK_THROWS(simulate(test, cfg, nullptr));
  cfg.capacity = 6;
  CHECK_THROWS(simulate(test, cfg, &art));
}

TEST_CASE("WLFU matches a from-scratch replay of its definition") {
  const TraceDataset ds = synthetic_city(25, 96.0, 7);
  const double start = 48.0;
  const TraceDataset test = slice(ds, start, ds.horizon);
  for (double window : {3.0, 24.0, 96.0})
    for (std::size_t cap : {1, 4, 10}) {
      CacheConfig cfg;
      cfg.policy = PolicyKind::WLFU;
      cfg.capacity = cap;
      cfg.wlfu_window = window;
      const SimReport r = simulate(test, cfg, nullptr, &ds);
      CHECK(r.hits == wlfu_oracle(ds, start, 1.0, window, cap));
    }
}

TEST_CASE("WLFU with a full-horizon window learns the true top-S") {
  // Stationary popularity: video v requested with weight C - v.
  TraceDataset ds;
  ds.catalog_size = 6;
  CounterRng rng(1);
  std::vector<double> w{6, 5, 4, 3, 2, 1};
  double t = 0.0;
  for (int k = 0; k < 3000; ++k) {
    t += rng.exponential(10.0);
    double u = rng.uniform() * 21.0;
    VideoId v = 0;
    while (u >= w[v]) u -= w[v++];
    ds.events.push_back({v, t, "", "", ""});
  }
  ds.horizon = t;
  CacheConfig cfg;
  cfg.policy = PolicyKind::WLFU;
  cfg.capacity = 2;
  cfg.wlfu_window = ds.horizon;
  const SimReport r = simulate(ds, cfg);
  // Late requests are served from the {0, 1} cache.
  std::uint64_t late = 0, late_top = 0;
  for (const auto& e : ds.events)
    if (e.time > ds.horizon / 2) {
      ++late;
      late_top += e.video < 2;
    }
  CHECK(r.per_day.size() >= 1);
  CHECK(r.hits >= late_top);
  CHECK(static_cast<double>(r.hits) <= static_cast<double>(late_top) + (ds.events.size() - late));
}

TEST_CASE("WLFU keeps its cache across an empty window") {
  TraceDataset ds;
  ds.catalog_size = 2;
  ds.events = {{0, 0.5, "", "", ""}, {0, 30.0, "", "", ""}};
  ds.horizon = 31.0;
  CacheConfig cfg;
  cfg.policy = PolicyKind::WLFU;
  cfg.capacity = 1;
  cfg.wlfu_window = 2.0;
  CHECK(simulate(ds, cfg).hits == 1);
}

TEST_CASE("per-day buckets and determinism") {
  const TraceDataset ds = synthetic_city(20, 72.0, 8);
  const SimReport a = run(ds, PolicyKind::LRU, 5), b = run(ds, PolicyKind::LRU, 5);
  CHECK(to_json(a).dump() == to_json(b).dump());
  CHECK(a.per_day.size() == 3);
  CHECK(to_json(a)["wall_time_s"].is_null());
  CacheConfig cfg;
  cfg.capacity = 5;
  CHECK(simulate(ds, cfg, nullptr, nullptr, true).wall_time.has_value());
}

TEST_CASE("weighted hit rate") {
  SimReport a, b;
  a.hits = 50;
  a.total = 100;
  b.hits = 0;
  b.total = 100;
  CHECK(weighted_hit_rate(std::vector<SimReport>{a}) == 0.5);
  CHECK(weighted_hit_rate(std::vector<SimReport>{a, b}) == 0.25);
  CHECK(weighted_hit_rate(std::vector<SimReport>{b, a}) == 0.25);
  CHECK_THROWS(weighted_hit_rate(std::vector<SimReport>{}));
}

TEST_CASE("top_k breaks ties to the lower id, report formats") {
  const std::vector<double> sc{1.0, 3.0, 3.0, 2.0};
  CHECK(top_k(sc, 2) == std::vector<VideoId>{1, 2});
  CHECK(top_k(sc, 9).size() == 4);
  CHECK(parse_policy("opt") == PolicyKind::OPT);
  CHECK_THROWS(parse_policy("fifo"));
  SimReport r;
  r.policy = "LRU";
  r.capacity = 3;
  const auto j = to_json(r);
  for (const char* key : {"policy", "capacity", "hits", "total", "hit_rate", "per_day", "wall_time_s"})
    CHECK(j.contains(key));
  std::ostringstream csv;
  write_report_csv_header(csv);
  write_report_csv_row(csv, r);
  CHECK(csv.str() == "policy,capacity,hits,total,hit_rate,wall_time_s\nLRU,3,0,0,0,\n");
}
