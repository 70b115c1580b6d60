#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hrs/cache.hpp"
#include "hrs/fit.hpp"
#include "hrs/format.hpp"
#include "hrs/online.hpp"
#include "hrs/parallel.hpp"
#include "hrs/synth.hpp"
#include "hrs/trace.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hrs;

namespace {

// Bad input from the caller; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int log_level() {
  const char* env = std::getenv("HRS_CACHE_LOG");
  if (!env) return 1;
  const std::string v = env;
  if (v == "0" || v == "quiet" || v == "off" || v == "error") return 0;
  if (v == "2" || v == "debug" || v == "verbose") return 2;
  return 1;
}

template <typename... Args>
void log(int level, const Args&... args) {
  if (level > log_level()) return;
  std::ostringstream os;
  os << "[hrs] ";
  (os << ... << args);
  std::cerr << os.str() << '\n';
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text + ",") {
    if (c == ',' || c == ' ' || c == ';') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError("not a boolean: " + v);
}

struct Settings {
  Hyperparams hp;
  double samples_per_day = Hyperparams::kSamplesPerDay;
  std::optional<std::size_t> M, dM;  // explicit sample counts
  double cold_period = 12.0;
  std::uint64_t seed = 1;
  int fold = 1;
  std::size_t max_iters = 200;
  double loss_rel_tol = 1e-6;
  double param_lower_bound = 1e-6;
  std::size_t history_size = 10;
  std::vector<std::string> policies{"HRS", "LRU", "WLFU", "OPT"};
  std::vector<double> capacity_pcts{0.1, 0.5, 1, 2.5, 5, 10, 25};
  std::vector<std::size_t> capacities;  // slot counts; override the percentages
  double wlfu_window = 24.0;
  double init_beta = 1.0, init_omega = 1.0, init_alpha = 1.0, init_gamma = 0.1;
  bool online_updates = false;
  bool early_stop = false;
  std::size_t videos = 200;
  double days = 14.0;
  unsigned threads = 1;

  void set(const std::string& key, const std::string& value) {
    auto real = [&] {
      try {
        std::size_t used = 0;
        const double x = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return x;
      } catch (const std::exception&) {
        throw UsageError("bad value for " + key + ": " + value);
      }
    };
    auto count = [&] {
      const double x = real();
      if (x < 0 || x != std::floor(x)) throw UsageError("bad value for " + key + ": " + value);
      return static_cast<std::size_t>(x);
    };
    if (key == "delta0") hp.delta0 = real();
    else if (key == "delta1") hp.delta1 = real();
    else if (key == "s") hp.s = real();
    else if (key == "rho") hp.rho_beta = hp.rho_omega = hp.rho_alpha = hp.rho_gamma = real();
    else if (key == "rho_beta") hp.rho_beta = real();
    else if (key == "rho_omega") hp.rho_omega = real();
    else if (key == "rho_alpha") hp.rho_alpha = real();
    else if (key == "rho_gamma") hp.rho_gamma = real();
    else if (key == "samples_per_day") samples_per_day = real();
    else if (key == "M") M = count();
    else if (key == "dM") dM = count();
    else if (key == "dt") hp.dt = real();
    else if (key == "dT") hp.dT = real();
    else if (key == "k_th") hp.k_th = real();
    else if (key == "eta") hp.eta = real();
    else if (key == "cold_period") cold_period = real();
    else if (key == "seed") seed = static_cast<std::uint64_t>(count());
    else if (key == "fold") fold = static_cast<int>(count());
    else if (key == "max_iters") max_iters = count();
    else if (key == "loss_rel_tol") loss_rel_tol = real();
    else if (key == "param_lower_bound") param_lower_bound = real();
    else if (key == "history_size") history_size = count();
    else if (key == "policies") {
      policies.clear();
      for (const auto& p : split_list(value)) {
        try {
          policies.push_back(to_string(parse_policy(p)));
        } catch (const std::invalid_argument& e) {
          throw UsageError(e.what());
        }
      }
    } else if (key == "capacity_pcts") {
      capacity_pcts.clear();
      capacities.clear();
      for (const auto& p : split_list(value)) capacity_pcts.push_back(Settings{}.parse_real(key, p));
    } else if (key == "capacities") {
      capacities.clear();
      for (const auto& p : split_list(value)) {
        const double x = Settings{}.parse_real(key, p);
        if (x < 0 || x != std::floor(x)) throw UsageError("bad capacity: " + p);
        capacities.push_back(static_cast<std::size_t>(x));
      }
    } else if (key == "wlfu_window") wlfu_window = real();
    else if (key == "init_beta") init_beta = real();
    else if (key == "init_omega") init_omega = real();
    else if (key == "init_alpha") init_alpha = real();
    else if (key == "init_gamma") init_gamma = real();
    else if (key == "online_updates") online_updates = parse_bool(value);
    else if (key == "early_stop") early_stop = parse_bool(value);
    else if (key == "videos") videos = count();
    else if (key == "days") days = real();
    else if (key == "threads") threads = static_cast<unsigned>(std::max<std::size_t>(1, count()));
    else throw UsageError("unknown setting '" + key + "'");
  }

  double parse_real(const std::string& key, const std::string& v) const {
    try {
      std::size_t used = 0;
      const double x = std::stod(v, &used);
      if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw UsageError("bad value for " + key + ": " + v);
  }

  void load_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file " + path.string());
    std::string line;
    std::size_t no = 0;
    while (std::getline(in, line)) {
      ++no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto eq = line.find('=');
      auto trim = [](std::string s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      if (trim(line).empty()) continue;
      if (eq == std::string::npos)
        throw UsageError(path.string() + ":" + std::to_string(no) + ": expected key = value");
      set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
  }

  // Hyperparameters for a training window of the given length.
  Hyperparams window_hp(double train_hours) const {
    Hyperparams out = hp;
    const double m = M ? static_cast<double>(*M) : samples_per_day * train_hours / 24.0;
    out.M = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(m)));
    const double dm = dM ? static_cast<double>(*dM) : static_cast<double>(out.M) * hp.dT / train_hours;
    out.dM = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(dm)));
    out.validate();
    return out;
  }

  FitConfig fit_config() const {
    FitConfig cfg;
    cfg.max_iters = max_iters;
    cfg.loss_rel_tol = loss_rel_tol;
    cfg.param_lower_bound = param_lower_bound;
    cfg.history_size = history_size;
    cfg.seed = seed;
    cfg.threads = threads;
    return cfg;
  }

  void validate() const {
    hp.validate();
    if (fold < 1 || fold > 3) throw UsageError("--fold must be 1, 2 or 3");
    if (!(cold_period > 0)) throw UsageError("cold_period must be > 0");
    if (!(wlfu_window > 0)) throw UsageError("wlfu_window must be > 0");
    if (!(init_beta > 0 && init_omega > 0 && init_alpha > 0 && init_gamma > 0))
      throw UsageError("initial parameter values must be > 0");
    if (policies.empty()) throw UsageError("no policies given");
    if (capacities.empty() && capacity_pcts.empty()) throw UsageError("no capacities given");
    for (double p : capacity_pcts)
      if (!(p > 0 && p <= 100)) throw UsageError("capacity percentages must be in (0, 100]");
    try {
      fit_config().validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }

  // Everything that shapes results. Thread count is left out: outputs do
  // not depend on it.
  json to_json() const {
    json j;
    j["delta0"] = hp.delta0;
    j["delta1"] = hp.delta1;
    j["s"] = hp.s;
    j["rho_beta"] = hp.rho_beta;
    j["rho_omega"] = hp.rho_omega;
    j["rho_alpha"] = hp.rho_alpha;
    j["rho_gamma"] = hp.rho_gamma;
    j["samples_per_day"] = samples_per_day;
    j["M"] = M ? json(*M) : json(nullptr);
    j["dM"] = dM ? json(*dM) : json(nullptr);
    j["dt"] = hp.dt;
    j["dT"] = hp.dT;
    j["k_th"] = hp.k_th;
    j["eta"] = hp.eta;
    j["cold_period"] = cold_period;
    j["seed"] = seed;
    j["fold"] = fold;
    j["max_iters"] = max_iters;
    j["loss_rel_tol"] = loss_rel_tol;
    j["param_lower_bound"] = param_lower_bound;
    j["history_size"] = history_size;
    j["policies"] = policies;
    j["capacity_pcts"] = capacities.empty() ? json(capacity_pcts) : json(nullptr);
    j["capacities"] = capacities.empty() ? json(nullptr) : json(capacities);
    j["wlfu_window"] = wlfu_window;
    j["init_beta"] = init_beta;
    j["init_omega"] = init_omega;
    j["init_alpha"] = init_alpha;
    j["init_gamma"] = init_gamma;
    j["online_updates"] = online_updates;
    j["early_stop"] = early_stop;
    j["videos"] = videos;
    j["days"] = days;
    return j;
  }
};

// One requested capacity: slot count, plus the percentage it came from.
struct Capacity {
  std::size_t slots;
  std::optional<double> pct;
};

std::vector<Capacity> resolve_capacities(const Settings& s, std::size_t catalog) {
  std::vector<Capacity> out;
  if (!s.capacities.empty()) {
    for (std::size_t c : s.capacities) {
      if (c > catalog)
        throw UsageError("capacity " + std::to_string(c) + " exceeds catalog size " +
                         std::to_string(catalog));
      out.push_back({c, std::nullopt});
    }
    return out;
  }
  for (double pct : s.capacity_pcts) {
    const auto slots = static_cast<std::size_t>(std::llround(pct / 100.0 * static_cast<double>(catalog)));
    out.push_back({std::clamp<std::size_t>(slots, 1, catalog), pct});
  }
  return out;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void write_run_manifest(const fs::path& dir, const std::string& command, const Settings& s) {
  write_json(dir / "run.json", {{"command", command}, {"seed", s.seed}, {"config", s.to_json()}});
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

void prepare_out(const std::string& out) {
  if (out.empty()) throw UsageError("missing --out");
  fs::create_directories(out);
}

// A dataset directory written by `ingest` or `gen`, or a raw request CSV.
TraceDataset load_input(const std::string& path, const Settings& s,
                        const std::optional<std::string>& city = std::nullopt) {
  require_file(path, "--trace");
  if (fs::is_directory(path)) return load_dataset(path);
  std::ifstream in(path);
  ParseOptions opt;
  opt.city = city;
  return generate_negatives(parse_trace(in, {}, opt), s.cold_period);
}

json window_json(const TraceDataset& ds) {
  return {{"start_hours", ds.start}, {"end_hours", ds.horizon}, {"events", ds.events.size()}};
}

struct Model {
  HrsParams params;
  Hyperparams hp;
  std::optional<FitReport> report;
};

double mean_hrs_hit_rate(const TraceDataset& all, const TraceDataset& window, const HrsParams& p,
                         const Hyperparams& hp, const Settings& s) {
  const auto caps = resolve_capacities(s, all.catalog_size);
  double sum = 0.0;
  for (const auto& cap : caps) {
    HrsArtifacts art{OnlineState::warm(all, p, hp, window.start, s.seed), false, {}};
    CacheConfig cfg;
    cfg.policy = PolicyKind::HRS;
    cfg.capacity = cap.slots;
    cfg.refresh_interval = hp.dt;
    sum += simulate(window, cfg, &art).hit_rate;
  }
  return sum / static_cast<double>(caps.size());
}

Model train_model(const TraceDataset& ds, const FoldSplit& split, const Settings& s,
                  const std::string& params_path) {
  Model m;
  m.hp = s.window_hp(split.train.duration());
  if (!params_path.empty()) {
    std::ifstream in(params_path);
    m.params = read_params_csv(in);
    if (m.params.size() != ds.catalog_size)
      throw UsageError("parameter file does not match the catalog size");
    return m;
  }
  FitConfig cfg = s.fit_config();
  if (s.early_stop)
    cfg.validation_hit_rate = [&](const HrsParams& p) {
      return mean_hrs_hit_rate(ds, split.validation, p, m.hp, s);
    };
  log(1, "fitting ", ds.catalog_size, " videos on ", split.train.events.size(), " requests, M=", m.hp.M);
  m.report = fit(split.train, m.hp,
                 HrsParams(ds.catalog_size, s.init_beta, s.init_omega, s.init_alpha, s.init_gamma), cfg);
  log(1, "fit stopped (", to_string(m.report->stop_reason), ") after ", m.report->iterations,
      " iterations, loss ", format_real(m.report->loss_trajectory.back()));
  m.params = m.report->final_params;
  return m;
}

SimReport run_cell(const TraceDataset& ds, const FoldSplit& split, const Model* model,
                   const Settings& s, PolicyKind policy, std::size_t capacity, bool timing) {
  const TraceDataset& test = split.test;
  CacheConfig cfg;
  cfg.policy = policy;
  cfg.capacity = capacity;
  cfg.refresh_interval = s.hp.dt;
  cfg.wlfu_window = s.wlfu_window;
  if (policy == PolicyKind::HRS) {
    FitConfig online_fit = s.fit_config();
    online_fit.threads = 1;
    HrsArtifacts art{OnlineState::warm(ds, model->params, model->hp, test.start, s.seed),
                     s.online_updates, online_fit};
    return simulate(test, cfg, &art, nullptr, timing);
  }
  const TraceDataset history = slice(ds, ds.start, test.start);
  return simulate(test, cfg, nullptr, &history, timing);
}

json fit_json(const FitReport& r) {
  return {{"iterations", r.iterations},
          {"stop_reason", to_string(r.stop_reason)},
          {"final_loss", r.loss_trajectory.back()},
          {"loss_trajectory", r.loss_trajectory},
          {"validation_hit_rates", r.validation_hit_rates}};
}

// ---- commands ----

struct Common {
  std::string trace, out, config, params;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;  // setting key -> flag value
  bool timing = false;
};

Settings resolve(const Common& c) {
  Settings s;
  if (!c.config.empty()) s.load_file(c.config);
  for (const auto& kv : c.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got " + kv);
    s.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : c.flags) s.set(k, v);
  s.validate();
  return s;
}

int cmd_ingest(const Common& c, const std::optional<std::string>& city) {
  const Settings s = resolve(c);
  require_file(c.trace, "--trace");
  if (fs::is_directory(c.trace)) throw UsageError("--trace must be a CSV file for ingest");
  if (c.out.empty()) throw UsageError("missing --out");
  std::ifstream in(c.trace);
  ParseOptions opt;
  opt.city = city;
  const TraceDataset ds = generate_negatives(parse_trace(in, {}, opt), s.cold_period);
  prepare_out(c.out);
  const json extra = {{"command", "ingest"},
                      {"seed", s.seed},
                      {"config", s.to_json()},
                      {"city", city ? json(*city) : json(nullptr)}};
  save_dataset(c.out, ds, extra);
  for (int fold = 1; fold <= 3; ++fold) {
    const FoldSplit f = split_forward_chaining(ds, 5, fold);
    const fs::path base = fs::path(c.out) / "folds" / ("fold" + std::to_string(fold));
    json e = extra;
    e["fold"] = fold;
    e["part"] = "train";
    save_dataset(base / "train", f.train, e);
    e["part"] = "validation";
    save_dataset(base / "validation", f.validation, e);
    e["part"] = "test";
    save_dataset(base / "test", f.test, e);
  }
  write_run_manifest(c.out, "ingest", s);
  log(1, "ingested ", ds.events.size(), " requests, ", ds.catalog_size, " videos, ",
      ds.negatives.size(), " negatives");
  return 0;
}

int cmd_gen(const Common& c) {
  const Settings s = resolve(c);
  if (c.out.empty()) throw UsageError("missing --out");
  if (s.videos == 0 || !(s.days > 0)) throw UsageError("gen needs videos >= 1 and days > 0");
  SynthSpec spec;
  spec.true_params = sample_true_params(s.videos, s.seed);
  spec.hp = s.hp;
  spec.horizon = s.days * 24.0;
  spec.cold_period = s.cold_period;
  spec.seed = s.seed;
  const TraceDataset ds = generate(spec);
  prepare_out(c.out);
  save_synthetic(c.out, ds, spec, {{"command", "gen"}, {"seed", s.seed}, {"config", s.to_json()}});
  write_run_manifest(c.out, "gen", s);
  log(1, "generated ", ds.events.size(), " requests over ", s.videos, " videos");
  return 0;
}

int cmd_fit(const Common& c) {
  const Settings s = resolve(c);
  if (c.out.empty()) throw UsageError("missing --out");
  const TraceDataset ds = load_input(c.trace, s);
  const FoldSplit split = split_forward_chaining(ds, 5, s.fold);
  if (split.train.events.empty()) throw UsageError("training part has no requests");
  Model m = train_model(ds, split, s, "");
  prepare_out(c.out);
  const fs::path out(c.out);
  {
    std::ofstream f(out / "params.csv");
    write_params_csv(f, m.params);
  }
  {
    std::ofstream f(out / "fit_log.csv");
    write_fit_log(f, *m.report);
  }
  {
    const KernelState st = replay_kernels(ds, m.params, m.hp, split.train.horizon);
    std::ofstream f(out / "state.csv");
    write_state_csv(f, st, m.hp);
  }
  write_json(out / "fit.json", {{"command", "fit"},
                                {"seed", s.seed},
                                {"config", s.to_json()},
                                {"hyperparams", to_json(m.hp)},
                                {"train", window_json(split.train)},
                                {"state_time_hours", split.train.horizon},
                                {"report", fit_json(*m.report)}});
  write_run_manifest(out, "fit", s);
  return 0;
}

json cell_json(const SimReport& r, const std::optional<double>& pct) {
  json j = to_json(r);
  return {{"capacity_pct", pct ? json(*pct) : json(nullptr)}, {"report", j}};
}

int cmd_simulate(const Common& c, const std::string& policy_name, std::optional<std::size_t> capacity,
                 std::optional<double> capacity_pct) {
  const Settings s = resolve(c);
  if (c.out.empty()) throw UsageError("missing --out");
  if (!c.params.empty()) require_file(c.params, "--params");
  PolicyKind policy;
  try {
    policy = parse_policy(policy_name);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (capacity.has_value() == capacity_pct.has_value())
    throw UsageError("give exactly one of --capacity and --capacity-pct");
  const TraceDataset ds = load_input(c.trace, s);
  Settings one = s;
  one.capacities.clear();
  one.capacity_pcts.clear();
  if (capacity)
    one.capacities = {*capacity};
  else
    one.capacity_pcts = {*capacity_pct};
  const Capacity cap = resolve_capacities(one, ds.catalog_size).front();
  const FoldSplit split = split_forward_chaining(ds, 5, s.fold);

  std::optional<Model> model;
  if (policy == PolicyKind::HRS) model = train_model(ds, split, s, c.params);
  const SimReport r = run_cell(ds, split, model ? &*model : nullptr, s, policy, cap.slots, c.timing);
  prepare_out(c.out);
  json j = cell_json(r, cap.pct);
  j["command"] = "simulate";
  j["seed"] = s.seed;
  j["config"] = s.to_json();
  j["test"] = window_json(split.test);
  if (model && model->report) j["fit"] = fit_json(*model->report);
  write_json(fs::path(c.out) / "report.json", j);
  write_run_manifest(c.out, "simulate", s);
  std::cout << r.policy << " capacity=" << r.capacity << " hit_rate=" << format_real(r.hit_rate) << '\n';
  return 0;
}

int cmd_sweep(const Common& c) {
  const Settings s = resolve(c);
  if (c.out.empty()) throw UsageError("missing --out");
  if (!c.params.empty()) require_file(c.params, "--params");
  const TraceDataset ds = load_input(c.trace, s);
  const auto caps = resolve_capacities(s, ds.catalog_size);
  const FoldSplit split = split_forward_chaining(ds, 5, s.fold);

  std::optional<Model> model;
  if (std::find(s.policies.begin(), s.policies.end(), "HRS") != s.policies.end())
    model = train_model(ds, split, s, c.params);

  struct Cell {
    PolicyKind policy;
    Capacity cap;
  };
  std::vector<Cell> cells;
  for (const auto& p : s.policies)
    for (const auto& cap : caps) cells.push_back({parse_policy(p), cap});
  std::vector<SimReport> reports(cells.size());
  parallel_for(cells.size(), s.threads, [&](std::size_t k) {
    reports[k] = run_cell(ds, split, model ? &*model : nullptr, s, cells[k].policy,
                          cells[k].cap.slots, c.timing);
    log(2, "cell ", reports[k].policy, "@", reports[k].capacity, " hit_rate ", reports[k].hit_rate);
  });

  prepare_out(c.out);
  const fs::path out(c.out);
  fs::create_directories(out / "cells");
  {
    std::ofstream csv(out / "sweep.csv");
    write_report_csv_header(csv);
    for (const auto& r : reports) write_report_csv_row(csv, r);
  }
  json all;
  all["command"] = "sweep";
  all["seed"] = s.seed;
  all["config"] = s.to_json();
  all["catalog_size"] = ds.catalog_size;
  all["test"] = window_json(split.test);
  if (model && model->report) all["fit"] = fit_json(*model->report);
  all["cells"] = json::array();
  for (std::size_t k = 0; k < cells.size(); ++k) {
    json cell = cell_json(reports[k], cells[k].cap.pct);
    all["cells"].push_back(cell);
    cell["seed"] = s.seed;
    cell["config"] = s.to_json();
    write_json(out / "cells" / (reports[k].policy + "_" + std::to_string(reports[k].capacity) + ".json"), cell);
  }
  write_json(out / "sweep.json", all);
  write_run_manifest(out, "sweep", s);
  log(1, "sweep wrote ", cells.size(), " cells to ", out.string());
  return 0;
}

int cmd_report(const Common& c, const std::vector<std::string>& inputs) {
  const Settings s = resolve(c);
  if (inputs.empty()) throw UsageError("report needs --inputs");
  if (c.out.empty()) throw UsageError("missing --out");
  std::vector<json> sweeps;
  for (const auto& in : inputs) {
    const fs::path p = fs::is_directory(in) ? fs::path(in) / "sweep.json" : fs::path(in);
    require_file(p.string(), "--inputs entry");
    std::ifstream f(p);
    sweeps.push_back(json::parse(f));
  }
  // Key each cell by policy and the percentage it was asked for (or slots).
  std::map<std::pair<std::string, std::string>, std::vector<SimReport>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& sw : sweeps)
    for (const auto& cell : sw.at("cells")) {
      const json& r = cell.at("report");
      SimReport rep;
      rep.policy = r.at("policy").get<std::string>();
      rep.capacity = r.at("capacity").get<std::size_t>();
      rep.hits = r.at("hits").get<std::uint64_t>();
      rep.total = r.at("total").get<std::uint64_t>();
      const std::string key = cell.at("capacity_pct").is_null()
                                  ? std::to_string(rep.capacity)
                                  : format_real(cell.at("capacity_pct").get<double>()) + "%";
      const auto id = std::make_pair(rep.policy, key);
      if (!groups.count(id)) order.push_back(id);
      groups[id].push_back(rep);
    }
  prepare_out(c.out);
  const fs::path out(c.out);
  std::ofstream csv(out / "report.csv");
  csv << "policy,capacity,cities,hits,total,weighted_hit_rate\n";
  json rows = json::array();
  for (const auto& id : order) {
    const auto& reps = groups[id];
    std::uint64_t hits = 0, total = 0;
    for (const auto& r : reps) {
      hits += r.hits;
      total += r.total;
    }
    const double w = weighted_hit_rate(reps);
    csv << id.first << ',' << id.second << ',' << reps.size() << ',' << hits << ',' << total << ','
        << format_real(w) << '\n';
    rows.push_back({{"policy", id.first}, {"capacity", id.second}, {"cities", reps.size()},
                    {"hits", hits}, {"total", total}, {"weighted_hit_rate", w}});
  }
  write_json(out / "report.json",
             {{"command", "report"}, {"seed", s.seed}, {"config", s.to_json()}, {"inputs", inputs}, {"rows", rows}});
  write_run_manifest(out, "report", s);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HRS request-rate model and edge-cache simulator"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for all subcommands");

  Common common;
  std::optional<std::string> city;
  std::string policy = "HRS";
  std::optional<std::size_t> capacity;
  std::optional<double> capacity_pct;
  std::vector<std::string> inputs;

  // Flags that map onto settings keys; applied after the config file.
  std::map<std::string, std::string> raw;
  auto setting_flag = [&](CLI::App* sub, const std::string& flag, const std::string& key,
                          const std::string& help) {
    sub->add_option_function<std::string>(flag, [&raw, key](const std::string& v) { raw[key] = v; }, help);
  };
  auto add_common = [&](CLI::App* sub, bool needs_trace) {
    if (needs_trace) sub->add_option("--trace", common.trace, "Dataset directory or request CSV");
    sub->add_option("--out", common.out, "Output directory");
    sub->add_option("--config", common.config, "key=value settings file");
    sub->add_option("--set", common.sets, "Override one setting, key=value (repeatable)");
    setting_flag(sub, "--seed", "seed", "Master random seed");
    setting_flag(sub, "--threads", "threads", "Worker thread cap");
  };

  auto* ingest = app.add_subcommand("ingest", "Parse a request log, add negatives, write folds");
  add_common(ingest, true);
  ingest->add_option("--city", city, "Keep only this city");
  setting_flag(ingest, "--cold-period", "cold_period", "Hours without requests before a negative");

  auto* gen = app.add_subcommand("gen", "Generate a synthetic trace from random true parameters");
  add_common(gen, false);
  setting_flag(gen, "--videos", "videos", "Catalog size");
  setting_flag(gen, "--days", "days", "Trace length in days");
  setting_flag(gen, "--cold-period", "cold_period", "Hours without requests before a negative");

  auto* fitc = app.add_subcommand("fit", "Train HRS parameters on a fold's training part");
  add_common(fitc, true);
  setting_flag(fitc, "--fold", "fold", "Forward-chaining fold, 1..3");
  fitc->add_flag("--early-stop", [&](std::int64_t) { raw["early_stop"] = "1"; },
                 "Stop when the validation hit rate plateaus");
  setting_flag(fitc, "--capacity-pcts", "capacity_pcts", "Validation capacities, % of catalog");

  auto* sim = app.add_subcommand("simulate", "Replay the test part under one policy");
  add_common(sim, true);
  setting_flag(sim, "--fold", "fold", "Forward-chaining fold, 1..3");
  sim->add_option("--policy", policy, "HRS, LRU, WLFU or OPT");
  sim->add_option("--capacity", capacity, "Cache slots");
  sim->add_option("--capacity-pct", capacity_pct, "Cache size as % of the catalog");
  sim->add_option("--params", common.params, "Use these parameters instead of fitting");
  sim->add_flag("--timing", common.timing, "Record wall time of policy code");
  sim->add_flag("--online-updates", [&](std::int64_t) { raw["online_updates"] = "1"; },
                "Refit parameters every dT hours during the replay");

  auto* sweep = app.add_subcommand("sweep", "Capacity x policy grid on the test part");
  add_common(sweep, true);
  setting_flag(sweep, "--fold", "fold", "Forward-chaining fold, 1..3");
  setting_flag(sweep, "--capacity-pcts", "capacity_pcts", "Capacities as % of catalog");
  setting_flag(sweep, "--capacities", "capacities", "Capacities as slot counts");
  setting_flag(sweep, "--policies", "policies", "Comma-separated policies");
  sweep->add_option("--params", common.params, "Use these parameters instead of fitting");
  sweep->add_flag("--timing", common.timing, "Record wall time of policy code");
  sweep->add_flag("--online-updates", [&](std::int64_t) { raw["online_updates"] = "1"; },
                  "Refit parameters every dT hours during the replay");

  auto* report = app.add_subcommand("report", "Weighted hit rates across city sweeps");
  add_common(report, false);
  report->add_option("--inputs", inputs, "Sweep directories or sweep.json files")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  }
  common.flags = raw;

  try {
    if (*ingest) return cmd_ingest(common, city);
    if (*gen) return cmd_gen(common);
    if (*fitc) return cmd_fit(common);
    if (*sim) return cmd_simulate(common, policy, capacity, capacity_pct);
    if (*sweep) return cmd_sweep(common);
    if (*report) return cmd_report(common, inputs);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
