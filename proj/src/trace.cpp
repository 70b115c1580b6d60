#include "hrs/trace.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <unordered_map>

#include "hrs/format.hpp"

namespace hrs {
namespace {

constexpr double kSecondsPerHour = 3600.0;

// Days since 1970-01-01 of a proleptic Gregorian date (H. Hinnant).
long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

int read_digits(const std::string& s, std::size_t& pos, std::size_t count) {
  if (pos + count > s.size()) throw std::invalid_argument("truncated timestamp: " + s);
  int v = 0;
  for (std::size_t k = 0; k < count; ++k, ++pos) {
    if (!std::isdigit(static_cast<unsigned char>(s[pos])))
      throw std::invalid_argument("bad timestamp: " + s);
    v = v * 10 + (s[pos] - '0');
  }
  return v;
}

void expect(const std::string& s, std::size_t& pos, char c) {
  if (pos >= s.size() || s[pos] != c) throw std::invalid_argument("bad timestamp: " + s);
  ++pos;
}

double parse_iso8601(const std::string& s) {
  std::size_t pos = 0;
  const int year = read_digits(s, pos, 4);
  expect(s, pos, '-');
  const int month = read_digits(s, pos, 2);
  expect(s, pos, '-');
  const int day = read_digits(s, pos, 2);
  if (month < 1 || month > 12 || day < 1 || day > 31)
    throw std::invalid_argument("bad date: " + s);
  double seconds = static_cast<double>(days_from_civil(year, month, day)) * 86400.0;
  if (pos == s.size()) return seconds;
  if (s[pos] != 'T' && s[pos] != ' ') throw std::invalid_argument("bad timestamp: " + s);
  ++pos;
  const int hour = read_digits(s, pos, 2);
  expect(s, pos, ':');
  const int minute = read_digits(s, pos, 2);
  double sec = 0.0;
  if (pos < s.size() && s[pos] == ':') {
    ++pos;
    sec = read_digits(s, pos, 2);
    if (pos < s.size() && s[pos] == '.') {
      const std::size_t begin = pos;
      ++pos;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
      sec += std::stod("0" + s.substr(begin, pos - begin));
    }
  }
  if (hour > 23 || minute > 59 || sec >= 61.0) throw std::invalid_argument("bad time: " + s);
  seconds += hour * 3600.0 + minute * 60.0 + sec;
  if (pos == s.size()) return seconds;
  if (s[pos] == 'Z' && pos + 1 == s.size()) return seconds;
  if (s[pos] == '+' || s[pos] == '-') {
    const int sign = s[pos] == '+' ? 1 : -1;
    ++pos;
    const int oh = read_digits(s, pos, 2);
    int om = 0;
    if (pos < s.size()) {
      if (s[pos] == ':') ++pos;
      om = read_digits(s, pos, 2);
    }
    if (pos != s.size()) throw std::invalid_argument("bad offset: " + s);
    return seconds - sign * (oh * 3600.0 + om * 60.0);
  }
  throw std::invalid_argument("bad timestamp: " + s);
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name,
                         bool required) {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (trim(header[i]) == name) return i;
  if (required) throw ParseError(1, "missing column '" + name + "'");
  return std::numeric_limits<std::size_t>::max();
}

struct RawRow {
  std::string video;
  double seconds;
  std::string user, province, city;
};

}  // namespace

double parse_timestamp(const std::string& raw) {
  const std::string text = trim(raw);
  if (text.empty()) throw std::invalid_argument("empty timestamp");
  if (text.size() >= 10 && text[4] == '-') return parse_iso8601(text);
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size() || !std::isfinite(v))
    throw std::invalid_argument("bad timestamp: " + text);
  return v;
}

TraceDataset parse_trace(std::istream& in, const TraceSchema& schema,
                         const ParseOptions& options) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw std::runtime_error("no events");
  const auto header = split_csv_line(line);
  const std::size_t c_video = column_index(header, schema.video, true);
  const std::size_t c_time = column_index(header, schema.time, true);
  const std::size_t c_user = column_index(header, schema.user, false);
  const std::size_t c_prov = column_index(header, schema.province, false);
  const std::size_t c_city = column_index(header, schema.city, false);

  auto field = [](const std::vector<std::string>& f, std::size_t idx) {
    return idx < f.size() ? f[idx] : std::string();
  };

  std::vector<RawRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size())
      throw ParseError(line_no, "expected " + std::to_string(header.size()) + " fields, got " +
                                    std::to_string(f.size()));
    RawRow row;
    row.video = trim(f[c_video]);
    if (row.video.empty()) throw ParseError(line_no, "empty video id");
    try {
      row.seconds = parse_timestamp(f[c_time]);
    } catch (const std::exception& e) {
      throw ParseError(line_no, e.what());
    }
    row.city = field(f, c_city);
    if (options.city && row.city != *options.city) continue;
    row.user = field(f, c_user);
    row.province = field(f, c_prov);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no events");

  std::stable_sort(rows.begin(), rows.end(),
                   [](const RawRow& a, const RawRow& b) { return a.seconds < b.seconds; });

  TraceDataset ds;
  ds.epoch = options.epoch ? *options.epoch : rows.front().seconds;
  ds.id_map = options.id_map;
  std::unordered_map<std::string, VideoId> ids;
  for (std::size_t i = 0; i < ds.id_map.size(); ++i)
    ids.emplace(ds.id_map[i], static_cast<VideoId>(i));

  ds.events.reserve(rows.size());
  for (auto& row : rows) {
    auto [it, inserted] = ids.emplace(row.video, static_cast<VideoId>(ds.id_map.size()));
    if (inserted) ds.id_map.push_back(row.video);
    RequestEvent ev;
    ev.video = it->second;
    ev.time = (row.seconds - ds.epoch) / kSecondsPerHour;
    if (ev.time < 0.0) throw std::runtime_error("event before epoch for video " + row.video);
    ev.user = std::move(row.user);
    ev.province = std::move(row.province);
    ev.city = std::move(row.city);
    ds.events.push_back(std::move(ev));
  }
  ds.catalog_size = ds.id_map.size();
  ds.start = 0.0;
  ds.horizon = options.horizon ? *options.horizon : ds.events.back().time;
  if (ds.horizon < ds.events.back().time)
    throw std::runtime_error("horizon precedes the last event");
  return ds;
}

void write_events_csv(std::ostream& out, const TraceDataset& ds) {
  out << "video_id,user_id,time,province,city\n";
  for (const auto& ev : ds.events) {
    const std::string& id =
        ev.video < ds.id_map.size() ? ds.id_map[ev.video] : std::to_string(ev.video);
    out << id << ',' << ev.user << ',' << format_fixed6(ds.epoch + ev.time * kSecondsPerHour)
        << ',' << ev.province << ',' << ev.city << '\n';
  }
}

void write_negatives_csv(std::ostream& out, const TraceDataset& ds) {
  out << "video_id,time_hours\n";
  for (const auto& neg : ds.negatives) out << neg.video << ',' << format_real(neg.time) << '\n';
}

std::vector<NegativeEvent> read_negatives_csv(std::istream& in) {
  std::vector<NegativeEvent> out;
  std::string line;
  std::size_t line_no = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() != 2) throw ParseError(line_no, "expected video_id,time_hours");
    try {
      NegativeEvent n;
      n.video = static_cast<VideoId>(std::stoul(f[0]));
      n.time = std::stod(f[1]);
      out.push_back(n);
    } catch (const std::logic_error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const NegativeEvent& a, const NegativeEvent& b) { return a.time < b.time; });
  return out;
}

nlohmann::json dataset_manifest(const TraceDataset& ds) {
  nlohmann::json j;
  j["catalog_size"] = ds.catalog_size;
  j["start_hours"] = ds.start;
  j["horizon_hours"] = ds.horizon;
  j["epoch_seconds"] = ds.epoch;
  j["events"] = ds.events.size();
  j["negatives"] = ds.negatives.size();
  j["id_map"] = ds.id_map;
  return j;
}

void save_dataset(const std::filesystem::path& dir, const TraceDataset& ds,
                  const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "events.csv");
    write_events_csv(out, ds);
  }
  {
    std::ofstream out(dir / "negatives.csv");
    write_negatives_csv(out, ds);
  }
  nlohmann::json meta = dataset_manifest(ds);
  meta.update(extra);
  std::ofstream out(dir / "meta.json");
  out << meta.dump(2) << '\n';
  if (!out) throw std::runtime_error("failed writing " + (dir / "meta.json").string());
}

TraceDataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw std::runtime_error("missing " + (dir / "meta.json").string());
  const nlohmann::json meta = nlohmann::json::parse(meta_in);

  ParseOptions opts;
  opts.epoch = meta.at("epoch_seconds").get<double>();
  opts.id_map = meta.at("id_map").get<std::vector<std::string>>();
  opts.horizon = meta.at("horizon_hours").get<double>();
  std::ifstream ev_in(dir / "events.csv");
  if (!ev_in) throw std::runtime_error("missing " + (dir / "events.csv").string());
  TraceDataset ds = parse_trace(ev_in, TraceSchema{}, opts);
  ds.start = meta.value("start_hours", 0.0);
  ds.catalog_size = std::max(ds.catalog_size, meta.at("catalog_size").get<std::size_t>());

  std::ifstream neg_in(dir / "negatives.csv");
  if (neg_in) ds.negatives = read_negatives_csv(neg_in);
  for (const auto& n : ds.negatives)
    if (n.video >= ds.catalog_size) throw std::runtime_error("negative for unknown video");
  return ds;
}

TraceDataset generate_negatives(const TraceDataset& ds, double cold_period) {
  if (!(cold_period > 0.0)) throw std::invalid_argument("cold_period must be positive");
  TraceDataset out = ds;
  std::vector<std::vector<double>> per_video(ds.catalog_size);
  for (const auto& ev : ds.events) per_video.at(ev.video).push_back(ev.time);

  std::vector<NegativeEvent> derived;
  for (std::size_t v = 0; v < per_video.size(); ++v) {
    const auto& times = per_video[v];
    for (std::size_t k = 0; k < times.size(); ++k) {
      const double next = k + 1 < times.size() ? times[k + 1] : ds.horizon;
      if (next - times[k] > cold_period)
        derived.push_back({static_cast<VideoId>(v), times[k] + cold_period});
    }
  }

  auto key_less = [](const NegativeEvent& a, const NegativeEvent& b) {
    return a.time < b.time || (a.time == b.time && a.video < b.video);
  };
  std::vector<NegativeEvent> existing = ds.negatives;
  std::sort(existing.begin(), existing.end(), key_less);
  std::sort(derived.begin(), derived.end(), key_less);
  out.negatives.clear();
  std::set_union(existing.begin(), existing.end(), derived.begin(), derived.end(),
                 std::back_inserter(out.negatives), key_less);
  return out;
}

TraceDataset slice(const TraceDataset& ds, double lo, double hi) {
  TraceDataset out;
  out.catalog_size = ds.catalog_size;
  out.epoch = ds.epoch;
  out.id_map = ds.id_map;
  out.start = lo;
  out.horizon = hi;
  const bool closed = hi >= ds.horizon;
  auto inside = [&](double t) { return t >= lo && (t < hi || (closed && t == hi)); };
  for (const auto& ev : ds.events)
    if (inside(ev.time)) out.events.push_back(ev);
  for (const auto& n : ds.negatives)
    if (inside(n.time)) out.negatives.push_back(n);
  return out;
}

FoldSplit split_forward_chaining(const TraceDataset& ds, int parts, int fold) {
  if (parts < 3) throw std::invalid_argument("need at least 3 parts");
  if (fold < 1 || fold > parts - 2)
    throw std::invalid_argument("fold must be in 1.." + std::to_string(parts - 2));
  const double len = ds.duration() / parts;
  auto edge = [&](int k) { return k == parts ? ds.horizon : ds.start + len * k; };
  FoldSplit split;
  split.fold_index = fold;
  split.train = slice(ds, edge(0), edge(fold));
  split.validation = slice(ds, edge(fold), edge(fold + 1));
  split.test = slice(ds, edge(fold + 1), edge(fold + 2));
  return split;
}

VideoTimelines group_by_video(const TraceDataset& ds) {
  VideoTimelines tl;
  tl.events.resize(ds.catalog_size);
  tl.negatives.resize(ds.catalog_size);
  for (const auto& ev : ds.events) {
    if (ev.video >= ds.catalog_size)
      throw std::out_of_range("event for video " + std::to_string(ev.video) +
                              " outside catalog of size " + std::to_string(ds.catalog_size));
    tl.events[ev.video].push_back(ev.time);
  }
  for (const auto& n : ds.negatives) {
    if (n.video >= ds.catalog_size)
      throw std::out_of_range("negative for video " + std::to_string(n.video) +
                              " outside catalog");
    tl.negatives[n.video].push_back(n.time);
  }
  for (auto& v : tl.events) std::sort(v.begin(), v.end());
  for (auto& v : tl.negatives) std::sort(v.begin(), v.end());
  return tl;
}

}  // namespace hrs
