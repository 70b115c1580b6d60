#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace hrs {

using VideoId = std::uint32_t;

/// One request. Times are hours since the dataset epoch.
struct RequestEvent {
  VideoId video = 0;
  double time = 0.0;
  std::string user;
  std::string province;
  std::string city;
};

/// A video going cold; damps the intensity through the self-restraining term.
struct NegativeEvent {
  VideoId video = 0;
  double time = 0.0;
};

/// Events of one time range. Times are absolute hours since `epoch`, so
/// sub-datasets produced by a split keep their position on the global clock.
struct TraceDataset {
  std::vector<RequestEvent> events;      // sorted by time
  std::vector<NegativeEvent> negatives;  // sorted by time
  std::size_t catalog_size = 0;          // C
  double start = 0.0;                    // window start, hours
  double horizon = 0.0;                  // window end T, hours
  double epoch = 0.0;                    // epoch seconds of time 0
  std::vector<std::string> id_map;       // dense id -> original id

  double duration() const { return horizon - start; }
};

struct FoldSplit {
  TraceDataset train;
  TraceDataset validation;
  TraceDataset test;
  int fold_index = 1;
};

/// Column names of the raw request log.
struct TraceSchema {
  std::string video = "video_id";
  std::string user = "user_id";
  std::string time = "time";
  std::string province = "province";
  std::string city = "city";
};

struct ParseOptions {
  /// Rebase on this epoch (seconds) instead of the earliest event.
  std::optional<double> epoch;
  /// Seed the dense id assignment with an existing map.
  std::vector<std::string> id_map;
  /// Keep only rows of this city.
  std::optional<std::string> city;
  /// Window end; defaults to the latest event time.
  std::optional<double> horizon;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Epoch seconds from either a decimal epoch-seconds string or ISO-8601
/// (`YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|+HH:MM]`). Throws std::invalid_argument.
double parse_timestamp(const std::string& text);

TraceDataset parse_trace(std::istream& in, const TraceSchema& schema = {},
                         const ParseOptions& options = {});

/// Writes events in the input CSV format, times as epoch seconds.
void write_events_csv(std::ostream& out, const TraceDataset& ds);
void write_negatives_csv(std::ostream& out, const TraceDataset& ds);
std::vector<NegativeEvent> read_negatives_csv(std::istream& in);
nlohmann::json dataset_manifest(const TraceDataset& ds);

/// events.csv + negatives.csv + meta.json under `dir`. `extra` is merged
/// into meta.json (config, seed, provenance of synthetic data).
void save_dataset(const std::filesystem::path& dir, const TraceDataset& ds,
                  const nlohmann::json& extra = nlohmann::json::object());
TraceDataset load_dataset(const std::filesystem::path& dir);

/// One negative per video and per maximal request gap (including the gap
/// from the last request to the horizon) longer than `cold_period`, stamped
/// at gap start + cold_period. Existing negatives are kept; duplicates are
/// not re-added, so the operation is idempotent.
TraceDataset generate_negatives(const TraceDataset& ds, double cold_period);

/// Events and negatives with lo <= time < hi (hi inclusive when it equals
/// the dataset horizon).
TraceDataset slice(const TraceDataset& ds, double lo, double hi);

/// Forward-chaining split over `parts` equal-duration parts: fold k trains
/// on parts 1..k, validates on k+1 and tests on k+2.
FoldSplit split_forward_chaining(const TraceDataset& ds, int parts, int fold);

/// Per-video sorted time lists.
struct VideoTimelines {
  std::vector<std::vector<double>> events;
  std::vector<std::vector<double>> negatives;
};

VideoTimelines group_by_video(const TraceDataset& ds);

}  // namespace hrs
