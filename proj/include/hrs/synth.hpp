#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hrs/model.hpp"
#include "hrs/trace.hpp"
#include "json.hpp"

namespace hrs {

struct SynthSpec {
  HrsParams true_params;
  Hyperparams hp;
  double horizon = 24.0;
  /// Explicit negatives; when absent they follow the cold rule as the
  /// trace unfolds (one negative cold_period after a request that is not
  /// followed by another within cold_period).
  std::optional<std::vector<NegativeEvent>> negative_schedule;
  double cold_period = 12.0;
  std::uint64_t seed = 0;
  std::string city = "synth";
};

/// Exact samples of the hat_lambda process of every video on (0, horizon]
/// by thinning. Videos are generated independently from per-video streams
/// of the seed and merged by (time, video).
TraceDataset generate(const SynthSpec& spec);

/// Ranges for drawing a ground-truth population.
struct TruthRanges {
  double beta_lo = 0.02, beta_hi = 2.0;    // log-uniform
  double omega_lo = 0.05, omega_hi = 0.4;  // uniform
  double alpha_lo = 0.001, alpha_hi = 0.01;
  double gamma_lo = 0.05, gamma_hi = 0.5;
};

HrsParams sample_true_params(std::size_t catalog, std::uint64_t seed, const TruthRanges& r = {});

/// Generator settings plus the true parameters, for meta.json.
nlohmann::json synth_manifest(const SynthSpec& spec);

/// save_dataset with the synth manifest under "synth" (merged with `extra`);
/// true parameters also go to true_params.csv.
void save_synthetic(const std::filesystem::path& dir, const TraceDataset& ds,
                    const SynthSpec& spec, nlohmann::json extra = nlohmann::json::object());

}  // namespace hrs
