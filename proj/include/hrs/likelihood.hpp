#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrs/model.hpp"
#include "hrs/trace.hpp"

namespace hrs {

/// Flat gradient layout matches HrsParams::flatten: [beta | omega | alpha | gamma].
struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

struct TermValue {
  double value = 0.0;
  std::vector<double> grad;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(VideoId video)
      : std::runtime_error("non-finite loss contribution from video " + std::to_string(video)),
        video_(video) {}
  VideoId video() const { return video_; }

 private:
  VideoId video_;
};

/// Everything the objective needs, with the parameters left free. Each
/// video carries its sorted requests, of which the ones before
/// `first_scored` are history: they drive the kernels but are not scored.
struct LikelihoodProblem {
  std::size_t catalog = 0;
  double window_start = 0.0;
  double window_end = 0.0;
  std::vector<std::vector<double>> events;
  std::vector<std::size_t> first_scored;
  std::vector<std::vector<double>> negatives;  // all later than psi_origin
  std::vector<double> psi0;                    // Psi at psi_origin
  double psi_origin = 0.0;
  std::vector<std::uint64_t> n_base;           // requests dropped before `events`
  std::vector<double> samples;                 // sorted, shared by all videos
  Hyperparams hp;
  unsigned threads = 1;

  /// Scale of the Monte-Carlo sum: window length / sample count.
  double sample_weight() const {
    return samples.empty() ? 0.0 : (window_end - window_start) / samples.size();
  }

  /// Whole-dataset problem on (start, horizon] with hp.M frozen samples.
  static LikelihoodProblem offline(const TraceDataset& ds, const Hyperparams& hp,
                                   std::uint64_t seed, unsigned threads = 1);
};

/// `count` sorted uniforms on [lo, hi) drawn from a counter stream keyed by seed.
std::vector<double> draw_samples(std::size_t count, double lo, double hi, std::uint64_t seed);

struct VideoTerms {
  double event_ll = 0.0;
  double integral = 0.0;  // already scaled by the sample weight
  double event_grad[4] = {0, 0, 0, 0};
  double integral_grad[4] = {0, 0, 0, 0};
};

/// One chronological sweep over a video's requests, negatives and the
/// shared samples. At equal timestamps samples are evaluated first, then
/// requests (scored, then absorbed), then negatives are absorbed.
VideoTerms evaluate_video(const LikelihoodProblem& prob, VideoId i, const HrsParams& p,
                          bool with_integral);

struct Evaluation {
  double event_ll = 0.0;
  double integral = 0.0;
  std::vector<double> event_grad;
  std::vector<double> integral_grad;
  std::vector<VideoTerms> per_video;
};

/// Evaluates all videos (in parallel when prob.threads > 1) and reduces in
/// video-id order, so results are bit-identical for any thread count.
Evaluation evaluate(const LikelihoodProblem& prob, const HrsParams& p, bool with_integral = true);

/// -(events - integral) + 1/2 sum rho ||theta||^2 and its gradient.
LossAndGrad penalized_loss_and_grad(const LikelihoodProblem& prob, const HrsParams& p);

/// sum log hat_lambda over all requests of ds, and its gradient.
TermValue event_term(const TraceDataset& ds, const HrsParams& p, const Hyperparams& hp);

/// (T / M) sum_m sum_i hat_lambda_i(t_m) with t_m ~ U(start, horizon).
TermValue mc_integral_term(const TraceDataset& ds, const HrsParams& p, const Hyperparams& hp,
                           std::uint64_t seed);

struct WindowedLikelihoodInput {
  const TraceDataset& ds;
  const HrsParams& p;
  const Hyperparams& hp;
  std::uint64_t rng_seed = 0;
};

LossAndGrad penalized_loss_and_grad(const WindowedLikelihoodInput& input);

/// Per-video `video_id,event_ll,integral` rows.
void write_contributions(std::ostream& out, const Evaluation& eval);

}  // namespace hrs
