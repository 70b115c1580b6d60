#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "hrs/trace.hpp"
#include "json.hpp"

namespace hrs {

/// Fixed knobs of the model and its training. Times are in hours.
struct Hyperparams {
  double delta0 = 0.5;  // self-exciting kernel decay, 1/h
  double delta1 = 1.5;  // self-restraining kernel decay, 1/h
  double s = 0.01;      // softplus sharpness
  double rho_beta = std::exp(5.0);
  double rho_omega = std::exp(5.0);
  double rho_alpha = std::exp(5.0);
  double rho_gamma = std::exp(5.0);
  std::size_t M = 144000;         // MC samples for the training window
  double dt = 1.0;                // kernel refresh interval
  double dT = 48.0;               // online parameter window
  std::size_t dM = 288000;        // MC samples per online window
  double k_th = std::exp(-9.0);   // truncation threshold
  double eta = 1.0;               // first-step length scale of the optimizer

  static constexpr double kSamplesPerDay = 144000.0;

  void validate() const;

  /// M = 144000 samples per day of window, and dM = M * dT / T.
  Hyperparams with_window(double train_hours) const;

  /// |ln k_th| / delta0: how far back an event can still matter.
  double lookback() const { return -std::log(k_th) / delta0; }
};

nlohmann::json to_json(const Hyperparams& hp);
Hyperparams hyperparams_from_json(const nlohmann::json& j);

enum class ParamBlock : int { beta = 0, omega = 1, alpha = 2, gamma = 3 };
inline constexpr int kBlocks = 4;

/// Per-video parameter vectors, all strictly positive.
struct HrsParams {
  std::vector<double> beta, omega, alpha, gamma;

  HrsParams() = default;
  explicit HrsParams(std::size_t catalog, double b = 1.0, double w = 1.0, double a = 1.0,
                     double g = 0.1)
      : beta(catalog, b), omega(catalog, w), alpha(catalog, a), gamma(catalog, g) {}

  std::size_t size() const { return beta.size(); }

  std::vector<double>& block(ParamBlock b);
  const std::vector<double>& block(ParamBlock b) const;

  /// Flattened [beta | omega | alpha | gamma].
  std::vector<double> flatten() const;
  static HrsParams unflatten(const std::vector<double>& x, std::size_t catalog);

  void validate() const;
};

void write_params_csv(std::ostream& out, const HrsParams& p);
HrsParams read_params_csv(std::istream& in);

double kernel_k0(double elapsed, const Hyperparams& hp);
double kernel_k1(double elapsed, const Hyperparams& hp);

/// s * ln(1 + e^(x/s)), evaluated without overflow and floored at the
/// smallest normal double so logs stay finite.
double softplus(double x, double s);
/// e^(x/s) / (1 + e^(x/s)).
double softplus_prime(double x, double s);

/// Accumulators of one video. phi and gamma_acc are valid at phi_time,
/// psi at psi_time; reads decay them lazily to the query time.
struct VideoKernel {
  double phi = 0.0;        // sum k0(t - tau) e^{-alpha N(tau)}
  double gamma_acc = 0.0;  // sum k0(t - tau) N(tau) e^{-alpha N(tau)}
  double psi = 0.0;        // sum k1(t - tau')
  std::uint64_t n = 0;     // requests absorbed so far
  double phi_time = 0.0;
  double psi_time = 0.0;
};

struct KernelValues {
  double phi = 0.0;
  double psi = 0.0;
  double gamma_acc = 0.0;
  std::uint64_t n = 0;
};

/// Per-video sufficient statistics plus the shared clock. Built for one
/// alpha vector: changing alpha requires a rebuild.
class KernelState {
 public:
  KernelState() = default;
  KernelState(std::size_t catalog, double time) : videos_(catalog), last_update_time_(time) {
    for (auto& v : videos_) v.phi_time = v.psi_time = time;
  }

  std::size_t size() const { return videos_.size(); }
  double last_update_time() const { return last_update_time_; }
  void set_last_update_time(double t);

  const VideoKernel& raw(VideoId i) const { return videos_.at(i); }
  VideoKernel& raw(VideoId i) { return videos_.at(i); }

  /// Accumulators of video i decayed to time t (t >= its stamps).
  KernelValues at(VideoId i, double t, const Hyperparams& hp) const;
  KernelValues at(VideoId i, const Hyperparams& hp) const {
    return at(i, last_update_time_, hp);
  }

  /// Adds a request of video i at tau: N += 1, then phi and gamma_acc gain
  /// e^{-alpha N} and N e^{-alpha N}.
  void absorb_event(VideoId i, double tau, double alpha, const Hyperparams& hp);
  void absorb_negative(VideoId i, double tau, const Hyperparams& hp);

 private:
  std::vector<VideoKernel> videos_;
  double last_update_time_ = 0.0;
};

/// Replays every event and negative of `ds` with time <= t into a fresh state.
KernelState replay_kernels(const TraceDataset& ds, const HrsParams& p, const Hyperparams& hp,
                           double t);

/// beta + omega * Phi - gamma * Psi at the state's clock.
double tilde_lambda(VideoId i, const KernelState& state, const HrsParams& p,
                    const Hyperparams& hp);
double hat_lambda(VideoId i, const KernelState& state, const HrsParams& p,
                  const Hyperparams& hp);

/// Intensity from already-decayed accumulators.
inline double tilde_from(const KernelValues& k, double beta, double omega, double gamma) {
  return beta + omega * k.phi - gamma * k.psi;
}

/// Checkpoint rows `video_id,phi,psi,gamma_acc,n,last_time`, accumulators
/// decayed to the state's clock.
void write_state_csv(std::ostream& out, const KernelState& state, const Hyperparams& hp);
KernelState read_state_csv(std::istream& in);

}  // namespace hrs
