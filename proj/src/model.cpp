#include "hrs/model.hpp"

#include <algorithm>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "hrs/format.hpp"

namespace hrs {

void Hyperparams::validate() const {
  if (!(delta0 > 0.0) || !(delta1 > 0.0)) throw std::invalid_argument("kernel decays must be > 0");
  if (!(s > 0.0)) throw std::invalid_argument("softplus sharpness s must be > 0");
  if (!(eta > 0.0)) throw std::invalid_argument("eta must be > 0");
  if (rho_beta < 0.0 || rho_omega < 0.0 || rho_alpha < 0.0 || rho_gamma < 0.0)
    throw std::invalid_argument("regularization weights must be >= 0");
  if (M < 1 || dM < 1) throw std::invalid_argument("sample counts must be >= 1");
  if (!(k_th > 0.0 && k_th < 1.0)) throw std::invalid_argument("k_th must be in (0, 1)");
  if (!(dt > 0.0) || !(dT > 0.0)) throw std::invalid_argument("update intervals must be > 0");
}

Hyperparams Hyperparams::with_window(double train_hours) const {
  Hyperparams out = *this;
  out.M = std::max<std::size_t>(1, static_cast<std::size_t>(
                                       std::llround(kSamplesPerDay * train_hours / 24.0)));
  out.dM = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(out.M) * dT / train_hours)));
  return out;
}

nlohmann::json to_json(const Hyperparams& hp) {
  return {{"delta0", hp.delta0},       {"delta1", hp.delta1},       {"s", hp.s},
          {"rho_beta", hp.rho_beta},   {"rho_omega", hp.rho_omega}, {"rho_alpha", hp.rho_alpha},
          {"rho_gamma", hp.rho_gamma}, {"M", hp.M},                 {"dt", hp.dt},
          {"dT", hp.dT},               {"dM", hp.dM},               {"k_th", hp.k_th},
          {"eta", hp.eta}};
}

Hyperparams hyperparams_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.delta0 = j.value("delta0", hp.delta0);
  hp.delta1 = j.value("delta1", hp.delta1);
  hp.s = j.value("s", hp.s);
  hp.rho_beta = j.value("rho_beta", hp.rho_beta);
  hp.rho_omega = j.value("rho_omega", hp.rho_omega);
  hp.rho_alpha = j.value("rho_alpha", hp.rho_alpha);
  hp.rho_gamma = j.value("rho_gamma", hp.rho_gamma);
  hp.M = j.value("M", hp.M);
  hp.dt = j.value("dt", hp.dt);
  hp.dT = j.value("dT", hp.dT);
  hp.dM = j.value("dM", hp.dM);
  hp.k_th = j.value("k_th", hp.k_th);
  hp.eta = j.value("eta", hp.eta);
  hp.validate();
  return hp;
}

std::vector<double>& HrsParams::block(ParamBlock b) {
  switch (b) {
    case ParamBlock::beta: return beta;
    case ParamBlock::omega: return omega;
    case ParamBlock::alpha: return alpha;
    case ParamBlock::gamma: return gamma;
  }
  throw std::logic_error("bad block");
}

const std::vector<double>& HrsParams::block(ParamBlock b) const {
  return const_cast<HrsParams*>(this)->block(b);
}

std::vector<double> HrsParams::flatten() const {
  std::vector<double> x;
  x.reserve(4 * size());
  for (const auto* v : {&beta, &omega, &alpha, &gamma}) x.insert(x.end(), v->begin(), v->end());
  return x;
}

HrsParams HrsParams::unflatten(const std::vector<double>& x, std::size_t catalog) {
  if (x.size() != 4 * catalog) throw std::invalid_argument("flat parameter size mismatch");
  HrsParams p;
  auto part = [&](int k) {
    return std::vector<double>(x.begin() + k * catalog, x.begin() + (k + 1) * catalog);
  };
  p.beta = part(0);
  p.omega = part(1);
  p.alpha = part(2);
  p.gamma = part(3);
  return p;
}

void HrsParams::validate() const {
  const std::size_t c = beta.size();
  if (omega.size() != c || alpha.size() != c || gamma.size() != c)
    throw std::invalid_argument("parameter vectors differ in length");
  for (const auto* v : {&beta, &omega, &alpha, &gamma})
    for (std::size_t i = 0; i < c; ++i)
      if (!((*v)[i] > 0.0) || !std::isfinite((*v)[i]))
        throw std::invalid_argument("parameter of video " + std::to_string(i) +
                                    " is not positive and finite");
}

void write_params_csv(std::ostream& out, const HrsParams& p) {
  out << "video_id,beta,omega,alpha,gamma\n";
  for (std::size_t i = 0; i < p.size(); ++i)
    out << i << ',' << format_real(p.beta[i]) << ',' << format_real(p.omega[i]) << ','
        << format_real(p.alpha[i]) << ',' << format_real(p.gamma[i]) << '\n';
}

HrsParams read_params_csv(std::istream& in) {
  HrsParams p;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw ParseError(line_no, "expected 5 columns");
    try {
      if (std::stoul(f[0]) != p.size()) throw ParseError(line_no, "video ids must be dense");
      p.beta.push_back(std::stod(f[1]));
      p.omega.push_back(std::stod(f[2]));
      p.alpha.push_back(std::stod(f[3]));
      p.gamma.push_back(std::stod(f[4]));
    } catch (const std::logic_error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  p.validate();
  return p;
}

double kernel_k0(double elapsed, const Hyperparams& hp) {
  if (elapsed < 0.0) throw std::invalid_argument("kernel evaluated at negative elapsed time");
  return std::exp(-hp.delta0 * elapsed);
}

double kernel_k1(double elapsed, const Hyperparams& hp) {
  if (elapsed < 0.0) throw std::invalid_argument("kernel evaluated at negative elapsed time");
  return std::exp(-hp.delta1 * elapsed);
}

double softplus(double x, double s) {
  const double z = x / s;
  const double v = z > 0.0 ? x + s * std::log1p(std::exp(-z)) : s * std::log1p(std::exp(z));
  return std::max(v, std::numeric_limits<double>::min());
}

double softplus_prime(double x, double s) {
  const double z = x / s;
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

void KernelState::set_last_update_time(double t) {
  if (t < last_update_time_) throw std::invalid_argument("kernel clock cannot move backwards");
  last_update_time_ = t;
}

KernelValues KernelState::at(VideoId i, double t, const Hyperparams& hp) const {
  const VideoKernel& v = videos_.at(i);
  KernelValues out;
  out.n = v.n;
  if (v.phi != 0.0 || v.gamma_acc != 0.0) {
    const double d0 = kernel_k0(t - v.phi_time, hp);
    out.phi = v.phi * d0;
    out.gamma_acc = v.gamma_acc * d0;
  }
  if (v.psi != 0.0) out.psi = v.psi * kernel_k1(t - v.psi_time, hp);
  return out;
}

void KernelState::absorb_event(VideoId i, double tau, double alpha, const Hyperparams& hp) {
  VideoKernel& v = videos_.at(i);
  const double d0 = kernel_k0(tau - v.phi_time, hp);
  v.phi *= d0;
  v.gamma_acc *= d0;
  v.phi_time = tau;
  v.n += 1;
  const double nd = static_cast<double>(v.n);
  const double damp = std::exp(-alpha * nd);
  v.phi += damp;
  v.gamma_acc += nd * damp;
}

void KernelState::absorb_negative(VideoId i, double tau, const Hyperparams& hp) {
  VideoKernel& v = videos_.at(i);
  v.psi = v.psi * kernel_k1(tau - v.psi_time, hp) + 1.0;
  v.psi_time = tau;
}

KernelState replay_kernels(const TraceDataset& ds, const HrsParams& p, const Hyperparams& hp,
                           double t) {
  KernelState state(ds.catalog_size, std::min(ds.start, t));
  for (const auto& ev : ds.events) {
    if (ev.time > t) break;
    state.absorb_event(ev.video, ev.time, p.alpha.at(ev.video), hp);
  }
  for (const auto& n : ds.negatives) {
    if (n.time > t) break;
    state.absorb_negative(n.video, n.time, hp);
  }
  state.set_last_update_time(t);
  return state;
}

double tilde_lambda(VideoId i, const KernelState& state, const HrsParams& p,
                    const Hyperparams& hp) {
  return tilde_from(state.at(i, hp), p.beta[i], p.omega[i], p.gamma[i]);
}

double hat_lambda(VideoId i, const KernelState& state, const HrsParams& p,
                  const Hyperparams& hp) {
  return softplus(tilde_lambda(i, state, p, hp), hp.s);
}

void write_state_csv(std::ostream& out, const KernelState& state, const Hyperparams& hp) {
  out << "video_id,phi,psi,gamma_acc,n,last_time\n";
  const double t = state.last_update_time();
  for (std::size_t i = 0; i < state.size(); ++i) {
    const auto k = state.at(static_cast<VideoId>(i), t, hp);
    out << i << ',' << format_real(k.phi) << ',' << format_real(k.psi) << ','
        << format_real(k.gamma_acc) << ',' << k.n << ',' << format_real(t) << '\n';
  }
}

KernelState read_state_csv(std::istream& in) {
  std::vector<VideoKernel> rows;
  double clock = 0.0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw ParseError(line_no, "expected 6 columns");
    try {
      if (std::stoul(f[0]) != rows.size()) throw ParseError(line_no, "video ids must be dense");
      VideoKernel v;
      v.phi = std::stod(f[1]);
      v.psi = std::stod(f[2]);
      v.gamma_acc = std::stod(f[3]);
      v.n = std::stoull(f[4]);
      v.phi_time = v.psi_time = std::stod(f[5]);
      clock = std::max(clock, v.phi_time);
      rows.push_back(v);
    } catch (const std::logic_error& e) {
      throw ParseError(line_no, e.what());
    }
  }
  KernelState state(rows.size(), 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) state.raw(static_cast<VideoId>(i)) = rows[i];
  state.set_last_update_time(clock);
  return state;
}

}  // namespace hrs
