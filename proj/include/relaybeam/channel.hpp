// SPDX-License-Identifier: Apache-2.0
//
// Time-varying geometric mmWave MIMO channel: ULA responses, DFT-style
// codebooks, the delay-d wideband channel matrix, Gauss-Markov path drift
// and the two-state Markov blockage chain.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relaybeam/errors.hpp"
#include "relaybeam/random.hpp"

namespace relaybeam {

using cplx = std::complex<double>;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using Codebook = std::vector<CVector>;

// Pulse shape evaluated in units of the symbol period: p(t / T_s).
using PulseShape = std::function<double(double)>;

struct Path {
  cplx alpha{1.0, 0.0};
  double phi_a = 0.0;  // angle of arrival, [0, pi]
  double phi_d = 0.0;  // angle of departure, [0, pi]
  double tau = 0.0;    // seconds
  int c_bl = 1;        // 1 = unblocked, 0 = blocked
};

enum class BlockState { Unblocked, Blocked };

struct PathSet {
  std::vector<Path> paths;
  BlockState block_state = BlockState::Unblocked;
  int block_timer = 0;

  bool any_unblocked() const {
    for (const auto& p : paths)
      if (p.c_bl != 0) return true;
    return false;
  }
};

struct ChannelParams {
  int n_tx = 16;
  int n_rx = 16;
  int n_subcarriers = 256;
  double symbol_period = 1.0 / 1.76e9;  // 1/1760 us
  int n_taps = 4;
  double sigma_a = 0.5;    // radians per slot
  double sigma_p = 0.005;  // per complex component
  double p_ub = 0.01;      // unblocked -> blocked
  double p_bu = 0.99;      // blocked -> unblocked
  int n_bl = 100;
  double gain = 1.0;       // G, linear
  double noise_var = 1.0;  // sigma_n^2, linear
  double rolloff = 0.4;

  double snr() const { return gain / noise_var; }

  void validate() const {
    if (n_tx < 1 || n_rx < 1 || n_subcarriers < 1 || n_taps < 1 || n_bl < 1)
      throw std::invalid_argument("channel params: counts must be >= 1");
    if (!(p_ub >= 0.0 && p_ub <= 1.0 && p_bu >= 0.0 && p_bu <= 1.0))
      throw std::invalid_argument("channel params: probabilities must lie in [0, 1]");
    if (!(sigma_a >= 0.0) || !(sigma_p >= 0.0))
      throw std::invalid_argument("channel params: spreads must be >= 0");
    if (!(symbol_period > 0.0) || !(noise_var > 0.0) || !(gain >= 0.0))
      throw std::invalid_argument("channel params: symbol period and noise must be > 0");
    if (!(rolloff >= 0.0 && rolloff <= 1.0))
      throw std::invalid_argument("channel params: roll-off must lie in [0, 1]");
  }
};

// ---------------------------------------------------------------------------
// Array response and codebooks

inline CVector array_response(double phi, int n) {
  if (n < 1) throw std::invalid_argument("array_response: antenna count must be >= 1");
  CVector a(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  const double c = std::cos(phi);
  for (int i = 0; i < n; ++i) a[i] = scale * std::polar(1.0, -std::numbers::pi * i * c);
  return a;
}

// Codebook vectors equally partition [0, pi): beam i (0-based) steers to pi*i/n_c.
inline Codebook build_codebook(int n_ant, int n_c) {
  if (n_c < 1) throw std::invalid_argument("build_codebook: codebook size must be >= 1");
  if (n_ant < 1) throw std::invalid_argument("build_codebook: antenna count must be >= 1");
  Codebook cb;
  cb.reserve(static_cast<std::size_t>(n_c));
  for (int i = 0; i < n_c; ++i) cb.push_back(array_response(std::numbers::pi * i / n_c, n_ant));
  return cb;
}

// ---------------------------------------------------------------------------
// Pulse shaping

inline double sinc(double x) {
  if (x == 0.0) return 1.0;
  if (x == std::nearbyint(x)) return 0.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

inline PulseShape raised_cosine(double rolloff) {
  return [rolloff](double x) {
    if (rolloff == 0.0) return sinc(x);
    const double edge = 1.0 / (2.0 * rolloff);
    if (std::abs(std::abs(x) - edge) < 1e-12) return std::numbers::pi / 4.0 * sinc(edge);
    const double bx = 2.0 * rolloff * x;
    return sinc(x) * std::cos(std::numbers::pi * rolloff * x) / (1.0 - bx * bx);
  };
}

inline PulseShape default_pulse(const ChannelParams& params) { return raised_cosine(params.rolloff); }

// sum_d p(d - tau/T_s) exp(-j 2 pi k d / K), k is 1-based.
inline cplx tap_response(const Path& path, int k, const ChannelParams& params, const PulseShape& pulse) {
  const double delay = path.tau / params.symbol_period;
  cplx acc{0.0, 0.0};
  for (int d = 0; d < params.n_taps; ++d) {
    const double p = pulse(d - delay);
    if (p == 0.0) continue;
    if (d == 0) {
      acc += p;
      continue;
    }
    const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) * d / params.n_subcarriers;
    acc += p * std::polar(1.0, angle);
  }
  return acc;
}

inline CMatrix channel_matrix(const PathSet& ps, int k, const ChannelParams& params, const PulseShape& pulse) {
  if (k < 1 || k > params.n_subcarriers)
    throw std::invalid_argument("channel_matrix: subcarrier index out of range");
  CMatrix h = CMatrix::Zero(params.n_rx, params.n_tx);
  for (const auto& path : ps.paths) {
    if (path.c_bl == 0) continue;
    const cplx g = path.alpha * tap_response(path, k, params, pulse);
    if (g == cplx{0.0, 0.0}) continue;
    h.noalias() += g * array_response(path.phi_a, params.n_rx) * array_response(path.phi_d, params.n_tx).adjoint();
  }
  return h;
}

inline std::vector<CMatrix> channel_matrices(const PathSet& ps, const ChannelParams& params, const PulseShape& pulse) {
  std::vector<CMatrix> out;
  out.reserve(static_cast<std::size_t>(params.n_subcarriers));
  for (int k = 1; k <= params.n_subcarriers; ++k) out.push_back(channel_matrix(ps, k, params, pulse));
  return out;
}

// ---------------------------------------------------------------------------
// Evolution

// Folds an angle into [0, pi] by reflecting at the boundaries.
inline double fold_angle(double phi) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double y = std::fmod(std::abs(phi), two_pi);
  if (y > std::numbers::pi) y = two_pi - y;
  return y;
}

inline PathSet evolve_paths(PathSet ps, const ChannelParams& params, Rng& rng) {
  std::normal_distribution<double> angle_noise(0.0, params.sigma_a > 0.0 ? params.sigma_a : 1.0);
  for (auto& p : ps.paths) {
    if (params.sigma_p > 0.0) p.alpha += complex_normal(rng, params.sigma_p);
    if (params.sigma_a > 0.0) {
      p.phi_a = fold_angle(p.phi_a + angle_noise(rng));
      p.phi_d = fold_angle(p.phi_d + angle_noise(rng));
    }
  }
  return ps;
}

inline void apply_block_state(PathSet& ps) {
  const int c = ps.block_state == BlockState::Blocked ? 0 : 1;
  for (auto& p : ps.paths) p.c_bl = c;
}

// Epochs last exactly n_bl slots: the slot that draws a new state counts as
// the first slot of its epoch.
inline PathSet step_blockage(PathSet ps, const ChannelParams& params, Rng& rng) {
  if (ps.block_timer > 0) {
    --ps.block_timer;
    return ps;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double draw = u(rng);
  if (ps.block_state == BlockState::Unblocked) {
    if (draw < params.p_ub) ps.block_state = BlockState::Blocked;
  } else {
    if (draw < params.p_bu) ps.block_state = BlockState::Unblocked;
  }
  ps.block_timer = params.n_bl - 1;
  apply_block_state(ps);
  return ps;
}

struct SteadyState {
  double q_u;
  double q_b;
};

inline SteadyState steady_state(double p_ub, double p_bu) {
  if (p_ub < 0.0 || p_bu < 0.0) throw std::invalid_argument("steady_state: negative probability");
  const double total = p_ub + p_bu;
  if (!(total > 0.0)) throw DegenerateChain("steady_state: both transition probabilities are zero");
  return {p_bu / total, p_ub / total};
}

// Fresh paths: alpha ~ CN(0, 1), angles uniform on [0, pi], zero delay. The
// initial block state is drawn from the stationary distribution.
inline PathSet initial_paths(const ChannelParams& params, int n_paths, Rng& rng) {
  PathSet ps;
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  for (int l = 0; l < n_paths; ++l) {
    Path p;
    p.alpha = complex_normal(rng, std::sqrt(0.5));
    p.phi_a = angle(rng);
    p.phi_d = angle(rng);
    ps.paths.push_back(p);
  }
  double q_b = 0.0;
  if (params.p_ub + params.p_bu > 0.0) q_b = steady_state(params.p_ub, params.p_bu).q_b;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ps.block_state = u(rng) < q_b ? BlockState::Blocked : BlockState::Unblocked;
  ps.block_timer = params.n_bl - 1;
  apply_block_state(ps);
  return ps;
}

}  // namespace relaybeam
