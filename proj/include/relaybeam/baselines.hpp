// SPDX-License-Identifier: Apache-2.0
//
// Comparison policies: the full-knowledge upper bound, its direct-link-only
// restriction, and the heuristic with fixed thresholds (plus the grid search
// that picks them).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <vector>

#include "relaybeam/env.hpp"
#include "relaybeam/errors.hpp"
#include "relaybeam/parallel.hpp"

namespace relaybeam {

using RewardTrace = std::vector<double>;

inline RewardTrace run_genie(EnvConfig cfg, std::uint64_t seed, int slots) {
  cfg.track_genie = false;
  RelayEnv env(cfg);
  env.reset(seed);
  RewardTrace out;
  out.reserve(static_cast<std::size_t>(slots));
  for (int m = 0; m < slots; ++m) {
    out.push_back(env.genie_reward());
    env.advance();
  }
  return out;
}

// Best-beam rate of the direct link alone, no overhead.
inline RewardTrace run_direct(EnvConfig cfg, std::uint64_t seed, int slots) {
  cfg.track_genie = false;
  RelayEnv env(cfg);
  env.reset(seed);
  RewardTrace out;
  out.reserve(static_cast<std::size_t>(slots));
  for (int m = 0; m < slots; ++m) {
    out.push_back(env.direct_genie_reward());
    env.advance();
  }
  return out;
}

inline RewardTrace run_fixed_threshold(EnvConfig cfg, std::uint64_t seed, int slots, const ThresholdAction& a) {
  cfg.track_genie = false;
  RelayEnv env(cfg);
  env.reset(seed);
  RewardTrace out;
  out.reserve(static_cast<std::size_t>(slots));
  for (int m = 0; m < slots; ++m) out.push_back(env.step(a).reward);
  return out;
}

// The heuristic with the relay index pinned to the direct link.
inline RewardTrace run_direct_threshold(EnvConfig cfg, std::uint64_t seed, int slots, const ThresholdAction& a) {
  cfg.direct_only = true;
  return run_fixed_threshold(std::move(cfg), seed, slots, a);
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// Linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw StatisticsError("percentile: no samples");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("percentile: q must lie in [0, 1]");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return v[lo];
  return v[lo] + frac * (v[hi] - v[lo]);
}

inline double tau_max_from_samples(const std::vector<double>& samples) {
  if (samples.size() < 100) throw StatisticsError("estimate_tau_max: need at least 100 samples");
  return percentile(samples, 0.99);
}

inline double estimate_tau_max(const EnvConfig& cfg, const std::vector<std::uint64_t>& seeds, int slots,
                               bool direct_link = false) {
  std::vector<RewardTrace> traces(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    traces[i] = direct_link ? run_direct(cfg, seeds[i], slots) : run_genie(cfg, seeds[i], slots);
  });
  std::vector<double> all;
  for (const auto& t : traces) all.insert(all.end(), t.begin(), t.end());
  return tau_max_from_samples(all);
}

struct GridSpec {
  double tau_max = 1.0;
  int n_points = 20;

  void validate() const {
    if (!(tau_max > 0.0) || !std::isfinite(tau_max)) throw std::invalid_argument("GridSpec: tau_max must be > 0");
    if (n_points < 2) throw std::invalid_argument("GridSpec: need at least 2 points per axis");
  }

  double value(int i) const { return tau_max * i / (n_points - 1); }
};

struct GridCell {
  double tau_relay = 0.0;
  double tau_mode = 0.0;
  double mean_reward = 0.0;
};

struct GridResult {
  ThresholdAction best;
  double best_reward = 0.0;
  std::vector<GridCell> table;
};

// Every pair with tau_relay <= tau_mode; score is the mean per-slot reward
// averaged over seeds. Ties keep the first cell in (tau_relay, tau_mode)
// order.
inline GridResult grid_search_thresholds(const EnvConfig& cfg, const GridSpec& grid,
                                         const std::vector<std::uint64_t>& seeds, int slots, bool direct_link = false) {
  grid.validate();
  if (seeds.empty()) throw std::invalid_argument("grid_search_thresholds: no seeds");
  std::vector<GridCell> cells;
  for (int i = 0; i < grid.n_points; ++i)
    for (int j = i; j < grid.n_points; ++j) cells.push_back({grid.value(i), grid.value(j), 0.0});
  std::vector<double> scores(cells.size() * seeds.size());
  parallel_for(scores.size(), [&](std::size_t k) {
    const auto& c = cells[k / seeds.size()];
    const ThresholdAction a{c.tau_relay, c.tau_mode};
    const auto seed = seeds[k % seeds.size()];
    scores[k] = mean_of(direct_link ? run_direct_threshold(cfg, seed, slots, a) : run_fixed_threshold(cfg, seed, slots, a));
  });
  GridResult out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    double acc = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) acc += scores[c * seeds.size() + s];
    cells[c].mean_reward = acc / static_cast<double>(seeds.size());
    if (c == 0 || cells[c].mean_reward > out.best_reward) {
      out.best_reward = cells[c].mean_reward;
      out.best = {cells[c].tau_relay, cells[c].tau_mode};
    }
  }
  out.table = std::move(cells);
  return out;
}

inline void write_threshold_table(const GridResult& g, std::ostream& out) {
  out.imbue(std::locale::classic());
  out << "tau_relay,tau_mode,mean_reward\n" << std::setprecision(10);
  for (const auto& c : g.table) out << c.tau_relay << ',' << c.tau_mode << ',' << c.mean_reward << '\n';
}

}  // namespace relaybeam
