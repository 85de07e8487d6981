// SPDX-License-Identifier: Apache-2.0
//
// Codebook beam management: SS-burst sweep timing, alignment durations for
// initial access and beam tracking on one- and two-hop links, spectral
// efficiency, MMSE-degraded beam measurements and decode-and-forward rate
// combining.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "relaybeam/channel.hpp"

namespace relaybeam {

// 1-based codebook indices (i_F, i_W).
struct BeamPair {
  int tx = 1;
  int rx = 1;
  friend bool operator==(const BeamPair&, const BeamPair&) = default;
  friend auto operator<=>(const BeamPair&, const BeamPair&) = default;
};

struct BeamChoice {
  BeamPair pair;
  double se = 0.0;
};

enum class AlignMode { InitialAccess, BeamTracking };
enum class LinkKind { Direct, Indirect };

inline int ceil_div(long long a, long long b) { return static_cast<int>((a + b - 1) / b); }

// Slot (1-based) within the sweep at which pair (i_f, i_w) is examined, for a
// transmit codebook of n_tx_beams and receive codebook of n_rx_beams.
inline int sweep_slot_index(int i_f, int i_w, int n_tx_beams, int n_rx_beams, int n_ss) {
  if (n_ss < 1) throw std::invalid_argument("sweep_slot_index: N_SS must be >= 1");
  if (i_f < 1 || i_f > n_tx_beams || i_w < 1 || i_w > n_rx_beams)
    throw std::invalid_argument("sweep_slot_index: beam index out of range");
  return ceil_div(static_cast<long long>(n_rx_beams) * (i_f - 1) + i_w, n_ss);
}

inline int sweep_slot_index(int i_f, int i_w, int n_c, int n_ss) { return sweep_slot_index(i_f, i_w, n_c, n_c, n_ss); }

inline int alignment_duration(AlignMode mode, LinkKind link, int f_size, int w_size, int g_size, int n_bt, int n_ss,
                              int m_ss) {
  if (f_size < 1 || w_size < 1 || g_size < 1 || n_bt < 1 || n_ss < 1 || m_ss < 1)
    throw std::invalid_argument("alignment_duration: all sizes must be >= 1");
  if (mode == AlignMode::InitialAccess) {
    if (link == LinkKind::Direct) return m_ss * ceil_div(static_cast<long long>(f_size) * w_size, n_ss);
    return m_ss * ceil_div(static_cast<long long>(f_size) * g_size, n_ss) +
           m_ss * ceil_div(static_cast<long long>(g_size) * w_size, n_ss);
  }
  if (link == LinkKind::Direct) return m_ss * ceil_div(n_bt, n_ss);
  return 2 * m_ss * ceil_div(n_bt, n_ss);
}

// ---------------------------------------------------------------------------
// Rates

inline void require_unit(const CVector& v, const char* what) {
  if (std::abs(v.norm() - 1.0) > 1e-9) throw std::invalid_argument(std::string(what) + " must have unit norm");
}

inline double spectral_efficiency(const CVector& f, const CVector& w, std::span<const CMatrix> h_per_k, double snr) {
  require_unit(f, "spectral_efficiency: transmit beam");
  require_unit(w, "spectral_efficiency: receive beam");
  if (h_per_k.empty()) throw std::invalid_argument("spectral_efficiency: need at least one subcarrier");
  double acc = 0.0;
  for (const auto& h : h_per_k) {
    const cplx g = w.dot(h * f);  // w^H H f
    acc += std::log2(1.0 + snr * std::norm(g));
  }
  return acc / static_cast<double>(h_per_k.size());
}

inline double mmse(double beta, double n_b, double snr) { return 1.0 / (1.0 + beta * n_b * snr); }

inline double effective_snr(double snr, double mmse_value) {
  const double eff = snr * (1.0 - mmse_value) / (1.0 + snr * mmse_value);
  return std::clamp(eff, 0.0, snr);
}

inline double measured_se(const Codebook& tx, const Codebook& rx, BeamPair pair, std::span<const CMatrix> h_per_k,
                          double snr_eff) {
  if (snr_eff <= 0.0) return 0.0;
  return spectral_efficiency(tx.at(pair.tx - 1), rx.at(pair.rx - 1), h_per_k, snr_eff);
}

// Decode-and-forward with optimal time split: s1 s2 / (s1 + s2).
inline double two_hop_se(double s1, double s2) {
  if (!(s1 > 0.0) || !(s2 > 0.0)) return 0.0;
  const double h = 1.0 / (1.0 / s1 + 1.0 / s2);
  return std::min({h, s1, s2});
}

// Pilot bookkeeping for one hop. A block opens with an alignment; every frame
// after that (pilot or data) extends it, so beta * N_b is the pilot count.
struct FeedbackState {
  int pilots = 0;
  int frames = 0;

  void open_block() { pilots = frames = 0; }
  void pilot_frame() {
    ++pilots;
    ++frames;
  }
  void data_frame() { ++frames; }
  double beta() const { return frames == 0 ? 0.0 : static_cast<double>(pilots) / frames; }
  double n_b() const { return frames; }
  double mmse_at(double snr) const { return mmse(beta(), n_b(), snr); }
};

// ---------------------------------------------------------------------------
// Structured evaluation of w^H H[k] f for every codebook pair. Beam
// projections are computed once per path, so a pair costs O(L) per subcarrier
// instead of a full matrix product. Frequency-flat channels collapse to one
// subcarrier.

class LinkResponse {
 public:
  LinkResponse() = default;

  LinkResponse(const PathSet& ps, const Codebook& tx, const Codebook& rx, const ChannelParams& params,
               const PulseShape& pulse)
      : n_tx_(static_cast<int>(tx.size())), n_rx_(static_cast<int>(rx.size())) {
    for (const auto& path : ps.paths) {
      if (path.c_bl == 0 || path.alpha == cplx{0.0, 0.0}) continue;
      Term term;
      term.freq.resize(static_cast<std::size_t>(params.n_subcarriers));
      bool flat = true;
      for (int k = 1; k <= params.n_subcarriers; ++k) {
        term.freq[k - 1] = path.alpha * tap_response(path, k, params, pulse);
        if (term.freq[k - 1] != term.freq[0]) flat = false;
      }
      if (flat) term.freq.resize(1);
      const CVector at = array_response(path.phi_d, params.n_tx);
      const CVector ar = array_response(path.phi_a, params.n_rx);
      term.tx.reserve(tx.size());
      for (const auto& f : tx) term.tx.push_back(at.dot(f));  // a_t^H f
      term.rx.reserve(rx.size());
      for (const auto& w : rx) term.rx.push_back(w.dot(ar));  // w^H a_r
      terms_.push_back(std::move(term));
    }
    n_sub_ = 1;
    for (const auto& t : terms_)
      if (t.freq.size() > 1) n_sub_ = params.n_subcarriers;
    if (n_sub_ > 1)
      for (auto& t : terms_) t.freq.resize(static_cast<std::size_t>(n_sub_), t.freq[0]);
  }

  int tx_size() const { return n_tx_; }
  int rx_size() const { return n_rx_; }
  bool silent() const { return terms_.empty(); }
  bool flat() const { return n_sub_ == 1; }

  double se(BeamPair pair, double snr) const {
    if (terms_.empty() || !(snr > 0.0)) return 0.0;
    const int i = pair.tx - 1;
    const int j = pair.rx - 1;
    if (n_sub_ == 1) return std::log2(1.0 + snr * power(i, j, 0));
    double acc = 0.0;
    for (int k = 0; k < n_sub_; ++k) acc += std::log2(1.0 + snr * power(i, j, k));
    return acc / n_sub_;
  }

  // Exhaustive argmax; ties go to the lexicographically smallest pair.
  BeamChoice best(double snr) const {
    BeamChoice out{{1, 1}, 0.0};
    if (terms_.empty() || !(snr > 0.0)) return out;
    if (n_sub_ == 1) {
      double best_p = -1.0;
      for (int i = 0; i < n_tx_; ++i)
        for (int j = 0; j < n_rx_; ++j) {
          const double p = power(i, j, 0);
          if (p > best_p) {
            best_p = p;
            out.pair = {i + 1, j + 1};
          }
        }
      out.se = std::log2(1.0 + snr * best_p);
      return out;
    }
    out.se = -1.0;
    for (int i = 1; i <= n_tx_; ++i)
      for (int j = 1; j <= n_rx_; ++j) {
        const double s = se({i, j}, snr);
        if (s > out.se) out = {{i, j}, s};
      }
    return out;
  }

 private:
  struct Term {
    std::vector<cplx> freq;
    std::vector<cplx> tx;
    std::vector<cplx> rx;
  };

  double power(int i, int j, int k) const {
    cplx g{0.0, 0.0};
    for (const auto& t : terms_) g += t.freq[static_cast<std::size_t>(k)] * t.rx[j] * t.tx[i];
    return std::norm(g);
  }

  std::vector<Term> terms_;
  int n_tx_ = 0;
  int n_rx_ = 0;
  int n_sub_ = 1;
};

// ---------------------------------------------------------------------------
// Sweeps

// One hop of an alignment: candidates are examined N_SS per SS burst, bursts
// M_SS slots apart, starting at start_offset within the alignment period.
class HopSweep {
 public:
  HopSweep(std::vector<BeamPair> candidates, int start_offset, int slots, int n_ss, int m_ss)
      : candidates_(std::move(candidates)),
        se_(candidates_.size(), 0.0),
        start_(start_offset),
        slots_(slots),
        n_ss_(n_ss),
        m_ss_(m_ss) {}

  int start_offset() const { return start_; }
  int slots() const { return slots_; }
  bool covers(int offset) const { return offset >= start_ && offset < start_ + slots_; }
  const std::vector<BeamPair>& candidates() const { return candidates_; }

  // Offset (within the alignment period) at which candidate c is examined.
  int offset_of(std::size_t c) const { return start_ + static_cast<int>(c / static_cast<std::size_t>(n_ss_)) * m_ss_; }

  template <typename Eval>
  void measure_at(int offset, Eval&& eval) {
    for (std::size_t c = 0; c < candidates_.size(); ++c)
      if (offset_of(c) == offset) se_[c] = eval(candidates_[c]);
  }

  const std::vector<double>& measurements() const { return se_; }

  BeamChoice best() const {
    BeamChoice out{candidates_.empty() ? BeamPair{1, 1} : candidates_.front(), -1.0};
    for (std::size_t c = 0; c < candidates_.size(); ++c) {
      if (se_[c] > out.se || (se_[c] == out.se && candidates_[c] < out.pair)) out = {candidates_[c], se_[c]};
    }
    out.se = std::max(out.se, 0.0);
    return out;
  }

  // The n highest-measured candidates (ties by smallest pair).
  std::vector<BeamPair> top(int n) const {
    std::vector<std::size_t> idx(candidates_.size());
    for (std::size_t c = 0; c < idx.size(); ++c) idx[c] = c;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (se_[a] != se_[b]) return se_[a] > se_[b];
      return candidates_[a] < candidates_[b];
    });
    std::vector<BeamPair> out;
    for (std::size_t c = 0; c < idx.size() && static_cast<int>(out.size()) < n; ++c) out.push_back(candidates_[idx[c]]);
    return out;
  }

 private:
  std::vector<BeamPair> candidates_;
  std::vector<double> se_;
  int start_;
  int slots_;
  int n_ss_;
  int m_ss_;
};

inline std::vector<BeamPair> all_pairs(int n_tx_beams, int n_rx_beams) {
  std::vector<BeamPair> out;
  out.reserve(static_cast<std::size_t>(n_tx_beams) * n_rx_beams);
  for (int i = 1; i <= n_tx_beams; ++i)
    for (int j = 1; j <= n_rx_beams; ++j) out.push_back({i, j});
  return out;
}

struct SweepSchedule {
  AlignMode mode = AlignMode::InitialAccess;
  LinkKind link = LinkKind::Direct;
  int relay = 0;  // 0 = direct link
  int total_slots = 0;
  std::vector<HopSweep> hops;
};

struct SweepSizes {
  int f = 16;  // transmitter codebook
  int w = 16;  // receiver codebook
  int g = 16;  // relay codebook
  int n_bt = 4;
  int n_ss = 64;
  int m_ss = 1;
};

// Beam-tracking candidates come from the previous full sweep of each hop; an
// empty candidate list for tracking falls back to the first N_BT pairs.
inline SweepSchedule make_sweep_schedule(AlignMode mode, int relay, const SweepSizes& sz,
                                         const std::vector<BeamPair>& bt_hop1 = {},
                                         const std::vector<BeamPair>& bt_hop2 = {}) {
  SweepSchedule s;
  s.mode = mode;
  s.relay = relay;
  s.link = relay == 0 ? LinkKind::Direct : LinkKind::Indirect;
  auto add_hop = [&](int n_tx_beams, int n_rx_beams, const std::vector<BeamPair>& bt) {
    std::vector<BeamPair> cand;
    int slots = 0;
    if (mode == AlignMode::InitialAccess) {
      cand = all_pairs(n_tx_beams, n_rx_beams);
      slots = sz.m_ss * ceil_div(static_cast<long long>(n_tx_beams) * n_rx_beams, sz.n_ss);
    } else {
      cand = bt;
      if (cand.empty()) {
        auto all = all_pairs(n_tx_beams, n_rx_beams);
        all.resize(std::min<std::size_t>(all.size(), static_cast<std::size_t>(sz.n_bt)));
        cand = std::move(all);
      }
      if (static_cast<int>(cand.size()) > sz.n_bt) cand.resize(static_cast<std::size_t>(sz.n_bt));
      slots = sz.m_ss * ceil_div(sz.n_bt, sz.n_ss);
    }
    s.hops.emplace_back(std::move(cand), s.total_slots, slots, sz.n_ss, sz.m_ss);
    s.total_slots += slots;
  };
  if (relay == 0) {
    add_hop(sz.f, sz.w, bt_hop1);
  } else {
    add_hop(sz.f, sz.g, bt_hop1);
    add_hop(sz.g, sz.w, bt_hop2);
  }
  return s;
}

// Exhaustive sweep where pair (i_F, i_W) sees the channel of slot
// sweep_start + (m_d(i_F, i_W) - 1) * M_SS.
inline BeamChoice best_beam_pair(const Codebook& tx, const Codebook& rx,
                                 const std::function<std::vector<CMatrix>(int)>& channel_at, int sweep_start,
                                 int n_ss, int m_ss, double snr) {
  std::map<int, std::vector<CMatrix>> cache;
  const int n_tx = static_cast<int>(tx.size());
  const int n_rx = static_cast<int>(rx.size());
  BeamChoice out{{1, 1}, -1.0};
  for (int i = 1; i <= n_tx; ++i) {
    for (int j = 1; j <= n_rx; ++j) {
      const int slot = sweep_start + (sweep_slot_index(i, j, n_tx, n_rx, n_ss) - 1) * m_ss;
      auto it = cache.find(slot);
      if (it == cache.end()) it = cache.emplace(slot, channel_at(slot)).first;
      const double s = spectral_efficiency(tx[i - 1], rx[j - 1], it->second, snr);
      if (s > out.se) out = {{i, j}, s};
    }
  }
  out.se = std::max(out.se, 0.0);
  return out;
}

}  // namespace relaybeam
