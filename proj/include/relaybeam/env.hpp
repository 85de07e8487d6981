// SPDX-License-Identifier: Apache-2.0
//
// Joint relay selection / beam management environment. One call to step()
// advances one time slot of the two-threshold heuristic: alignment slots
// sweep beams and earn nothing, data slots earn the measured spectral
// efficiency and, at the end of each data block, compare it against
// (tau_relay, tau_mode) to keep transmitting, track beams, or switch relay.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "relaybeam/beams.hpp"
#include "relaybeam/channel.hpp"
#include "relaybeam/errors.hpp"
#include "relaybeam/mobility.hpp"
#include "relaybeam/random.hpp"

namespace relaybeam {

enum class Scenario { Los, Trace };

struct TraceScenario {
  HighwaySpec highway;
  std::string trace_file;            // when set, replaces the synthetic highway
  std::optional<TraceRoles> roles;   // required with trace_file, optional otherwise
  RayTraceParams ray;
  double slot_duration = 0.01;       // s
  double rx_distance = 40.0;         // m, automatic role assignment
};

struct EnvConfig {
  Scenario scenario = Scenario::Los;
  ChannelParams channel;  // n_tx / n_rx are the transmitter / receiver arrays
  int relay_antennas = 16;
  int n_relays = 2;
  int codebook_tx = 16;
  int codebook_rx = 16;
  int codebook_relay = 16;
  int n_ss = 64;
  int m_ss = 1;
  int n_bt = 4;
  int m_dt = 1;
  int n_paths = 1;
  double snr_db = 0.0;
  double se_normalizer = 1.0;
  bool direct_only = false;  // relay index pinned to 0
  bool track_genie = true;
  TraceScenario trace;

  double snr_linear() const { return std::pow(10.0, snr_db / 10.0); }

  void validate() const {
    try {
      channel.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (n_relays < 0) throw ConfigError("n_relays must be >= 0");
    if (relay_antennas < 1 || codebook_tx < 1 || codebook_rx < 1 || codebook_relay < 1)
      throw ConfigError("antenna counts and codebook sizes must be >= 1");
    if (n_ss < 1 || m_ss < 1 || n_bt < 1 || m_dt < 1) throw ConfigError("N_SS, M_SS, N_BT, M_DT must be >= 1");
    if (n_paths < 1) throw ConfigError("n_paths must be >= 1");
    if (!(se_normalizer > 0.0)) throw ConfigError("se_normalizer must be > 0");
    if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite");
    if (scenario == Scenario::Trace && !(trace.slot_duration > 0.0)) throw ConfigError("slot_duration must be > 0");
  }
};

struct LinkVector {
  int i_tx = 1;         // transmitter beam (1-based)
  int i_rx = 1;         // receiver beam for the direct link, relay beam otherwise
  double s_last = 0.0;  // last measured end-to-end spectral efficiency
};

struct NetState {
  std::vector<LinkVector> links;  // index 0 = direct
};

struct ModeState {
  int n = 0;       // relay index, 0 = direct
  int n_mode = 0;  // 0 = beam alignment, 1 = data transmission
  int m_ba = 0;    // alignment slots completed
  int m_dt = 0;    // data slots completed in the current block
  int M_BA = 0;
  int M_DT = 1;
};

struct ThresholdAction {
  double tau_relay = 0.0;
  double tau_mode = 0.0;
};

enum class Behavior { None, Optimistic, Opportunistic, Pessimistic };

inline const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::Optimistic: return "optimistic";
    case Behavior::Opportunistic: return "opportunistic";
    case Behavior::Pessimistic: return "pessimistic";
    default: return "none";
  }
}

// Equality with a threshold resolves to the more conservative behaviour.
inline Behavior classify_behavior(double s, const ThresholdAction& a) {
  if (s > a.tau_mode) return Behavior::Optimistic;
  if (s > a.tau_relay) return Behavior::Opportunistic;
  return Behavior::Pessimistic;
}

struct StepInfo {
  int slot = 0;
  int relay = 0;     // relay index used during this slot
  int n_mode = 0;    // mode during this slot
  double reward = 0.0;
  double measured = 0.0;
  double genie = 0.0;  // filled when track_genie is set
  bool decision = false;
  Behavior behavior = Behavior::None;
  bool alignment_done = false;
};

class RelayEnv {
 public:
  explicit RelayEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    tx_cb_ = build_codebook(cfg_.channel.n_tx, cfg_.codebook_tx);
    rx_cb_ = build_codebook(cfg_.channel.n_rx, cfg_.codebook_rx);
    relay_cb_ = build_codebook(cfg_.relay_antennas, cfg_.codebook_relay);
    pulse_ = default_pulse(cfg_.channel);
    sizes_ = {cfg_.codebook_tx, cfg_.codebook_rx, cfg_.codebook_relay, cfg_.n_bt, cfg_.n_ss, cfg_.m_ss};
  }

  const EnvConfig& config() const { return cfg_; }
  int n_links() const { return 1 + 2 * cfg_.n_relays; }
  int slot() const { return slot_; }
  const NetState& net_state() const { return net_; }
  const ModeState& mode_state() const { return mode_; }
  const SweepSchedule& schedule() const { return schedule_; }
  const PathSet& link_paths(int link) const { return links_.at(static_cast<std::size_t>(link)).ps; }
  const Codebook& tx_codebook() const { return tx_cb_; }
  const Codebook& rx_codebook() const { return rx_cb_; }
  const Codebook& relay_codebook() const { return relay_cb_; }
  const ChannelParams& link_params(int link) const { return links_.at(static_cast<std::size_t>(link)).params; }
  const MobilityTrace* trace() const { return trace_ ? &*trace_ : nullptr; }

  // Beam pair currently stored for hop h (0 or 1) of route n.
  BeamPair route_pair(int n, int hop) const { return routes_.at(static_cast<std::size_t>(n)).hop[hop]; }

  void reset(std::uint64_t seed) {
    seed_ = seed;
    slot_ = 0;
    links_.clear();
    routes_.assign(static_cast<std::size_t>(cfg_.n_relays) + 1, Route{});
    net_.links.assign(static_cast<std::size_t>(cfg_.n_relays) + 1, LinkVector{});
    if (cfg_.scenario == Scenario::Trace) setup_trace(seed);
    for (int l = 0; l < n_links(); ++l) {
      Link link;
      link.params = cfg_.channel;
      link.params.gain = cfg_.snr_linear();
      link.params.noise_var = 1.0;
      const auto [tx_ant, rx_ant] = link_antennas(l);
      link.params.n_tx = tx_ant;
      link.params.n_rx = rx_ant;
      link.rng = make_stream(seed, 1000 + static_cast<std::uint64_t>(l));
      if (cfg_.scenario == Scenario::Los) link.ps = initial_paths(link.params, cfg_.n_paths, link.rng);
      links_.push_back(std::move(link));
    }
    if (cfg_.scenario == Scenario::Trace) refresh_trace_paths();
    mode_ = ModeState{};
    mode_.M_DT = cfg_.m_dt;
    begin_alignment(AlignMode::InitialAccess, 0);
  }

  StepInfo step(const ThresholdAction& action) {
    StepInfo info;
    info.slot = slot_;
    info.relay = mode_.n;
    info.n_mode = mode_.n_mode;
    if (cfg_.track_genie) info.genie = genie_reward();

    double s = 0.0;
    if (mode_.n_mode == 0) {
      const int offset = mode_.m_ba;
      Route& route = routes_[static_cast<std::size_t>(mode_.n)];
      for (std::size_t h = 0; h < schedule_.hops.size(); ++h) {
        HopSweep& hop = schedule_.hops[h];
        if (!hop.covers(offset)) continue;
        route.fb[h].pilot_frame();
        const int link = link_index(mode_.n, static_cast<int>(h));
        const LinkResponse& resp = response(link);
        const double snr = links_[static_cast<std::size_t>(link)].params.snr();
        hop.measure_at(offset, [&](BeamPair p) { return resp.se(p, snr); });
      }
      ++mode_.m_ba;
      if (mode_.m_ba >= mode_.M_BA) {
        finish_alignment();
        info.alignment_done = true;
      }
    } else {
      s = measure_current();
      net_.links[static_cast<std::size_t>(mode_.n)].s_last = s;
      ++mode_.m_dt;
      if (mode_.m_dt >= mode_.M_DT) {
        info.decision = true;
        info.behavior = classify_behavior(s, action);
        apply(info.behavior);
        mode_.m_dt = 0;
      }
    }
    info.measured = s;
    info.reward = s;
    advance();
    return info;
  }

  // Moves every channel process one slot forward without touching the
  // policy state.
  void advance() {
    ++slot_;
    if (cfg_.scenario == Scenario::Trace) {
      refresh_trace_paths();
      return;
    }
    for (auto& link : links_) {
      link.ps = evolve_paths(std::move(link.ps), link.params, link.rng);
      link.ps = step_blockage(std::move(link.ps), link.params, link.rng);
      link.resp.reset();
    }
  }

  // Best-beam achievable rate per route at the current slot, no overhead and
  // no estimation loss.
  double route_genie(int n) const {
    if (n == 0) return best_on(0).se;
    return two_hop_se(best_on(link_index(n, 0)).se, best_on(link_index(n, 1)).se);
  }

  double genie_reward() const {
    double best = 0.0;
    for (int n = 0; n <= cfg_.n_relays; ++n) best = std::max(best, route_genie(n));
    return best;
  }

  double direct_genie_reward() const { return route_genie(0); }

  std::vector<double> encode_state() const {
    std::vector<double> out;
    out.reserve(net_.links.size() * 3);
    for (std::size_t n = 0; n < net_.links.size(); ++n) {
      const auto& lv = net_.links[n];
      out.push_back(static_cast<double>(lv.i_tx) / cfg_.codebook_tx);
      out.push_back(static_cast<double>(lv.i_rx) / (n == 0 ? cfg_.codebook_rx : cfg_.codebook_relay));
      out.push_back(lv.s_last / cfg_.se_normalizer);
    }
    return out;
  }

  int state_dim() const { return 3 * (cfg_.n_relays + 1); }

  // Channel link process for hop h of route n: 0 direct, 2n-1 tx->relay,
  // 2n relay->rx.
  static int link_index(int n, int hop) { return n == 0 ? 0 : 2 * n - 1 + hop; }

  const LinkResponse& response(int link) const {
    auto& l = links_[static_cast<std::size_t>(link)];
    if (!l.resp) l.resp.emplace(l.ps, link_tx_codebook(link), link_rx_codebook(link), l.params, pulse_);
    return *l.resp;
  }

  const Codebook& link_tx_codebook(int link) const { return (link == 0 || link % 2 == 1) ? tx_cb_ : relay_cb_; }
  const Codebook& link_rx_codebook(int link) const {
    if (link == 0) return rx_cb_;
    return link % 2 == 1 ? relay_cb_ : rx_cb_;
  }

 private:
  struct Link {
    ChannelParams params;
    PathSet ps;
    Rng rng;
    std::string tx_id;
    std::string rx_id;
    mutable std::optional<LinkResponse> resp;
  };

  struct Route {
    std::array<BeamPair, 2> hop{};
    std::array<std::vector<BeamPair>, 2> tracking{};
    std::array<FeedbackState, 2> fb{};
    bool aligned = false;
  };

  std::pair<int, int> link_antennas(int link) const {
    if (link == 0) return {cfg_.channel.n_tx, cfg_.channel.n_rx};
    if (link % 2 == 1) return {cfg_.channel.n_tx, cfg_.relay_antennas};
    return {cfg_.relay_antennas, cfg_.channel.n_rx};
  }

  BeamChoice best_on(int link) const {
    const auto& l = links_[static_cast<std::size_t>(link)];
    return response(link).best(l.params.snr());
  }

  double measure_current() {
    Route& route = routes_[static_cast<std::size_t>(mode_.n)];
    auto hop_rate = [&](int h) {
      route.fb[h].data_frame();
      const int link = link_index(mode_.n, h);
      const double snr = links_[static_cast<std::size_t>(link)].params.snr();
      const double eff = effective_snr(snr, route.fb[h].mmse_at(snr));
      return response(link).se(route.hop[h], eff);
    };
    if (mode_.n == 0) return hop_rate(0);
    const double s1 = hop_rate(0);
    const double s2 = hop_rate(1);
    return two_hop_se(s1, s2);
  }

  void finish_alignment() {
    Route& route = routes_[static_cast<std::size_t>(mode_.n)];
    for (std::size_t h = 0; h < schedule_.hops.size(); ++h) {
      route.hop[h] = schedule_.hops[h].best().pair;
      if (schedule_.mode == AlignMode::InitialAccess) route.tracking[h] = schedule_.hops[h].top(cfg_.n_bt);
    }
    route.aligned = true;
    auto& lv = net_.links[static_cast<std::size_t>(mode_.n)];
    lv.i_tx = route.hop[0].tx;
    lv.i_rx = route.hop[0].rx;
    mode_.n_mode = 1;
    mode_.m_ba = 0;
    mode_.m_dt = 0;
  }

  void apply(Behavior b) {
    if (b == Behavior::Opportunistic) {
      begin_alignment(AlignMode::BeamTracking, mode_.n);
    } else if (b == Behavior::Pessimistic) {
      begin_alignment(AlignMode::InitialAccess, pick_other_relay());
    }
  }

  // Stale-measurement argmax over the other routes; ties to the lowest index.
  int pick_other_relay() const {
    if (cfg_.direct_only || cfg_.n_relays == 0) return mode_.n;
    int best = -1;
    double best_s = 0.0;
    for (int k = 0; k <= cfg_.n_relays; ++k) {
      if (k == mode_.n) continue;
      const double s = net_.links[static_cast<std::size_t>(k)].s_last;
      if (best < 0 || s > best_s) {
        best = k;
        best_s = s;
      }
    }
    return best;
  }

  void begin_alignment(AlignMode mode, int relay) {
    Route& route = routes_[static_cast<std::size_t>(relay)];
    if (mode == AlignMode::BeamTracking && !route.aligned) mode = AlignMode::InitialAccess;
    schedule_ = make_sweep_schedule(mode, relay, sizes_, route.tracking[0], route.tracking[1]);
    for (auto& fb : route.fb) fb.open_block();
    mode_.n = relay;
    mode_.n_mode = 0;
    mode_.m_ba = 0;
    mode_.m_dt = 0;
    mode_.M_BA = schedule_.total_slots;
  }

  // --- trace scenario -----------------------------------------------------

  void setup_trace(std::uint64_t seed) {
    const auto& tc = cfg_.trace;
    if (!tc.trace_file.empty()) {
      if (!tc.roles) throw ConfigError("trace scenario: roles are required with a trace file");
      trace_ = ingest_trajectories(tc.trace_file, tc.roles);
    } else {
      bool ok = false;
      for (std::uint64_t attempt = 0; attempt < 64 && !ok; ++attempt) {
        Rng rng = make_stream(seed, 500 + attempt);
        MobilityTrace t = synth_highway(tc.highway, rng);
        try {
          TraceRoles roles = tc.roles ? *tc.roles
                                      : auto_roles(t, cfg_.n_relays, tc.rx_distance, 0.5 * tc.highway.length_m);
          assign_roles(t, roles);
          trace_ = std::move(t);
          ok = true;
        } catch (const ConfigError&) {
        }
      }
      if (!ok) throw ConfigError("trace scenario: could not place enough vehicles on the highway");
    }
    const auto& roles = *trace_->roles;
    if (static_cast<int>(roles.relays.size()) < cfg_.n_relays)
      throw ConfigError("trace scenario: fewer relay ids than n_relays");
    endpoints_.clear();
    endpoints_.emplace_back(roles.tx, roles.rx);
    for (int n = 1; n <= cfg_.n_relays; ++n) {
      endpoints_.emplace_back(roles.tx, roles.relays[static_cast<std::size_t>(n - 1)]);
      endpoints_.emplace_back(roles.relays[static_cast<std::size_t>(n - 1)], roles.rx);
    }
    trace_end_ = std::numeric_limits<double>::infinity();
    trace_start_ = -std::numeric_limits<double>::infinity();
    for (const auto& [a, b] : endpoints_)
      for (const auto* id : {&a, &b}) {
        const auto& v = trace_->at(*id);
        trace_end_ = std::min(trace_end_, v.samples.back().time);
        trace_start_ = std::max(trace_start_, v.samples.front().time);
      }
    if (trace_start_ > trace_end_) throw ConfigError("trace scenario: role vehicles never coexist");
    // Median LOS link length at the first slot is the reference distance.
    ray_ = tc.ray;
    std::vector<double> lengths;
    for (const auto& [a, b] : endpoints_) {
      RayTraceParams unit = ray_;
      unit.ref_distance = 1.0;
      const PathSet ps = raytrace_paths(*trace_, a, b, trace_start_, unit);
      lengths.push_back(1.0 / std::abs(ps.paths.front().alpha));
    }
    std::sort(lengths.begin(), lengths.end());
    ray_.ref_distance = lengths[lengths.size() / 2];
  }

  void refresh_trace_paths() {
    const double t = std::min(trace_start_ + slot_ * cfg_.trace.slot_duration, trace_end_);
    for (std::size_t l = 0; l < links_.size(); ++l) {
      links_[l].ps = raytrace_paths(*trace_, endpoints_[l].first, endpoints_[l].second, t, ray_);
      links_[l].resp.reset();
    }
  }

  EnvConfig cfg_;
  Codebook tx_cb_;
  Codebook rx_cb_;
  Codebook relay_cb_;
  PulseShape pulse_;
  SweepSizes sizes_;

  std::uint64_t seed_ = 0;
  int slot_ = 0;
  std::vector<Link> links_;
  std::vector<Route> routes_;
  NetState net_;
  ModeState mode_;
  SweepSchedule schedule_;

  std::optional<MobilityTrace> trace_;
  std::vector<std::pair<std::string, std::string>> endpoints_;
  RayTraceParams ray_;
  double trace_start_ = 0.0;
  double trace_end_ = 0.0;
};

}  // namespace relaybeam
