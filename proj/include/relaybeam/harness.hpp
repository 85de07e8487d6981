// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration, Monte-Carlo sweeps and result files.
//
// Config files are "key = value" lines; '#' starts a comment. Every key of
// config_keys() is accepted. The sweep axis is written as
//   sweep = snr_db: -20, -10, 0, 10
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "relaybeam/agent.hpp"
#include "relaybeam/baselines.hpp"
#include "relaybeam/env.hpp"
#include "relaybeam/errors.hpp"
#include "relaybeam/mobility.hpp"
#include "relaybeam/parallel.hpp"

namespace relaybeam {

struct SweepAxis {
  std::string name = "snr_db";
  std::vector<double> values;
};

struct ExperimentConfig {
  EnvConfig env;
  DdpgConfig ddpg;
  int slots = 200;
  int n_seeds = 100;
  std::uint64_t seed_base = 1;
  // Threshold search runs on its own seeds, disjoint from evaluation.
  int grid_seeds = 20;
  std::uint64_t grid_seed_base = 1000000;
  int grid_points = 20;
  int calibration_seeds = 50;
  std::vector<std::string> policies{"genie", "drl", "threshold", "direct"};
  SweepAxis axis;

  std::vector<std::uint64_t> eval_seeds() const {
    std::vector<std::uint64_t> s;
    for (int i = 0; i < n_seeds; ++i) s.push_back(seed_base + static_cast<std::uint64_t>(i));
    return s;
  }
  std::vector<std::uint64_t> search_seeds() const {
    std::vector<std::uint64_t> s;
    for (int i = 0; i < grid_seeds; ++i) s.push_back(grid_seed_base + static_cast<std::uint64_t>(i));
    return s;
  }
  std::vector<std::uint64_t> calib_seeds() const {
    std::vector<std::uint64_t> s;
    for (int i = 0; i < calibration_seeds; ++i) s.push_back(grid_seed_base + 500000 + static_cast<std::uint64_t>(i));
    return s;
  }
};

inline const std::vector<std::string>& known_policies() {
  static const std::vector<std::string> p{"genie", "drl", "threshold", "direct", "direct_threshold"};
  return p;
}

namespace detail {

inline double to_num(const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d) throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
  return *d;
}

inline int to_int(const std::string& key, const std::string& v) {
  const double d = to_num(key, v);
  if (d != std::floor(d) || std::abs(d) > 1e9) throw ConfigError("config: " + key + " expects an integer");
  return static_cast<int>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: " + key + " expects true/false");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  for (auto part : split(v, ',')) {
    part = trim(part);
    if (!part.empty()) out.emplace_back(part);
  }
  return out;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

inline std::string fmt(double v) { return format_double(v); }

}  // namespace detail

struct ConfigKey {
  std::string name;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
  bool numeric = true;  // usable as a sweep axis
};

// Blocking probability q_b maps to p_ub = q_b, p_bu = 1 - q_b (chain with
// p_ub + p_bu = 1), which keeps the Table-style default q_b = 0.01 at
// p_ub = 0.01, p_bu = 0.99.
inline void set_blocking_probability(ChannelParams& c, double q_b) {
  if (!(q_b >= 0.0 && q_b <= 1.0)) throw ConfigError("config: q_b must lie in [0, 1]");
  c.p_ub = q_b;
  c.p_bu = 1.0 - q_b;
}

inline const std::vector<ConfigKey>& config_keys() {
  using detail::fmt;
  using detail::to_bool;
  using detail::to_int;
  using detail::to_num;
  using E = ExperimentConfig;
  using S = const std::string&;
#define RB_NUM(key, field)                                                   \
  ConfigKey{key, [](E& c, S v) { c.field = to_num(key, v); }, [](const E& c) { return fmt(c.field); }}
#define RB_INT(key, field)                                                   \
  ConfigKey{key, [](E& c, S v) { c.field = to_int(key, v); }, [](const E& c) { return std::to_string(c.field); }}
  static const std::vector<ConfigKey> keys{
      ConfigKey{"scenario",
                [](E& c, S v) {
                  if (v == "los") c.env.scenario = Scenario::Los;
                  else if (v == "trace") c.env.scenario = Scenario::Trace;
                  else throw ConfigError("config: scenario must be los or trace");
                },
                [](const E& c) { return std::string(c.env.scenario == Scenario::Los ? "los" : "trace"); }, false},
      RB_NUM("snr_db", env.snr_db),
      RB_INT("n_tx", env.channel.n_tx),
      RB_INT("n_rx", env.channel.n_rx),
      RB_INT("relay_antennas", env.relay_antennas),
      RB_INT("n_relays", env.n_relays),
      RB_INT("codebook_tx", env.codebook_tx),
      RB_INT("codebook_rx", env.codebook_rx),
      RB_INT("codebook_relay", env.codebook_relay),
      ConfigKey{"codebook_size",
                [](E& c, S v) { c.env.codebook_tx = c.env.codebook_rx = c.env.codebook_relay = to_int("codebook_size", v); },
                [](const E& c) { return std::to_string(c.env.codebook_tx); }},
      RB_INT("n_ss", env.n_ss),
      RB_INT("m_ss", env.m_ss),
      RB_INT("n_bt", env.n_bt),
      RB_INT("m_dt", env.m_dt),
      RB_INT("n_paths", env.n_paths),
      RB_NUM("se_normalizer", env.se_normalizer),
      RB_INT("n_subcarriers", env.channel.n_subcarriers),
      RB_NUM("symbol_period", env.channel.symbol_period),
      RB_INT("n_taps", env.channel.n_taps),
      RB_NUM("rolloff", env.channel.rolloff),
      // Varying one spread holds the other at its reference value.
      ConfigKey{"sigma_a",
                [](E& c, S v) { c.env.channel.sigma_a = to_num("sigma_a", v); },
                [](const E& c) { return fmt(c.env.channel.sigma_a); }},
      ConfigKey{"sigma_p",
                [](E& c, S v) { c.env.channel.sigma_p = to_num("sigma_p", v); },
                [](const E& c) { return fmt(c.env.channel.sigma_p); }},
      RB_NUM("p_ub", env.channel.p_ub),
      RB_NUM("p_bu", env.channel.p_bu),
      ConfigKey{"q_b", [](E& c, S v) { set_blocking_probability(c.env.channel, to_num("q_b", v)); },
                [](const E& c) {
                  const double t = c.env.channel.p_ub + c.env.channel.p_bu;
                  return fmt(t > 0.0 ? c.env.channel.p_ub / t : 0.0);
                }},
      RB_INT("n_bl", env.channel.n_bl),
      RB_INT("slots", slots),
      RB_INT("seeds", n_seeds),
      ConfigKey{"seed_base", [](E& c, S v) { c.seed_base = static_cast<std::uint64_t>(to_int("seed_base", v)); },
                [](const E& c) { return std::to_string(c.seed_base); }, false},
      RB_INT("grid_seeds", grid_seeds),
      ConfigKey{"grid_seed_base",
                [](E& c, S v) { c.grid_seed_base = static_cast<std::uint64_t>(to_int("grid_seed_base", v)); },
                [](const E& c) { return std::to_string(c.grid_seed_base); }, false},
      RB_INT("grid_points", grid_points),
      RB_INT("calibration_seeds", calibration_seeds),
      ConfigKey{"policies",
                [](E& c, S v) {
                  auto p = detail::split_list(v);
                  for (const auto& name : p)
                    if (std::find(known_policies().begin(), known_policies().end(), name) == known_policies().end())
                      throw ConfigError("config: unknown policy '" + name + "'");
                  if (p.empty()) throw ConfigError("config: policies must not be empty");
                  c.policies = std::move(p);
                },
                [](const E& c) { return detail::join(c.policies); }, false},
      RB_NUM("ddpg.gamma", ddpg.gamma),
      RB_NUM("ddpg.eta", ddpg.eta),
      RB_INT("ddpg.batch", ddpg.batch),
      RB_INT("ddpg.buffer", ddpg.buffer_capacity),
      RB_NUM("ddpg.ou_theta", ddpg.ou_theta),
      RB_NUM("ddpg.ou_sigma", ddpg.ou_sigma),
      RB_NUM("ddpg.ou_dt", ddpg.ou_dt),
      ConfigKey{"ddpg.noise_decay", [](E& c, S v) { c.ddpg.noise_decay = to_bool("ddpg.noise_decay", v); },
                [](const E& c) { return std::string(c.ddpg.noise_decay ? "true" : "false"); }, false},
      RB_NUM("ddpg.db_lo", ddpg.range.lo_db),
      RB_NUM("ddpg.db_hi", ddpg.range.hi_db),
      RB_NUM("ddpg.actor_lr", ddpg.actor_lr),
      RB_NUM("ddpg.critic_lr", ddpg.critic_lr),
      RB_INT("ddpg.hidden", ddpg.hidden),
      ConfigKey{"trace.file", [](E& c, S v) { c.env.trace.trace_file = v; },
                [](const E& c) { return c.env.trace.trace_file; }, false},
      ConfigKey{"trace.roles",
                [](E& c, S v) {
                  // tx, rx, relay1, relay2, ...; empty means automatic
                  if (v.empty()) {
                    c.env.trace.roles.reset();
                    return;
                  }
                  const auto ids = detail::split_list(v);
                  if (ids.size() < 2) throw ConfigError("config: trace.roles needs tx and rx ids");
                  TraceRoles r{ids[0], ids[1], {ids.begin() + 2, ids.end()}};
                  c.env.trace.roles = std::move(r);
                },
                [](const E& c) {
                  if (!c.env.trace.roles) return std::string();
                  std::vector<std::string> ids{c.env.trace.roles->tx, c.env.trace.roles->rx};
                  ids.insert(ids.end(), c.env.trace.roles->relays.begin(), c.env.trace.roles->relays.end());
                  return detail::join(ids);
                },
                false},
      RB_NUM("trace.density_per_km", env.trace.highway.density_per_km),
      RB_NUM("trace.speed_kmh", env.trace.highway.speed_kmh),
      RB_INT("trace.lanes", env.trace.highway.lanes),
      RB_NUM("trace.length_m", env.trace.highway.length_m),
      RB_NUM("trace.duration_s", env.trace.highway.duration_s),
      RB_NUM("trace.sample_dt", env.trace.highway.sample_dt),
      RB_NUM("trace.slot_duration", env.trace.slot_duration),
      RB_NUM("trace.rx_distance", env.trace.rx_distance),
      RB_NUM("trace.carrier_hz", env.trace.ray.carrier_hz),
      RB_NUM("trace.vehicle_width", env.trace.ray.vehicle_width),
  };
#undef RB_NUM
#undef RB_INT
  return keys;
}

inline const ConfigKey& find_key(const std::string& name) {
  for (const auto& k : config_keys())
    if (k.name == name) return k;
  throw ConfigError("config: unknown key '" + name + "'");
}

// Sets one sweep coordinate. Varying sigma_p holds sigma_a at 0.5 rad and
// varying sigma_a holds sigma_p at 0.005.
inline ExperimentConfig apply_axis(ExperimentConfig cfg, const std::string& name, double value) {
  const ConfigKey& key = find_key(name);
  if (!key.numeric) throw ConfigError("config: '" + name + "' cannot be swept");
  if (name == "sigma_p") cfg.env.channel.sigma_a = 0.5;
  if (name == "sigma_a") cfg.env.channel.sigma_p = 0.005;
  key.set(cfg, detail::fmt(value));
  return cfg;
}

inline void validate(const ExperimentConfig& cfg) {
  cfg.env.validate();
  cfg.ddpg.validate();
  if (cfg.slots < 1) throw ConfigError("slots must be >= 1");
  if (cfg.n_seeds < 1) throw ConfigError("seeds must be >= 1");
  if (cfg.grid_seeds < 1 || cfg.grid_points < 2) throw ConfigError("grid_seeds >= 1 and grid_points >= 2 required");
  if (cfg.axis.values.empty()) throw ConfigError("sweep axis has no values");
  const ConfigKey& key = find_key(cfg.axis.name);
  if (!key.numeric) throw ConfigError("config: '" + cfg.axis.name + "' cannot be swept");
}

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig cfg;
  bool have_axis = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) throw FormatError("config: expected 'key = value'", line_no);
    const std::string key(detail::trim(body.substr(0, eq)));
    const std::string value(detail::trim(body.substr(eq + 1)));
    try {
      if (key == "sweep") {
        if (have_axis) throw ConfigError("config: exactly one sweep axis allowed");
        const auto colon = value.find(':');
        if (colon == std::string::npos) throw ConfigError("config: sweep expects 'name: v1, v2, ...'");
        cfg.axis.name = std::string(detail::trim(std::string_view(value).substr(0, colon)));
        cfg.axis.values.clear();
        for (const auto& v : detail::split_list(value.substr(colon + 1)))
          cfg.axis.values.push_back(detail::to_num("sweep", v));
        have_axis = true;
        continue;
      }
      find_key(key).set(cfg, value);
    } catch (const ConfigError& e) {
      throw FormatError(e.what(), line_no);
    }
  }
  if (!have_axis) {
    cfg.axis.name = "snr_db";
    cfg.axis.values = {cfg.env.snr_db};
  }
  validate(cfg);
  return cfg;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in);
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

// Canonical dump: every key in table order, then the sweep line.
inline std::string dump_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& k : config_keys()) {
    if (k.name == "q_b" || k.name == "codebook_size") continue;  // derived views
    out += k.name + " = " + k.get(cfg) + "\n";
  }
  out += "sweep = " + cfg.axis.name + ":";
  for (std::size_t i = 0; i < cfg.axis.values.size(); ++i) out += (i ? ", " : " ") + detail::fmt(cfg.axis.values[i]);
  out += "\n";
  return out;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(dump_config(cfg));
  return os.str();
}

// ---------------------------------------------------------------------------
// Results

struct ResultRow {
  double sweep_value = 0.0;
  std::string policy;
  double mean_se = 0.0;
  double std_se = 0.0;
  int n_seeds = 0;

  bool operator==(const ResultRow&) const = default;
};

struct ResultTable {
  std::vector<ResultRow> rows;

  const ResultRow* find(double value, const std::string& policy) const {
    for (const auto& r : rows)
      if (r.sweep_value == value && r.policy == policy) return &r;
    return nullptr;
  }
};

struct SweepPointInfo {
  double sweep_value = 0.0;
  double tau_max = 0.0;
  std::optional<GridResult> threshold;
  std::optional<GridResult> direct;
};

struct SweepReport {
  ResultTable table;
  std::vector<SweepPointInfo> points;
  // (sweep value, policy, seed) -> per-seed score, in deterministic order.
  std::vector<std::tuple<double, std::string, std::uint64_t, double>> scores;
  std::vector<std::string> failures;
};

inline std::pair<double, double> mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), 0.0};
  const double m = mean_of(v);
  if (v.size() < 2) return {m, 0.0};
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return {m, std::sqrt(acc / static_cast<double>(v.size() - 1))};
}

// Per-seed score: mean over all slots, except drl which uses the mean of the
// last 20 slots.
inline SweepReport run_sweep(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto seeds = cfg.eval_seeds();
  auto wants = [&](const std::string& p) {
    return std::find(cfg.policies.begin(), cfg.policies.end(), p) != cfg.policies.end();
  };

  SweepReport report;
  std::vector<ExperimentConfig> point_cfg;
  for (double v : cfg.axis.values) {
    ExperimentConfig pc = apply_axis(cfg, cfg.axis.name, v);
    pc.env.validate();
    SweepPointInfo info;
    info.sweep_value = v;
    if (wants("threshold") || wants("direct_threshold")) {
      info.tau_max = estimate_tau_max(pc.env, pc.calib_seeds(), pc.slots);
      if (!(info.tau_max > 0.0)) info.tau_max = 1.0;
      const GridSpec grid{info.tau_max, pc.grid_points};
      if (wants("threshold")) info.threshold = grid_search_thresholds(pc.env, grid, pc.search_seeds(), pc.slots);
      if (wants("direct_threshold")) info.direct = grid_search_thresholds(pc.env, grid, pc.search_seeds(), pc.slots, true);
    }
    report.points.push_back(std::move(info));
    point_cfg.push_back(std::move(pc));
  }

  struct Task {
    std::size_t point;
    std::string policy;
    std::size_t seed_idx;
  };
  std::vector<Task> tasks;
  for (std::size_t p = 0; p < point_cfg.size(); ++p)
    for (const auto& policy : cfg.policies)
      for (std::size_t s = 0; s < seeds.size(); ++s) tasks.push_back({p, policy, s});

  std::vector<double> score(tasks.size(), 0.0);
  std::vector<std::string> error(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    const Task& t = tasks[i];
    const ExperimentConfig& pc = point_cfg[t.point];
    const auto seed = seeds[t.seed_idx];
    try {
      if (t.policy == "genie") {
        score[i] = mean_of(run_genie(pc.env, seed, pc.slots));
      } else if (t.policy == "direct") {
        score[i] = mean_of(run_direct(pc.env, seed, pc.slots));
      } else if (t.policy == "threshold") {
        score[i] = mean_of(run_fixed_threshold(pc.env, seed, pc.slots, report.points[t.point].threshold->best));
      } else if (t.policy == "direct_threshold") {
        score[i] = mean_of(run_direct_threshold(pc.env, seed, pc.slots, report.points[t.point].direct->best));
      } else if (t.policy == "drl") {
        EnvConfig env = pc.env;
        env.track_genie = false;
        score[i] = converged_metric(train(env, pc.ddpg, seed, pc.slots).rewards);
      }
    } catch (const std::exception& e) {
      error[i] = e.what();
    }
  });

  std::size_t i = 0;
  for (std::size_t p = 0; p < point_cfg.size(); ++p) {
    for (const auto& policy : cfg.policies) {
      std::vector<double> ok;
      for (std::size_t s = 0; s < seeds.size(); ++s, ++i) {
        const double v = report.points[p].sweep_value;
        if (!error[i].empty()) {
          report.failures.push_back(detail::fmt(v) + "," + policy + "," + std::to_string(seeds[s]) + ": " + error[i]);
          continue;
        }
        ok.push_back(score[i]);
        report.scores.emplace_back(v, policy, seeds[s], score[i]);
      }
      const auto [m, sd] = mean_std(ok);
      report.table.rows.push_back({report.points[p].sweep_value, policy, m, sd, static_cast<int>(ok.size())});
    }
  }
  return report;
}

inline void emit_csv(const ResultTable& t, std::ostream& out) {
  out << "sweep_value,policy,mean_se,std_se,n_seeds\n";
  for (const auto& r : t.rows)
    out << detail::fmt(r.sweep_value) << ',' << r.policy << ',' << detail::fmt(r.mean_se) << ','
        << detail::fmt(r.std_se) << ',' << r.n_seeds << '\n';
}

inline std::string emit_csv_string(const ResultTable& t) {
  std::ostringstream os;
  emit_csv(t, os);
  return os.str();
}

inline void emit_csv(const ResultTable& t, const std::string& path) {
  if (t.rows.empty()) throw std::invalid_argument("emit_csv: empty table");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  emit_csv(t, out);
  if (!out) throw std::runtime_error("write failed: " + path);
}

inline ResultTable parse_csv(std::istream& in) {
  ResultTable t;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line) || detail::trim(line) != "sweep_value,policy,mean_se,std_se,n_seeds")
    throw FormatError("result csv: bad header", 1);
  ++line_no;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line), ',');
    if (f.size() != 5) throw FormatError("result csv: expected 5 fields", line_no);
    ResultRow r;
    const auto sv = detail::parse_double(f[0]);
    const auto m = detail::parse_double(f[2]);
    const auto sd = detail::parse_double(f[3]);
    const auto n = detail::parse_double(f[4]);
    if (!sv || !m || !sd || !n) throw FormatError("result csv: bad number", line_no);
    r.sweep_value = *sv;
    r.policy = std::string(detail::trim(f[1]));
    r.mean_se = *m;
    r.std_se = *sd;
    r.n_seeds = static_cast<int>(*n);
    t.rows.push_back(std::move(r));
  }
  return t;
}

// One whitespace-separated block per policy, blocks separated by two blank
// lines (gnuplot "index" friendly).
inline void emit_plotdata(const ResultTable& t, std::ostream& out, const std::string& hash = {}) {
  if (!hash.empty()) out << "# config " << hash << '\n';
  std::vector<std::string> order;
  for (const auto& r : t.rows)
    if (std::find(order.begin(), order.end(), r.policy) == order.end()) order.push_back(r.policy);
  for (std::size_t p = 0; p < order.size(); ++p) {
    if (p) out << "\n\n";
    out << "# " << order[p] << "\n# sweep_value mean_se std_se n_seeds\n";
    for (const auto& r : t.rows)
      if (r.policy == order[p])
        out << detail::fmt(r.sweep_value) << ' ' << detail::fmt(r.mean_se) << ' ' << detail::fmt(r.std_se) << ' '
            << r.n_seeds << '\n';
  }
}

inline void emit_plotdata(const ResultTable& t, const std::string& path, const std::string& hash = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  emit_plotdata(t, out, hash);
}

inline void emit_manifest(const ExperimentConfig& cfg, const SweepReport& rep, std::ostream& out) {
  out << "config_hash = " << config_hash(cfg) << '\n';
  out << dump_config(cfg);
  for (const auto& p : rep.points) {
    out << "# point " << detail::fmt(p.sweep_value) << " tau_max=" << detail::fmt(p.tau_max);
    if (p.threshold)
      out << " threshold=(" << detail::fmt(p.threshold->best.tau_relay) << "," << detail::fmt(p.threshold->best.tau_mode)
          << ")";
    if (p.direct)
      out << " direct_threshold=(" << detail::fmt(p.direct->best.tau_relay) << "," << detail::fmt(p.direct->best.tau_mode) << ")";
    out << '\n';
  }
  for (const auto& f : rep.failures) out << "# failed " << f << '\n';
}

}  // namespace relaybeam
