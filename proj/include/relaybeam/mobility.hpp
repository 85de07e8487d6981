// SPDX-License-Identifier: Apache-2.0
//
// Vehicle trajectories (CSV import/export and a synthetic highway generator)
// and a 2D ray tracer that turns a snapshot into a PathSet: LOS blockage by
// vehicle footprints plus one specular reflection per vehicle side surface.
#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "relaybeam/channel.hpp"
#include "relaybeam/errors.hpp"
#include "relaybeam/random.hpp"

namespace relaybeam {

inline constexpr double kDefaultVehicleLength = 4.645;  // metres
inline constexpr double kSpeedOfLight = 299792458.0;

struct VehicleSample {
  double time = 0.0;  // s
  double x = 0.0;     // m, centre of the footprint
  double y = 0.0;     // m
  double speed = 0.0; // m/s
  double length = kDefaultVehicleLength;
};

struct Vehicle {
  std::string id;
  std::vector<VehicleSample> samples;  // strictly increasing time
};

struct TraceRoles {
  std::string tx;
  std::string rx;
  std::vector<std::string> relays;
};

struct MobilityTrace {
  std::vector<Vehicle> vehicles;
  std::optional<TraceRoles> roles;

  const Vehicle* find(std::string_view id) const {
    for (const auto& v : vehicles)
      if (v.id == id) return &v;
    return nullptr;
  }

  const Vehicle& at(std::string_view id) const {
    const Vehicle* v = find(id);
    if (v == nullptr) throw std::out_of_range("vehicle '" + std::string(id) + "' not in trace");
    return *v;
  }

  // Linear interpolation between samples; empty when t is outside the
  // vehicle's sampled interval.
  static std::optional<VehicleSample> state_at(const Vehicle& v, double t) {
    if (v.samples.empty()) return std::nullopt;
    const auto& first = v.samples.front();
    const auto& last = v.samples.back();
    if (t < first.time || t > last.time) return std::nullopt;
    if (v.samples.size() == 1 || t == last.time) return last;
    auto hi = std::upper_bound(v.samples.begin(), v.samples.end(), t,
                               [](double tt, const VehicleSample& s) { return tt < s.time; });
    auto lo = hi - 1;
    const double w = (t - lo->time) / (hi->time - lo->time);
    VehicleSample s = *lo;
    s.time = t;
    s.x = lo->x + w * (hi->x - lo->x);
    s.y = lo->y + w * (hi->y - lo->y);
    s.speed = lo->speed + w * (hi->speed - lo->speed);
    return s;
  }
};

// ---------------------------------------------------------------------------
// CSV trajectory format: header "time,vehicle_id,x,y,speed,length", one row per
// (time, vehicle), SI units, '.' decimals.

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.push_back(s.substr(start));
      break;
    }
    out.push_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

// Shortest round-trip decimal representation, locale independent.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline MobilityTrace ingest_trajectories(std::istream& in) {
  MobilityTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::map<std::string, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view row = detail::trim(line);
    if (row.empty() || row.front() == '#') continue;
    const auto fields = detail::split(row, ',');
    if (!header_seen) {
      static constexpr std::string_view kHeader[] = {"time", "vehicle_id", "x", "y", "speed", "length"};
      bool ok = fields.size() == 6;
      for (std::size_t i = 0; ok && i < 6; ++i) ok = detail::trim(fields[i]) == kHeader[i];
      if (!ok) throw FormatError("expected header 'time,vehicle_id,x,y,speed,length'", line_no);
      header_seen = true;
      continue;
    }
    if (fields.size() != 6) throw FormatError("expected 6 fields, got " + std::to_string(fields.size()), line_no);
    VehicleSample s;
    const auto t = detail::parse_double(fields[0]);
    const auto x = detail::parse_double(fields[2]);
    const auto y = detail::parse_double(fields[3]);
    const auto v = detail::parse_double(fields[4]);
    const auto len = detail::parse_double(fields[5]);
    if (!t || !x || !y || !v || !len) throw FormatError("malformed number", line_no);
    const std::string id(detail::trim(fields[1]));
    if (id.empty()) throw FormatError("empty vehicle_id", line_no);
    if (!(*len > 0.0)) throw FormatError("vehicle length must be > 0", line_no);
    s.time = *t;
    s.x = *x;
    s.y = *y;
    s.speed = *v;
    s.length = *len;
    auto [it, inserted] = index.try_emplace(id, trace.vehicles.size());
    if (inserted) trace.vehicles.push_back(Vehicle{id, {}});
    auto& samples = trace.vehicles[it->second].samples;
    if (!samples.empty() && !(s.time > samples.back().time))
      throw FormatError("timestamps for vehicle '" + id + "' are not strictly increasing", line_no);
    samples.push_back(s);
  }
  if (!header_seen) throw FormatError("missing header", line_no + 1);
  return trace;
}

inline void assign_roles(MobilityTrace& trace, const TraceRoles& roles) {
  if (roles.tx.empty() || roles.rx.empty()) throw ConfigError("trace roles: transmitter and receiver ids are required");
  if (roles.tx == roles.rx) throw ConfigError("trace roles: transmitter and receiver must differ");
  auto require = [&](const std::string& id) {
    if (trace.find(id) == nullptr) throw ConfigError("trace roles: vehicle '" + id + "' not in trace");
  };
  require(roles.tx);
  require(roles.rx);
  for (const auto& r : roles.relays) {
    require(r);
    if (r == roles.tx || r == roles.rx) throw ConfigError("trace roles: relay '" + r + "' is also an endpoint");
  }
  trace.roles = roles;
}

inline MobilityTrace ingest_trajectories(const std::string& path, const std::optional<TraceRoles>& roles = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file '" + path + "'");
  MobilityTrace trace = ingest_trajectories(in);
  if (roles) assign_roles(trace, *roles);
  return trace;
}

// Rows ordered by time, then by vehicle order in the trace.
inline void write_trajectories(const MobilityTrace& trace, std::ostream& out) {
  out << "time,vehicle_id,x,y,speed,length\n";
  struct Row {
    double t;
    std::size_t v;
    std::size_t s;
  };
  std::vector<Row> rows;
  for (std::size_t v = 0; v < trace.vehicles.size(); ++v)
    for (std::size_t s = 0; s < trace.vehicles[v].samples.size(); ++s)
      rows.push_back({trace.vehicles[v].samples[s].time, v, s});
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.t < b.t; });
  for (const auto& r : rows) {
    const auto& veh = trace.vehicles[r.v];
    const auto& s = veh.samples[r.s];
    out << detail::format_double(s.time) << ',' << veh.id << ',' << detail::format_double(s.x) << ','
        << detail::format_double(s.y) << ',' << detail::format_double(s.speed) << ','
        << detail::format_double(s.length) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic highway

struct HighwaySpec {
  double density_per_km = 10.0;  // vehicles per km per lane
  double speed_kmh = 80.0;       // mean speed
  int lanes = 3;
  double length_m = 1000.0;
  double duration_s = 2.0;
  double sample_dt = 0.1;
  double lane_width = 3.5;
  double vehicle_length = kDefaultVehicleLength;
  double speed_jitter = 0.1;  // speeds uniform in mean * [1 - j, 1 + j]
};

// Poisson placement per lane, constant speed per vehicle, all traffic moving
// in +x. Vehicle ids are "veh<k>" in lane-major, x-ascending order.
inline MobilityTrace synth_highway(const HighwaySpec& spec, Rng& rng) {
  if (spec.lanes <= 0) throw std::invalid_argument("synth_highway: lane count must be >= 1");
  if (!(spec.density_per_km > 0.0)) throw std::invalid_argument("synth_highway: density must be > 0");
  if (!(spec.speed_kmh > 0.0)) throw std::invalid_argument("synth_highway: speed must be > 0");
  if (!(spec.length_m > 0.0) || spec.duration_s < 0.0 || !(spec.sample_dt > 0.0))
    throw std::invalid_argument("synth_highway: length, duration and sample step must be valid");

  const double mean_speed = spec.speed_kmh / 3.6;
  std::poisson_distribution<int> count(spec.density_per_km * spec.length_m / 1000.0);
  std::uniform_real_distribution<double> pos(0.0, spec.length_m);
  std::uniform_real_distribution<double> jitter(1.0 - spec.speed_jitter, 1.0 + spec.speed_jitter);

  const auto n_samples = static_cast<std::size_t>(std::floor(spec.duration_s / spec.sample_dt + 1e-9)) + 1;
  MobilityTrace trace;
  int next_id = 0;
  for (int lane = 0; lane < spec.lanes; ++lane) {
    const int n = count(rng);
    std::vector<std::pair<double, double>> cars;  // (x0, speed)
    for (int i = 0; i < n; ++i) {
      const double x0 = pos(rng);
      const double v = mean_speed * jitter(rng);
      cars.emplace_back(x0, v);
    }
    std::sort(cars.begin(), cars.end());
    const double y = lane * spec.lane_width;
    for (const auto& [x0, v] : cars) {
      Vehicle veh;
      veh.id = "veh" + std::to_string(next_id++);
      for (std::size_t s = 0; s < n_samples; ++s) {
        const double t = static_cast<double>(s) * spec.sample_dt;
        veh.samples.push_back({t, x0 + v * t, y, v, spec.vehicle_length});
      }
      trace.vehicles.push_back(std::move(veh));
    }
  }
  return trace;
}

// Transmitter: the vehicle nearest the road centre at t=0. Receiver: the
// vehicle whose x is closest to tx.x + rx_distance. Relays: the remaining
// vehicles nearest the tx-rx midpoint. Everybody else is a blocker.
inline TraceRoles auto_roles(const MobilityTrace& trace, int n_relays, double rx_distance, double road_centre) {
  const std::size_t need = static_cast<std::size_t>(n_relays) + 2;
  if (trace.vehicles.size() < need)
    throw ConfigError("auto_roles: trace has " + std::to_string(trace.vehicles.size()) + " vehicles, need " +
                      std::to_string(need));
  auto x0 = [](const Vehicle& v) { return v.samples.front().x; };
  auto y0 = [](const Vehicle& v) { return v.samples.front().y; };
  std::vector<std::size_t> order(trace.vehicles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  auto nearest = [&](double x, double y, const std::vector<std::size_t>& exclude) {
    std::size_t best = order.size();
    double best_d = 0.0;
    for (std::size_t i : order) {
      if (std::find(exclude.begin(), exclude.end(), i) != exclude.end()) continue;
      const double dx = x0(trace.vehicles[i]) - x;
      const double dy = y0(trace.vehicles[i]) - y;
      const double d = dx * dx + dy * dy;
      if (best == order.size() || d < best_d) {
        best = i;
        best_d = d;
      }
    }
    return best;
  };

  std::vector<std::size_t> used;
  const std::size_t tx = nearest(road_centre, 0.0, used);
  used.push_back(tx);
  const Vehicle& vtx = trace.vehicles[tx];
  const std::size_t rx = nearest(x0(vtx) + rx_distance, y0(vtx), used);
  used.push_back(rx);
  const Vehicle& vrx = trace.vehicles[rx];
  const double mx = 0.5 * (x0(vtx) + x0(vrx));
  const double my = 0.5 * (y0(vtx) + y0(vrx));
  TraceRoles roles;
  roles.tx = vtx.id;
  roles.rx = vrx.id;
  for (int r = 0; r < n_relays; ++r) {
    const std::size_t k = nearest(mx, my, used);
    used.push_back(k);
    roles.relays.push_back(trace.vehicles[k].id);
  }
  return roles;
}

// ---------------------------------------------------------------------------
// 2D geometry and ray tracing

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double norm(Vec2 a) { return std::hypot(a.x, a.y); }

// Axis-aligned footprint; vehicles travel along x.
struct Rect {
  double x0, x1, y0, y1;
};

// Liang-Barsky clipping: does the closed segment [a, b] touch the rectangle?
inline bool segment_intersects_rect(Vec2 a, Vec2 b, const Rect& r) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  double t0 = 0.0;
  double t1 = 1.0;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.x - r.x0, r.x1 - a.x, a.y - r.y0, r.y1 - a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double t = q[i] / p[i];
    if (p[i] < 0.0) {
      if (t > t1) return false;
      t0 = std::max(t0, t);
    } else {
      if (t < t0) return false;
      t1 = std::min(t1, t);
    }
  }
  return t0 <= t1;
}

struct RayTraceParams {
  double vehicle_width = 1.8;    // m
  double carrier_hz = 60e9;
  double ref_distance = 50.0;    // |alpha| = ref_distance / path length
};

// Angle between a direction and the array axis (+x), in [0, pi].
inline double axis_angle(Vec2 dir) {
  const double n = norm(dir);
  if (n == 0.0) return std::numbers::pi / 2.0;
  return std::acos(std::clamp(dir.x / n, -1.0, 1.0));
}

namespace detail {

struct Snapshot {
  std::string id;
  VehicleSample s;
  Rect footprint(double width) const {
    return {s.x - 0.5 * s.length, s.x + 0.5 * s.length, s.y - 0.5 * width, s.y + 0.5 * width};
  }
};

inline Path make_ray(Vec2 tx, Vec2 first_hop, Vec2 rx, Vec2 last_hop, double length, double los_length,
                     const RayTraceParams& rp) {
  Path p;
  const double lambda = kSpeedOfLight / rp.carrier_hz;
  const double phase = -2.0 * std::numbers::pi * std::fmod(length / lambda, 1.0);
  p.alpha = (rp.ref_distance / length) * std::polar(1.0, phase);
  p.phi_d = axis_angle(first_hop - tx);
  p.phi_a = axis_angle(last_hop - rx);
  p.tau = std::max(0.0, (length - los_length) / kSpeedOfLight);
  return p;
}

}  // namespace detail

// Rays start and end at the vehicle ends facing each other. Path 0 is LOS;
// each further path is a specular reflection off a side surface of a third
// vehicle. Any path segment crossing another vehicle's footprint is blocked.
inline PathSet raytrace_paths(const MobilityTrace& trace, const std::string& tx_id, const std::string& rx_id,
                              double t, const RayTraceParams& rp = {}) {
  if (tx_id == rx_id) throw std::invalid_argument("raytrace_paths: transmitter and receiver must differ");
  const Vehicle& vtx = trace.at(tx_id);
  const Vehicle& vrx = trace.at(rx_id);
  const auto stx = MobilityTrace::state_at(vtx, t);
  const auto srx = MobilityTrace::state_at(vrx, t);
  if (!stx || !srx) throw std::out_of_range("raytrace_paths: endpoint not present at requested time");

  std::vector<detail::Snapshot> others;
  for (const auto& v : trace.vehicles) {
    if (v.id == tx_id || v.id == rx_id) continue;
    if (auto s = MobilityTrace::state_at(v, t)) others.push_back({v.id, *s});
  }

  const double dir = srx->x >= stx->x ? 1.0 : -1.0;
  const Vec2 a{stx->x + dir * 0.5 * stx->length, stx->y};
  const Vec2 b{srx->x - dir * 0.5 * srx->length, srx->y};

  auto blocked = [&](Vec2 p, Vec2 q, std::size_t skip) {
    for (std::size_t i = 0; i < others.size(); ++i) {
      if (i == skip) continue;
      if (segment_intersects_rect(p, q, others[i].footprint(rp.vehicle_width))) return true;
    }
    return false;
  };

  PathSet ps;
  const double los_len = std::max(norm(b - a), 1e-3);
  Path los = detail::make_ray(a, b, b, a, los_len, los_len, rp);
  los.c_bl = blocked(a, b, others.size()) ? 0 : 1;
  ps.paths.push_back(los);

  for (std::size_t i = 0; i < others.size(); ++i) {
    const Rect r = others[i].footprint(rp.vehicle_width);
    for (const double ys : {r.y0, r.y1}) {
      const double sa = a.y - ys;
      const double sb = b.y - ys;
      // Both endpoints strictly on the outward side of this surface.
      const bool outward = ys == r.y1 ? (sa > 0.0 && sb > 0.0) : (sa < 0.0 && sb < 0.0);
      if (!outward) continue;
      const Vec2 image{b.x, 2.0 * ys - b.y};
      const double s = (ys - a.y) / (image.y - a.y);
      const Vec2 hit = a + s * (image - a);
      if (hit.x < r.x0 || hit.x > r.x1) continue;
      const double len = norm(image - a);
      Path p = detail::make_ray(a, hit, b, hit, len, los_len, rp);
      p.c_bl = (blocked(a, hit, i) || blocked(hit, b, i)) ? 0 : 1;
      ps.paths.push_back(p);
    }
  }
  ps.block_state = ps.any_unblocked() ? BlockState::Unblocked : BlockState::Blocked;
  ps.block_timer = 0;
  return ps;
}

}  // namespace relaybeam
