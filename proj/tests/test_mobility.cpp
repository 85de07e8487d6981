#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "relaybeam/mobility.hpp"

using namespace relaybeam;
using std::numbers::pi;

namespace {

MobilityTrace parse(const std::string& text) {
  std::istringstream in(text);
  return ingest_trajectories(in);
}

// Two static vehicles on one lane plus optional extra vehicles, sampled at t=0 and t=1.
MobilityTrace static_scene(const std::vector<std::tuple<std::string, double, double>>& cars) {
  MobilityTrace t;
  for (const auto& [id, x, y] : cars) t.vehicles.push_back({id, {{0.0, x, y, 0.0, 4.0}, {1.0, x, y, 0.0, 4.0}}});
  return t;
}

}  // namespace

TEST_CASE("trajectory CSV round trip") {
  const std::string text =
      "time,vehicle_id,x,y,speed,length\n"
      "0,a,0,0,20,4.645\n"
      "0,b,50,3.5,22.5,4.645\n"
      "0.1,a,2,0,20,4.645\n"
      "0.1,b,52.25,3.5,22.5,4.645\n";
  const MobilityTrace t = parse(text);
  REQUIRE(t.vehicles.size() == 2);
  CHECK(t.at("b").samples[1].x == 52.25);
  std::ostringstream out;
  write_trajectories(t, out);
  CHECK(out.str() == text);
}

TEST_CASE("trajectory CSV errors carry line numbers") {
  try {
    parse("time,vehicle,x,y,speed,length\n");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.line() == 1);
  }
  try {
    parse("time,vehicle_id,x,y,speed,length\n0,a,0,0,1,4\n0,a,1,0,1,4\n");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse("time,vehicle_id,x,y,speed,length\n0,a,zero,0,1,4\n"), FormatError);
  CHECK_THROWS_AS(parse("time,vehicle_id,x,y,speed,length\n0,a,0,0,1,-4\n"), FormatError);
  CHECK_THROWS_AS(parse("time,vehicle_id,x,y,speed,length\n0,a,0,0,1\n"), FormatError);
  CHECK_THROWS_AS(parse(""), FormatError);
}

TEST_CASE("role assignment checks ids") {
  MobilityTrace t = static_scene({{"a", 0, 0}, {"b", 10, 0}, {"c", 5, 3.5}});
  CHECK_NOTHROW(assign_roles(t, {"a", "b", {"c"}}));
  CHECK_THROWS_AS(assign_roles(t, {"a", "zz", {}}), ConfigError);
  CHECK_THROWS_AS(assign_roles(t, {"a", "a", {}}), ConfigError);
  CHECK_THROWS_AS(assign_roles(t, {"a", "b", {"b"}}), ConfigError);
  CHECK_THROWS_AS(t.at("nope"), std::out_of_range);
}

TEST_CASE("state interpolation is linear and bounded") {
  const MobilityTrace t = parse("time,vehicle_id,x,y,speed,length\n0,a,0,0,10,4\n1,a,10,1,12,4\n");
  const auto s = MobilityTrace::state_at(t.at("a"), 0.25);
  REQUIRE(s);
  CHECK(s->x == doctest::Approx(2.5));
  CHECK(s->y == doctest::Approx(0.25));
  CHECK(s->speed == doctest::Approx(10.5));
  CHECK_FALSE(MobilityTrace::state_at(t.at("a"), 1.5));
  CHECK_FALSE(MobilityTrace::state_at(t.at("a"), -0.1));
}

TEST_CASE("synthetic highway has Poisson counts and constant speeds") {
  HighwaySpec spec;
  spec.density_per_km = 10;
  spec.lanes = 3;
  spec.length_m = 1000;
  Rng rng(1);
  double total = 0.0;
  const int runs = 400;
  for (int r = 0; r < runs; ++r) {
    const MobilityTrace t = synth_highway(spec, rng);
    total += double(t.vehicles.size());
    for (const auto& v : t.vehicles) {
      const double speed = v.samples.front().speed;
      CHECK(speed >= spec.speed_kmh / 3.6 * 0.9 - 1e-9);
      CHECK(speed <= spec.speed_kmh / 3.6 * 1.1 + 1e-9);
      const auto& last = v.samples.back();
      CHECK(last.x - v.samples.front().x == doctest::Approx(speed * last.time));
    }
  }
  // mean 30 vehicles; std of the average = sqrt(30 / 400) ~ 0.27
  CHECK(total / runs == doctest::Approx(30.0).epsilon(0.04));
}

TEST_CASE("segment / rectangle intersection") {
  const Rect r{0, 2, 0, 1};
  CHECK(segment_intersects_rect({-1, 0.5}, {3, 0.5}, r));
  CHECK(segment_intersects_rect({1, -1}, {1, 2}, r));
  CHECK_FALSE(segment_intersects_rect({-1, 2}, {3, 2}, r));
  CHECK_FALSE(segment_intersects_rect({-1, -1}, {-0.5, 3}, r));
  CHECK(segment_intersects_rect({0.5, 0.5}, {0.6, 0.6}, r));  // fully inside
  CHECK_FALSE(segment_intersects_rect({3, 0}, {4, 3}, r));
}

TEST_CASE("clear line of sight between two vehicles") {
  const MobilityTrace t = static_scene({{"tx", 0, 0}, {"rx", 40, 0}});
  const PathSet ps = raytrace_paths(t, "tx", "rx", 0.0);
  REQUIRE(ps.paths.size() == 1);
  const Path& los = ps.paths[0];
  CHECK(los.c_bl == 1);
  CHECK(los.tau == 0.0);
  CHECK(los.phi_d == doctest::Approx(0.0));   // along +x
  CHECK(los.phi_a == doctest::Approx(pi));    // arriving from -x
  CHECK(std::abs(los.alpha) == doctest::Approx(50.0 / 36.0));  // facing ends are 36 m apart
}

TEST_CASE("a vehicle in between blocks the direct ray") {
  const MobilityTrace t = static_scene({{"tx", 0, 0}, {"rx", 40, 0}, {"truck", 20, 0}});
  const PathSet ps = raytrace_paths(t, "tx", "rx", 0.0);
  CHECK(ps.paths[0].c_bl == 0);
}

TEST_CASE("side reflection follows the image source") {
  // Reflector in the next lane; its lower surface sits at y = 3.5 - 0.9.
  const MobilityTrace t = static_scene({{"tx", 0, 0}, {"rx", 40, 0}, {"bus", 20, 3.5}});
  RayTraceParams rp;
  const PathSet ps = raytrace_paths(t, "tx", "rx", 0.0, rp);
  REQUIRE(ps.paths.size() == 2);
  const Path& refl = ps.paths[1];
  const double ys = 3.5 - 0.9;
  const double len = std::hypot(36.0, 2 * ys);
  CHECK(refl.c_bl == 1);
  CHECK(std::abs(refl.alpha) == doctest::Approx(rp.ref_distance / len));
  CHECK(refl.tau == doctest::Approx((len - 36.0) / kSpeedOfLight));
  // equal angles of incidence and reflection
  CHECK(refl.phi_d == doctest::Approx(std::atan2(ys, 18.0)));
  CHECK(refl.phi_a == doctest::Approx(pi - std::atan2(ys, 18.0)));
}

TEST_CASE("reflections off a surface too short to reach are dropped") {
  const MobilityTrace t = static_scene({{"tx", 0, 0}, {"rx", 40, 0}, {"car", 2, 3.5}});
  CHECK(raytrace_paths(t, "tx", "rx", 0.0).paths.size() == 1);
}

TEST_CASE("automatic roles pick distinct vehicles") {
  HighwaySpec spec;
  Rng rng(3);
  const MobilityTrace t = synth_highway(spec, rng);
  const TraceRoles roles = auto_roles(t, 2, 40.0, 500.0);
  CHECK(roles.tx != roles.rx);
  REQUIRE(roles.relays.size() == 2);
  CHECK(roles.relays[0] != roles.relays[1]);
  MobilityTrace tiny = static_scene({{"a", 0, 0}, {"b", 1, 0}});
  CHECK_THROWS_AS(auto_roles(tiny, 2, 40.0, 0.0), ConfigError);
}
