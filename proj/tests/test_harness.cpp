#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "relaybeam/harness.hpp"

using namespace relaybeam;

namespace {

const char* kSmall = R"(# tiny
n_tx = 8
n_rx = 8
relay_antennas = 8
codebook_size = 8
slots = 30
seeds = 2
grid_seeds = 2
grid_points = 3
calibration_seeds = 4
policies = genie, drl, threshold, direct
sweep = snr_db: 0, 10
)";

}  // namespace

TEST_CASE("config parsing") {
  const auto cfg = parse_config_string(kSmall);
  CHECK(cfg.env.channel.n_tx == 8);
  CHECK(cfg.env.codebook_relay == 8);
  CHECK(cfg.slots == 30);
  CHECK(cfg.n_seeds == 2);
  CHECK(cfg.policies.size() == 4);
  CHECK(cfg.axis.name == "snr_db");
  CHECK(cfg.axis.values == std::vector<double>{0.0, 10.0});

  const auto def = parse_config_string("snr_db = 5\n");
  CHECK(def.axis.name == "snr_db");
  CHECK(def.axis.values == std::vector<double>{5.0});
  CHECK(def.env.channel.sigma_a == 0.5);
  CHECK(def.ddpg.gamma == 0.99);
}

TEST_CASE("config errors carry line numbers") {
  auto line_of = [](const std::string& text) -> std::size_t {
    try {
      parse_config_string(text);
    } catch (const FormatError& e) {
      return e.line();
    }
    return 0;
  };
  CHECK(line_of("slots = 10\n\nbogus_key = 1\n") == 3);
  CHECK(line_of("slots = ten\n") == 1);
  CHECK(line_of("# c\nslots 10\n") == 2);
  CHECK(line_of("sweep = snr_db: 0\nsweep = snr_db: 1\n") == 2);
  CHECK(line_of("q_b = 2\n") == 1);
  CHECK(line_of("policies = genie, oracle\n") == 1);
  CHECK_THROWS_AS(parse_config_string("slots = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string("sweep = policies: 1\n"), ConfigError);
}

TEST_CASE("blocking probability maps onto the chain") {
  const auto cfg = parse_config_string("q_b = 0.2\n");
  CHECK(cfg.env.channel.p_ub == 0.2);
  CHECK(cfg.env.channel.p_bu == doctest::Approx(0.8));
}

TEST_CASE("sweeping one spread resets the other") {
  auto cfg = parse_config_string("sigma_a = 0.1\nsigma_p = 0.3\n");
  const auto p = apply_axis(cfg, "sigma_p", 0.02);
  CHECK(p.env.channel.sigma_p == 0.02);
  CHECK(p.env.channel.sigma_a == 0.5);
  const auto a = apply_axis(cfg, "sigma_a", 0.2);
  CHECK(a.env.channel.sigma_a == 0.2);
  CHECK(a.env.channel.sigma_p == 0.005);
  const auto s = apply_axis(cfg, "snr_db", 7);
  CHECK(s.env.snr_db == 7.0);
  CHECK(s.env.channel.sigma_a == 0.1);
}

TEST_CASE("dump and reparse give the same config") {
  const auto cfg = parse_config_string(kSmall);
  const auto text = dump_config(cfg);
  const auto back = parse_config_string(text);
  CHECK(dump_config(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_hash(parse_config_string("slots = 31\n")) != config_hash(parse_config_string("slots = 30\n")));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("mean and sample std") {
  const auto [m1, s1] = mean_std({2.5});
  CHECK(m1 == 2.5);
  CHECK(s1 == 0.0);
  const auto [m, s] = mean_std({1.0, 2.0, 3.0, 4.0});
  CHECK(m == 2.5);
  CHECK(s == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("sweep table shape, csv round trip and determinism") {
  const auto cfg = parse_config_string(kSmall);
  const auto rep = run_sweep(cfg);
  CHECK(rep.failures.empty());
  CHECK(rep.table.rows.size() == 8);
  CHECK(rep.points.size() == 2);
  for (const auto& r : rep.table.rows) {
    CHECK(r.n_seeds == 2);
    CHECK(r.mean_se >= 0.0);
  }
  for (double v : {0.0, 10.0}) {
    const auto* g = rep.table.find(v, "genie");
    REQUIRE(g != nullptr);
    for (const char* p : {"drl", "threshold", "direct"}) CHECK(rep.table.find(v, p)->mean_se <= g->mean_se + 1e-12);
  }

  const std::string csv = emit_csv_string(rep.table);
  CHECK(csv.rfind("sweep_value,policy,mean_se,std_se,n_seeds\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 9);
  std::istringstream is(csv);
  const auto back = parse_csv(is);
  CHECK(back.rows == rep.table.rows);

  CHECK(emit_csv_string(run_sweep(cfg).table) == csv);
}

TEST_CASE("one seed gives zero spread") {
  auto cfg = parse_config_string(kSmall);
  cfg.n_seeds = 1;
  cfg.axis.values = {0.0};
  cfg.policies = {"genie", "direct"};
  const auto rep = run_sweep(cfg);
  CHECK(rep.table.rows.size() == 2);
  for (const auto& r : rep.table.rows) CHECK(r.std_se == 0.0);
}

TEST_CASE("csv parser rejects malformed rows") {
  std::istringstream bad_header("a,b\n");
  CHECK_THROWS_AS(parse_csv(bad_header), FormatError);
  std::istringstream bad_row("sweep_value,policy,mean_se,std_se,n_seeds\n0,genie,x,0,1\n");
  CHECK_THROWS_AS(parse_csv(bad_row), FormatError);
}

TEST_CASE("plot data has one block per policy") {
  ResultTable t;
  t.rows = {{0, "genie", 1, 0.1, 3}, {5, "genie", 2, 0.1, 3}, {0, "direct", 0.5, 0.1, 3}};
  std::ostringstream os;
  emit_plotdata(t, os, "abc");
  const auto s = os.str();
  CHECK(s.find("abc") != std::string::npos);
  CHECK(s.find("genie") != std::string::npos);
  CHECK(s.find("direct") != std::string::npos);
  CHECK(s.find("\n\n\n") != std::string::npos);
}

TEST_CASE("worker count honours the environment") {
  setenv("RELAYBEAM_THREADS", "3", 1);
  CHECK(worker_count() == 3);
  setenv("RELAYBEAM_THREADS", "junk", 1);
  CHECK(worker_count() >= 1);
  unsetenv("RELAYBEAM_THREADS");
}
