// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "relaybeam/relaybeam.hpp"

namespace fs = std::filesystem;
using namespace relaybeam;

namespace {

ExperimentConfig load(const std::string& path, int seeds, const std::string& policies) {
  ExperimentConfig cfg = parse_config_file(path);
  if (seeds > 0) cfg.n_seeds = seeds;
  if (!policies.empty()) find_key("policies").set(cfg, policies);
  validate(cfg);
  return cfg;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

int cmd_run(const std::string& config, int seeds, const std::string& policies, const std::string& out_dir) {
  const ExperimentConfig cfg = load(config, seeds, policies);
  fs::create_directories(out_dir);
  const SweepReport rep = run_sweep(cfg);
  const std::string hash = config_hash(cfg);
  emit_csv(rep.table, (fs::path(out_dir) / "results.csv").string());
  emit_plotdata(rep.table, (fs::path(out_dir) / "results.dat").string(), hash);
  {
    auto m = open_out(fs::path(out_dir) / "manifest.txt");
    emit_manifest(cfg, rep, m);
  }
  for (const auto& p : rep.points) {
    if (p.threshold) {
      auto t = open_out(fs::path(out_dir) / ("thresholds_" + detail::fmt(p.sweep_value) + ".csv"));
      write_threshold_table(*p.threshold, t);
    }
  }
  emit_csv(rep.table, std::cout);
  for (const auto& f : rep.failures) std::cerr << "failed run " << f << '\n';
  std::cerr << "config " << hash << ", results in " << out_dir << '\n';
  return 0;
}

int cmd_grid(const std::string& config, const std::string& out_dir, bool direct) {
  const ExperimentConfig cfg = load(config, 0, "");
  fs::create_directories(out_dir);
  for (double v : cfg.axis.values) {
    const ExperimentConfig pc = apply_axis(cfg, cfg.axis.name, v);
    double tau_max = estimate_tau_max(pc.env, pc.calib_seeds(), pc.slots);
    if (!(tau_max > 0.0)) tau_max = 1.0;
    const GridResult g = grid_search_thresholds(pc.env, {tau_max, pc.grid_points}, pc.search_seeds(), pc.slots, direct);
    const fs::path path = fs::path(out_dir) / ((direct ? "direct_" : "thresholds_") + detail::fmt(v) + ".csv");
    auto t = open_out(path);
    write_threshold_table(g, t);
    std::cout << cfg.axis.name << '=' << detail::fmt(v) << " tau_max=" << detail::fmt(tau_max)
              << " tau_relay=" << detail::fmt(g.best.tau_relay) << " tau_mode=" << detail::fmt(g.best.tau_mode)
              << " mean_reward=" << detail::fmt(g.best_reward) << " -> " << path.string() << '\n';
  }
  return 0;
}

int cmd_train(const std::string& config, std::uint64_t seed, const std::string& out_dir) {
  const ExperimentConfig cfg = load(config, 0, "");
  const ExperimentConfig pc = apply_axis(cfg, cfg.axis.name, cfg.axis.values.front());
  fs::create_directories(out_dir);
  const TrainResult r = train(pc.env, pc.ddpg, seed, pc.slots);
  auto log = open_out(fs::path(out_dir) / "train_log.csv");
  write_train_log(r.log, log);
  save_checkpoint(r.actor, (fs::path(out_dir) / "actor.txt").string());
  save_checkpoint(r.critic, (fs::path(out_dir) / "critic.txt").string());
  std::cout << "converged (last 20 slots) = " << detail::fmt(converged_metric(r.rewards)) << '\n';
  return 0;
}

int cmd_gradcheck(int nets, std::uint64_t seed) {
  const int state_dim = 3 * (EnvConfig{}.n_relays + 1);
  const DdpgConfig d;
  double worst = 0.0;
  for (int i = 0; i < nets; ++i) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(i));
    const Mlp actor = make_actor(state_dim, d.hidden, rng);
    const Mlp critic = make_critic(state_dim, d.hidden, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (const Mlp* net : {&actor, &critic}) {
      Matrix x(net->input_dim(), 4);
      Matrix c(net->output_dim(), 4);
      for (Eigen::Index k = 0; k < x.size(); ++k) x.data()[k] = u(rng);
      for (Eigen::Index k = 0; k < c.size(); ++k) c.data()[k] = u(rng);
      worst = std::max(worst, gradient_check(*net, x, c).max_rel_error);
    }
  }
  const bool ok = worst <= 1e-4;
  std::cout << (ok ? "PASS" : "FAIL") << " gradcheck: " << nets << " actor/critic pairs, max relative error " << worst
            << " (limit 1e-4)\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"relaybeam: relay selection and beam management simulator"};
  app.require_subcommand(1);

  std::string config;
  int seeds = 0;
  std::string policies;
  std::string out_dir = "out";
  auto* run = app.add_subcommand("run", "Run a sweep and write results.csv");
  run->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("--seeds", seeds, "number of evaluation seeds");
  run->add_option("--policies", policies, "comma list of genie,drl,threshold,direct,direct_threshold");
  run->add_option("--out", out_dir, "output directory");

  bool direct = false;
  auto* grid = app.add_subcommand("grid", "Grid-search fixed thresholds for each sweep value");
  grid->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  grid->add_option("--out", out_dir, "output directory");
  grid->add_flag("--direct", direct, "search the direct-link-only heuristic");

  std::uint64_t seed = 1;
  auto* tr = app.add_subcommand("train", "Train one agent and write its log and checkpoints");
  tr->add_option("--config", config, "config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--seed", seed, "seed");
  tr->add_option("--out", out_dir, "output directory");

  int nets = 20;
  auto* gc = app.add_subcommand("gradcheck", "Check network gradients against finite differences");
  gc->add_option("--nets", nets, "number of random networks");
  gc->add_option("--seed", seed, "seed");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, seeds, policies, out_dir);
    if (*grid) return cmd_grid(config, out_dir, direct);
    if (*tr) return cmd_train(config, seed, out_dir);
    if (*gc) return cmd_gradcheck(nets, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
