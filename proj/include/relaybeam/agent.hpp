// SPDX-License-Identifier: Apache-2.0
//
// DDPG threshold learner. The environment's heuristic consumes the two
// thresholds; the agent picks them once per slot from the encoded network
// state.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <random>
#include <utility>
#include <vector>

#include "relaybeam/env.hpp"
#include "relaybeam/errors.hpp"
#include "relaybeam/nn.hpp"
#include "relaybeam/random.hpp"

namespace relaybeam {

struct Transition {
  Vector s;
  Vector a;  // raw action in [-1, 1]^2
  double r = 0.0;
  Vector s_next;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
    data_.reserve(std::min<std::size_t>(capacity, 4096));
  }

  std::size_t size() const { return data_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Transition& operator[](std::size_t i) const { return data_.at((head_ + i) % data_.size()); }

  // Oldest entry is overwritten once full.
  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
      return;
    }
    data_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }

  // Uniform with replacement.
  std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const {
    if (data_.empty()) throw std::invalid_argument("ReplayBuffer: sampling from an empty buffer");
    std::uniform_int_distribution<std::size_t> u(0, data_.size() - 1);
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = u(rng);
    return idx;
  }

  std::vector<Transition> sample(std::size_t n, Rng& rng) const {
    std::vector<Transition> out;
    out.reserve(n);
    for (auto i : sample_indices(n, rng)) out.push_back(data_[i]);
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
};

class OuNoise {
 public:
  OuNoise(int dim, double theta, double sigma, double dt = 1.0)
      : x_(Vector::Zero(dim)), theta_(theta), sigma_(sigma), dt_(dt) {}

  const Vector& state() const { return x_; }
  void reset() { x_.setZero(); }
  void set_sigma(double s) { sigma_ = s; }
  double sigma() const { return sigma_; }

  const Vector& sample(Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (Eigen::Index i = 0; i < x_.size(); ++i) {
      const double w = sigma_ > 0.0 ? sigma_ * std::sqrt(dt_) * n(rng) : 0.0;
      x_[i] += theta_ * (0.0 - x_[i]) * dt_ + w;
    }
    return x_;
  }

 private:
  Vector x_;
  double theta_;
  double sigma_;
  double dt_;
};

struct ActionRange {
  double lo_db = -20.0;
  double hi_db = 20.0;
};

inline double to_db_value(double raw, const ActionRange& r) {
  const double a = std::clamp(raw, -1.0, 1.0);
  return r.lo_db + (a + 1.0) / 2.0 * (r.hi_db - r.lo_db);
}

inline ThresholdAction map_action(double a1, double a2, const ActionRange& r = {}) {
  const double t1 = std::pow(10.0, to_db_value(a1, r) / 10.0);
  const double t2 = std::pow(10.0, to_db_value(a2, r) / 10.0);
  return {t1, t1 + t2};
}

struct DdpgConfig {
  double gamma = 0.99;
  double eta = 0.005;
  int batch = 32;
  int buffer_capacity = 10000;
  double ou_theta = 0.15;
  double ou_sigma = 0.2;
  double ou_dt = 1.0;
  bool noise_decay = false;  // linear to zero over the run
  ActionRange range;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int hidden = 64;

  void validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("ddpg.gamma must lie in [0, 1]");
    if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("ddpg.eta must lie in [0, 1]");
    if (batch < 1 || buffer_capacity < 1 || hidden < 1) throw ConfigError("ddpg sizes must be >= 1");
    if (!(range.hi_db > range.lo_db)) throw ConfigError("ddpg action range must have hi > lo");
    if (!(actor_lr >= 0.0) || !(critic_lr >= 0.0)) throw ConfigError("learning rates must be >= 0");
  }
};

inline Mlp make_actor(int state_dim, int hidden, Rng& rng) {
  return Mlp::make({state_dim, hidden, hidden, 2}, {Activation::Tanh, Activation::Tanh, Activation::Tanh}, rng, 3e-3);
}

inline Mlp make_critic(int state_dim, int hidden, Rng& rng) {
  return Mlp::make({state_dim + 2, hidden, hidden, 1}, {Activation::Tanh, Activation::Tanh, Activation::Linear}, rng);
}

struct SelectedAction {
  Vector raw;
  ThresholdAction thresholds;
};

inline SelectedAction select_action(const Mlp& actor, const Vector& s, OuNoise& noise, Rng& rng,
                                    const ActionRange& range = {}) {
  Vector raw = actor.forward_one(s) + noise.sample(rng);
  raw = raw.cwiseMax(-1.0).cwiseMin(1.0);
  return {raw, map_action(raw[0], raw[1], range)};
}

inline Matrix stack_states(const std::vector<Transition>& batch, bool next) {
  const auto dim = (next ? batch.front().s_next : batch.front().s).size();
  Matrix m(dim, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = next ? batch[i].s_next : batch[i].s;
  return m;
}

inline Matrix join_state_action(const Matrix& s, const Matrix& a) {
  Matrix x(s.rows() + a.rows(), s.cols());
  x.topRows(s.rows()) = s;
  x.bottomRows(a.rows()) = a;
  return x;
}

// TD targets r + gamma * Q_tar(s', mu_tar(s')).
inline Vector td_targets(const Mlp& critic_tar, const Mlp& actor_tar, const std::vector<Transition>& batch,
                         double gamma) {
  const Matrix s_next = stack_states(batch, true);
  const Matrix q_next = critic_tar.forward(join_state_action(s_next, actor_tar.forward(s_next)));
  Vector y(static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    y[static_cast<Eigen::Index>(i)] = batch[i].r + gamma * q_next(0, static_cast<Eigen::Index>(i));
  return y;
}

inline Matrix stack_actions(const std::vector<Transition>& batch) {
  Matrix a(2, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) a.col(static_cast<Eigen::Index>(i)) = batch[i].a;
  return a;
}

inline double critic_loss(const Mlp& critic_on, const Mlp& critic_tar, const Mlp& actor_tar,
                          const std::vector<Transition>& batch, double gamma) {
  if (batch.empty()) throw std::invalid_argument("critic_loss: empty batch");
  const Vector y = td_targets(critic_tar, actor_tar, batch, gamma);
  const Matrix q = critic_on.forward(join_state_action(stack_states(batch, false), stack_actions(batch)));
  return (y - q.row(0).transpose()).squaredNorm() / static_cast<double>(batch.size());
}

// One optimizer step on the mean squared TD error; returns the loss before
// the step.
inline double critic_update(Mlp& critic_on, Adam& opt, const Mlp& critic_tar, const Mlp& actor_tar,
                            const std::vector<Transition>& batch, double gamma) {
  if (batch.empty()) throw std::invalid_argument("critic_update: empty batch");
  const Vector y = td_targets(critic_tar, actor_tar, batch, gamma);
  MlpCache cache;
  const Matrix q = critic_on.forward(join_state_action(stack_states(batch, false), stack_actions(batch)), &cache);
  const double n = static_cast<double>(batch.size());
  const Vector err = q.row(0).transpose() - y;
  const double loss = err.squaredNorm() / n;
  if (!std::isfinite(loss)) throw TrainingDivergence("critic loss is not finite");
  const Matrix dq = (2.0 / n) * err.transpose();
  opt.step(critic_on, critic_on.backward(cache, dq));
  return loss;
}

// Gradient of -(1/B) sum Q(s, mu(s)) with respect to the actor parameters.
inline GradientSet actor_gradient(const Mlp& actor_on, const Mlp& critic_on, const Matrix& states) {
  if (states.cols() == 0) throw std::invalid_argument("actor_gradient: empty batch");
  MlpCache a_cache;
  const Matrix a = actor_on.forward(states, &a_cache);
  MlpCache q_cache;
  const Matrix q = critic_on.forward(join_state_action(states, a), &q_cache);
  const double n = static_cast<double>(states.cols());
  Matrix dx;
  critic_on.backward(q_cache, Matrix::Constant(1, q.cols(), -1.0 / n), &dx);
  return actor_on.backward(a_cache, dx.bottomRows(a.rows()));
}

inline double mean_q(const Mlp& actor_on, const Mlp& critic_on, const Matrix& states) {
  const Matrix q = critic_on.forward(join_state_action(states, actor_on.forward(states)));
  return q.mean();
}

inline void actor_update(Mlp& actor_on, Adam& opt, const Mlp& critic_on, const Matrix& states) {
  opt.step(actor_on, actor_gradient(actor_on, critic_on, states));
}

struct TrainLogRow {
  int slot = 0;
  double reward = 0.0;
  double loss = std::numeric_limits<double>::quiet_NaN();  // NaN before updates start
  double tau_relay = 0.0;
  double tau_mode = 0.0;
  int n = 0;
  int n_mode = 0;
  double genie = 0.0;
};

struct TrainResult {
  std::vector<double> rewards;
  std::vector<TrainLogRow> log;
  Mlp actor;
  Mlp critic;
};

inline double converged_metric(const std::vector<double>& rewards, std::size_t tail = 20) {
  if (rewards.empty()) return 0.0;
  const std::size_t n = std::min(tail, rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size() - n; i < rewards.size(); ++i) acc += rewards[i];
  return acc / static_cast<double>(n);
}

class DdpgAgent {
 public:
  DdpgAgent(int state_dim, const DdpgConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        init_rng_(make_stream(seed, 1)),
        noise_rng_(make_stream(seed, 3)),
        replay_rng_(make_stream(seed, 4)),
        actor_(make_actor(state_dim, cfg.hidden, init_rng_)),
        critic_(make_critic(state_dim, cfg.hidden, init_rng_)),
        actor_tar_(actor_),
        critic_tar_(critic_),
        actor_opt_(actor_, cfg.actor_lr),
        critic_opt_(critic_, cfg.critic_lr),
        noise_(2, cfg.ou_theta, cfg.ou_sigma, cfg.ou_dt),
        buffer_(static_cast<std::size_t>(cfg.buffer_capacity)) {
    cfg_.validate();
  }

  SelectedAction act(const Vector& s) { return select_action(actor_, s, noise_, noise_rng_, cfg_.range); }

  // Stores the transition and runs one update when the buffer holds a batch.
  // Returns the critic loss, NaN when no update ran.
  double observe(Transition t) {
    buffer_.push(std::move(t));
    if (buffer_.size() < static_cast<std::size_t>(cfg_.batch)) return std::numeric_limits<double>::quiet_NaN();
    const auto batch = buffer_.sample(static_cast<std::size_t>(cfg_.batch), replay_rng_);
    const double loss = critic_update(critic_, critic_opt_, critic_tar_, actor_tar_, batch, cfg_.gamma);
    actor_update(actor_, actor_opt_, critic_, stack_states(batch, false));
    soft_update(critic_tar_, critic_, cfg_.eta);
    soft_update(actor_tar_, actor_, cfg_.eta);
    return loss;
  }

  void set_noise_sigma(double s) { noise_.set_sigma(s); }

  const Mlp& actor() const { return actor_; }
  const Mlp& critic() const { return critic_; }
  const Mlp& actor_target() const { return actor_tar_; }
  const Mlp& critic_target() const { return critic_tar_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const DdpgConfig& config() const { return cfg_; }

 private:
  DdpgConfig cfg_;
  Rng init_rng_;
  Rng noise_rng_;
  Rng replay_rng_;
  Mlp actor_;
  Mlp critic_;
  Mlp actor_tar_;
  Mlp critic_tar_;
  Adam actor_opt_;
  Adam critic_opt_;
  OuNoise noise_;
  ReplayBuffer buffer_;
};

inline TrainResult train(const EnvConfig& env_cfg, const DdpgConfig& cfg, std::uint64_t seed, int slots) {
  if (slots < 1) throw std::invalid_argument("train: slots must be >= 1");
  RelayEnv env(env_cfg);
  env.reset(seed);
  DdpgAgent agent(env.state_dim(), cfg, seed);
  TrainResult out;
  out.rewards.reserve(static_cast<std::size_t>(slots));
  out.log.reserve(static_cast<std::size_t>(slots));
  Vector s = Eigen::Map<const Vector>(env.encode_state().data(), env.state_dim());
  for (int m = 0; m < slots; ++m) {
    if (cfg.noise_decay) agent.set_noise_sigma(cfg.ou_sigma * (1.0 - static_cast<double>(m) / slots));
    const SelectedAction act = agent.act(s);
    const StepInfo info = env.step(act.thresholds);
    const auto next = env.encode_state();
    Vector s_next = Eigen::Map<const Vector>(next.data(), static_cast<Eigen::Index>(next.size()));
    const double loss = agent.observe({s, act.raw, info.reward, s_next});
    out.rewards.push_back(info.reward);
    out.log.push_back({m, info.reward, loss, act.thresholds.tau_relay, act.thresholds.tau_mode, info.relay,
                       info.n_mode, info.genie});
    s = std::move(s_next);
  }
  out.actor = agent.actor();
  out.critic = agent.critic();
  return out;
}

inline void write_train_log(const std::vector<TrainLogRow>& log, std::ostream& out) {
  out.imbue(std::locale::classic());
  out << "slot,reward,loss,tau_relay,tau_mode,n,n_mode\n";
  out << std::setprecision(10);
  for (const auto& r : log)
    out << r.slot << ',' << r.reward << ',' << r.loss << ',' << r.tau_relay << ',' << r.tau_mode << ',' << r.n << ','
        << r.n_mode << '\n';
}

}  // namespace relaybeam
