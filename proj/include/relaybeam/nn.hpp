// SPDX-License-Identifier: Apache-2.0
//
// Small dense networks for the actor and critic. Batches are column-major:
// one sample per column.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "relaybeam/errors.hpp"
#include "relaybeam/random.hpp"

namespace relaybeam {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { Linear, Tanh, Relu };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    default: return "linear";
  }
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  if (s == "linear") return Activation::Linear;
  throw std::invalid_argument("unknown activation: " + s);
}

struct Layer {
  Matrix w;  // out x in
  Vector b;
  Activation act = Activation::Linear;
};

struct MlpCache {
  std::vector<Matrix> inputs;  // input of each layer
  std::vector<Matrix> pre;     // pre-activation of each layer
  std::vector<Matrix> post;    // output of each layer
};

struct LayerGrad {
  Matrix w;
  Vector b;
};

struct GradientSet {
  std::vector<LayerGrad> layers;

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return true;
  }
};

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<Layer> layers) : layers_(std::move(layers)) { check_chain(); }

  // dims = {in, h1, ..., out}; acts has one tag per layer. Weights uniform in
  // +-1/sqrt(fan_in); the last layer uses +-final_scale when it is positive.
  static Mlp make(const std::vector<int>& dims, const std::vector<Activation>& acts, Rng& rng,
                  double final_scale = 0.0) {
    if (dims.size() < 2 || acts.size() != dims.size() - 1)
      throw std::invalid_argument("Mlp::make: need one activation per layer");
    std::vector<Layer> layers;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      if (dims[l] < 1 || dims[l + 1] < 1) throw std::invalid_argument("Mlp::make: dimensions must be >= 1");
      double bound = 1.0 / std::sqrt(static_cast<double>(dims[l]));
      if (l + 2 == dims.size() && final_scale > 0.0) bound = final_scale;
      std::uniform_real_distribution<double> u(-bound, bound);
      Layer layer;
      layer.w.resize(dims[l + 1], dims[l]);
      layer.b.resize(dims[l + 1]);
      for (Eigen::Index i = 0; i < layer.w.size(); ++i) layer.w.data()[i] = u(rng);
      for (Eigen::Index i = 0; i < layer.b.size(); ++i) layer.b[i] = u(rng);
      layer.act = acts[l];
      layers.push_back(std::move(layer));
    }
    return Mlp(std::move(layers));
  }

  int input_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.front().w.cols()); }
  int output_dim() const { return layers_.empty() ? 0 : static_cast<int>(layers_.back().w.rows()); }
  std::size_t n_layers() const { return layers_.size(); }
  const std::vector<Layer>& layers() const { return layers_; }
  std::vector<Layer>& layers() { return layers_; }

  std::size_t n_params() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.w.size() + l.b.size());
    return n;
  }

  Matrix forward(const Matrix& x, MlpCache* cache = nullptr) const {
    if (x.rows() != input_dim()) throw std::invalid_argument("Mlp::forward: input dimension mismatch");
    if (cache) {
      cache->inputs.clear();
      cache->pre.clear();
      cache->post.clear();
    }
    Matrix h = x;
    for (const auto& l : layers_) {
      Matrix z = l.w * h;
      z.colwise() += l.b;
      Matrix a = activate(z, l.act);
      if (cache) {
        cache->inputs.push_back(h);
        cache->pre.push_back(z);
        cache->post.push_back(a);
      }
      h = std::move(a);
    }
    return h;
  }

  Vector forward_one(const Vector& x) const { return forward(Matrix(x)).col(0); }

  // Gradients are summed over the batch columns; dx has the input's shape.
  GradientSet backward(const MlpCache& cache, const Matrix& dy, Matrix* dx = nullptr) const {
    if (cache.pre.size() != layers_.size()) throw std::invalid_argument("Mlp::backward: cache does not match network");
    if (dy.rows() != output_dim() || dy.cols() != cache.post.back().cols())
      throw std::invalid_argument("Mlp::backward: upstream gradient shape mismatch");
    GradientSet g;
    g.layers.resize(layers_.size());
    Matrix delta = dy;
    for (std::size_t r = layers_.size(); r-- > 0;) {
      const auto& l = layers_[r];
      delta = delta.cwiseProduct(derivative(cache.pre[r], cache.post[r], l.act));
      g.layers[r].w = delta * cache.inputs[r].transpose();
      g.layers[r].b = delta.rowwise().sum();
      if (r > 0 || dx) delta = l.w.transpose() * delta;
    }
    if (dx) *dx = std::move(delta);
    return g;
  }

  GradientSet zero_gradients() const {
    GradientSet g;
    for (const auto& l : layers_) g.layers.push_back({Matrix::Zero(l.w.rows(), l.w.cols()), Vector::Zero(l.b.size())});
    return g;
  }

  bool same_shape(const Mlp& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].w.rows() != o.layers_[i].w.rows() || layers_[i].w.cols() != o.layers_[i].w.cols()) return false;
      if (layers_[i].act != o.layers_[i].act) return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.w.allFinite() || !l.b.allFinite()) return false;
    return true;
  }

  // Flat parameter access, layer by layer, weights column-major then bias.
  double& param(std::size_t idx) {
    for (auto& l : layers_) {
      const auto nw = static_cast<std::size_t>(l.w.size());
      if (idx < nw) return l.w.data()[idx];
      idx -= nw;
      const auto nb = static_cast<std::size_t>(l.b.size());
      if (idx < nb) return l.b[static_cast<Eigen::Index>(idx)];
      idx -= nb;
    }
    throw std::out_of_range("Mlp::param: index out of range");
  }

 private:
  static Matrix activate(const Matrix& z, Activation a) {
    switch (a) {
      case Activation::Tanh: return z.array().tanh().matrix();
      case Activation::Relu: return z.cwiseMax(0.0);
      default: return z;
    }
  }

  static Matrix derivative(const Matrix& z, const Matrix& y, Activation a) {
    switch (a) {
      case Activation::Tanh: return (1.0 - y.array().square()).matrix();
      case Activation::Relu: return (z.array() > 0.0).cast<double>().matrix();
      default: return Matrix::Ones(z.rows(), z.cols());
    }
  }

  void check_chain() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].b.size() != layers_[i].w.rows()) throw std::invalid_argument("Mlp: bias size mismatch");
      if (i > 0 && layers_[i].w.cols() != layers_[i - 1].w.rows())
        throw std::invalid_argument("Mlp: consecutive layer dimensions do not chain");
    }
  }

  std::vector<Layer> layers_;
};

inline double grad_at(const GradientSet& g, std::size_t idx) {
  for (const auto& l : g.layers) {
    const auto nw = static_cast<std::size_t>(l.w.size());
    if (idx < nw) return l.w.data()[idx];
    idx -= nw;
    const auto nb = static_cast<std::size_t>(l.b.size());
    if (idx < nb) return l.b[static_cast<Eigen::Index>(idx)];
    idx -= nb;
  }
  throw std::out_of_range("grad_at: index out of range");
}

// ---------------------------------------------------------------------------
// Optimizer

class Adam {
 public:
  Adam() = default;
  Adam(const Mlp& net, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(net.zero_gradients()), v_(net.zero_gradients()) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  long long steps() const { return t_; }

  void step(Mlp& net, const GradientSet& g) {
    if (g.layers.size() != net.n_layers() || m_.layers.size() != net.n_layers())
      throw std::invalid_argument("Adam::step: gradient shape mismatch");
    if (!g.all_finite()) throw TrainingDivergence("non-finite gradient");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < g.layers.size(); ++i) {
      auto& layer = net.layers()[i];
      if (g.layers[i].w.rows() != layer.w.rows() || g.layers[i].w.cols() != layer.w.cols() ||
          g.layers[i].b.size() != layer.b.size())
        throw std::invalid_argument("Adam::step: gradient shape mismatch");
      update(layer.w, m_.layers[i].w, v_.layers[i].w, g.layers[i].w, c1, c2);
      update(layer.b, m_.layers[i].b, v_.layers[i].b, g.layers[i].b, c1, c2);
    }
    if (!net.all_finite()) throw TrainingDivergence("non-finite parameters after update");
  }

 private:
  template <typename P, typename G>
  void update(P& p, P& m, P& v, const G& g, double c1, double c2) const {
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    p.array() -= lr_ * (m.array() / c1) / ((v.array() / c2).sqrt() + eps_);
  }

  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  GradientSet m_;
  GradientSet v_;
};

inline void soft_update(Mlp& target, const Mlp& online, double eta) {
  if (!target.same_shape(online)) throw std::invalid_argument("soft_update: shape mismatch");
  if (!(eta >= 0.0 && eta <= 1.0)) throw std::invalid_argument("soft_update: eta must lie in [0, 1]");
  for (std::size_t i = 0; i < target.n_layers(); ++i) {
    auto& t = target.layers()[i];
    const auto& o = online.layers()[i];
    if (eta == 1.0) {
      t.w = o.w;
      t.b = o.b;
      continue;
    }
    t.w = eta * o.w + (1.0 - eta) * t.w;
    t.b = eta * o.b + (1.0 - eta) * t.b;
  }
}

inline double param_distance(const Mlp& a, const Mlp& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("param_distance: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.n_layers(); ++i) {
    acc += (a.layers()[i].w - b.layers()[i].w).squaredNorm();
    acc += (a.layers()[i].b - b.layers()[i].b).squaredNorm();
  }
  return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Finite-difference check

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
};

// Plain long-double evaluation of L = sum(c .* f(x)) with parameter `idx`
// shifted by `delta`. Used as the finite-difference reference so that the
// difference quotient is not dominated by double rounding.
inline long double reference_loss(const Mlp& net, const Matrix& x, const Matrix& c, std::size_t idx,
                                  long double delta) {
  long double total = 0.0L;
  for (Eigen::Index col = 0; col < x.cols(); ++col) {
    std::vector<long double> h(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) h[static_cast<std::size_t>(r)] = x(r, col);
    std::size_t base = 0;
    for (const auto& l : net.layers()) {
      std::vector<long double> z(static_cast<std::size_t>(l.w.rows()));
      const auto nw = static_cast<std::size_t>(l.w.size());
      for (Eigen::Index r = 0; r < l.w.rows(); ++r) {
        const std::size_t bi = base + nw + static_cast<std::size_t>(r);
        long double acc = static_cast<long double>(l.b[r]) + (bi == idx ? delta : 0.0L);
        for (Eigen::Index k = 0; k < l.w.cols(); ++k) {
          // column-major flat index, matching Mlp::param
          const std::size_t wi = base + static_cast<std::size_t>(k * l.w.rows() + r);
          acc += (static_cast<long double>(l.w(r, k)) + (wi == idx ? delta : 0.0L)) * h[static_cast<std::size_t>(k)];
        }
        if (l.act == Activation::Tanh) acc = std::tanh(acc);
        else if (l.act == Activation::Relu) acc = acc > 0.0L ? acc : 0.0L;
        z[static_cast<std::size_t>(r)] = acc;
      }
      base += nw + static_cast<std::size_t>(l.b.size());
      h = std::move(z);
    }
    for (Eigen::Index r = 0; r < c.rows(); ++r) total += static_cast<long double>(c(r, col)) * h[static_cast<std::size_t>(r)];
  }
  return total;
}

// Compares backward() against central differences of L = sum(c .* f(x)).
// Entries where both gradients are below `floor` in magnitude are skipped.
inline GradCheckResult gradient_check(const Mlp& net, const Matrix& x, const Matrix& c, double step = 1e-5,
                                      double floor = 1e-8) {
  if (x.rows() != net.input_dim() || c.rows() != net.output_dim() || c.cols() != x.cols())
    throw std::invalid_argument("gradient_check: shape mismatch");
  MlpCache cache;
  net.forward(x, &cache);
  const GradientSet g = net.backward(cache, c);
  GradCheckResult out;
  for (std::size_t i = 0; i < net.n_params(); ++i) {
    const long double up = reference_loss(net, x, c, i, step);
    const long double down = reference_loss(net, x, c, i, -step);
    const double numeric = static_cast<double>((up - down) / (2.0L * step));
    const double analytic = grad_at(g, i);
    const double scale = std::max(std::abs(numeric), std::abs(analytic));
    if (scale < floor) {
      ++out.skipped;
      continue;
    }
    ++out.checked;
    out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - analytic) / scale);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   relaybeam-mlp 1
//   layers <L>
//   layer <in> <out> <activation>
//   w <out*in values, row-major>
//   b <out values>
//   ... repeated per layer
//
// Values are written with 17 significant digits so a round trip is exact.

inline void save_checkpoint(const Mlp& net, std::ostream& out) {
  out.imbue(std::locale::classic());
  out << "relaybeam-mlp 1\nlayers " << net.n_layers() << '\n';
  out << std::setprecision(17);
  for (const auto& l : net.layers()) {
    out << "layer " << l.w.cols() << ' ' << l.w.rows() << ' ' << to_string(l.act) << "\nw";
    for (Eigen::Index r = 0; r < l.w.rows(); ++r)
      for (Eigen::Index c = 0; c < l.w.cols(); ++c) out << ' ' << l.w(r, c);
    out << "\nb";
    for (Eigen::Index r = 0; r < l.b.size(); ++r) out << ' ' << l.b[r];
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed");
}

inline Mlp load_checkpoint(std::istream& in) {
  in.imbue(std::locale::classic());
  std::string magic;
  int version = 0;
  if (!(in >> magic >> version) || magic != "relaybeam-mlp" || version != 1)
    throw FormatError("checkpoint: bad header", 1);
  std::string tag;
  std::size_t n_layers = 0;
  if (!(in >> tag >> n_layers) || tag != "layers") throw FormatError("checkpoint: missing layer count", 2);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < n_layers; ++i) {
    int n_in = 0;
    int n_out = 0;
    std::string act;
    if (!(in >> tag >> n_in >> n_out >> act) || tag != "layer" || n_in < 1 || n_out < 1)
      throw FormatError("checkpoint: bad layer header", 0);
    Layer l;
    l.act = parse_activation(act);
    l.w.resize(n_out, n_in);
    l.b.resize(n_out);
    if (!(in >> tag) || tag != "w") throw FormatError("checkpoint: missing weights", 0);
    for (int r = 0; r < n_out; ++r)
      for (int c = 0; c < n_in; ++c)
        if (!(in >> l.w(r, c))) throw FormatError("checkpoint: truncated weights", 0);
    if (!(in >> tag) || tag != "b") throw FormatError("checkpoint: missing bias", 0);
    for (int r = 0; r < n_out; ++r)
      if (!(in >> l.b[r])) throw FormatError("checkpoint: truncated bias", 0);
    layers.push_back(std::move(l));
  }
  return Mlp(std::move(layers));
}

inline void save_checkpoint(const Mlp& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  save_checkpoint(net, out);
}

inline Mlp load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return load_checkpoint(in);
}

}  // namespace relaybeam
