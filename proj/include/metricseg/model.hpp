#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "metricseg/error.hpp"
#include "metricseg/features.hpp"

namespace metricseg {

struct ModelConfig {
  int input_width = kFeatureWidth;
  std::vector<int> hidden_widths = {64, 64, 64};
  int embed_dim = 8;
  int num_classes = 5;
  // Two independent trunks (embedding, semantic) instead of one shared trunk.
  bool separate_semantic_net = false;

  void validate() const {
    if (input_width < 1 || embed_dim < 1 || num_classes < 1 || hidden_widths.empty()) {
      throw ValidationError("model config: widths must be >= 1");
    }
    for (int w : hidden_widths) {
      if (w < 1) throw ValidationError("model config: hidden width must be >= 1");
    }
  }
};

// Fully connected ReLU trunk(s) with two linear heads. Parameters are stored
// as a flat list of blocks (weights out x in, biases out x 1) in a fixed order:
//   trunk 0 layers, [trunk 1 layers], embedding head, semantic head.
// The semantic head reads from trunk 1 when separate_semantic_net is set.
struct ModelState {
  ModelConfig config;
  std::vector<Eigen::MatrixXd> params;
  std::vector<Eigen::MatrixXd> adam_m;
  std::vector<Eigen::MatrixXd> adam_v;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  int trunk_count() const { return config.separate_semantic_net ? 2 : 1; }
  int depth() const { return static_cast<int>(config.hidden_widths.size()); }
  std::size_t weight_index(int trunk, int layer) const { return static_cast<std::size_t>(2 * (trunk * depth() + layer)); }
  std::size_t embed_head_index() const { return static_cast<std::size_t>(2 * trunk_count() * depth()); }
  std::size_t semantic_head_index() const { return embed_head_index() + 2; }
  int semantic_trunk() const { return config.separate_semantic_net ? 1 : 0; }
};

using Gradients = std::vector<Eigen::MatrixXd>;

inline std::vector<std::string> parameter_names(const ModelState& s) {
  std::vector<std::string> names;
  for (int t = 0; t < s.trunk_count(); ++t) {
    for (int l = 0; l < s.depth(); ++l) {
      const std::string base = "trunk" + std::to_string(t) + ".layer" + std::to_string(l);
      names.push_back(base + ".weight");
      names.push_back(base + ".bias");
    }
  }
  for (const char* head : {"embed_head", "semantic_head"}) {
    names.push_back(std::string(head) + ".weight");
    names.push_back(std::string(head) + ".bias");
  }
  return names;
}

// Parameter block shapes (rows, cols) in storage order.
inline std::vector<std::pair<int, int>> parameter_shapes(const ModelConfig& c) {
  std::vector<std::pair<int, int>> shapes;
  const int trunks = c.separate_semantic_net ? 2 : 1;
  for (int t = 0; t < trunks; ++t) {
    int in = c.input_width;
    for (int w : c.hidden_widths) {
      shapes.emplace_back(w, in);
      shapes.emplace_back(w, 1);
      in = w;
    }
  }
  const int last = c.hidden_widths.back();
  shapes.emplace_back(c.embed_dim, last);
  shapes.emplace_back(c.embed_dim, 1);
  shapes.emplace_back(c.num_classes, last);
  shapes.emplace_back(c.num_classes, 1);
  return shapes;
}

// Glorot-uniform weights, zero biases, zero moments.
inline ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState s;
  s.config = config;
  s.seed = seed;
  std::mt19937_64 rng(seed);
  const auto shapes = parameter_shapes(config);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto [rows, cols] = shapes[i];
    Eigen::MatrixXd block = Eigen::MatrixXd::Zero(rows, cols);
    if (i % 2 == 0) {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      std::uniform_real_distribution<double> dist(-limit, limit);
      for (Eigen::Index c = 0; c < block.cols(); ++c) {
        for (Eigen::Index r = 0; r < block.rows(); ++r) block(r, c) = dist(rng);
      }
    }
    s.params.push_back(block);
    s.adam_m.push_back(Eigen::MatrixXd::Zero(rows, cols));
    s.adam_v.push_back(Eigen::MatrixXd::Zero(rows, cols));
  }
  return s;
}

struct ForwardResult {
  Eigen::MatrixXd embeddings;  // n x d
  Eigen::MatrixXd logits;      // n x C
};

// Intermediate activations kept for the backward pass.
struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<std::vector<Eigen::MatrixXd>> hidden;  // [trunk][layer], post-ReLU
};

namespace detail {

inline Eigen::MatrixXd affine(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd y = x * w.transpose();
  y.rowwise() += b.col(0).transpose();
  return y;
}

}  // namespace detail

inline ForwardResult forward(const ModelState& s, const Eigen::MatrixXd& x, ForwardCache* cache = nullptr) {
  if (x.cols() != s.config.input_width) {
    throw ValidationError("forward: feature width " + std::to_string(x.cols()) + " does not match model input width " +
                          std::to_string(s.config.input_width));
  }
  std::vector<std::vector<Eigen::MatrixXd>> hidden(static_cast<std::size_t>(s.trunk_count()));
  for (int t = 0; t < s.trunk_count(); ++t) {
    const Eigen::MatrixXd* in = &x;
    auto& acts = hidden[static_cast<std::size_t>(t)];
    acts.reserve(static_cast<std::size_t>(s.depth()));
    for (int l = 0; l < s.depth(); ++l) {
      const std::size_t wi = s.weight_index(t, l);
      acts.push_back(detail::affine(*in, s.params[wi], s.params[wi + 1]).cwiseMax(0.0));
      in = &acts.back();
    }
  }
  ForwardResult out;
  const std::size_t e = s.embed_head_index();
  const std::size_t c = s.semantic_head_index();
  out.embeddings = detail::affine(hidden[0].back(), s.params[e], s.params[e + 1]);
  out.logits = detail::affine(hidden[static_cast<std::size_t>(s.semantic_trunk())].back(), s.params[c], s.params[c + 1]);
  if (cache) {
    cache->input = x;
    cache->hidden = std::move(hidden);
  }
  return out;
}

// Reverse-mode gradients of sum(grad_embeddings .* E) + sum(grad_logits .* S)
// with respect to every parameter block. ReLU passes gradient where its
// output is strictly positive.
inline Gradients backward(const ModelState& s, const ForwardCache& cache, const Eigen::MatrixXd& grad_embeddings,
                          const Eigen::MatrixXd& grad_logits) {
  const Eigen::Index n = cache.input.rows();
  if (grad_embeddings.rows() != n || grad_embeddings.cols() != s.config.embed_dim || grad_logits.rows() != n ||
      grad_logits.cols() != s.config.num_classes) {
    throw ValidationError("backward: output gradient shape mismatch");
  }
  Gradients g(s.params.size());
  for (std::size_t i = 0; i < s.params.size(); ++i) g[i] = Eigen::MatrixXd::Zero(s.params[i].rows(), s.params[i].cols());

  const std::size_t e = s.embed_head_index();
  const std::size_t c = s.semantic_head_index();
  std::vector<Eigen::MatrixXd> top(static_cast<std::size_t>(s.trunk_count()));
  {
    const Eigen::MatrixXd& h = cache.hidden[0].back();
    g[e] = grad_embeddings.transpose() * h;
    g[e + 1] = grad_embeddings.colwise().sum().transpose();
    top[0] = grad_embeddings * s.params[e];
  }
  {
    const auto t = static_cast<std::size_t>(s.semantic_trunk());
    const Eigen::MatrixXd& h = cache.hidden[t].back();
    g[c] = grad_logits.transpose() * h;
    g[c + 1] = grad_logits.colwise().sum().transpose();
    const Eigen::MatrixXd d = grad_logits * s.params[c];
    if (t == 0) {
      top[0] += d;
    } else {
      top[t] = d;
    }
  }

  for (int t = 0; t < s.trunk_count(); ++t) {
    const auto& acts = cache.hidden[static_cast<std::size_t>(t)];
    Eigen::MatrixXd grad = std::move(top[static_cast<std::size_t>(t)]);
    for (int l = s.depth() - 1; l >= 0; --l) {
      const auto li = static_cast<std::size_t>(l);
      grad = grad.cwiseProduct((acts[li].array() > 0.0).cast<double>().matrix());
      const Eigen::MatrixXd& in = l == 0 ? cache.input : acts[li - 1];
      const std::size_t wi = s.weight_index(t, l);
      g[wi] = grad.transpose() * in;
      g[wi + 1] = grad.colwise().sum().transpose();
      if (l > 0) grad = grad * s.params[wi];
    }
  }
  return g;
}

inline Gradients backward(const ModelState& s, const Eigen::MatrixXd& x, const Eigen::MatrixXd& grad_embeddings,
                          const Eigen::MatrixXd& grad_logits) {
  ForwardCache cache;
  forward(s, x, &cache);
  return backward(s, cache, grad_embeddings, grad_logits);
}

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected ADAM update; increments the step counter.
inline void adam_step(ModelState& s, const Gradients& grads, double lr, const AdamParams& adam = {}) {
  if (grads.size() != s.params.size()) throw ValidationError("adam_step: gradient block count mismatch");
  const auto names = parameter_names(s);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].rows() != s.params[i].rows() || grads[i].cols() != s.params[i].cols()) {
      throw ValidationError("adam_step: shape mismatch in " + names[i]);
    }
    if (!grads[i].allFinite()) throw ValidationError("adam_step: non-finite gradient in " + names[i]);
  }
  const double t = static_cast<double>(s.step + 1);
  const double c1 = 1.0 - std::pow(adam.beta1, t);
  const double c2 = 1.0 - std::pow(adam.beta2, t);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    auto m = s.adam_m[i].array();
    auto v = s.adam_v[i].array();
    const auto g = grads[i].array();
    m = adam.beta1 * m + (1.0 - adam.beta1) * g;
    v = adam.beta2 * v + (1.0 - adam.beta2) * g.square();
    s.params[i].array() -= lr * (m / c1) / ((v / c2).sqrt() + adam.epsilon);
  }
  ++s.step;
}

inline double lr_schedule(double base_lr, std::uint64_t step, double decay = 0.8, std::uint64_t every = 10000) {
  return base_lr * std::pow(decay, static_cast<double>(step / every));
}

// Mean softmax cross-entropy over rows and its gradient with respect to the
// logits. Rows with a negative target are ignored.
struct CrossEntropy {
  double loss = 0.0;
  Eigen::MatrixXd grad;
};

inline CrossEntropy cross_entropy(const Eigen::MatrixXd& logits, const std::vector<int>& targets) {
  if (static_cast<std::size_t>(logits.rows()) != targets.size()) {
    throw ValidationError("cross_entropy: target count mismatch");
  }
  CrossEntropy out;
  out.grad = Eigen::MatrixXd::Zero(logits.rows(), logits.cols());
  std::size_t used = 0;
  for (std::size_t r = 0; r < targets.size(); ++r) used += targets[r] >= 0;
  if (used == 0) return out;
  const double inv = 1.0 / static_cast<double>(used);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int target = targets[static_cast<std::size_t>(r)];
    if (target < 0) continue;
    if (target >= logits.cols()) throw ValidationError("cross_entropy: target class out of range");
    const double mx = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd ex = (logits.row(r).array() - mx).exp();
    const double z = ex.sum();
    out.loss += (std::log(z) + mx - logits(r, target)) * inv;
    out.grad.row(r) = ex / z * inv;
    out.grad(r, target) -= inv;
  }
  return out;
}

inline std::vector<int> argmax_rows(const Eigen::MatrixXd& logits) {
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index best = 0;
    logits.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace metricseg
