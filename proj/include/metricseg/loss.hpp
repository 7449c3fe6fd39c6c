#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "metricseg/error.hpp"

namespace metricseg {

// Discriminative embedding loss
//
//   L       = L_inter + gamma_intra * L_intra
//   L_intra = 1/(|I|(|I|-1)) sum_{i != j} [2 delta_intra - |mu_i - mu_j|]_+
//   L_inter = 1/|I| sum_i (|E_i|^p / sum_j |E_j|^p) l_i
//   l_i     = 1/|E_i| sum_{k in E_i} [|mu_i - e_k| - delta_inter]_+
//
// The names are kept as the method defines them, which reads inverted:
// L_intra repels the means of different instances, L_inter attracts the
// members of one instance to its mean. There is no regularization term.

struct LossParams {
  double delta_inter = 0.1;
  double delta_intra = 0.5;
  double gamma_intra = 10.0;
  double p = 1.0;

  void validate() const {
    if (!(delta_inter >= 0) || !(delta_intra >= 0) || !(gamma_intra >= 0)) {
      throw ValidationError("loss params: margins and weight must be >= 0");
    }
    if (!(p >= 0 && p <= 1)) throw ValidationError("loss params: p must be in [0,1]");
    if (!(delta_intra > delta_inter)) {
      throw ValidationError("loss params: delta_intra must exceed delta_inter");
    }
  }
};

// Embeddings are an n x d matrix, one row per voxel.
using Embeddings = Eigen::MatrixXd;

class InstancePartition {
 public:
  // labels[k] < 0 excludes row k (background); other values are instance
  // ids, numbered internally in ascending id order.
  explicit InstancePartition(std::span<const int> labels) : row_count_(labels.size()) {
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < labels.size(); ++k) {
      if (labels[k] >= 0) groups[labels[k]].push_back(k);
    }
    for (auto& [id, rows] : groups) {
      ids_.push_back(id);
      members_.push_back(std::move(rows));
    }
  }
  explicit InstancePartition(const std::vector<int>& labels) : InstancePartition(std::span<const int>(labels)) {}

  std::size_t instance_count() const { return members_.size(); }
  std::size_t row_count() const { return row_count_; }
  const std::vector<std::size_t>& members(std::size_t i) const { return members_[i]; }
  int id(std::size_t i) const { return ids_[i]; }
  std::size_t labeled_count() const {
    std::size_t n = 0;
    for (const auto& m : members_) n += m.size();
    return n;
  }

 private:
  std::size_t row_count_ = 0;
  std::vector<int> ids_;
  std::vector<std::vector<std::size_t>> members_;
};

namespace detail {

inline void check_shapes(const Embeddings& e, const InstancePartition& part) {
  if (static_cast<std::size_t>(e.rows()) != part.row_count()) {
    throw ValidationError("loss: partition covers " + std::to_string(part.row_count()) + " rows, embeddings have " +
                          std::to_string(e.rows()));
  }
  if (part.instance_count() == 0) throw ValidationError("loss: partition has no instances");
}

inline double hinge(double x) { return x > 0.0 ? x : 0.0; }

// |E_i|^p / sum_j |E_j|^p
inline std::vector<double> size_weights(const InstancePartition& part, double p) {
  std::vector<double> w(part.instance_count());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::pow(static_cast<double>(part.members(i).size()), p);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace detail

// Row i holds the mean embedding of instance i.
inline Eigen::MatrixXd instance_means(const Embeddings& e, const InstancePartition& part) {
  detail::check_shapes(e, part);
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(part.instance_count()), e.cols());
  for (std::size_t i = 0; i < part.instance_count(); ++i) {
    const auto& rows = part.members(i);
    if (rows.empty()) throw ValidationError("loss: empty instance " + std::to_string(part.id(i)));
    for (std::size_t k : rows) mu.row(static_cast<Eigen::Index>(i)) += e.row(static_cast<Eigen::Index>(k));
    mu.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(rows.size());
  }
  return mu;
}

// Per-instance average hinge l_i.
inline std::vector<double> instance_hinge_averages(const Embeddings& e, const InstancePartition& part,
                                                   const Eigen::MatrixXd& mu, const LossParams& params) {
  std::vector<double> l(part.instance_count(), 0.0);
  for (std::size_t i = 0; i < part.instance_count(); ++i) {
    double sum = 0.0;
    for (std::size_t k : part.members(i)) {
      const double dist =
          (mu.row(static_cast<Eigen::Index>(i)) - e.row(static_cast<Eigen::Index>(k))).norm();
      sum += detail::hinge(dist - params.delta_inter);
    }
    l[i] = sum / static_cast<double>(part.members(i).size());
  }
  return l;
}

inline double inter_loss(const Embeddings& e, const InstancePartition& part, const LossParams& params) {
  const Eigen::MatrixXd mu = instance_means(e, part);
  const std::vector<double> l = instance_hinge_averages(e, part, mu, params);
  const std::vector<double> w = detail::size_weights(part, params.p);
  double total = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) total += w[i] * l[i];
  return total / static_cast<double>(l.size());
}

inline double intra_loss(const Eigen::MatrixXd& means, const LossParams& params) {
  const Eigen::Index count = means.rows();
  if (count < 2) return 0.0;
  double total = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < count; ++j) {
      if (i == j) continue;
      total += detail::hinge(2.0 * params.delta_intra - (means.row(i) - means.row(j)).norm());
    }
  }
  return total / static_cast<double>(count * (count - 1));
}

struct LossTerms {
  double inter = 0.0;
  double intra = 0.0;
  double total = 0.0;
};

inline LossTerms loss_terms(const Embeddings& e, const InstancePartition& part, const LossParams& params) {
  LossTerms t;
  t.inter = inter_loss(e, part, params);
  t.intra = intra_loss(instance_means(e, part), params);
  t.total = t.inter + params.gamma_intra * t.intra;
  return t;
}

inline double total_loss(const Embeddings& e, const InstancePartition& part, const LossParams& params) {
  return loss_terms(e, part, params).total;
}

// Exact subgradient of total_loss with respect to every embedding row,
// differentiating through the instance means. Rows outside the partition get
// zero. A hinge contributes nothing when its argument is <= 0, and a norm
// contributes nothing where it vanishes.
inline Eigen::MatrixXd loss_gradients(const Embeddings& e, const InstancePartition& part,
                                      const LossParams& params) {
  const Eigen::MatrixXd mu = instance_means(e, part);
  const std::vector<double> w = detail::size_weights(part, params.p);
  const auto count = static_cast<double>(part.instance_count());
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(e.rows(), e.cols());

  // Attraction: for k in E_i with unit residual u_k = (e_k - mu_i)/|e_k - mu_i|,
  //   dL_inter/de_m = c_i (u_m - mean_k u_k),  c_i = w_i / (|I| |E_i|).
  Eigen::RowVectorXd u_sum(e.cols());
  Eigen::RowVectorXd u(e.cols());
  for (std::size_t i = 0; i < part.instance_count(); ++i) {
    const auto& rows = part.members(i);
    const double n_i = static_cast<double>(rows.size());
    const double c_i = w[i] / (count * n_i);
    u_sum.setZero();
    for (std::size_t k : rows) {
      const auto r = static_cast<Eigen::Index>(k);
      u = e.row(r) - mu.row(static_cast<Eigen::Index>(i));
      const double dist = u.norm();
      if (dist - params.delta_inter > 0.0 && dist > 0.0) {
        u /= dist;
        grad.row(r) += c_i * u;
        u_sum += u;
      }
    }
    u_sum *= c_i / n_i;
    for (std::size_t k : rows) grad.row(static_cast<Eigen::Index>(k)) -= u_sum;
  }

  // Repulsion: each ordered pair (i,j) and (j,i) pushes mu_i away from mu_j,
  // then dmu_i/de_k = 1/|E_i|.
  if (part.instance_count() >= 2 && params.gamma_intra != 0.0) {
    const double scale = params.gamma_intra * 2.0 / (count * (count - 1.0));
    Eigen::MatrixXd dmu = Eigen::MatrixXd::Zero(mu.rows(), mu.cols());
    for (Eigen::Index i = 0; i < mu.rows(); ++i) {
      for (Eigen::Index j = 0; j < mu.rows(); ++j) {
        if (i == j) continue;
        const Eigen::RowVectorXd diff = mu.row(i) - mu.row(j);
        const double dist = diff.norm();
        if (2.0 * params.delta_intra - dist > 0.0 && dist > 0.0) dmu.row(i) -= scale * diff / dist;
      }
    }
    for (std::size_t i = 0; i < part.instance_count(); ++i) {
      const auto& rows = part.members(i);
      const Eigen::RowVectorXd g = dmu.row(static_cast<Eigen::Index>(i)) / static_cast<double>(rows.size());
      for (std::size_t k : rows) grad.row(static_cast<Eigen::Index>(k)) += g;
    }
  }
  return grad;
}

}  // namespace metricseg
