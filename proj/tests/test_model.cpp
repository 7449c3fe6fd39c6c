#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <tuple>

#include "metricseg/checkpoint.hpp"
#include "metricseg/features.hpp"
#include "metricseg/model.hpp"
#include "metricseg/pipeline.hpp"
#include "metricseg/voxel.hpp"
#include "test_util.hpp"

using namespace metricseg;

namespace {

Point at(double x, double y, double z, double c = 0.5) {
  Point p;
  p.position = {x, y, z};
  p.color = Vec3::Constant(c);
  return p;
}

ModelConfig tiny_config(bool separate) {
  ModelConfig c;
  c.input_width = 5;
  c.hidden_widths = {6, 4, 5};
  c.embed_dim = 3;
  c.num_classes = 4;
  c.separate_semantic_net = separate;
  return c;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = d(rng);
  }
  return m;
}

// Random state with nonzero biases so that every code path is exercised.
ModelState random_state(const ModelConfig& c, std::uint64_t seed) {
  ModelState s = init_model(c, seed);
  std::mt19937_64 rng(seed + 1);
  for (auto& p : s.params) p = random_matrix(p.rows(), p.cols(), rng, 0.7);
  return s;
}

// Straight-line evaluation of the network with scalar loops.
ForwardResult slow_forward(const ModelState& s, const Eigen::MatrixXd& x) {
  const ModelConfig& c = s.config;
  const int trunks = c.separate_semantic_net ? 2 : 1;
  const std::size_t depth = c.hidden_widths.size();
  std::vector<std::vector<std::vector<double>>> top(static_cast<std::size_t>(trunks));
  std::size_t block = 0;
  for (int t = 0; t < trunks; ++t) {
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      std::vector<double> v(static_cast<std::size_t>(x.cols()));
      for (Eigen::Index j = 0; j < x.cols(); ++j) v[static_cast<std::size_t>(j)] = x(r, j);
      rows.push_back(v);
    }
    for (std::size_t l = 0; l < depth; ++l) {
      const Eigen::MatrixXd& w = s.params[block];
      const Eigen::MatrixXd& b = s.params[block + 1];
      block += 2;
      for (auto& v : rows) {
        std::vector<double> out(static_cast<std::size_t>(w.rows()));
        for (Eigen::Index o = 0; o < w.rows(); ++o) {
          double acc = b(o, 0);
          for (Eigen::Index i = 0; i < w.cols(); ++i) acc += w(o, i) * v[static_cast<std::size_t>(i)];
          out[static_cast<std::size_t>(o)] = acc > 0 ? acc : 0.0;
        }
        v = out;
      }
    }
    top[static_cast<std::size_t>(t)] = rows;
  }
  auto head = [&](const std::vector<std::vector<double>>& rows, const Eigen::MatrixXd& w, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), w.rows());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (Eigen::Index o = 0; o < w.rows(); ++o) {
        double acc = b(o, 0);
        for (Eigen::Index i = 0; i < w.cols(); ++i) acc += w(o, i) * rows[r][static_cast<std::size_t>(i)];
        out(static_cast<Eigen::Index>(r), o) = acc;
      }
    }
    return out;
  };
  ForwardResult res;
  res.embeddings = head(top[0], s.params[block], s.params[block + 1]);
  res.logits = head(top[static_cast<std::size_t>(trunks - 1)], s.params[block + 2], s.params[block + 3]);
  return res;
}

double max_rel_diff(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return ((a - b).cwiseAbs().array() / (a.cwiseAbs().array().max(b.cwiseAbs().array()).max(1.0))).maxCoeff();
}

}  // namespace

// --- featurize ---

TEST(Featurize, IsolatedVoxel) {
  const VoxelGrid g = voxelize({at(0, 0, 0), at(5, 5, 5)}, 0.02);
  const NeighborhoodFeatures f = featurize(g, 0.12);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(f.density[i], 1);
    EXPECT_EQ(f.position_variance[i], Vec3::Zero());
    EXPECT_EQ(f.color_mean[i], f.color[i]);
  }
}

TEST(Featurize, TwoVoxelsWithinRadius) {
  const VoxelGrid g = voxelize({at(0.01, 0.01, 0.01, 0.2), at(0.05, 0.01, 0.01, 0.6)}, 0.02);
  const NeighborhoodFeatures f = featurize(g, 0.12);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f.density[0], 2);
  EXPECT_EQ(f.density[1], 2);
  EXPECT_NEAR(f.color_mean[0].x(), 0.4, 1e-15);
  EXPECT_NEAR(f.position_variance[0].x(), 0.0004, 1e-15);
  EXPECT_NEAR(f.centered_position[0].x(), -0.02, 1e-15);
}

TEST(Featurize, RejectsBadRadius) {
  const VoxelGrid g = voxelize({at(0, 0, 0)}, 0.02);
  EXPECT_THROW(featurize(g, 0.0), ValidationError);
  EXPECT_THROW(featurize(g, -1.0), ValidationError);
}

TEST(Featurize, MatchesQuadraticOracle) {
  const PointCloud cloud = testutil::random_cloud(6000, 5, 0.6);
  const VoxelGrid g = voxelize(cloud, 0.02);
  const double radius = 0.07;
  const NeighborhoodFeatures f = featurize(g, radius);
  const std::size_t n = g.size();
  Vec3 centroid = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) centroid += g.cell(i).position();
  centroid /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    Vec3 csum = Vec3::Zero();
    std::vector<Vec3> offs;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 d = g.cell(j).position() - g.cell(i).position();
      if (d.squaredNorm() <= radius * radius) {
        ++count;
        csum += g.cell(j).color();
        offs.push_back(d);
      }
    }
    ASSERT_EQ(f.density[i], count) << "voxel " << i;
    EXPECT_LT((f.color_mean[i] - csum / count).cwiseAbs().maxCoeff(), 1e-12);
    Vec3 mean = Vec3::Zero();
    for (const Vec3& d : offs) mean += d;
    mean /= count;
    Vec3 var = Vec3::Zero();
    for (const Vec3& d : offs) var += (d - mean).cwiseProduct(d - mean);
    var /= count;
    EXPECT_LT((f.position_variance[i] - var).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((f.centered_position[i] - (g.cell(i).position() - centroid)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Featurize, InputMatrixLayout) {
  const VoxelGrid g = voxelize(testutil::random_cloud(300, 2), 0.1);
  const NeighborhoodFeatures f = featurize(g, 0.3);
  const Eigen::MatrixXd x = input_matrix(f);
  ASSERT_EQ(x.cols(), kFeatureWidth);
  ASSERT_EQ(static_cast<std::size_t>(x.rows()), g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    EXPECT_EQ(x(r, 3), f.color[i].x());
    EXPECT_DOUBLE_EQ(x(r, 6), std::log(f.density[i]));
    EXPECT_DOUBLE_EQ(x(r, 12), std::sqrt(f.position_variance[i].z()) / 0.3);
  }
  EXPECT_TRUE(x.allFinite());
}

TEST(Featurize, ShapeStatsMatchQuadraticOracle) {
  const VoxelGrid g = voxelize(testutil::random_cloud(3000, 8, 0.8), 0.02);
  const std::vector<double> radii{0.2, 0.09};
  const NeighborhoodFeatures f = featurize(g, 0.06, radii);
  ASSERT_EQ(f.context.size(), 2u);
  const std::size_t n = g.size();
  auto oracle = [&](std::size_t i, double r) {
    std::vector<Vec3> offs;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 d = g.cell(j).position() - g.cell(i).position();
      if (d.squaredNorm() <= r * r) offs.push_back(d);
    }
    Vec3 mean = Vec3::Zero();
    for (const Vec3& d : offs) mean += d;
    mean /= static_cast<double>(offs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Vec3& d : offs) cov += (d - mean) * (d - mean).transpose();
    cov /= static_cast<double>(offs.size());
    return std::make_tuple(static_cast<int>(offs.size()), mean, cov);
  };
  for (std::size_t i = 0; i < n; i += 7) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double r = k == 0 ? 0.06 : radii[k - 1];
      const ShapeStats& s = k == 0 ? f.shape[i] : f.context[k - 1][i];
      const auto [count, mean, cov] = oracle(i, r);
      ASSERT_EQ(s.count, count) << "voxel " << i << " radius " << r;
      EXPECT_LT((s.mean_offset - mean).cwiseAbs().maxCoeff(), 1e-12);
      const Eigen::Vector3d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(cov).eigenvalues();
      EXPECT_LT((s.eigenvalues - ev.cwiseMax(0.0)).cwiseAbs().maxCoeff(), 1e-9);
    }
  }
}

TEST(Featurize, PlaneNormals) {
  // A horizontal and a vertical sheet far apart.
  PointCloud c;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j) {
      c.push_back(at(i * 0.02 + 0.01, j * 0.02 + 0.01, 0.01));
      c.push_back(at(5.01, i * 0.02 + 0.01, j * 0.02 + 0.01));
    }
  const VoxelGrid g = voxelize(c, 0.02);
  const NeighborhoodFeatures f = featurize(g, 0.1, {0.2});
  for (std::size_t i = 0; i < g.size(); ++i) {
    const bool floor = g.cell(i).position().x() < 1.0;
    EXPECT_NEAR(f.shape[i].normal_z, floor ? 1.0 : 0.0, 1e-9);
    EXPECT_NEAR(f.context[0][i].normal_z, floor ? 1.0 : 0.0, 1e-9);
    EXPECT_NEAR(f.shape[i].eigenvalues.x(), 0.0, 1e-12);
    if (floor) EXPECT_NEAR(f.shape[i].mean_offset.z(), 0.0, 1e-12);
  }
}

TEST(Featurize, RowsMatchFullGrid) {
  const VoxelGrid g = voxelize(testutil::random_cloud(2000, 12, 0.6), 0.02);
  const std::vector<double> radii{0.15, 0.1};
  const Eigen::MatrixXd full = input_matrix(featurize(g, 0.05, radii), true);
  const std::vector<std::size_t> rows{g.size() - 1, 3, 0, 3};
  const Eigen::MatrixXd part = input_matrix(featurize_rows(g, 0.05, radii, rows), true);
  ASSERT_EQ(part.rows(), 4);
  for (std::size_t q = 0; q < rows.size(); ++q)
    EXPECT_EQ(part.row(static_cast<Eigen::Index>(q)), full.row(static_cast<Eigen::Index>(rows[q])));
  EXPECT_EQ(featurize_rows(g, 0.05, radii, {}).size(), 0u);
  EXPECT_THROW(featurize_rows(g, 0.05, radii, {g.size()}), ValidationError);
}

TEST(Featurize, WidthWithShapeAndContext) {
  EXPECT_EQ(feature_width(false), 13);
  EXPECT_EQ(feature_width(true), 21);
  EXPECT_EQ(feature_width(true, 2), 39);
  const VoxelGrid g = voxelize(testutil::random_cloud(400, 3), 0.1);
  const NeighborhoodFeatures f = featurize(g, 0.2, {0.3, 0.5});
  const Eigen::MatrixXd x = input_matrix(f, true);
  ASSERT_EQ(x.cols(), 39);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    EXPECT_DOUBLE_EQ(x(r, 13), std::sqrt(f.shape[i].eigenvalues.x()) / 0.2);
    EXPECT_EQ(x(r, 16), f.shape[i].normal_z);
    EXPECT_DOUBLE_EQ(x(r, 18), f.shape[i].mean_offset.x() / 0.2);
    EXPECT_DOUBLE_EQ(x(r, 21), std::log(f.context[0][i].count));
    EXPECT_DOUBLE_EQ(x(r, 30), std::log(f.context[1][i].count));
    EXPECT_DOUBLE_EQ(x(r, 38), f.context[1][i].mean_offset.z() / 0.5);
  }
  EXPECT_TRUE(x.allFinite());
  EXPECT_THROW(featurize(g, 0.2, {0.0}), ValidationError);
  // Without the flag the shape block is absent but context columns remain.
  EXPECT_EQ(input_matrix(f).cols(), 13 + 18);
}

// --- forward ---

TEST(Forward, ZeroWeightsGiveHeadBias) {
  ModelState s = init_model(ModelConfig{}, 1);
  for (auto& p : s.params) p.setZero();
  std::mt19937_64 rng(2);
  const Eigen::VectorXd bias = random_matrix(s.config.embed_dim, 1, rng);
  s.params[s.embed_head_index() + 1] = bias;
  const Eigen::MatrixXd x = random_matrix(17, kFeatureWidth, rng);
  const ForwardResult out = forward(s, x);
  for (Eigen::Index r = 0; r < out.embeddings.rows(); ++r) EXPECT_EQ(out.embeddings.row(r), bias.transpose());
}

TEST(Forward, PointwiseRows) {
  const ModelState s = random_state(ModelConfig{}, 3);
  std::mt19937_64 rng(4);
  Eigen::MatrixXd x = random_matrix(40, kFeatureWidth, rng);
  x.row(7) = x.row(22);
  const ForwardResult out = forward(s, x);
  EXPECT_EQ(out.embeddings.row(7), out.embeddings.row(22));
  EXPECT_EQ(out.logits.row(7), out.logits.row(22));

  std::vector<Eigen::Index> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Eigen::MatrixXd xp(40, kFeatureWidth);
  for (Eigen::Index r = 0; r < 40; ++r) xp.row(r) = x.row(perm[static_cast<std::size_t>(r)]);
  const ForwardResult op = forward(s, xp);
  for (Eigen::Index r = 0; r < 40; ++r) {
    EXPECT_LT((op.embeddings.row(r) - out.embeddings.row(perm[static_cast<std::size_t>(r)])).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, MatchesSlowReimplementation) {
  for (bool separate : {false, true}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ModelConfig c;
      c.separate_semantic_net = separate;
      const ModelState s = random_state(c, seed);
      std::mt19937_64 rng(seed + 10);
      const Eigen::MatrixXd x = random_matrix(25, kFeatureWidth, rng);
      const ForwardResult fast = forward(s, x);
      const ForwardResult slow = slow_forward(s, x);
      EXPECT_LT(max_rel_diff(fast.embeddings, slow.embeddings), 1e-12);
      EXPECT_LT(max_rel_diff(fast.logits, slow.logits), 1e-12);
      EXPECT_TRUE(fast.embeddings.allFinite());
    }
  }
}

TEST(Forward, WidthMismatchThrows) {
  const ModelState s = init_model(ModelConfig{}, 1);
  EXPECT_THROW(forward(s, Eigen::MatrixXd::Zero(3, kFeatureWidth + 1)), ValidationError);
}

TEST(Forward, InitializationBounds) {
  const ModelState s = init_model(ModelConfig{}, 9);
  const auto shapes = parameter_shapes(s.config);
  for (std::size_t i = 0; i < s.params.size(); ++i) {
    EXPECT_EQ(s.params[i].rows(), shapes[i].first);
    EXPECT_EQ(s.params[i].cols(), shapes[i].second);
    if (i % 2 == 1) {
      EXPECT_EQ(s.params[i].norm(), 0.0);
    } else {
      const double limit = std::sqrt(6.0 / (shapes[i].first + shapes[i].second));
      EXPECT_LE(s.params[i].cwiseAbs().maxCoeff(), limit);
      EXPECT_GT(s.params[i].cwiseAbs().maxCoeff(), 0.5 * limit);
    }
    EXPECT_EQ(s.adam_m[i].norm(), 0.0);
  }
  EXPECT_EQ(s.params[0].rows(), 64);
  EXPECT_EQ(s.params[0].cols(), kFeatureWidth);
  EXPECT_EQ(s.params[s.embed_head_index()].rows(), 8);
}

// --- backward ---

TEST(Backward, ZeroOutputGradients) {
  const ModelState s = random_state(ModelConfig{}, 5);
  std::mt19937_64 rng(6);
  const Eigen::MatrixXd x = random_matrix(10, kFeatureWidth, rng);
  const Gradients g = backward(s, x, Eigen::MatrixXd::Zero(10, 8), Eigen::MatrixXd::Zero(10, 5));
  for (const auto& b : g) EXPECT_EQ(b.norm(), 0.0);
}

TEST(Backward, SumOfEmbeddingsWrtHeadBias) {
  const ModelState s = random_state(ModelConfig{}, 7);
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd x = random_matrix(13, kFeatureWidth, rng);
  const Gradients g = backward(s, x, Eigen::MatrixXd::Ones(13, 8), Eigen::MatrixXd::Zero(13, 5));
  EXPECT_EQ(g[s.embed_head_index() + 1], Eigen::MatrixXd::Constant(8, 1, 13.0));
  EXPECT_EQ(g[s.semantic_head_index() + 1].norm(), 0.0);
}

TEST(Backward, ShapeMismatchThrows) {
  const ModelState s = init_model(ModelConfig{}, 1);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Zero(4, kFeatureWidth);
  EXPECT_THROW(backward(s, x, Eigen::MatrixXd::Zero(4, 7), Eigen::MatrixXd::Zero(4, 5)), ValidationError);
  EXPECT_THROW(backward(s, x, Eigen::MatrixXd::Zero(3, 8), Eigen::MatrixXd::Zero(4, 5)), ValidationError);
}

TEST(Backward, MatchesCentralDifferences) {
  // Relative error |a - n| / max(|a|, |n|, 1e-4); the floor keeps entries that
  // are zero on both sides (inactive ReLUs) from dividing by zero.
  const double h = 1e-5;
  for (bool separate : {false, true}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      ModelState s = random_state(tiny_config(separate), 100 + seed);
      std::mt19937_64 rng(seed);
      const Eigen::MatrixXd x = random_matrix(6, 5, rng);
      const Eigen::MatrixXd ge = random_matrix(6, 3, rng);
      const Eigen::MatrixXd gs = random_matrix(6, 4, rng);
      auto objective = [&](const ModelState& st) {
        const ForwardResult o = forward(st, x);
        return (o.embeddings.array() * ge.array()).sum() + (o.logits.array() * gs.array()).sum();
      };
      const Gradients g = backward(s, x, ge, gs);
      double worst = 0.0;
      for (std::size_t b = 0; b < s.params.size(); ++b) {
        for (Eigen::Index i = 0; i < s.params[b].size(); ++i) {
          const double orig = s.params[b].data()[i];
          s.params[b].data()[i] = orig + h;
          const double fp = objective(s);
          s.params[b].data()[i] = orig - h;
          const double fm = objective(s);
          s.params[b].data()[i] = orig;
          const double num = (fp - fm) / (2 * h);
          const double ana = g[b].data()[i];
          worst = std::max(worst, std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-4}));
        }
      }
      EXPECT_LT(worst, 1e-5) << "separate " << separate << " seed " << seed;
    }
  }
}

// --- optimizer ---

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  ModelState s = random_state(ModelConfig{}, 2);
  const auto before = s.params;
  Gradients zero;
  for (const auto& p : s.params) zero.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  adam_step(s, zero, 1e-3);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(s.params[i], before[i]);
  EXPECT_EQ(s.step, 1u);
}

namespace {

ModelState scalar_state(double value) {
  ModelState s;
  s.params = {Eigen::MatrixXd::Constant(1, 1, value)};
  s.adam_m = {Eigen::MatrixXd::Zero(1, 1)};
  s.adam_v = {Eigen::MatrixXd::Zero(1, 1)};
  return s;
}

}  // namespace

TEST(Adam, SingleStepHandFormula) {
  for (double g : {0.3, -2.5, 1e-3}) {
    ModelState s = scalar_state(1.0);
    const double lr = 1e-4;
    adam_step(s, {Eigen::MatrixXd::Constant(1, 1, g)}, lr);
    // m_hat = g, v_hat = g^2, so the update is -lr * g / (|g| + eps).
    const double expected = 1.0 - lr * g / (std::abs(g) + 1e-8);
    EXPECT_NEAR(s.params[0](0, 0), expected, 1e-16);
    EXPECT_NEAR(s.params[0](0, 0) - 1.0, -lr * (g > 0 ? 1.0 : -1.0), 1e-9);
  }
}

TEST(Adam, TwoStepsTextbookRecurrence) {
  const double g1 = 0.7, g2 = -0.2, lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ModelState s = scalar_state(0.5);
  adam_step(s, {Eigen::MatrixXd::Constant(1, 1, g1)}, lr);
  adam_step(s, {Eigen::MatrixXd::Constant(1, 1, g2)}, lr);
  double theta = 0.5, m = 0, v = 0;
  const double gs[] = {g1, g2};
  for (int t = 1; t <= 2; ++t) {
    m = b1 * m + (1 - b1) * gs[t - 1];
    v = b2 * v + (1 - b2) * gs[t - 1] * gs[t - 1];
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
  }
  EXPECT_NEAR(s.params[0](0, 0), theta, 1e-15);
  EXPECT_NEAR(s.adam_m[0](0, 0), m, 1e-15);
  EXPECT_NEAR(s.adam_v[0](0, 0), v, 1e-15);
  EXPECT_EQ(s.step, 2u);
}

TEST(Adam, NonFiniteGradientNamesBlock) {
  ModelState s = init_model(ModelConfig{}, 1);
  Gradients g;
  for (const auto& p : s.params) g.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
  g[3](2, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(s, g, 1e-4);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("trunk0.layer1.bias"), std::string::npos) << e.what();
  }
  EXPECT_EQ(s.step, 0u);
}

TEST(LrSchedule, StepDecay) {
  EXPECT_EQ(lr_schedule(1e-4, 0), 1e-4);
  EXPECT_EQ(lr_schedule(1e-4, 9999), 1e-4);
  EXPECT_NEAR(lr_schedule(1e-4, 10000), 8e-5, 1e-18);
  EXPECT_NEAR(lr_schedule(1e-4, 20000), 6.4e-5, 1e-18);
}

TEST(CrossEntropy, ValueGradientAndIgnoredRows) {
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd logits = random_matrix(5, 4, rng);
  const std::vector<int> targets{0, -1, 3, 2, -1};
  const CrossEntropy ce = cross_entropy(logits, targets);
  double expect = 0;
  for (int r : {0, 2, 3}) {
    const double z = logits.row(r).array().exp().sum();
    expect -= std::log(std::exp(logits(r, targets[static_cast<std::size_t>(r)])) / z);
  }
  EXPECT_NEAR(ce.loss, expect / 3, 1e-14);
  EXPECT_EQ(ce.grad.row(1).norm(), 0.0);
  const double h = 1e-6;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    Eigen::MatrixXd lp = logits, lm = logits;
    lp.data()[i] += h;
    lm.data()[i] -= h;
    const double num = (cross_entropy(lp, targets).loss - cross_entropy(lm, targets).loss) / (2 * h);
    EXPECT_NEAR(ce.grad.data()[i], num, 1e-8);
  }
  EXPECT_THROW(cross_entropy(logits, {0, 1}), ValidationError);
  EXPECT_THROW(cross_entropy(logits, {0, 9, 0, 0, 0}), ValidationError);
}

// --- checkpoint ---

TEST(Checkpoint, RoundTripBitExact) {
  for (bool separate : {false, true}) {
    ModelConfig c;
    c.separate_semantic_net = separate;
    c.hidden_widths = {16, 8};
    ModelState s = random_state(c, 4);
    s.step = 12345;
    std::mt19937_64 rng(1);
    for (auto& m : s.adam_m) m = random_matrix(m.rows(), m.cols(), rng);
    for (auto& v : s.adam_v) v = random_matrix(v.rows(), v.cols(), rng).cwiseAbs();
    testutil::TempDir dir;
    save_checkpoint(s, dir / "m.ckpt");
    const ModelState r = load_checkpoint(dir / "m.ckpt");
    EXPECT_EQ(r.config.hidden_widths, c.hidden_widths);
    EXPECT_EQ(r.config.separate_semantic_net, separate);
    EXPECT_EQ(r.step, s.step);
    EXPECT_EQ(r.seed, s.seed);
    ASSERT_EQ(r.params.size(), s.params.size());
    for (std::size_t i = 0; i < s.params.size(); ++i) {
      EXPECT_EQ(std::memcmp(r.params[i].data(), s.params[i].data(), sizeof(double) * s.params[i].size()), 0);
      EXPECT_EQ(std::memcmp(r.adam_m[i].data(), s.adam_m[i].data(), sizeof(double) * s.adam_m[i].size()), 0);
      EXPECT_EQ(std::memcmp(r.adam_v[i].data(), s.adam_v[i].data(), sizeof(double) * s.adam_v[i].size()), 0);
    }
    EXPECT_EQ(serialize_checkpoint(r), serialize_checkpoint(s));
  }
}

TEST(Checkpoint, TruncatedFileFails) {
  const std::string bytes = serialize_checkpoint(init_model(ModelConfig{}, 1));
  EXPECT_EQ(bytes.substr(0, 9), "MSEGCKPT1");
  for (std::size_t cut : {std::size_t{0}, std::size_t{5}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    try {
      deserialize_checkpoint(std::string_view(bytes).substr(0, cut));
      FAIL() << "cut " << cut;
    } catch (const ValidationError& e) {
      EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), ValidationError);
}

TEST(Checkpoint, VersionAndMagicChecked) {
  std::string bytes = serialize_checkpoint(init_model(ModelConfig{}, 1));
  bytes[8] = '2';
  try {
    deserialize_checkpoint(bytes);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  bytes[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bytes), ValidationError);
  EXPECT_THROW(load_checkpoint("/nonexistent/m.ckpt"), IoError);
}

TEST(Checkpoint, ResumedTrainingMatchesUninterrupted) {
  PipelineConfig config;
  config.model.hidden_widths = {16, 16, 16};
  config.training.batch_size = 2;
  std::vector<PointCloud> scenes;
  for (std::size_t i = 0; i < 3; ++i) scenes.push_back(generate_scene(scene_config_for(config, i)));

  ModelState straight = init_model(config.model, config.seed);
  train_step(straight, scenes, config);
  testutil::TempDir dir;
  save_checkpoint(straight, dir / "after1.ckpt");
  train_step(straight, scenes, config);

  ModelState resumed = load_checkpoint(dir / "after1.ckpt");
  train_step(resumed, scenes, config);
  EXPECT_EQ(serialize_checkpoint(resumed), serialize_checkpoint(straight));
}
