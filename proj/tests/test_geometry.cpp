#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <unordered_set>

#include "metricseg/point_cloud.hpp"
#include "metricseg/voxel.hpp"
#include "test_util.hpp"

using namespace metricseg;

namespace {

Point make_point(double x, double y, double z, double r = 0.5, double g = 0.5, double b = 0.5) {
  Point p;
  p.position = {x, y, z};
  p.color = {r, g, b};
  return p;
}

template <typename Fn>
void expect_validation_error(Fn fn, const std::string& needle) {
  try {
    fn();
    FAIL() << "expected ValidationError containing '" << needle << "'";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
  }
}

}  // namespace

// --- point cloud format ---

TEST(PointCloudFormat, RoundTripIsExact) {
  PointCloud cloud = testutil::random_cloud(200, 3);
  cloud[5].instance_id.reset();
  cloud[7].semantic_id.reset();
  const PointCloud back = parse_cloud(format_cloud(cloud, true, true));
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(back[i].position, cloud[i].position);
    EXPECT_EQ(back[i].color, cloud[i].color);
    EXPECT_EQ(back[i].instance_id, cloud[i].instance_id);
    EXPECT_EQ(back[i].semantic_id, cloud[i].semantic_id);
  }
}

TEST(PointCloudFormat, HeaderAndOptionalColumns) {
  PointCloud cloud{make_point(1, 2, 3, 0, 0.25, 1)};
  cloud[0].instance_id = 4;
  const std::string text = format_cloud(cloud, false, false);
  EXPECT_EQ(text, "metricseg-pc v1 1 0 0\n1 2 3 0 0.25 1\n");
  const PointCloud back = parse_cloud(text);
  EXPECT_FALSE(back[0].instance_id.has_value());
  EXPECT_FALSE(back[0].semantic_id.has_value());
  EXPECT_EQ(format_cloud(cloud, true, true), "metricseg-pc v1 1 1 1\n1 2 3 0 0.25 1 4 -1\n");
}

TEST(PointCloudFormat, RejectsMalformedInput) {
  expect_validation_error([] { parse_cloud(""); }, "missing header");
  expect_validation_error([] { parse_cloud("metricseg-pc v2 0 0 0\n"); }, "unsupported version");
  expect_validation_error([] { parse_cloud("other v1 0 0 0\n"); }, "bad magic");
  expect_validation_error([] { parse_cloud("metricseg-pc v1 2 0 0\n0 0 0 0 0 0\n"); }, "expected 2 points");
  expect_validation_error([] { parse_cloud("metricseg-pc v1 1 0 0\n0 0 x 0 0 0\n"); }, ":2: bad real");
  expect_validation_error([] { parse_cloud("metricseg-pc v1 1 0 0\n0 0 0 0 0 2\n"); }, "color outside");
  expect_validation_error([] { parse_cloud("metricseg-pc v1 1 0 0\n0 0 nan 0 0 0\n"); }, "non-finite");
  expect_validation_error([] { parse_cloud("metricseg-pc v1 1 1 0\n0 0 0 0 0 0 -3\n"); }, "bad label");
  expect_validation_error([] { parse_cloud("metricseg-pc v1 1 0 0\n0 0 0 0 0 0 9\n"); }, "trailing tokens");
}

TEST(PointCloudFormat, FileErrorsAreIoErrors) {
  EXPECT_THROW(read_cloud("/nonexistent/dir/x.pc"), IoError);
  EXPECT_THROW(write_cloud("/nonexistent/dir/x.pc", PointCloud{}), IoError);
}

// --- voxel_key ---

TEST(VoxelKey, DistinctNeighbours) {
  EXPECT_NE(voxel_key({0, 0, 0}), voxel_key({0, 0, 1}));
  EXPECT_NE(voxel_key({1, 0, 0}), voxel_key({0, 1, 0}));
}

TEST(VoxelKey, NegativeCoordinatesRoundTrip) {
  const VoxelCoord c{-1, -1, -1};
  EXPECT_EQ(voxel_coord_from_key(voxel_key(c)), c);
  const VoxelCoord lo{-(1 << 20), -(1 << 20), -(1 << 20)};
  const VoxelCoord hi{(1 << 20) - 1, (1 << 20) - 1, (1 << 20) - 1};
  EXPECT_EQ(voxel_coord_from_key(voxel_key(lo)), lo);
  EXPECT_EQ(voxel_coord_from_key(voxel_key(hi)), hi);
}

TEST(VoxelKey, OutOfRangeThrows) {
  EXPECT_THROW(voxel_key({1 << 20, 0, 0}), ValidationError);
  EXPECT_THROW(voxel_key({0, -(1 << 20) - 1, 0}), ValidationError);
}

TEST(VoxelKey, StableValues) {
  // Fixed values guard against accidental layout changes.
  EXPECT_EQ(voxel_key({0, 0, 0}), (std::uint64_t{1} << 62) | (std::uint64_t{1} << 41) | (std::uint64_t{1} << 20));
  EXPECT_EQ(voxel_key({-(1 << 20), -(1 << 20), -(1 << 20)}), 0u);
}

TEST(VoxelKey, MillionRandomCoordinatesNoCollisions) {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::int32_t> d(-(1 << 20), (1 << 20) - 1);
  std::set<VoxelCoord> coords;
  while (coords.size() < 1000000) coords.insert({d(rng), d(rng), d(rng)});
  std::unordered_set<std::uint64_t> keys;
  keys.reserve(coords.size());
  for (const auto& c : coords) keys.insert(voxel_key(c));
  EXPECT_EQ(keys.size(), coords.size());
}

TEST(VoxelKey, OrderMatchesLexicographicOrder) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::int32_t> d(-50, 50);
  for (int t = 0; t < 10000; ++t) {
    const VoxelCoord a{d(rng), d(rng), d(rng)};
    const VoxelCoord b{d(rng), d(rng), d(rng)};
    EXPECT_EQ(a < b, voxel_key(a) < voxel_key(b));
  }
}

// --- voxelize ---

TEST(Voxelize, SinglePoint) {
  const VoxelGrid g = voxelize({make_point(0.01, 0.01, 0.01)}, 0.02);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.cell(0).coord, (VoxelCoord{0, 0, 0}));
  EXPECT_EQ(g.cell(0).members, std::vector<std::size_t>{0});
}

TEST(Voxelize, ArithmeticMeanColor) {
  const VoxelGrid g = voxelize({make_point(0.001, 0, 0, 0, 0, 0), make_point(0.015, 0, 0, 1, 1, 1)}, 0.02);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g.cell(0).color(), Vec3(0.5, 0.5, 0.5));
  EXPECT_DOUBLE_EQ(g.cell(0).position().x(), 0.008);
}

TEST(Voxelize, FloorForNegativeCoordinates) {
  const VoxelGrid g = voxelize({make_point(-0.001, -0.02, 0.039)}, 0.02);
  EXPECT_EQ(g.cell(0).coord, (VoxelCoord{-1, -1, 1}));
}

TEST(Voxelize, Errors) {
  expect_validation_error([] { voxelize({}, 0.02); }, "empty input");
  expect_validation_error(
      [] {
        voxelize({make_point(0, 0, 0), make_point(0, std::numeric_limits<double>::infinity(), 0)}, 0.02);
      },
      "point 1: non-finite coordinate");
  EXPECT_THROW(voxelize({make_point(0, 0, 0)}, 0.0), ValidationError);
  EXPECT_THROW(voxelize({make_point(0, 0, 0)}, -1.0), ValidationError);
}

TEST(Voxelize, MatchesBruteForceGrouping) {
  const PointCloud cloud = testutil::random_cloud(10000, 42);
  const double size = 0.02;
  const VoxelGrid g = voxelize(cloud, size);

  std::map<std::array<long long, 3>, std::vector<std::size_t>> oracle;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    std::array<long long, 3> c{};
    for (int a = 0; a < 3; ++a) c[a] = static_cast<long long>(std::floor(cloud[i].position[a] / size));
    oracle[c].push_back(i);
  }
  ASSERT_EQ(g.size(), oracle.size());
  std::size_t v = 0;
  for (const auto& [c, members] : oracle) {
    const VoxelCell& cell = g.cell(v);
    EXPECT_EQ(cell.coord[0], c[0]);
    EXPECT_EQ(cell.coord[1], c[1]);
    EXPECT_EQ(cell.coord[2], c[2]);
    std::vector<std::size_t> got = cell.members;
    std::sort(got.begin(), got.end());
    EXPECT_EQ(got, members);
    for (std::size_t i : members) EXPECT_EQ(g.point_to_voxel()[i], v);
    ++v;
  }
}

TEST(Voxelize, MajorityVoteLowestIdOnTies) {
  PointCloud cloud;
  for (int id : {3, 5, 5, 3, 7}) {
    Point p = make_point(0.001, 0.001, 0.001);
    p.instance_id = id;
    p.semantic_id = id == 7 ? 7 : 1;
    cloud.push_back(p);
  }
  const VoxelGrid g = voxelize(cloud, 0.02);
  EXPECT_EQ(g.cell(0).instance_id, 3);
  EXPECT_EQ(g.cell(0).semantic_id, 1);
}

TEST(Voxelize, AbsentLabelVotesAndWinsTies) {
  PointCloud cloud{make_point(0, 0, 0), make_point(0, 0, 0)};
  cloud[1].instance_id = 2;
  const VoxelGrid g = voxelize(cloud, 0.02);
  EXPECT_FALSE(g.cell(0).instance_id.has_value());
}

TEST(Voxelize, CellsSortedAndNonEmpty) {
  const VoxelGrid g = voxelize(testutil::random_cloud(3000, 9, 0.5), 0.03);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_FALSE(g.cell(i).members.empty());
    if (i > 0) EXPECT_LT(g.cell(i - 1).coord, g.cell(i).coord);
  }
}

TEST(Voxelize, TranslationByWholeCellsShiftsCoordinates) {
  // Power-of-two voxel size and dyadic positions keep the shift exact.
  const double size = 0.03125;
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> d(0, 4096);
  PointCloud cloud;
  for (int i = 0; i < 2000; ++i) cloud.push_back(make_point(d(rng) / 1024.0, d(rng) / 1024.0, d(rng) / 1024.0));
  const int sx = 7, sy = -3, sz = 11;
  PointCloud moved = cloud;
  for (auto& p : moved) p.position += Vec3(sx * size, sy * size, sz * size);
  const VoxelGrid a = voxelize(cloud, size);
  const VoxelGrid b = voxelize(moved, size);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(b.cell(i).coord, (VoxelCoord{a.cell(i).coord[0] + sx, a.cell(i).coord[1] + sy, a.cell(i).coord[2] + sz}));
    EXPECT_EQ(a.cell(i).members, b.cell(i).members);
    EXPECT_EQ(a.cell(i).color(), b.cell(i).color());
  }
  EXPECT_EQ(a.point_to_voxel(), b.point_to_voxel());
}

TEST(Voxelize, CellCountNonIncreasingInVoxelSize) {
  const PointCloud cloud = testutil::random_cloud(5000, 17);
  // Nested grids (each size a multiple of the previous) make the count
  // monotone by construction; the arbitrary sizes test the same in practice.
  std::size_t prev = std::numeric_limits<std::size_t>::max();
  for (double s : {0.01, 0.02, 0.04, 0.08, 0.16, 0.32, 0.64, 1.28}) {
    const std::size_t n = voxelize(cloud, s).size();
    EXPECT_LE(n, prev) << "size " << s;
    prev = n;
  }
  prev = std::numeric_limits<std::size_t>::max();
  for (double s = 0.01; s < 1.0; s *= 1.37) {
    const std::size_t n = voxelize(cloud, s).size();
    EXPECT_LE(n, prev) << "size " << s;
    prev = n;
  }
}

TEST(Voxelize, DeterministicAcrossCalls) {
  const PointCloud cloud = testutil::random_cloud(4000, 21);
  const VoxelGrid a = voxelize(cloud, 0.05);
  const VoxelGrid b = voxelize(cloud, 0.05);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.cell(i).feature, b.cell(i).feature);
    EXPECT_EQ(a.cell(i).members, b.cell(i).members);
  }
}

// --- devoxelize ---

TEST(Devoxelize, OneCellThreePoints) {
  const VoxelGrid g = voxelize({make_point(0, 0, 0), make_point(0.001, 0, 0), make_point(0, 0.001, 0)}, 0.02);
  EXPECT_EQ(devoxelize(g, std::vector<int>{7}), (std::vector<int>{7, 7, 7}));
}

TEST(Devoxelize, LengthMismatchThrows) {
  const VoxelGrid g = voxelize({make_point(0, 0, 0), make_point(1, 0, 0)}, 0.02);
  EXPECT_THROW(devoxelize(g, std::vector<int>{1}), ValidationError);
  EXPECT_THROW(devoxelize(g, std::vector<int>{1, 2, 3}), ValidationError);
}

TEST(Devoxelize, PermutedLabelsPermuteConsistently) {
  const PointCloud cloud = testutil::random_cloud(500, 8);
  const VoxelGrid g = voxelize(cloud, 0.1);
  std::vector<int> labels(g.size());
  std::iota(labels.begin(), labels.end(), 0);
  std::vector<int> perm = labels;
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  const auto base = devoxelize(g, labels);
  const auto moved = devoxelize(g, perm);
  for (std::size_t i = 0; i < base.size(); ++i) EXPECT_EQ(moved[i], perm[static_cast<std::size_t>(base[i])]);
}

TEST(Devoxelize, MatchesDirectLookup) {
  const PointCloud cloud = testutil::random_cloud(3000, 12);
  const VoxelGrid g = voxelize(cloud, 0.07);
  std::mt19937_64 rng(3);
  std::vector<long> labels(g.size());
  for (auto& l : labels) l = static_cast<long>(rng() % 1000);
  const auto out = devoxelize(g, labels);
  ASSERT_EQ(out.size(), cloud.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    for (std::size_t i : g.cell(v).members) EXPECT_EQ(out[i], labels[v]);
  }
}

TEST(Devoxelize, RoundTripOfMajorityInstanceIds) {
  // One instance per 0.125 m slab along x, so no voxel mixes instances.
  PointCloud cloud = testutil::random_cloud(4000, 30);
  for (auto& p : cloud) p.instance_id = static_cast<int>(std::floor(p.position.x() / 0.125));
  const VoxelGrid g = voxelize(cloud, 0.0625);
  std::vector<int> ids(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) ids[v] = *g.cell(v).instance_id;
  const auto back = devoxelize(g, ids);
  for (std::size_t i = 0; i < cloud.size(); ++i) EXPECT_EQ(back[i], *cloud[i].instance_id);
}
