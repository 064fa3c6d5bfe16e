#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "smear/kdtree.hpp"

using smear::KdTree;

namespace {

std::vector<Eigen::Vector3d> random_points(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-100.0, 100.0);
  std::vector<Eigen::Vector3d> pts(n);
  for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
  return pts;
}

std::vector<KdTree::Neighbor> brute_knn(const std::vector<Eigen::Vector3d>& pts, const Eigen::Vector3d& q,
                                        std::size_t k) {
  std::vector<KdTree::Neighbor> all;
  for (std::size_t i = 0; i < pts.size(); ++i)
    all.push_back({static_cast<std::uint32_t>(i), (pts[i] - q).squaredNorm()});
  std::sort(all.begin(), all.end());
  all.resize(std::min(k, all.size()));
  return all;
}

}  // namespace

TEST(KdTree, NearestMatchesBruteForce) {
  std::mt19937_64 rng(1);
  const auto pts = random_points(rng, 3000);
  const KdTree tree(pts);
  for (const auto& q : random_points(rng, 300)) {
    const auto expect = brute_knn(pts, q, 1).front();
    KdTree::Neighbor got;
    ASSERT_TRUE(tree.nearest(q, 1e9, got));
    EXPECT_EQ(got.index, expect.index);
    EXPECT_DOUBLE_EQ(got.squared_distance, expect.squared_distance);
    const bool within = tree.nearest(q, std::sqrt(expect.squared_distance) * 0.999, got);
    EXPECT_FALSE(within);
  }
}

TEST(KdTree, KnnMatchesBruteForce) {
  std::mt19937_64 rng(2);
  const auto pts = random_points(rng, 2000);
  const KdTree tree(pts);
  for (const auto& q : random_points(rng, 100)) {
    const auto expect = brute_knn(pts, q, 17);
    const auto got = tree.knn(q, 17);
    ASSERT_EQ(got.size(), expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_EQ(got[i].index, expect[i].index);
  }
}

TEST(KdTree, SmallAndEmptyTrees) {
  const std::vector<Eigen::Vector3d> none;
  KdTree::Neighbor n;
  EXPECT_FALSE(KdTree(none).nearest({0, 0, 0}, 10.0, n));
  EXPECT_TRUE(KdTree(none).knn({0, 0, 0}, 3).empty());
  const std::vector<Eigen::Vector3d> two = {{0, 0, 0}, {1, 0, 0}};
  EXPECT_EQ(KdTree(two).knn({0.9, 0, 0}, 5).size(), 2u);
  EXPECT_EQ(KdTree(two).knn({0.9, 0, 0}, 5).front().index, 1u);
}
