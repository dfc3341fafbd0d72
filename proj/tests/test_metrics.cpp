#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ibc/errors.hpp"
#include "ibc/metrics.hpp"
#include "ibc/rng.hpp"

using namespace ibc;
using namespace ibc::metrics;
using ad::Tensor;

namespace {

PointCloud random_cloud(std::size_t m, Rng& rng) {
  std::vector<double> pts(m * 2);
  for (double& v : pts) v = rng.uniform(0.0, 1.0);
  return PointCloud{Tensor::matrix(m, 2, std::move(pts))};
}

// Exhaustive assignment over all permutations; oracle for emd_exact.
double brute_force_emd(const PointCloud& p, const PointCloud& q) {
  std::size_t m = p.points.rows();
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double dx = p.points.at(i, 0) - q.points.at(perm[i], 0);
      double dy = p.points.at(i, 1) - q.points.at(perm[i], 1);
      total += std::sqrt(dx * dx + dy * dy);
    }
    best = std::min(best, total);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(m);
}

PointCloud translated(const PointCloud& p, double tx, double ty) {
  std::size_t m = p.points.rows();
  std::vector<double> pts(m * 2);
  for (std::size_t i = 0; i < m; ++i) {
    pts[i * 2] = p.points.at(i, 0) + tx;
    pts[i * 2 + 1] = p.points.at(i, 1) + ty;
  }
  return PointCloud{Tensor::matrix(m, 2, std::move(pts))};
}

}  // namespace

TEST_CASE("identical clouds have zero distance") {
  Rng rng(1);
  PointCloud p = random_cloud(9, rng);
  CHECK(emd_exact(p, p) == 0.0);
}

TEST_CASE("two-point analytic case") {
  PointCloud p{Tensor::matrix(2, 2, {0, 0, 1, 0})};
  PointCloud q{Tensor::matrix(2, 2, {0, 1, 1, 1})};
  CHECK(emd_exact(p, q) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("exact EMD equals the brute-force permutation minimum") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t m = 2 + rng.index(5);  // 2..6
    PointCloud p = random_cloud(m, rng);
    PointCloud q = random_cloud(m, rng);
    double fast = emd_exact(p, q);
    double slow = brute_force_emd(p, q);
    CHECK(std::abs(fast - slow) <= 1e-9);
  }
}

TEST_CASE("exact EMD is symmetric") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    PointCloud p = random_cloud(8, rng);
    PointCloud q = random_cloud(8, rng);
    CHECK(emd_exact(p, q) == doctest::Approx(emd_exact(q, p)).epsilon(1e-12));
  }
}

TEST_CASE("triangle inequality holds on random triples") {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    std::size_t m = 2 + rng.index(5);
    PointCloud p = random_cloud(m, rng);
    PointCloud q = random_cloud(m, rng);
    PointCloud r = random_cloud(m, rng);
    CHECK(emd_exact(p, r) <= emd_exact(p, q) + emd_exact(q, r) + 1e-9);
  }
}

TEST_CASE("unequal point counts are rejected with a pointer to sinkhorn") {
  Rng rng(5);
  PointCloud p = random_cloud(4, rng);
  PointCloud q = random_cloud(5, rng);
  CHECK_THROWS_WITH_AS(emd_exact(p, q), doctest::Contains("emd_sinkhorn"), Error);
}

TEST_CASE("sinkhorn approaches exact transport at small regularization") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t m = 3 + rng.index(4);  // 3..6
    PointCloud p = random_cloud(m, rng);
    PointCloud q = random_cloud(m, rng);
    double exact = emd_exact(p, q);
    SinkhornResult sk = emd_sinkhorn(p, q, 0.001, 200000);
    CHECK(sk.cost >= exact - 1e-9);              // plan cost cannot beat the optimum
    CHECK(std::abs(sk.cost - exact) <= 0.05 * std::max(exact, 1e-12));
  }
}

TEST_CASE("sinkhorn self-distance stays below the entropic bias bound") {
  Rng rng(7);
  PointCloud p = random_cloud(128, rng);
  SinkhornResult sk = emd_sinkhorn(p, p, 0.01, 5000);
  CHECK(sk.cost < 0.05);
}

TEST_CASE("sinkhorn plan marginals are uniform within tolerance") {
  Rng rng(8);
  PointCloud p = random_cloud(7, rng);
  PointCloud q = random_cloud(9, rng);
  SinkhornResult sk = emd_sinkhorn(p, q, 0.01, 20000);
  for (std::size_t i = 0; i < sk.plan.rows; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < sk.plan.cols; ++j) row += sk.plan.at(i, j);
    CHECK(std::abs(row - 1.0 / 7.0) <= 1e-6);
  }
  for (std::size_t j = 0; j < sk.plan.cols; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < sk.plan.rows; ++i) col += sk.plan.at(i, j);
    CHECK(std::abs(col - 1.0 / 9.0) <= 1e-6);
  }
}

TEST_CASE("sinkhorn reports non-convergence with the violation") {
  Rng rng(9);
  PointCloud p = random_cloud(16, rng);
  PointCloud q = random_cloud(16, rng);
  CHECK_THROWS_AS(emd_sinkhorn(p, q, 0.0005, 2), NumericError);
}

TEST_CASE("normalized performance endpoints") {
  Rng rng(10);
  PointCloud p0 = random_cloud(12, rng);
  PointCloud goal = random_cloud(12, rng);
  CHECK(normalized_performance(p0, goal, goal) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(normalized_performance(p0, p0, goal) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK_THROWS_AS(normalized_performance(p0, goal, p0), Error);  // zero base distance
}

TEST_CASE("normalized performance is invariant under joint translation") {
  Rng rng(11);
  PointCloud p0 = random_cloud(10, rng);
  PointCloud pt = random_cloud(10, rng);
  PointCloud goal = random_cloud(10, rng);
  double score = normalized_performance(p0, pt, goal);
  double moved = normalized_performance(translated(p0, 0.37, -0.21),
                                        translated(pt, 0.37, -0.21),
                                        translated(goal, 0.37, -0.21));
  CHECK(score == doctest::Approx(moved).epsilon(1e-9));
}
