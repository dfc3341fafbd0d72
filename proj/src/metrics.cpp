#include "ibc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ibc/errors.hpp"

namespace ibc::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<double> distance_matrix(const PointCloud& p, const PointCloud& q) {
  std::size_t m = p.points.rows(), n = q.points.rows();
  std::vector<double> c(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    double px = p.points.at(i, 0), py = p.points.at(i, 1);
    for (std::size_t j = 0; j < n; ++j) {
      double dx = px - q.points.at(j, 0), dy = py - q.points.at(j, 1);
      c[i * n + j] = std::sqrt(dx * dx + dy * dy);
    }
  }
  return c;
}

// Shortest-augmenting-path assignment with potentials; exact optimum of the
// n x n cost matrix. Returns the matched row of each column (1-indexed
// internals, classic formulation).
double assignment_cost(const std::vector<double>& cost, std::size_t n) {
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      std::size_t i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j)
    if (p[j] != 0) total += cost[(p[j] - 1) * n + (j - 1)];
  return total;
}

}  // namespace

void validate(const PointCloud& p) {
  if (p.points.shape().size() != 2 || p.points.cols() != 2)
    throw ShapeError(strf("point cloud must be Mx2, got ",
                          ad::shape_str(p.points.shape())));
  if (p.points.rows() == 0) throw Error("point cloud is empty");
  if (!p.points.all_finite()) throw NumericError("point cloud has non-finite points");
}

double emd_exact(const PointCloud& p, const PointCloud& q) {
  validate(p);
  validate(q);
  std::size_t m = p.points.rows(), n = q.points.rows();
  if (m != n)
    throw Error(strf("emd_exact needs equal point counts (got ", m, " vs ", n,
                     "); use emd_sinkhorn for unequal clouds"));
  if (m > 256) throw Error(strf("emd_exact size cap is 256, got ", m));
  std::vector<double> cost = distance_matrix(p, q);
  return assignment_cost(cost, m) / static_cast<double>(m);
}

SinkhornResult emd_sinkhorn(const PointCloud& p, const PointCloud& q, double epsilon,
                            std::size_t max_iters) {
  validate(p);
  validate(q);
  if (!(epsilon > 0)) throw Error("emd_sinkhorn: epsilon must be positive");
  std::size_t m = p.points.rows(), n = q.points.rows();
  std::vector<double> cost = distance_matrix(p, q);
  double la = -std::log(static_cast<double>(m));  // log(1/m)
  double lb = -std::log(static_cast<double>(n));

  std::vector<double> f(m, 0.0), g(n, 0.0);
  double eps_now = epsilon;

  auto lse_row = [&](std::size_t i) {
    double best = -kInf;
    for (std::size_t j = 0; j < n; ++j)
      best = std::max(best, (g[j] - cost[i * n + j]) / eps_now);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      s += std::exp((g[j] - cost[i * n + j]) / eps_now - best);
    return best + std::log(s);
  };
  auto lse_col = [&](std::size_t j) {
    double best = -kInf;
    for (std::size_t i = 0; i < m; ++i)
      best = std::max(best, (f[i] - cost[i * n + j]) / eps_now);
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      s += std::exp((f[i] - cost[i * n + j]) / eps_now - best);
    return best + std::log(s);
  };
  auto sweep = [&] {
    for (std::size_t i = 0; i < m; ++i) f[i] = eps_now * (la - lse_row(i));
    for (std::size_t j = 0; j < n; ++j) g[j] = eps_now * (lb - lse_col(j));
    // column marginals are exact right after the g update; convergence is
    // measured on the row marginals
    double violation = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        row += std::exp((f[i] + g[j] - cost[i * n + j]) / eps_now);
      violation = std::max(violation, std::abs(row - 1.0 / static_cast<double>(m)));
    }
    return violation;
  };

  SinkhornResult result;
  double violation = kInf;
  std::size_t it = 0;

  // warm start the potentials by annealing the regularizer down to the
  // target; plain iteration mixes too slowly when epsilon is small
  for (eps_now = std::max(epsilon, 0.2); eps_now > epsilon && it < max_iters;
       eps_now = std::max(epsilon, eps_now * 0.25))
    for (int level_it = 0; level_it < 8 && it < max_iters; ++level_it, ++it)
      sweep();

  eps_now = epsilon;
  for (; it < max_iters; ++it) {
    violation = sweep();
    if (violation < 1e-6) break;
  }
  if (violation >= 1e-6)
    throw NumericError(strf("emd_sinkhorn did not converge in ", max_iters,
                            " iterations; marginal violation ", violation));

  result.iterations = it + 1;
  result.marginal_violation = violation;
  result.plan.rows = m;
  result.plan.cols = n;
  auto& plan = result.plan.coupling;
  plan.resize(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      plan[i * n + j] = std::exp((f[i] + g[j] - cost[i * n + j]) / epsilon);

  // round the near-feasible plan onto the transport polytope (row scaling,
  // column scaling, rank-one residual), so the returned coupling satisfies
  // the marginals exactly and its cost cannot undercut the unregularized
  // optimum
  double am = 1.0 / static_cast<double>(m), bn = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += plan[i * n + j];
    double s = row > am ? am / row : 1.0;
    for (std::size_t j = 0; j < n; ++j) plan[i * n + j] *= s;
  }
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) col += plan[i * n + j];
    double s = col > bn ? bn / col : 1.0;
    for (std::size_t i = 0; i < m; ++i) plan[i * n + j] *= s;
  }
  std::vector<double> res_r(m), res_c(n);
  double res_total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += plan[i * n + j];
    res_r[i] = am - row;
    res_total += res_r[i];
  }
  for (std::size_t j = 0; j < n; ++j) {
    double col = 0.0;
    for (std::size_t i = 0; i < m; ++i) col += plan[i * n + j];
    res_c[j] = bn - col;
  }
  if (res_total > 0.0)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j)
        plan[i * n + j] += res_r[i] * res_c[j] / res_total;

  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) total += plan[i * n + j] * cost[i * n + j];
  result.cost = total;
  return result;
}

double normalized_performance(const PointCloud& initial, const PointCloud& final_cloud,
                              const PointCloud& goal) {
  double base = emd_exact(initial, goal);
  if (base <= 1e-9)
    throw Error(strf("normalized_performance: initial distance ", base,
                     " is degenerate (task already solved)"));
  double achieved = emd_exact(final_cloud, goal);
  return (base - achieved) / base;
}

}  // namespace ibc::metrics
