#include <doctest.h>

#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/sampling.hpp"
#include "bilevel/valuefn.hpp"
#include "oracles.hpp"

using namespace bilevel;

namespace {

bool has_cluster(const std::vector<Vec>& cl, const Vec& v, double tol) {
  for (const auto& c : cl) {
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) d = std::max(d, std::abs(c[i] - v[i]));
    if (d <= tol) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("rng is reproducible and in range") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) {
    double u = a.uniform();
    CHECK(u == b.uniform());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  auto s = a.unit_sphere(3);
  CHECK(std::abs(s[0] * s[0] + s[1] * s[1] + s[2] * s[2] - 1.0) < 1e-15);
}

TEST_CASE("fd subgradient samples: examples") {
  ScalarFn absx = [](const Vec& x) { return std::abs(x[0]); };
  FdOptions o;
  o.radius = 1e-3;
  auto cl = fd_subgradient_samples(absx, {0.0}, o);
  CHECK(cl.size() == 2);
  CHECK(has_cluster(cl, {1.0}, 1e-6));
  CHECK(has_cluster(cl, {-1.0}, 1e-6));

  ScalarFn sq = [](const Vec& x) { return x[0] * x[0]; };
  // merging into one cluster needs 2 * 2 * radius <= cluster_tol
  FdOptions tight;
  tight.radius = 1e-7;
  tight.step = 1e-8;
  cl = fd_subgradient_samples(sq, {1.0}, tight);
  REQUIRE(cl.size() == 1);
  CHECK(std::abs(cl[0][0] - 2.0) <= 1e-4);

  auto C = oracle::instanceC();
  GridSpec g = deepened(C, GridSpec{});
  cl = fd_subgradient_samples(value_function(C, ValueKind::PhiP, g), {0.0}, FdOptions{});
  CHECK(cl.size() == 2);
  CHECK(has_cluster(cl, {0.0}, 2 * g.finest_cell(C) + 1e-6));
  CHECK(has_cluster(cl, {1.0}, 2 * g.finest_cell(C) + 1e-6));
}

TEST_CASE("fd samples of infeasible points") {
  ScalarFn h = [](const Vec& x) -> double {
    if (x[0] > 0) throw Infeasible("right half");
    return -x[0];
  };
  FdOptions o;
  CHECK_THROWS_AS(fd_subgradient_samples(h, {0.0}, o), Infeasible);
  o.skip_infeasible = true;
  auto cl = fd_subgradient_samples(h, {0.0}, o);
  REQUIRE(cl.size() == 1);
  CHECK(std::abs(cl[0][0] + 1.0) < 1e-9);
}

TEST_CASE("lipschitz estimate: examples") {
  CHECK(std::abs(lipschitz_estimate([](const Vec& x) { return 3 * x[0]; }, {0.2}, 0.1, 100) - 3.0) <= 1e-9);
  CHECK(std::abs(lipschitz_estimate([](const Vec& x) { return std::abs(x[0]); }, {0.0}, 0.1, 100) - 1.0) <= 1e-6);
  auto A = oracle::instanceA();
  double L = lipschitz_estimate(value_function(A, ValueKind::PhiO), {0.5}, 0.1, 100);
  CHECK(L <= 2.3);
  CHECK(L >= 0.2);
  ScalarFn bad = [](const Vec& x) -> double {
    if (x[0] > 0.05) throw Infeasible("hole");
    return x[0];
  };
  CHECK(std::isinf(lipschitz_estimate(bad, {0.0}, 0.1, 100)));
}

TEST_CASE("polyhedral normal cones") {
  Expr x1 = Expr::x(1), x2 = Expr::x(2);
  auto N = normal_cone_polyhedral({-x1}, 1, {0.0});
  CHECK(N.vertices() == std::vector<Vec>{{0.0}});
  CHECK(N.rays() == std::vector<Vec>{{-1.0}});
  CHECK(contains(N, {-7.0}, 1e-12));
  CHECK_FALSE(contains(N, {0.5}, 1e-9));

  N = normal_cone_polyhedral({-x1}, 1, {0.4});
  CHECK(N.rays().empty());
  CHECK(N.vertices() == std::vector<Vec>{{0.0}});

  N = normal_cone_polyhedral({-x1, -x2}, 2, {0.0, 0.0});
  CHECK(N.rays().size() == 2);
  CHECK(contains(N, {-1.0, -3.0}, 1e-12));
  CHECK_FALSE(contains(N, {1.0, -3.0}, 1e-9));

  CHECK_THROWS_AS(normal_cone_polyhedral({Expr::pow(x1, 2) - Expr::constant(1)}, 1, {0.0}), NotPolyhedral);
  CHECK_THROWS_AS(normal_cone_polyhedral({-x1}, 1, {-1.0}), InfeasiblePoint);
}

TEST_CASE("conv-hull symmetry holds exactly at generator level") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  for (int k = 0; k < 200; ++k) {
    Expr e = oracle::random_expr(rng, 4, 2, 2);
    Vec x{u(rng), u(rng)}, y{u(rng), u(rng)};
    if (k % 3 == 0) y[0] = x[0];  // land on kinks of abs(x1 - y1) and friends
    std::vector<Vec> ge, gn;
    try {
      ge = clarke_generators(e, x, y);
      gn = clarke_generators(-e, x, y);
    } catch (const BudgetError&) {
      continue;
    }
    std::vector<Vec> neg;
    for (auto g : ge) {
      for (auto& c : g) c = -c;
      neg.push_back(g);
    }
    std::sort(neg.begin(), neg.end());
    CHECK(neg == gn);
    Polytope P = hull(4, ge), Q = negate(P);
    for (std::size_t i = 0; i < P.vertices().size(); ++i)
      for (std::size_t j = 0; j < 4; ++j) CHECK(Q.vertices()[i][j] == -P.vertices()[i][j]);
  }
}

TEST_CASE("fd clusters of convex piecewise-linear functions lie in the Clarke hull") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 60; ++k) {
    // max of a few affine pieces plus an abs term, all in x only
    Expr e = Expr::constant(std::round(u(rng) * 4) / 4) * Expr::x(1) + Expr::constant(std::round(u(rng) * 4) / 4) * Expr::x(2);
    for (int t = 0; t < 3; ++t) {
      Expr piece = Expr::constant(std::round(u(rng) * 4) / 4) * Expr::x(1) +
                   Expr::constant(std::round(u(rng) * 4) / 4) * Expr::x(2) + Expr::constant(std::round(u(rng) * 4) / 8);
      e = Expr::max(e, piece);
    }
    e = e + Expr::abs(Expr::x(1) - Expr::x(2));
    // base point on a kink of the abs term and sometimes at a max tie
    Vec xbar{std::round(u(rng) * 8) / 8, 0.0};
    xbar[1] = xbar[0];
    ScalarFn h = [&](const Vec& x) { return e.eval(x, {}); };
    FdOptions o;
    o.seed = 100 + k;
    auto cl = fd_subgradient_samples(h, xbar, o);
    auto gens = clarke_generators(e, xbar, Vec{}, ActivityTolerance(1e-4));
    Polytope P = hull(2, gens);
    for (const auto& c : cl) CHECK(distance(P, c) <= 1e-6);
  }
}

TEST_CASE("cluster merging") {
  auto cl = cluster_points({{1.0}, {1.0 + 5e-7}, {2.0}, {1.0 - 4e-7}}, 1e-6);
  REQUIRE(cl.size() == 2);
  CHECK(std::abs(cl[0][0] - (3.0 + 1e-7) / 3) < 1e-15);
  CHECK(cl[1][0] == 2.0);
}
