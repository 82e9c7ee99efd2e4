#include <cmath>
#include <random>

#include "bilevel/lp.hpp"
#include "bilevel/polytope.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bilevel;

TEST_CASE("lp small cases") {
  // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x,y >= 0  -> (1.6, 1.2)
  LinearProgram lp;
  lp.add_var(0, kInf, -1);
  lp.add_var(0, kInf, -1);
  lp.add_le({1, 2}, 4);
  lp.add_le({3, 1}, 6);
  auto r = solve_lp(lp);
  REQUIRE(r.optimal());
  CHECK(r.z[0] == doctest::Approx(1.6));
  CHECK(r.z[1] == doctest::Approx(1.2));

  LinearProgram inf;
  inf.add_var(0, 1);
  inf.add_ge({1}, 2);
  CHECK(solve_lp(inf).status == LPStatus::Infeasible);

  LinearProgram unb;
  unb.add_var(-kInf, kInf, 1);
  CHECK(solve_lp(unb).status == LPStatus::Unbounded);

  // free variables and equality rows
  LinearProgram eq;
  eq.add_var(-kInf, kInf, 1);
  eq.add_var(-kInf, 3, 0);
  eq.add_eq({1, 1}, 1);
  auto e = solve_lp(eq);
  REQUIRE(e.optimal());
  CHECK(e.z[0] == doctest::Approx(-2));
}

TEST_CASE("property: lp agrees with vertex enumeration on random bounded programs") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  int agree = 0;
  for (int t = 0; t < 200; ++t) {
    const int d = 2 + static_cast<int>(rng() % 2), rows = 3 + static_cast<int>(rng() % 4);
    std::vector<Vec> A;
    Vec b, c(d);
    for (int i = 0; i < rows; ++i) {
      Vec a(d);
      for (auto& v : a) v = std::round(u(rng) * 8) / 4;
      A.push_back(a);
      b.push_back(std::round(u(rng) * 8) / 4 + 0.5);
    }
    for (int k = 0; k < d; ++k) {  // box rows keep the oracle bounded
      Vec e(d, 0.0), f(d, 0.0);
      e[k] = 1;
      f[k] = -1;
      A.push_back(e);
      b.push_back(2);
      A.push_back(f);
      b.push_back(2);
    }
    for (auto& v : c) v = u(rng);
    LinearProgram lp;
    for (int k = 0; k < d; ++k) lp.add_var(-kInf, kInf, c[k]);
    for (std::size_t i = 0; i < A.size(); ++i) lp.add_le(A[i], b[i]);
    auto r = solve_lp(lp);
    double best = 0;
    Vec arg;
    bool feas = oracle::lp_by_vertices(A, b, c, best, arg);
    CHECK(r.optimal() == feas);
    if (feas && r.optimal()) {
      CHECK(std::abs(r.objective - best) <= 1e-8);
      ++agree;
    }
  }
  CHECK(agree > 50);
}

TEST_CASE("set algebra examples") {
  auto a = hull(1, {{-1.0}, {1.0}});
  auto b = hull(1, {{0.0}, {2.0}});
  auto s = minkowski_sum(a, b);
  CHECK(s.vertices().size() == 2);
  CHECK(s.vertices()[0][0] == -1.0);
  CHECK(s.vertices()[1][0] == 3.0);

  auto t = hull(2, {{1.0, 0.0}, {0.0, 1.0}});
  auto n = negate(t);
  CHECK(n.vertices()[0] == Vec{-1.0, 0.0});
  CHECK(n.vertices()[1] == Vec{0.0, -1.0});

  auto sq = hull(2, {{0, 0}, {1, 0}, {0, 1}, {1, 1}, {0.5, 0.5}}).reduced();
  CHECK(sq.vertices().size() == 4);
  CHECK(distance(sq, {2.0, 0.0}) == doctest::Approx(1.0));
  CHECK(contains(sq, {0.3, 0.9}, 1e-12));

  CHECK_THROWS(minkowski_sum(a, t));
  CHECK(scale(a, 0.0).vertices() == std::vector<Vec>{{0.0}});

  auto cone = hull(1, {{0.0}}, {{-3.0}});
  CHECK(distance(cone, {-100.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(distance(cone, {2.0}) == doctest::Approx(2.0));
  CHECK(excess(a, cone) == doctest::Approx(1.0));
  CHECK(std::isinf(excess(cone, a)));
}

TEST_CASE("property: distance invariants") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int t = 0; t < 60; ++t) {
    int d = 1 + static_cast<int>(rng() % 3);
    std::vector<Vec> pts(2 + rng() % 4, Vec(d));
    for (auto& p : pts)
      for (auto& c : p) c = u(rng);
    auto P = hull(d, pts);
    for (const auto& p : pts) CHECK(contains(P, p, 1e-12));
    Vec v(d), w(d);
    for (auto& c : v) c = u(rng);
    for (auto& c : w) c = u(rng);
    double dv = distance(P, v), dw = distance(P, w), vw = 0;
    for (int c = 0; c < d; ++c) vw = std::max(vw, std::abs(v[c] - w[c]));
    CHECK(dv >= 0);
    CHECK(std::abs(dv - dw) <= vw + 1e-9);
    if (pts.size() <= 3) CHECK(dv == doctest::Approx(oracle::hull_distance_scan(pts, v, 400)).epsilon(0.02).scale(1));
    // reduction keeps the set unchanged
    auto R = P.reduced();
    for (const auto& p : pts) CHECK(contains(R, p, 1e-9));
  }
}

TEST_CASE("vertex enumeration of a lifted polyhedron") {
  // {(a, b, c) >= 0 : a + b - c = 1}: vertices e1, e2; ray directions (1,0,1), (0,1,1)
  Eigen::MatrixXd M(1, 3);
  M << 1, 1, -1;
  Eigen::VectorXd b(1);
  b << 1;
  auto V = enumerate_vertices(M, b);
  CHECK(V.points.size() == 2);
  CHECK(V.rays.size() == 2);
  Eigen::MatrixXd L(1, 3);
  L << 0, 0, 1;  // project onto c: [0, inf)
  auto P = project_polyhedron(M, b, L);
  CHECK(P.vertices() == std::vector<Vec>{{0.0}});
  CHECK(P.rays() == std::vector<Vec>{{1.0}});
}
