#include <algorithm>
#include <cmath>
#include <random>

#include "bilevel/errors.hpp"
#include "bilevel/program.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace bilevel;

namespace {

const char* kMinimal = R"(
[dims]
n=1
m=1
[upper]
objective=(y1-1)^2 + x1^2
[lower]
objective=-y1
constraint=y1 - x1
constraint=-y1
[box]
x1=-1,2
y1=-2,2
)";

bool has_grad(const std::vector<Vec>& gens, const Vec& g, double tol = 1e-12) {
  return std::any_of(gens.begin(), gens.end(), [&](const Vec& h) {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (std::abs(h[i] - g[i]) > tol) return false;
    return true;
  });
}

}  // namespace

TEST_CASE("parse minimal program") {
  auto prog = parse_program(kMinimal);
  CHECK(prog.n == 1);
  CHECK(prog.m == 1);
  CHECK(prog.p() == 2);
  CHECK(prog.k() == 0);
  CHECK(prog.mode == Mode::Optimistic);
  Vec x{0.5}, y{0.5};
  CHECK(prog.F.eval(x, y) == doctest::Approx(0.5));
  CHECK(prog.y_box[0].lo == -2.0);
}

TEST_CASE("parse rejects bad index and y in upper constraint") {
  std::string bad = kMinimal;
  bad.replace(bad.find("constraint=-y1"), 14, "constraint=y2");
  CHECK_THROWS_AS(parse_program(bad), IndexError);

  std::string upper = kMinimal;
  upper.replace(upper.find("[lower]"), 7, "constraint=-x1 + y1\n[lower]");
  CHECK_THROWS_AS(parse_program(upper), SemanticsError);
}

TEST_CASE("syntax errors carry line and column") {
  std::string text = "[dims] n=1 m=1\n[upper]\nobjective = x1 + * y1\n[lower]\nobjective=0\n";
  try {
    parse_program(text);
    FAIL("expected SyntaxError");
  } catch (const SyntaxError& e) {
    CHECK(e.line() == 3);
    CHECK(e.col() == 18);
  }
  CHECK_THROWS_AS(parse_program("[dims] n=1 m=1\n[upper]\nobjective = x1^1.5\n[lower]\nobjective=0"),
                  SyntaxError);
  CHECK_THROWS_AS(parse_program("[bogus]\n"), SyntaxError);
}

TEST_CASE("shipped instances parse") {
  auto a = oracle::instanceA();
  CHECK(a.k() == 1);
  auto c = oracle::instanceC();
  CHECK(c.mode == Mode::Pessimistic);
  CHECK(c.f.is_constant());
}

TEST_CASE("eval examples") {
  Vec x{-2.0}, y{-3.0};
  CHECK(Expr::abs(Expr::x(1)).eval(x, y) == 2.0);
  CHECK(Expr::max(Expr::y(1), Expr::constant(0)).eval(x, y) == 0.0);
  auto e = parse_expr("(y1-1)^2 + x1^2", 1, 1);
  CHECK(e.eval(Vec{0.5}, Vec{0.5}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK_THROWS_AS(parse_expr("log(x1)", 1, 1).eval(Vec{0.0}, Vec{0.0}), DomainError);
  CHECK_THROWS_AS(parse_expr("1/(x1-1)", 1, 1).eval(Vec{1.0}, Vec{0.0}), DomainError);
}

TEST_CASE("smooth branch examples") {
  auto ax = Expr::abs(Expr::x(1));
  auto b0 = ax.smooth_branches(Vec{0.0}, Vec{0.0}, 1e-8);
  REQUIRE(b0.size() == 2);
  auto b2 = ax.smooth_branches(Vec{2.0}, Vec{0.0}, 1e-8);
  REQUIRE(b2.size() == 1);
  CHECK(b2[0].gradient[0] == 1.0);

  auto e = Expr::max(Expr::x(1) * Expr::y(1), Expr::constant(0));
  auto g = e.clarke_generators(Vec{0.0}, Vec{1.0}, 1e-8);
  CHECK(g.size() == 2);
  CHECK(has_grad(g, {1.0, 0.0}));
  CHECK(has_grad(g, {0.0, 0.0}));
}

TEST_CASE("clarke generators of a max of linear functions") {
  auto e = parse_expr("max(x1, -x1, 0.5*x1)", 1, 1);
  auto g = e.clarke_generators(Vec{0.0}, Vec{0.0}, 1e-8);
  CHECK(has_grad(g, {-1.0, 0.0}));
  CHECK(has_grad(g, {0.5, 0.0}));
  CHECK(has_grad(g, {1.0, 0.0}));
  auto smooth = parse_expr("x1*y1 + exp(y1)", 1, 1);
  CHECK(smooth.clarke_generators(Vec{1.0}, Vec{0.0}).size() == 1);
}

TEST_CASE("kink budget") {
  Expr e = Expr::x(1);
  for (int i = 0; i < 17; ++i) e = Expr::abs(e - Expr::constant(i));
  CHECK_THROWS_AS(e.smooth_branches(Vec{0.0}, Vec{0.0}), BudgetError);
}

TEST_CASE("affinity classification") {
  CHECK(parse_expr("2*x1 - y1/4 + 3", 1, 1).is_affine());
  CHECK_FALSE(parse_expr("x1*y1", 1, 1).is_affine());
  CHECK(parse_expr("x1*y1 + exp(x1)", 1, 1).is_affine_in_y());
  CHECK_FALSE(parse_expr("abs(y1)", 1, 1).is_affine_in_y());
  CHECK(parse_expr("abs(x1) + y1", 1, 1).is_affine_in_y());
  CHECK(parse_expr("max(1, 2)", 1, 1).is_constant());
  CHECK(parse_expr("x1/2", 1, 1).has_undeclared_domain() == false);
  CHECK(parse_expr("1/x1", 1, 1).has_undeclared_domain());
  CHECK_FALSE(parse_expr("1/x1", 1, 1, true).has_undeclared_domain());
}

TEST_CASE("property: branches match finite differences at differentiability points") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1.5, 1.5);
  int checked = 0;
  double worst = 0;
  while (checked < 300) {
    Expr e = oracle::random_expr(rng, 3, 2, 2);
    Vec x{u(rng), u(rng)}, y{u(rng), u(rng)};
    // keep clear of kinks by a margin much wider than the difference step
    if (e.smooth_branches(x, y, ActivityTolerance(1e-3, 0.0)).size() != 1) continue;
    auto br = e.smooth_branches(x, y);
    REQUIRE(br.size() == 1);
    CHECK(std::abs(br[0].value - e.eval(x, y)) <= 1e-12);
    auto fd = oracle::fd_gradient(e, x, y);
    for (std::size_t i = 0; i < fd.size(); ++i) worst = std::max(worst, std::abs(fd[i] - br[0].gradient[i]));
    auto gens = e.clarke_generators(x, y);
    CHECK(gens.size() == 1);
    ++checked;
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("property: negation mirrors generators exactly") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 100; ++t) {
    Expr e = oracle::random_expr(rng, 3, 1, 1);
    Vec x{std::round(u(rng) * 2) / 2}, y{std::round(u(rng) * 2) / 2};
    auto g = e.clarke_generators(x, y);
    auto h = (-e).clarke_generators(x, y);
    for (auto& v : g)
      for (auto& c : v) c = -c;
    std::sort(g.begin(), g.end());
    CHECK(g == h);
    for (const auto& b : e.smooth_branches(x, y)) CHECK(std::abs(b.value - e.eval(x, y)) <= 1e-12);
  }
}
