#pragma once

// Independent reference computations for tests. Nothing here calls into the
// library's solvers; they share only the expression evaluator.

#include <functional>
#include <random>
#include <vector>

#include "bilevel/expr.hpp"
#include "bilevel/program.hpp"

namespace oracle {

using bilevel::Expr;
using bilevel::Vec;

// Random piecewise-smooth expression over x1..xn, y1..ym with bounded depth.
// Domains of div/log are kept safe by construction (positive denominators).
Expr random_expr(std::mt19937_64& rng, int depth, int n, int m);

// Central differences of e at (x, y) in the (x, y) layout.
Vec fd_gradient(const Expr& e, const Vec& x, const Vec& y, double h = 1e-5);

// Plain nested-loop minimum of f over a uniform y-grid subject to g <= tol.
// Returns false when no grid point is feasible.
struct GridMin {
  bool feasible = false;
  double value = 0.0;
  Vec argmin;
};
GridMin brute_lower(const bilevel::BilevelProgram& prog, const Vec& x, int points, double tol = 1e-9);

// Brute-force LP: min c.z s.t. A z <= b by enumerating every basis of tight
// rows. Only for tiny dimensions. Returns false when infeasible or unbounded
// within the enumerated vertices.
bool lp_by_vertices(const std::vector<Vec>& A, const Vec& b, const Vec& c, double& best, Vec& arg);

// Least infinity-norm distance from v to conv(points), computed by a dense
// scan of the simplex of weights (tiny sizes only).
double hull_distance_scan(const std::vector<Vec>& points, const Vec& v, int steps);

// Central-difference derivative of a scalar function of one variable.
double fd1(const std::function<double(double)>& h, double x, double step);

// Closed-form facts for the shipped instances.
inline double instanceA_phi_o(double x) { return (x - 1) * (x - 1) + x * x; }
inline double instanceC_phi_p(double x) { return x > 0 ? x : 0.0; }

// Seeded all-affine instance with n = 1: each y_j sits between two affine
// bounds in x that stay at least 0.8 apart on x in [-1, 1]; m = 2 adds a
// coupling row y1 + y2 <= s + t x1. Coefficients are multiples of 1/4.
bilevel::BilevelProgram random_affine_instance(std::mt19937_64& rng, int m);

// Seeded instance with f = 0 (so S = K) and a bilinear upper objective,
// the minimax setting.
bilevel::BilevelProgram random_constant_f_instance(std::mt19937_64& rng);

bilevel::BilevelProgram instanceA();
bilevel::BilevelProgram instanceB();
bilevel::BilevelProgram instanceC();

}  // namespace oracle
