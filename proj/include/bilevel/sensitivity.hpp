#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bilevel/polytope.hpp"
#include "bilevel/program.hpp"
#include "bilevel/valuefn.hpp"

namespace bilevel {

// Enumeration caps. The unions over r >= 0 in the estimates are cut at r_max
// (reported via Estimate::truncated); u_max bounds constraint multipliers
// in the CQ programs; simplex_steps and log_r_max drive the certify search.
struct Caps {
  double r_max = 10.0;
  double u_max = 100.0;
  int simplex_steps = 5;
  int log_r_max = 1;        // r grid {0} U {10^j : j = -3..log_r_max}
  int max_y_samples = 32;   // per solution set, farthest-point order
  std::size_t budget = 2'000'000;  // candidate bases per vertex enumeration
  // Grid solutions of smooth lower problems sit inside a value band, so the
  // y-stationarity rows may be off by a small amount. Residuals up to this
  // value are absorbed by relaxing those rows to the least attainable
  // residual; larger ones leave the multiplier set empty.
  double y_residual = 1e-2;

  void validate() const;
};

// Activity tolerance for points that came out of a grid search: kinks and
// constraints within a few finest cells of (x̄, y) count as active.
ActivityTolerance activity_for(const BilevelProgram& prog, const GridSpec& grid);

// Clarke generators of every datum at one point, in the (x, y) layout.
struct PointData {
  Vec y;
  std::vector<Vec> F, f;
  std::vector<std::vector<Vec>> g;  // generators of every g_i (empty when inactive)
  std::vector<int> active;          // active lower constraint indices
  double y_residual = 0.0;          // tolerated y-stationarity residual (see Caps)
};
// Throws InfeasiblePoint when y violates K(x̄) beyond the tolerance.
PointData point_data(const BilevelProgram& prog, const Vec& xbar, const Vec& y, ActivityTolerance tol);

enum class MultiplierKind { Lambda, LambdaO };

// Lambda: gamma in R^p.  LambdaO: (r, beta) in R^(1+p).
struct MultiplierSet {
  MultiplierKind kind = MultiplierKind::Lambda;
  Polytope set;
  std::vector<int> active;
  bool empty() const { return set.is_empty(); }
};

MultiplierSet lambda_set(const BilevelProgram& prog, const Vec& xbar, const Vec& y,
                         ActivityTolerance tol = {}, std::size_t budget = 2'000'000);
MultiplierSet lambda_o_set(const BilevelProgram& prog, const Vec& xbar, const Vec& y,
                           ActivityTolerance tol = {}, std::size_t budget = 2'000'000);
MultiplierSet lambda_set(const PointData& d, int n, int p, std::size_t budget);
MultiplierSet lambda_o_set(const PointData& d, int n, int p, std::size_t budget);

// {x* : (x*, 0) in ∂f + sum u_i ∂g_i, u >= 0 on active i}, the gradients of
// phi realized by multipliers at one lower solution.
Polytope phi_gradients(const PointData& d, int n, std::size_t budget);

// Multiplier terms of the upper system at one point, for a fixed shift phi:
// {z - r phi : (z, 0) in ∂F + r ∂f + sum u_i ∂g_i, 0 <= r <= r_max}.
// The last coordinate of the result is r.
Polytope upper_terms(const PointData& d, int n, const Vec& phi, double r_max, std::size_t budget);

enum class EstimateVariant { Semicompact, Convex, Semicontinuous };
EstimateVariant parse_estimate_variant(const std::string& s);
std::string to_string(EstimateVariant v);

struct Estimate {
  Polytope set;
  EstimateVariant variant = EstimateVariant::Semicompact;
  Mode mode = Mode::Optimistic;
  bool truncated = false;          // r reached r_max somewhere
  std::vector<Vec> ys;             // points of S_o (or S_o^p) used
  std::vector<Vec> ys_lower;       // points of S used for the Carathéodory data
  int empty_multiplier_points = 0; // sampled points whose multiplier sets were empty
  std::vector<std::string> notes;
};

// Upper estimate of ∂φ_o(x̄). ybar designates the point for the
// semicontinuous variant (default: first point of the S_o sample).
Estimate estimate_optimistic(const BilevelProgram& prog, const Vec& xbar, EstimateVariant variant,
                             const GridSpec& grid = {}, const Caps& caps = {}, const Vec* ybar = nullptr);
// Upper estimate of ∂φ_p(x̄): the optimistic estimate of the (-F)-program
// over S_o^p, negated (the eta aggregation is a convex hull, so negating
// the hull covers every Carathéodory tuple).
Estimate estimate_pessimistic(const BilevelProgram& prog, const Vec& xbar, EstimateVariant variant,
                              const GridSpec& grid = {}, const Caps& caps = {}, const Vec* ybar = nullptr);
// Hull of ∂_x F(x̄, y) over y in S_o(x̄). NotApplicable when x enters f or g.
Estimate estimate_simple_convex(const BilevelProgram& prog, const Vec& xbar, const GridSpec& grid = {},
                                const Caps& caps = {});

// First k points in farthest-point order, starting from pts[0]. Prefixes are
// nested, so a larger k never drops a point.
std::vector<Vec> farthest_points(const std::vector<Vec>& pts, std::size_t k);

// Counts random midpoint-convexity violations of e over the program box.
int convexity_violations(const Expr& e, const BilevelProgram& prog, int trials, std::uint64_t seed);

}  // namespace bilevel
