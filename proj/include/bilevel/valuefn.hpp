#pragma once

#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "bilevel/program.hpp"

namespace bilevel {

// Grid search over the y-box with multiplicative refinement: a coarse tensor
// grid, then `depth` levels that each place a finer local grid (cell / 10)
// around the best `incumbents` points found so far.
struct GridSpec {
  int points = 201;
  int depth = 3;
  double tol_feas = 1e-9;
  int incumbents = 8;
  int refine_points = 21;
  bool polish = true;    // exact LP solve when the data are affine in y
  bool parallel = true;  // OpenMP sweep; false selects the serial reference

  void validate() const;
  double coarse_cell(const BilevelProgram& prog) const;  // widest coordinate
  double finest_cell(const BilevelProgram& prog) const;
};

inline constexpr double kAutoTol = std::numeric_limits<double>::quiet_NaN();

// Default optimality band for solution-set membership.
inline double default_tol_val(double value) { return 1e-6 * (1.0 + (value < 0 ? -value : value)); }

struct SolutionSet {
  std::vector<Vec> points;
  double value = 0.0;    // the optimum the points witness
  double tol_val = 0.0;  // membership band
};

// Every evaluated candidate at one x, reusable across the value queries.
struct ValueAnalysis {
  Vec x;
  double phi = 0.0;
  double tol_val = 0.0;
  std::vector<Vec> ys;   // all evaluated points
  std::vector<double> f; // lower objective at ys (NaN when infeasible)
  std::vector<double> F; // upper objective at ys
  std::vector<char> feasible;
  double finest_cell = 0.0;
};

// Lower-level sweep at x. Throws Infeasible when no point is feasible.
ValueAnalysis analyze_lower(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {});

double lower_value(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {});
SolutionSet lower_solutions(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {},
                            double tol_val = kAutoTol);

double optimistic_value(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {});
double pessimistic_value(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {});
// Maximizes F directly instead of going through the negated program.
double pessimistic_value_direct(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {});

SolutionSet optimistic_solutions(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {},
                                 double tol_val = kAutoTol);
SolutionSet pessimistic_solutions(const BilevelProgram& prog, const Vec& x, const GridSpec& grid = {},
                                  double tol_val = kAutoTol);

enum class ValueKind { Phi, PhiO, PhiP };
ValueKind parse_value_kind(const std::string& s);
std::string to_string(ValueKind k);
double value_of(const BilevelProgram& prog, ValueKind which, const Vec& x, const GridSpec& grid = {});

// The value function as a callable of x (Infeasible propagates).
std::function<double(const Vec&)> value_function(const BilevelProgram& prog, ValueKind which, GridSpec grid = {});

// Copy of `base` deepened until the finest cell is at most `cell`. Finite
// differences of value functions need values far below the default slack.
GridSpec deepened(const BilevelProgram& prog, GridSpec base, double cell = 1e-10);

struct CurveRow {
  Vec x;
  double value = 0.0;  // NaN when infeasible
  bool feasible = true;
};

// Tensor grid of x points from per-coordinate (lo, hi, count) ranges.
std::vector<Vec> x_grid(const std::vector<Interval>& ranges, const std::vector<int>& counts);

// Throws UnsupportedDimension for n > 2. Infeasible points become rows
// flagged infeasible rather than errors.
std::vector<CurveRow> sample_curve(const BilevelProgram& prog, ValueKind which,
                                   const std::vector<Vec>& xs, const GridSpec& grid = {});
void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows, int n);

// Shortest round-trip decimal text for a double.
std::string format_double(double v);

}  // namespace bilevel
