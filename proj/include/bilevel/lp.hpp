#pragma once

#include <limits>
#include <vector>

#include "bilevel/expr.hpp"

namespace bilevel {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Dense LP in general bound form:
//   minimize c.z  subject to  row_lo <= A z <= row_hi,  var_lo <= z <= var_hi.
// Infinite bounds are allowed on either side.
struct LinearProgram {
  Vec c;
  Vec var_lo;
  Vec var_hi;
  std::vector<Vec> A;
  Vec row_lo;
  Vec row_hi;

  int num_vars() const { return static_cast<int>(c.size()); }
  int num_rows() const { return static_cast<int>(A.size()); }

  int add_var(double lo = 0.0, double hi = kInf, double cost = 0.0);
  void add_row(Vec a, double lo, double hi);
  void add_eq(Vec a, double rhs) { add_row(std::move(a), rhs, rhs); }
  void add_le(Vec a, double rhs) { add_row(std::move(a), -kInf, rhs); }
  void add_ge(Vec a, double rhs) { add_row(std::move(a), rhs, kInf); }
  Vec zero_row() const { return Vec(c.size(), 0.0); }
};

enum class LPStatus { Optimal, Infeasible, Unbounded, IterationLimit };

struct LPResult {
  LPStatus status = LPStatus::Infeasible;
  double objective = kInf;
  Vec z;
  bool optimal() const { return status == LPStatus::Optimal; }
};

// Two-phase dense simplex (Dantzig pricing, Bland's rule once degenerate
// pivots stall). The final basic solution is recomputed by an LU solve.
LPResult solve_lp(const LinearProgram& lp);

}  // namespace bilevel
