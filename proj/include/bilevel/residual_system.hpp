#pragma once

#include <utility>
#include <vector>

#include "bilevel/lp.hpp"

namespace bilevel {

// Sparse linear form over the variables of a ResidualLP.
using Terms = std::vector<std::pair<int, double>>;

// Builder for "minimize the max-norm residual t of a set of linear rows"
// programs. Variable 0 is t; everything else is added by the caller.
//
// solve() is lexicographic: once the least residual t* is known, a second
// program keeps every residual row within t* and minimizes the sum of all
// other variables, so the reported multipliers are small and reproducible.
// Rows registered with a scale variable e are held to |row - rhs| <= t* e in
// that second stage (rows homogenized by e).
class ResidualLP {
 public:
  ResidualLP();

  int var(double lo = 0.0, double hi = kInf);
  // One nonnegative weight per generator; returns the first index.
  int weights(std::size_t count);

  void residual_row(const Terms& row, double rhs, int scale_var = -1);  // |row - rhs| <= t
  void eq(const Terms& row, double rhs);
  void le(const Terms& row, double rhs);

  int residual_var() const { return 0; }
  int num_vars() const { return lp_.num_vars(); }
  void fix(int var, double value);

  // objective of the result is t*; z comes from the second stage when it
  // solves, else from the first
  LPResult solve() const;

 private:
  struct ResidualRow {
    Terms row;
    double rhs;
    int scale_var;
  };
  Vec dense(const Terms& row, int width) const;
  LinearProgram lp_;
  std::vector<ResidualRow> residual_;
};

// Accumulates one linear row per coordinate of a vector-valued expression.
struct VecRows {
  std::vector<Terms> rows;
  explicit VecRows(std::size_t dim) : rows(dim) {}

  // sum_k z[first + k] * sign * gens[k][offset + c] into coordinate c.
  void add_weighted(const std::vector<Vec>& gens, int first, double sign, std::size_t offset = 0);
  // z[var] * sign * v[c]
  void add_scaled(int var, const Vec& v, double sign);
};

double value_of(const Terms& row, const Vec& z);

}  // namespace bilevel
