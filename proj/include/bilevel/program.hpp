#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "bilevel/expr.hpp"

namespace bilevel {

enum class Mode { Optimistic, Pessimistic };
std::string to_string(Mode m);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Leader: minimize F(x, y) over x with theta1(x) <= 0, where y is a follower
// solution of min_y f(x, y) s.t. g(x, y) <= 0. The boxes bound the region
// that grid searches sweep; they are not part of the feasible set X.
struct BilevelProgram {
  int n = 0;
  int m = 0;
  Expr F;
  Expr f;
  std::vector<Expr> g;
  std::vector<Expr> theta1;
  std::vector<Interval> x_box;
  std::vector<Interval> y_box;
  Mode mode = Mode::Optimistic;
  bool convex_declared = false;
  bool safe_domains_declared = false;

  int p() const { return static_cast<int>(g.size()); }
  int k() const { return static_cast<int>(theta1.size()); }

  // Throws IndexError / SemanticsError on inconsistent data.
  void validate() const;

  // Same program with F replaced by -F. The pessimistic value is minus the
  // optimistic value of this program.
  BilevelProgram with_negated_upper() const;

  bool in_x_box(std::span<const double> x, double tol = 0.0) const;
  bool in_y_box(std::span<const double> y, double tol = 0.0) const;
  bool lower_feasible(std::span<const double> x, std::span<const double> y, double tol) const;
  bool upper_feasible(std::span<const double> x, double tol) const;
  std::vector<int> active_lower(std::span<const double> x, std::span<const double> y,
                                double tol) const;
  std::vector<int> active_upper(std::span<const double> x, double tol) const;

  // True when some div/log node lacks a domain declaration. Analyses that
  // differentiate refuse such programs.
  bool has_undeclared_domains() const;
};

BilevelProgram parse_program(std::string_view text);
BilevelProgram load_program(const std::string& path);

// Parse a single expression in the problem-file grammar (n, m bound indices).
Expr parse_expr(std::string_view text, int n, int m, bool safe_domains = false);

}  // namespace bilevel
