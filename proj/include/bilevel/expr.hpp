#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace bilevel {

using Vec = std::vector<double>;

// Piecewise-smooth scalar expressions over leader variables x1..xn and
// follower variables y1..ym. Nonsmoothness enters only through abs, max and
// min nodes, so every expression is a finite selection of smooth branches.
enum class Op { Const, VarX, VarY, Neg, Add, Sub, Mul, Div, Pow, Exp, Log, Abs, Max, Min };

// Kink-detection tolerance: a kink node is active when its switching quantity
// is within abs + rel * scale, where scale is the magnitude of the subterm.
struct ActivityTolerance {
  double abs = 1e-8;
  double rel = 1e-8;

  ActivityTolerance() = default;
  ActivityTolerance(double tol) : abs(tol), rel(tol) {}  // NOLINT: intentional implicit
  ActivityTolerance(double abs_tol, double rel_tol) : abs(abs_tol), rel(rel_tol) {}

  double at(double scale) const { return abs + rel * scale; }
};

// One smooth selection of an expression that is active at the evaluation
// point. The gradient is laid out as (d/dx1..d/dxn, d/dy1..d/dym).
struct Branch {
  std::string id;
  double value = 0.0;
  Vec gradient;
};

inline constexpr int kMaxKinkNodes = 16;

class Expr {
 public:
  struct Node;

  Expr();  // the constant 0

  static Expr constant(double value);
  static Expr x(int index);  // 1-based
  static Expr y(int index);  // 1-based
  static Expr pow(const Expr& base, int exponent);
  static Expr exp(const Expr& arg);
  static Expr log(const Expr& arg, bool declared_safe = false);
  static Expr abs(const Expr& arg);
  static Expr max(const Expr& lhs, const Expr& rhs);
  static Expr min(const Expr& lhs, const Expr& rhs);
  static Expr divide(const Expr& num, const Expr& den, bool declared_safe = false);

  friend Expr operator-(const Expr& arg);
  friend Expr operator+(const Expr& lhs, const Expr& rhs);
  friend Expr operator-(const Expr& lhs, const Expr& rhs);
  friend Expr operator*(const Expr& lhs, const Expr& rhs);
  friend Expr operator/(const Expr& lhs, const Expr& rhs);

  Op op() const;
  double constant_value() const;  // only for Op::Const
  int index() const;              // only for variables
  int exponent() const;           // only for Op::Pow
  bool declared_safe() const;     // only meaningful for Div/Log
  Expr child(int which) const;    // 0 or 1
  int arity() const;

  double eval(std::span<const double> x, std::span<const double> y) const;

  // Every smooth selection active at (x, y) under the given kink tolerance.
  // Throws BudgetError when the expression has more than kMaxKinkNodes kinks.
  std::vector<Branch> smooth_branches(std::span<const double> x, std::span<const double> y,
                                      ActivityTolerance tol = {}) const;

  // Distinct gradients of the active branches; their convex hull contains the
  // Clarke generalized gradient and equals it for max-type compositions.
  std::vector<Vec> clarke_generators(std::span<const double> x, std::span<const double> y,
                                     ActivityTolerance tol = {}) const;

  int kink_count() const;
  int max_x_index() const;  // 0 when no x-variable occurs
  int max_y_index() const;
  bool uses_x() const { return max_x_index() > 0; }
  bool uses_y() const { return max_y_index() > 0; }
  bool is_constant() const;
  bool is_affine() const;       // jointly affine in (x, y)
  bool is_affine_in_y() const;  // affine in y, x treated as a parameter
  bool is_affine_in_x() const;  // affine in x, y treated as a parameter
  bool has_undeclared_domain() const;  // div/log that may leave its domain

  std::string to_string() const;

 private:
  explicit Expr(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

// Free-function spellings used throughout the library.
double eval_expr(const Expr& e, std::span<const double> x, std::span<const double> y);
std::vector<Branch> smooth_branches(const Expr& e, std::span<const double> x,
                                    std::span<const double> y, ActivityTolerance tol = {});
std::vector<Vec> clarke_generators(const Expr& e, std::span<const double> x,
                                   std::span<const double> y, ActivityTolerance tol = {});

// For e affine in y at a fixed x: e(x, y) = c0 + c.y, read off by evaluation.
struct AffineForm {
  double c0 = 0.0;
  Vec c;
  double at(std::span<const double> y) const;
};
AffineForm affine_form_in_y(const Expr& e, std::span<const double> x, int m);

// Split a full (x, y) gradient into its parts.
Vec x_part(const Vec& gradient, int n);
Vec y_part(const Vec& gradient, int n);

// Project generators onto the x (or y) block and drop exact duplicates.
std::vector<Vec> x_generators(const std::vector<Vec>& gens, int n);
std::vector<Vec> y_generators(const std::vector<Vec>& gens, int n);

}  // namespace bilevel
