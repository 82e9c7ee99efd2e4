#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/program.hpp"

namespace bilevel {

namespace {

void check_indices(const Expr& e, int n, int m, const char* where) {
  if (e.max_x_index() > n)
    throw IndexError(std::string(where) + ": x" + std::to_string(e.max_x_index()) +
                     " exceeds n=" + std::to_string(n));
  if (e.max_y_index() > m)
    throw IndexError(std::string(where) + ": y" + std::to_string(e.max_y_index()) +
                     " exceeds m=" + std::to_string(m));
}

bool in_box(std::span<const double> v, const std::vector<Interval>& box, double tol) {
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] < box[i].lo - tol || v[i] > box[i].hi + tol) return false;
  return true;
}

}  // namespace

void BilevelProgram::validate() const {
  if (n < 1 || m < 1) throw SemanticsError("dimensions n and m must be positive");
  if (static_cast<int>(x_box.size()) != n || static_cast<int>(y_box.size()) != m)
    throw SemanticsError("box does not match the declared dimensions");
  for (const auto* box : {&x_box, &y_box})
    for (const auto& iv : *box)
      if (!std::isfinite(iv.lo) || !std::isfinite(iv.hi) || iv.lo > iv.hi)
        throw SemanticsError("box intervals must be finite and nonempty");
  check_indices(F, n, m, "upper objective");
  check_indices(f, n, m, "lower objective");
  for (const auto& e : g) check_indices(e, n, m, "lower constraint");
  for (const auto& e : theta1) {
    check_indices(e, n, m, "upper constraint");
    if (e.uses_y()) throw SemanticsError("upper constraint references a y-variable");
  }
}

BilevelProgram BilevelProgram::with_negated_upper() const {
  BilevelProgram out = *this;
  out.F = -F;
  return out;
}

bool BilevelProgram::in_x_box(std::span<const double> x, double tol) const {
  return in_box(x, x_box, tol);
}
bool BilevelProgram::in_y_box(std::span<const double> y, double tol) const {
  return in_box(y, y_box, tol);
}

bool BilevelProgram::lower_feasible(std::span<const double> x, std::span<const double> y,
                                    double tol) const {
  for (const auto& e : g)
    if (!(e.eval(x, y) <= tol)) return false;
  return true;
}

bool BilevelProgram::upper_feasible(std::span<const double> x, double tol) const {
  for (const auto& e : theta1)
    if (!(e.eval(x, {}) <= tol)) return false;
  return true;
}

std::vector<int> BilevelProgram::active_lower(std::span<const double> x,
                                              std::span<const double> y, double tol) const {
  std::vector<int> act;
  for (int i = 0; i < p(); ++i)
    if (std::abs(g[i].eval(x, y)) <= tol) act.push_back(i);
  return act;
}

std::vector<int> BilevelProgram::active_upper(std::span<const double> x, double tol) const {
  std::vector<int> act;
  for (int i = 0; i < k(); ++i)
    if (std::abs(theta1[i].eval(x, {})) <= tol) act.push_back(i);
  return act;
}

bool BilevelProgram::has_undeclared_domains() const {
  if (F.has_undeclared_domain() || f.has_undeclared_domain()) return true;
  for (const auto& e : g)
    if (e.has_undeclared_domain()) return true;
  for (const auto& e : theta1)
    if (e.has_undeclared_domain()) return true;
  return false;
}

std::string to_string(Mode m) { return m == Mode::Optimistic ? "optimistic" : "pessimistic"; }

}  // namespace bilevel
