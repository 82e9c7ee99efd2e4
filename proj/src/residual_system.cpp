#include "bilevel/residual_system.hpp"

#include <algorithm>

namespace bilevel {

ResidualLP::ResidualLP() { lp_.add_var(0.0, kInf, 1.0); }

int ResidualLP::var(double lo, double hi) { return lp_.add_var(lo, hi, 0.0); }

int ResidualLP::weights(std::size_t count) {
  const int first = lp_.num_vars();
  for (std::size_t k = 0; k < count; ++k) lp_.add_var();
  return first;
}

Vec ResidualLP::dense(const Terms& row, int width) const {
  Vec a(width, 0.0);
  for (const auto& [v, c] : row) a[v] += c;
  return a;
}

void ResidualLP::residual_row(const Terms& row, double rhs, int scale_var) {
  residual_.push_back({row, rhs, scale_var});
}

void ResidualLP::eq(const Terms& row, double rhs) { lp_.add_eq(dense(row, lp_.num_vars()), rhs); }
void ResidualLP::le(const Terms& row, double rhs) { lp_.add_le(dense(row, lp_.num_vars()), rhs); }

void ResidualLP::fix(int var, double value) {
  lp_.var_lo[var] = value;
  lp_.var_hi[var] = value;
}

LPResult ResidualLP::solve() const {
  const int width = lp_.num_vars();
  LinearProgram first = lp_;
  for (auto& row : first.A) row.resize(width, 0.0);
  for (const auto& r : residual_) {
    Vec a = dense(r.row, width), b = a;
    a[0] = -1.0;
    b[0] = 1.0;
    first.add_le(std::move(a), r.rhs);
    first.add_ge(std::move(b), r.rhs);
  }
  LPResult one = solve_lp(first);
  if (!one.optimal()) return one;

  const double bound = std::max(one.objective, 0.0) * (1 + 1e-9) + 1e-12;
  LinearProgram second = lp_;
  for (auto& row : second.A) row.resize(width, 0.0);
  second.var_hi[0] = bound;
  second.c.assign(width, 1.0);
  second.c[0] = 0.0;
  for (const auto& r : residual_) {
    Vec a = dense(r.row, width), b = a;
    if (r.scale_var < 0) {
      a[0] = -1.0;
      b[0] = 1.0;
    } else {
      a[r.scale_var] -= bound;
      b[r.scale_var] += bound;
    }
    second.add_le(std::move(a), r.rhs);
    second.add_ge(std::move(b), r.rhs);
  }
  LPResult two = solve_lp(second);
  if (!two.optimal()) return one;
  two.objective = one.objective;
  return two;
}

void VecRows::add_weighted(const std::vector<Vec>& gens, int first, double sign, std::size_t offset) {
  for (std::size_t k = 0; k < gens.size(); ++k)
    for (std::size_t c = 0; c < rows.size(); ++c) {
      double coef = sign * gens[k][offset + c];
      if (coef != 0.0) rows[c].push_back({first + static_cast<int>(k), coef});
    }
}

void VecRows::add_scaled(int var, const Vec& v, double sign) {
  for (std::size_t c = 0; c < rows.size(); ++c)
    if (v[c] != 0.0) rows[c].push_back({var, sign * v[c]});
}

double value_of(const Terms& row, const Vec& z) {
  double s = 0.0;
  for (const auto& [v, c] : row) s += c * z[v];
  return s;
}

}  // namespace bilevel
