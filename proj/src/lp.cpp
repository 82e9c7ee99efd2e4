#include "bilevel/lp.hpp"

#include <Eigen/Dense>
#include <cmath>

namespace bilevel {

int LinearProgram::add_var(double lo, double hi, double cost) {
  c.push_back(cost);
  var_lo.push_back(lo);
  var_hi.push_back(hi);
  for (auto& row : A) row.push_back(0.0);
  return num_vars() - 1;
}

void LinearProgram::add_row(Vec a, double lo, double hi) {
  a.resize(c.size(), 0.0);
  A.push_back(std::move(a));
  row_lo.push_back(lo);
  row_hi.push_back(hi);
}

namespace {

constexpr double kPivTol = 1e-9;
constexpr double kCostTol = 1e-9;
constexpr int kMaxIter = 50000;

// z_j = shift + sign * s[pos] - s[neg]
struct VarMap {
  int pos = -1;
  int neg = -1;
  double shift = 0.0;
  double sign = 1.0;
};

class Tableau {
 public:
  Tableau(int rows, int cols) : R_(rows), C_(cols), t_((rows + 1) * (cols + 1), 0.0), basis_(rows, -1) {}

  double& at(int i, int j) { return t_[i * (C_ + 1) + j]; }
  double at(int i, int j) const { return t_[i * (C_ + 1) + j]; }
  double& rhs(int i) { return at(i, C_); }
  double& cost(int j) { return at(R_, j); }
  int rows() const { return R_; }
  int cols() const { return C_; }
  std::vector<int>& basis() { return basis_; }

  void pivot(int r, int q) {
    double p = at(r, q);
    for (int j = 0; j <= C_; ++j) at(r, j) /= p;
    at(r, q) = 1.0;
    for (int i = 0; i <= R_; ++i) {
      if (i == r) continue;
      double f = at(i, q);
      if (f == 0.0) continue;
      for (int j = 0; j <= C_; ++j) at(i, j) -= f * at(r, j);
      at(i, q) = 0.0;
    }
    basis_[r] = q;
  }

  // Runs simplex on the current cost row over columns [0, allowed).
  // Returns false on unboundedness; sets hit_limit on iteration exhaustion.
  bool optimize(int allowed, bool& hit_limit) {
    int stall = 0;
    bool bland = false;
    for (int iter = 0; iter < kMaxIter; ++iter) {
      int q = -1;
      double best = -kCostTol;
      for (int j = 0; j < allowed; ++j) {
        double d = cost(j);
        if (d < best) {
          q = j;
          if (bland) break;
          best = d;
        }
      }
      if (q < 0) return true;
      int r = -1;
      double ratio = kInf;
      for (int i = 0; i < R_; ++i) {
        double a = at(i, q);
        if (a <= kPivTol) continue;
        double t = std::max(rhs(i), 0.0) / a;
        if (t < ratio - 1e-12 || (t <= ratio + 1e-12 && r >= 0 && basis_[i] < basis_[r])) {
          if (t < ratio) ratio = t;
          r = i;
        }
      }
      if (r < 0) return false;
      if (ratio <= 1e-12) {
        if (++stall > 30) bland = true;
      } else {
        stall = 0;
      }
      pivot(r, q);
    }
    hit_limit = true;
    return true;
  }

 private:
  int R_, C_;
  std::vector<double> t_;
  std::vector<int> basis_;
};

}  // namespace

LPResult solve_lp(const LinearProgram& lp) {
  const int nv = lp.num_vars();
  std::vector<VarMap> vm(nv);
  int ns = 0;
  // Bound rows for doubly bounded variables: s_pos <= hi - lo.
  std::vector<std::pair<int, double>> ub_rows;
  for (int j = 0; j < nv; ++j) {
    double lo = lp.var_lo[j], hi = lp.var_hi[j];
    if (lo > hi) return {LPStatus::Infeasible, kInf, {}};
    if (std::isfinite(lo)) {
      vm[j] = {ns++, -1, lo, 1.0};
      if (std::isfinite(hi)) ub_rows.push_back({vm[j].pos, hi - lo});
    } else if (std::isfinite(hi)) {
      vm[j] = {ns++, -1, hi, -1.0};
    } else {
      vm[j].pos = ns++;
      vm[j].neg = ns++;
    }
  }

  // Standard-form rows: coefficients over s plus an optional slack sign.
  struct SRow {
    Vec a;
    double b;
    int slack;  // 0 none, +1 (<=), -1 (>=)
  };
  std::vector<SRow> srows;
  for (int i = 0; i < lp.num_rows(); ++i) {
    Vec a(ns, 0.0);
    double k = 0.0;
    bool any = false;
    for (int j = 0; j < nv; ++j) {
      double v = lp.A[i][j];
      if (v == 0.0) continue;
      any = true;
      k += v * vm[j].shift;
      a[vm[j].pos] += v * vm[j].sign;
      if (vm[j].neg >= 0) a[vm[j].neg] -= v;
    }
    double lo = lp.row_lo[i] - k, hi = lp.row_hi[i] - k;
    if (!any) {
      if (lo > 1e-9 * (1 + std::abs(lo)) || hi < -1e-9 * (1 + std::abs(hi)))
        return {LPStatus::Infeasible, kInf, {}};
      continue;
    }
    if (lp.row_lo[i] == lp.row_hi[i]) {
      srows.push_back({a, lo, 0});
      continue;
    }
    if (std::isfinite(hi)) srows.push_back({a, hi, +1});
    if (std::isfinite(lo)) srows.push_back({a, lo, -1});
  }
  for (auto [pos, cap] : ub_rows) {
    Vec a(ns, 0.0);
    a[pos] = 1.0;
    srows.push_back({a, cap, +1});
  }

  const int R = static_cast<int>(srows.size());
  int nslack = 0;
  for (const auto& r : srows) nslack += r.slack != 0;
  const int N = ns + nslack;  // structural columns
  const int C = N + R;        // plus artificials

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(R, N);
  Eigen::VectorXd b(R);
  {
    int sc = ns;
    for (int i = 0; i < R; ++i) {
      for (int j = 0; j < ns; ++j) M(i, j) = srows[i].a[j];
      if (srows[i].slack != 0) M(i, sc++) = srows[i].slack;
      b(i) = srows[i].b;
      if (b(i) < 0) {
        M.row(i) *= -1.0;
        b(i) = -b(i);
      }
    }
  }

  Vec cs(N, 0.0);
  for (int j = 0; j < nv; ++j) {
    cs[vm[j].pos] += lp.c[j] * vm[j].sign;
    if (vm[j].neg >= 0) cs[vm[j].neg] -= lp.c[j];
  }

  Tableau T(R, C);
  for (int i = 0; i < R; ++i) {
    for (int j = 0; j < N; ++j) T.at(i, j) = M(i, j);
    T.at(i, N + i) = 1.0;
    T.rhs(i) = b(i);
    T.basis()[i] = N + i;
  }
  for (int j = 0; j < N; ++j) {
    double s = 0.0;
    for (int i = 0; i < R; ++i) s += M(i, j);
    T.cost(j) = -s;
  }
  T.cost(C) = -b.sum();

  bool limit = false;
  T.optimize(N, limit);
  if (limit) return {LPStatus::IterationLimit, kInf, {}};
  double infeas = 0.0;
  for (int i = 0; i < R; ++i)
    if (T.basis()[i] >= N) infeas += std::max(T.rhs(i), 0.0);
  if (infeas > 1e-9 * (1.0 + (R > 0 ? b.lpNorm<Eigen::Infinity>() : 0.0)))
    return {LPStatus::Infeasible, kInf, {}};

  // Drive remaining artificials out where possible.
  for (int i = 0; i < R; ++i) {
    if (T.basis()[i] < N) continue;
    int q = -1;
    double best = kPivTol;
    for (int j = 0; j < N; ++j)
      if (std::abs(T.at(i, j)) > best) {
        best = std::abs(T.at(i, j));
        q = j;
      }
    if (q >= 0) T.pivot(i, q);
  }

  for (int j = 0; j <= C; ++j) T.cost(j) = 0.0;
  for (int j = 0; j < N; ++j) T.cost(j) = cs[j];
  for (int i = 0; i < R; ++i) {
    int bj = T.basis()[i];
    double cb = bj < N ? cs[bj] : 0.0;
    if (cb == 0.0) continue;
    for (int j = 0; j <= C; ++j) T.cost(j) -= cb * T.at(i, j);
  }
  if (!T.optimize(N, limit)) return {LPStatus::Unbounded, -kInf, {}};
  if (limit) return {LPStatus::IterationLimit, kInf, {}};

  // Recompute the basic solution from the original data for accuracy.
  Eigen::VectorXd s = Eigen::VectorXd::Zero(C);
  Eigen::MatrixXd B(R, R);
  for (int i = 0; i < R; ++i) {
    int bj = T.basis()[i];
    if (bj < N)
      B.col(i) = M.col(bj);
    else
      B.col(i) = Eigen::VectorXd::Unit(R, bj - N);
  }
  Eigen::VectorXd xb;
  bool refined = false;
  if (R > 0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
    if (lu.isInvertible()) {
      xb = lu.solve(b);
      refined = (B * xb - b).lpNorm<Eigen::Infinity>() <= 1e-9 * (1 + b.lpNorm<Eigen::Infinity>());
    }
  }
  for (int i = 0; i < R; ++i) {
    double v = refined ? xb(i) : T.rhs(i);
    s(T.basis()[i]) = std::max(v, 0.0);
  }

  LPResult res;
  res.status = LPStatus::Optimal;
  res.z.assign(nv, 0.0);
  for (int j = 0; j < nv; ++j) {
    double v = vm[j].shift + vm[j].sign * s(vm[j].pos);
    if (vm[j].neg >= 0) v -= s(vm[j].neg);
    res.z[j] = v;
  }
  res.objective = 0.0;
  for (int j = 0; j < nv; ++j) res.objective += lp.c[j] * res.z[j];
  return res;
}

}  // namespace bilevel
