#include "bilevel/grid.hpp"

#include <cmath>

#include "bilevel/errors.hpp"

namespace bilevel::grid {

PointEval evaluate_point(const BilevelProgram& prog, const Vec& x, const Vec& y, double tol_feas) {
  PointEval e;
  try {
    for (const auto& g : prog.g)
      if (!(g.eval(x, y) <= tol_feas)) return e;
    e.f = prog.f.eval(x, y);
    e.F = prog.F.eval(x, y);
    e.feasible = std::isfinite(e.f) && std::isfinite(e.F);
  } catch (const DomainError&) {
    e.feasible = false;
  }
  return e;
}

void evaluate_serial(const BilevelProgram& prog, const Vec& x, const std::vector<Vec>& ys,
                     double tol_feas, std::vector<PointEval>& out) {
  out.resize(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) out[i] = evaluate_point(prog, x, ys[i], tol_feas);
}

void evaluate_parallel(const BilevelProgram& prog, const Vec& x, const std::vector<Vec>& ys,
                       double tol_feas, std::vector<PointEval>& out) {
  out.resize(ys.size());
  const long n = static_cast<long>(ys.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < n; ++i) out[i] = evaluate_point(prog, x, ys[i], tol_feas);
}

std::vector<Vec> tensor_grid(const std::vector<Interval>& box, int points) {
  const std::size_t m = box.size();
  std::vector<Vec> out;
  std::vector<int> idx(m, 0);
  Vec y(m);
  for (;;) {
    for (std::size_t j = 0; j < m; ++j) {
      const auto& iv = box[j];
      y[j] = idx[j] == points - 1 ? iv.hi : iv.lo + (iv.hi - iv.lo) * idx[j] / (points - 1);
    }
    out.push_back(y);
    std::size_t j = 0;
    while (j < m && ++idx[j] == points) idx[j++] = 0;
    if (j == m) break;
  }
  return out;
}

std::vector<Vec> local_grid(const std::vector<Interval>& box, long long divisions, const Vec& center,
                            int points) {
  const std::size_t m = box.size();
  const long long half = points / 2;
  std::vector<long long> base(m);
  for (std::size_t j = 0; j < m; ++j)
    base[j] = std::llround((center[j] - box[j].lo) / (box[j].hi - box[j].lo) * static_cast<double>(divisions));
  std::vector<Vec> out;
  std::vector<long long> idx(m, -half);
  Vec y(m);
  for (;;) {
    bool inside = true;
    for (std::size_t j = 0; j < m; ++j) {
      long long k = base[j] + idx[j];
      if (k < 0 || k > divisions) inside = false;
      // same node formula as tensor_grid, so coarse nodes reappear bit for bit
      y[j] = k == divisions ? box[j].hi : box[j].lo + (box[j].hi - box[j].lo) * static_cast<double>(k) / static_cast<double>(divisions);
    }
    if (inside) out.push_back(y);
    std::size_t j = 0;
    while (j < m && ++idx[j] > half) idx[j++] = -half;
    if (j == m) break;
  }
  return out;
}

}  // namespace bilevel::grid
