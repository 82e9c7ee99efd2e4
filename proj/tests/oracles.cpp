#include "oracles.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "bilevel/program.hpp"

namespace oracle {

using bilevel::BilevelProgram;

Expr random_expr(std::mt19937_64& rng, int depth, int n, int m) {
  std::uniform_int_distribution<int> pick(0, 99);
  auto leaf = [&]() -> Expr {
    int r = pick(rng);
    if (r < 35) return Expr::x(1 + static_cast<int>(rng() % n));
    if (r < 70) return Expr::y(1 + static_cast<int>(rng() % m));
    std::uniform_real_distribution<double> c(-2.0, 2.0);
    return Expr::constant(std::round(c(rng) * 4) / 4);
  };
  if (depth <= 0) return leaf();
  auto sub = [&] { return random_expr(rng, depth - 1, n, m); };
  switch (pick(rng) % 13) {
    case 0: return sub() + sub();
    case 1: return sub() - sub();
    case 2: return sub() * sub();
    case 3: return -sub();
    case 4: return Expr::pow(sub(), 2);
    case 5: return Expr::exp(Expr::constant(0.3) * sub());
    case 6: return Expr::abs(sub());
    case 7: return Expr::max(sub(), sub());
    case 8: return Expr::min(sub(), sub());
    case 9: return Expr::log(Expr::constant(1.0) + Expr::pow(sub(), 2), true);
    case 10: return Expr::divide(sub(), Expr::constant(2.0) + Expr::pow(sub(), 2), true);
    case 11: return Expr::constant(0.5) * sub();
    default: return leaf();
  }
}

Vec fd_gradient(const Expr& e, const Vec& x, const Vec& y, double h) {
  Vec g;
  Vec xp = x, yp = y;
  for (std::size_t i = 0; i < x.size(); ++i) {
    xp[i] = x[i] + h;
    double a = e.eval(xp, y);
    xp[i] = x[i] - h;
    double b = e.eval(xp, y);
    xp[i] = x[i];
    g.push_back((a - b) / (2 * h));
  }
  for (std::size_t j = 0; j < y.size(); ++j) {
    yp[j] = y[j] + h;
    double a = e.eval(x, yp);
    yp[j] = y[j] - h;
    double b = e.eval(x, yp);
    yp[j] = y[j];
    g.push_back((a - b) / (2 * h));
  }
  return g;
}

GridMin brute_lower(const BilevelProgram& prog, const Vec& x, int points, double tol) {
  GridMin best;
  const int m = prog.m;
  std::vector<int> idx(m, 0);
  Vec y(m);
  for (;;) {
    for (int j = 0; j < m; ++j) {
      const auto& iv = prog.y_box[j];
      y[j] = iv.lo + (iv.hi - iv.lo) * idx[j] / (points - 1);
    }
    bool ok = true;
    for (const auto& g : prog.g)
      if (g.eval(x, y) > tol) ok = false;
    if (ok) {
      double v = prog.f.eval(x, y);
      if (!best.feasible || v < best.value) {
        best.feasible = true;
        best.value = v;
        best.argmin = y;
      }
    }
    int j = 0;
    while (j < m && ++idx[j] == points) idx[j++] = 0;
    if (j == m) break;
  }
  return best;
}

namespace {

// Gaussian elimination with partial pivoting; false on singular systems.
bool solve_dense(std::vector<Vec> M, Vec r, Vec& out) {
  const std::size_t d = r.size();
  for (std::size_t c = 0; c < d; ++c) {
    std::size_t piv = c;
    for (std::size_t i = c + 1; i < d; ++i)
      if (std::abs(M[i][c]) > std::abs(M[piv][c])) piv = i;
    if (std::abs(M[piv][c]) < 1e-12) return false;
    std::swap(M[piv], M[c]);
    std::swap(r[piv], r[c]);
    for (std::size_t i = c + 1; i < d; ++i) {
      double f = M[i][c] / M[c][c];
      for (std::size_t k = c; k < d; ++k) M[i][k] -= f * M[c][k];
      r[i] -= f * r[c];
    }
  }
  out.assign(d, 0.0);
  for (std::size_t c = d; c-- > 0;) {
    double s = r[c];
    for (std::size_t k = c + 1; k < d; ++k) s -= M[c][k] * out[k];
    out[c] = s / M[c][c];
  }
  return true;
}

}  // namespace

bool lp_by_vertices(const std::vector<Vec>& A, const Vec& b, const Vec& c, double& best, Vec& arg) {
  const std::size_t rows = A.size(), d = c.size();
  bool found = false;
  std::vector<std::size_t> pick(d);
  for (std::size_t i = 0; i < d; ++i) pick[i] = i;
  if (rows < d) return false;
  for (;;) {
    std::vector<Vec> M;
    Vec r;
    for (auto i : pick) {
      M.push_back(A[i]);
      r.push_back(b[i]);
    }
    Vec z;
    if (solve_dense(M, r, z)) {
      bool feas = true;
      for (std::size_t i = 0; i < rows && feas; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < d; ++k) s += A[i][k] * z[k];
        feas = s <= b[i] + 1e-9 * (1 + std::abs(b[i]));
      }
      if (feas) {
        double v = 0;
        for (std::size_t k = 0; k < d; ++k) v += c[k] * z[k];
        if (!found || v < best) {
          best = v;
          arg = z;
          found = true;
        }
      }
    }
    // next combination
    std::size_t i = d;
    while (i > 0 && pick[i - 1] == rows - d + i - 1) --i;
    if (i == 0) break;
    ++pick[i - 1];
    for (std::size_t k = i; k < d; ++k) pick[k] = pick[k - 1] + 1;
  }
  return found;
}

double hull_distance_scan(const std::vector<Vec>& points, const Vec& v, int steps) {
  const std::size_t k = points.size();
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> w(k, 0);
  // enumerate compositions of `steps` into k parts
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i + 1 == k) {
      w[i] = left;
      double err = 0;
      for (std::size_t c = 0; c < v.size(); ++c) {
        double s = 0;
        for (std::size_t j = 0; j < k; ++j) s += points[j][c] * w[j] / steps;
        err = std::max(err, std::abs(s - v[c]));
      }
      best = std::min(best, err);
      return;
    }
    for (int t = 0; t <= left; ++t) {
      w[i] = t;
      rec(i + 1, left - t);
    }
  };
  if (k > 0) rec(0, steps);
  return best;
}

double fd1(const std::function<double(double)>& h, double x, double step) {
  return (h(x + step) - h(x - step)) / (2 * step);
}

namespace {

double quarter(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  return std::round(u(rng) * 4) / 4;
}

std::string num(double v) {
  std::ostringstream s;
  s << "(" << v << ")";
  return s.str();
}

}  // namespace

BilevelProgram random_affine_instance(std::mt19937_64& rng, int m) {
  std::ostringstream t;
  t << "[dims] n=1 m=" << m << "\n[upper]\nobjective = " << num(quarter(rng, -1, 1)) << "*x1";
  for (int j = 1; j <= m; ++j) t << " + " << num(quarter(rng, -1, 1)) << "*y" << j;
  t << "\n[lower]\nobjective = " << num(quarter(rng, -0.5, 0.5)) << "*x1";
  for (int j = 1; j <= m; ++j) {
    double c = quarter(rng, -1, 1);
    if (c == 0) c = 0.5;
    t << " + " << num(c) << "*y" << j;
  }
  t << "\n";
  for (int j = 1; j <= m; ++j) {
    double l = quarter(rng, -2, -0.8), w = quarter(rng, -0.4, 0.4);
    double u = quarter(rng, 0.8, 2), v = quarter(rng, -0.4, 0.4);
    if (u - l - std::abs(w) - std::abs(v) < 0.8) u = l + 0.8 + std::abs(w) + std::abs(v);
    t << "constraint = y" << j << " - " << num(u) << " - " << num(v) << "*x1\n";
    t << "constraint = " << num(l) << " + " << num(w) << "*x1 - y" << j << "\n";
  }
  if (m == 2)
    t << "constraint = y1 + y2 - " << num(quarter(rng, 0, 1)) << " - " << num(quarter(rng, -0.5, 0.5)) << "*x1\n";
  t << "[box]\nx1 = -1, 1\n";
  for (int j = 1; j <= m; ++j) t << "y" << j << " = -3, 3\n";
  t << "[mode] optimistic\n";
  return bilevel::parse_program(t.str());
}

BilevelProgram random_constant_f_instance(std::mt19937_64& rng) {
  std::ostringstream t;
  double a = quarter(rng, 0.5, 1.5) * (rng() % 2 ? 1 : -1);
  t << "[dims] n=1 m=1\n[upper]\nobjective = " << num(a) << "*x1*y1 + " << num(quarter(rng, -0.5, 0.5))
    << "*y1 + " << num(quarter(rng, -1, 1)) << "*x1\n";
  t << "[lower]\nobjective = 0\n";
  t << "constraint = y1 - " << num(quarter(rng, 0.5, 1.5)) << "\n";
  t << "constraint = " << num(quarter(rng, -1.5, -0.5)) << " - y1\n";
  t << "[box]\nx1 = -1, 1\ny1 = -2, 2\n[mode] pessimistic\n";
  return bilevel::parse_program(t.str());
}

BilevelProgram instanceA() { return bilevel::load_program(BILEVEL_DATA_DIR "/instanceA.blp"); }
BilevelProgram instanceB() { return bilevel::load_program(BILEVEL_DATA_DIR "/instanceB.blp"); }
BilevelProgram instanceC() { return bilevel::load_program(BILEVEL_DATA_DIR "/instanceC.blp"); }

}  // namespace oracle
