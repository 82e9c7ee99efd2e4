#include "bilevel/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "bilevel/errors.hpp"

namespace bilevel {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform(), u2 = uniform();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

Vec Rng::unit_sphere(int d) {
  for (;;) {
    Vec u(d);
    double s = 0.0;
    for (auto& c : u) {
      c = normal();
      s += c * c;
    }
    if (s < 1e-24) continue;
    s = std::sqrt(s);
    for (auto& c : u) c /= s;
    return u;
  }
}

Vec Rng::in_cube(int d) {
  Vec u(d);
  for (auto& c : u) c = uniform(-1.0, 1.0);
  return u;
}

std::vector<Vec> cluster_points(const std::vector<Vec>& pts, double tol) {
  std::vector<Vec> sum, first;
  std::vector<int> count;
  for (const auto& p : pts) {
    bool placed = false;
    for (std::size_t c = 0; c < first.size() && !placed; ++c) {
      double d = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) d = std::max(d, std::abs(p[i] - first[c][i]));
      if (d <= tol) {
        for (std::size_t i = 0; i < p.size(); ++i) sum[c][i] += p[i];
        ++count[c];
        placed = true;
      }
    }
    if (!placed) {
      first.push_back(p);
      sum.push_back(p);
      count.push_back(1);
    }
  }
  for (std::size_t c = 0; c < sum.size(); ++c)
    for (auto& v : sum[c]) v /= count[c];
  return sum;
}

std::vector<Vec> fd_subgradient_samples(const ScalarFn& h, const Vec& xbar, const FdOptions& opt) {
  if (!(opt.radius > 0) || !(opt.step > 0)) throw DomainError("radius and step must be positive");
  const int n = static_cast<int>(xbar.size());
  Rng rng(opt.seed);
  std::vector<Vec> grads;
  Vec u;
  for (int k = 0; k < opt.n_dirs; ++k) {
    // antithetic pairs: every other direction mirrors the previous one
    if (k % 2 == 0)
      u = rng.unit_sphere(n);
    else
      for (auto& c : u) c = -c;
    Vec p(n);
    for (int i = 0; i < n; ++i) p[i] = xbar[i] + opt.radius * u[i];
    try {
      double h0 = h(p);
      Vec g(n);
      bool straddles = false;
      for (int i = 0; i < n; ++i) {
        Vec a = p, b = p;
        a[i] += opt.step;
        b[i] -= opt.step;
        double ha = h(a), hb = h(b);
        double fwd = (ha - h0) / opt.step, bwd = (h0 - hb) / opt.step;
        g[i] = (ha - hb) / (2 * opt.step);
        if (std::abs(fwd - bwd) > opt.straddle_tol * (1.0 + std::abs(g[i]))) straddles = true;
      }
      if (!straddles) grads.push_back(std::move(g));
    } catch (const Infeasible&) {
      if (!opt.skip_infeasible) throw;
    }
  }
  return cluster_points(grads, opt.cluster_tol);
}

double lipschitz_estimate(const ScalarFn& h, const Vec& xbar, double radius, int n_pairs, std::uint64_t seed) {
  if (!(radius > 0)) throw DomainError("radius must be positive");
  const int n = static_cast<int>(xbar.size());
  Rng rng(seed);
  double L = 0.0;
  for (int k = 0; k < n_pairs; ++k) {
    Vec a = rng.in_cube(n), b = rng.in_cube(n);
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
      a[i] = xbar[i] + radius * a[i];
      b[i] = xbar[i] + radius * b[i];
      d = std::max(d, std::abs(a[i] - b[i]));
    }
    if (d < 1e-12 * radius) continue;
    try {
      L = std::max(L, std::abs(h(a) - h(b)) / d);
    } catch (const Infeasible&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return L;
}

Polytope normal_cone_polyhedral(const std::vector<Expr>& theta1, int n, const Vec& xbar, double tol_active) {
  std::vector<Vec> rays;
  const Vec none;
  for (const auto& t : theta1) {
    if (!t.is_affine() || t.uses_y()) throw NotPolyhedral("upper constraint is not affine: " + t.to_string());
    double v = t.eval(xbar, none);
    if (v > tol_active) throw InfeasiblePoint("x violates an upper constraint by " + std::to_string(v));
    if (v < -tol_active) continue;
    Vec g = clarke_generators(t, xbar, none, ActivityTolerance{})[0];
    g.resize(n);
    if (std::any_of(g.begin(), g.end(), [](double c) { return c != 0.0; })) rays.push_back(g);
  }
  return hull(n, {Vec(n, 0.0)}, rays);
}

}  // namespace bilevel
