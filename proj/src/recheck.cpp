// Standalone residual evaluation of certificates. Everything here goes
// through generator hulls and polytope distances; none of the multiplier
// programs of the search are reused.
#include <algorithm>
#include <cmath>

#include "bilevel/certify.hpp"

namespace bilevel {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

struct Checker {
  const BilevelProgram& prog;
  const Certificate& c;
  Expr F;  // -F for pessimistic certificates
  int n, m;

  Checker(const BilevelProgram& p, const Certificate& cert)
      : prog(p), c(cert), F(cert.mode == Mode::Pessimistic ? -p.F : p.F), n(p.n), m(p.m) {}

  std::vector<Vec> gens(const Expr& e, const Vec& y) const { return clarke_generators(e, c.x, y, c.activity); }
  Polytope joint(const Expr& e, const Vec& y) const { return hull(n + m, gens(e, y)); }
  Polytope xpart(const Expr& e, const Vec& y) const { return hull(n, x_generators(gens(e, y), n)); }
  Polytope ypart(const Expr& e, const Vec& y) const { return hull(m, y_generators(gens(e, y), n)); }

  static Polytope add(Polytope acc, double w, const Polytope& P) {
    if (w == 0.0) return acc;
    return minkowski_sum(acc, w > 0 ? scale(P, w) : scale(negate(P), -w));
  }

  // Lower multipliers must be nonnegative and vanish off the active set.
  bool lower_signs(const Vec& u, const Vec& y) const {
    if (static_cast<int>(u.size()) != prog.p()) return false;
    for (int i = 0; i < prog.p(); ++i) {
      double g = prog.g[i].eval(c.x, y);
      if (g > c.activity.at(std::abs(g))) return false;
      if (u[i] < 0) return false;
      if (u[i] > 0 && g < -c.activity.at(std::abs(g))) return false;
    }
    return true;
  }

  bool simplex(const Vec& w) const {
    double s = 0.0;
    for (double v : w) {
      if (v < 0) return false;
      s += v;
    }
    return !w.empty() && std::abs(s - 1.0) <= 1e-12;
  }

  // sum alpha_j ∂theta1_j(x̄) in R^n; empty optional when alpha is inadmissible
  bool alpha_set(Polytope& out) const {
    out = Polytope::origin(n);
    if (static_cast<int>(c.alpha.size()) != prog.k()) return prog.k() == 0 && c.alpha.empty();
    const Vec none;
    for (int j = 0; j < prog.k(); ++j) {
      double v = prog.theta1[j].eval(c.x, none);
      if (v > c.upper_activity || c.alpha[j] < 0) return false;
      if (c.alpha[j] == 0.0) continue;
      if (v < -c.upper_activity) return false;
      auto gs = clarke_generators(prog.theta1[j], c.x, none, ActivityTolerance(c.upper_activity));
      for (auto& g : gs) g.resize(n, 0.0);
      out = add(out, c.alpha[j], hull(n, gs));
    }
    return true;
  }

  Polytope lift(const Polytope& P) const {
    std::vector<Vec> vs, rs;
    for (auto v : P.vertices()) {
      v.resize(n + m, 0.0);
      vs.push_back(v);
    }
    for (auto r : P.rays()) {
      r.resize(n + m, 0.0);
      rs.push_back(r);
    }
    return hull(n + m, vs, rs);
  }

  static Vec padded(Vec v, int dim) {
    v.resize(dim, 0.0);
    return v;
  }

  // (x*, 0) in ∂f + sum u_i ∂g_i at y
  double lower_inclusion(const Vec& y, const Vec& u, const Vec* xstar) const {
    Polytope S = joint(prog.f, y);
    for (int i = 0; i < prog.p(); ++i) S = add(S, u[i], joint(prog.g[i], y));
    if (xstar) return distance(S, padded(*xstar, n + m));
    Polytope Y = ypart(prog.f, y);
    for (int i = 0; i < prog.p(); ++i) Y = add(Y, u[i], ypart(prog.g[i], y));
    return distance(Y, Vec(m, 0.0));
  }

  // ∂F + r ∂f + sum u_i ∂g_i at y, distance to (target, 0)
  double upper_inclusion(const Vec& y, double r, const Vec& u, const Vec& target, const Polytope* alpha) const {
    Polytope S = add(joint(F, y), r, joint(prog.f, y));
    for (int i = 0; i < prog.p(); ++i) S = add(S, u[i], joint(prog.g[i], y));
    if (alpha) S = minkowski_sum(S, lift(*alpha));
    return distance(S, padded(target, n + m));
  }

  // partial system at y: x-row (distance to target) and y-row
  double partial_inclusion(const Vec& y, double r, const Vec& beta, const Vec& gamma, const Vec& target,
                           const Polytope* alpha) const {
    Polytope fx = xpart(prog.f, y);
    Polytope X = add(add(xpart(F, y), r, fx), -r, fx);
    Polytope Y = add(ypart(F, y), r, ypart(prog.f, y));
    for (int i = 0; i < prog.p(); ++i) {
      Polytope gx = xpart(prog.g[i], y);
      X = add(add(X, beta[i], gx), -r * gamma[i], gx);
      Y = add(Y, beta[i], ypart(prog.g[i], y));
    }
    if (alpha) X = minkowski_sum(X, *alpha);
    return std::max(distance(X, target), distance(Y, Vec(m, 0.0)));
  }

  double carath(Vec& w) const {
    // sum v_s x*_s and the (4.4)-type residual of every s
    w.assign(n, 0.0);
    if (!simplex(c.v) || c.v.size() != c.ys.size() || c.x_s.size() != c.ys.size() || c.u_s.size() != c.ys.size())
      return kInfinity;
    double res = 0.0;
    for (std::size_t s = 0; s < c.ys.size(); ++s) {
      if (!lower_signs(c.u_s[s], c.ys[s])) return kInfinity;
      res = std::max(res, lower_inclusion(c.ys[s], c.u_s[s], &c.x_s[s]));
      for (int k = 0; k < n; ++k) w[k] += c.v[s] * c.x_s[s][k];
    }
    return res;
  }

  double optimistic() const {
    Polytope A;
    if (!alpha_set(A) || c.r < 0 || c.y.empty()) return kInfinity;
    if (!lower_signs(c.beta, c.y)) return kInfinity;
    if (c.variant == "i") {
      Vec w;
      double res = carath(w);
      for (double& v : w) v *= c.r;
      return std::max(res, upper_inclusion(c.y, c.r, c.beta, w, &A));
    }
    if (!lower_signs(c.gamma, c.y)) return kInfinity;
    if (c.variant == "ii")
      return std::max(partial_inclusion(c.y, c.r, c.beta, c.gamma, Vec(n, 0.0), &A),
                      lower_inclusion(c.y, c.gamma, nullptr));
    if (c.variant == "iii") {
      if (c.x_phi.size() != static_cast<std::size_t>(n)) return kInfinity;
      Vec target = c.x_phi;
      for (double& v : target) v *= c.r;
      return std::max(upper_inclusion(c.y, c.r, c.beta, target, &A), lower_inclusion(c.y, c.gamma, &c.x_phi));
    }
    return kInfinity;
  }

  double pessimistic() const {
    Polytope A;
    if (!alpha_set(A) || !simplex(c.eta)) return kInfinity;
    const std::size_t T = c.eta.size();
    if (c.yt.size() != T || c.r_t.size() != T || c.beta_t.size() != T || c.x_t.size() != T) return kInfinity;
    double res = 0.0;
    Vec w(n, 0.0);
    if (c.variant == "i") {
      res = carath(w);
    } else if (c.variant == "iii") {
      if (c.x_phi.size() != static_cast<std::size_t>(n) || !lower_signs(c.gamma, c.yt.front())) return kInfinity;
      res = lower_inclusion(c.yt.front(), c.gamma, &c.x_phi);
      w = c.x_phi;
    } else if (c.variant != "ii" || c.gamma_t.size() != T) {
      return kInfinity;
    }
    Vec agg(n, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
      const Vec& y = c.yt[t];
      if (c.r_t[t] < 0 || !lower_signs(c.beta_t[t], y)) return kInfinity;
      if (c.variant == "iii" && y != c.yt.front()) return kInfinity;
      if (c.variant == "ii") {
        if (!lower_signs(c.gamma_t[t], y)) return kInfinity;
        res = std::max(res, partial_inclusion(y, c.r_t[t], c.beta_t[t], c.gamma_t[t], c.x_t[t], nullptr));
        res = std::max(res, lower_inclusion(y, c.gamma_t[t], nullptr));
      } else {
        Vec target = c.x_t[t];
        for (int k = 0; k < n; ++k) target[k] += c.r_t[t] * w[k];
        res = std::max(res, upper_inclusion(y, c.r_t[t], c.beta_t[t], target, nullptr));
      }
      for (int k = 0; k < n; ++k) agg[k] += c.eta[t] * c.x_t[t][k];
    }
    return std::max(res, distance(A, agg));
  }

  double value() const {
    Polytope A;
    if (!alpha_set(A) || c.phi_clusters.empty() || c.x_star.size() != static_cast<std::size_t>(n)) return kInfinity;
    Vec neg = c.x_star;
    for (double& v : neg) v = -v;
    return std::max(distance(hull(n, c.phi_clusters), c.x_star), distance(A, neg));
  }
};

}  // namespace

double recheck_residual(const BilevelProgram& prog, const Certificate& c) {
  if (c.x.size() != static_cast<std::size_t>(prog.n)) return kInfinity;
  Checker k(prog, c);
  if (c.variant == "value") return k.value();
  return c.mode == Mode::Optimistic ? k.optimistic() : k.pessimistic();
}

}  // namespace bilevel
