#include "bilevel/certify.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <exception>

#include "bilevel/errors.hpp"
#include "bilevel/residual_system.hpp"
#include "bilevel/sampling.hpp"

namespace bilevel {

CertVariant parse_cert_variant(const std::string& s) {
  if (s == "i") return CertVariant::I;
  if (s == "ii") return CertVariant::II;
  if (s == "iii") return CertVariant::III;
  throw DomainError("unknown certification variant '" + s + "' (expected i, ii or iii)");
}

std::string to_string(CertVariant v) {
  switch (v) {
    case CertVariant::I: return "i";
    case CertVariant::II: return "ii";
    case CertVariant::III: return "iii";
  }
  return "?";
}

std::string to_string(CertStatus s) {
  switch (s) {
    case CertStatus::Certified: return "certified";
    case CertStatus::Refuted: return "refuted";
    case CertStatus::Inconclusive: return "inconclusive";
  }
  return "?";
}

namespace {

double inf_norm(const Vec& v) {
  double s = 0.0;
  for (double c : v) s = std::max(s, std::abs(c));
  return s;
}

Terms weight_sum(int first, std::size_t count, double coef = 1.0) {
  Terms t;
  for (std::size_t k = 0; k < count; ++k) t.push_back({first + static_cast<int>(k), coef});
  return t;
}

// row = c * eta, with eta < 0 standing for the constant 1
void scaled_eq(ResidualLP& lp, Terms row, int eta, double c) {
  if (eta < 0) return lp.eq(row, c);
  row.push_back({eta, -c});
  lp.eq(row, 0.0);
}

void scaled_le(ResidualLP& lp, Terms row, int eta, double c) {
  if (eta < 0) return lp.le(row, c);
  row.push_back({eta, -c});
  lp.le(row, 0.0);
}

double sum_at(const Vec& z, int first, std::size_t count) {
  double s = 0.0;
  for (std::size_t k = 0; k < count; ++k) s += z[first + static_cast<int>(k)];
  return std::max(s, 0.0);
}

Vec values(const VecRows& rows, const Vec& z) {
  Vec v;
  for (const auto& r : rows.rows) v.push_back(value_of(r, z));
  return v;
}

void check_point(const BilevelProgram& prog, const Vec& xbar) {
  if (static_cast<int>(xbar.size()) != prog.n)
    throw DimensionMismatch("x̄ has " + std::to_string(xbar.size()) + " entries, expected " + std::to_string(prog.n));
  if (prog.has_undeclared_domains())
    throw NotApplicable("div/log without assume_safe_domains: the data may not be Lipschitz");
}

struct UpperData {
  std::vector<int> active;
  std::vector<std::vector<Vec>> gens;  // x-only generators of active theta1_j
};

UpperData upper_data(const BilevelProgram& prog, const Vec& xbar, double tol) {
  UpperData u;
  u.gens.resize(prog.theta1.size());
  const Vec none;
  for (std::size_t j = 0; j < prog.theta1.size(); ++j) {
    double v = prog.theta1[j].eval(xbar, none);
    if (v > tol) throw InfeasiblePoint("x̄ violates upper constraint " + std::to_string(j + 1));
    if (v < -tol) continue;
    u.active.push_back(static_cast<int>(j));
    auto gens = clarke_generators(prog.theta1[j], xbar, none, ActivityTolerance(tol));
    for (auto& g : gens) g.resize(prog.n, 0.0);
    u.gens[j] = gens;
  }
  return u;
}

struct AlphaBlock {
  std::vector<int> first;
  VecRows x;
  explicit AlphaBlock(int n) : x(n) {}
};

AlphaBlock add_alpha(ResidualLP& lp, const UpperData& up, int n, int k) {
  AlphaBlock a(n);
  a.first.assign(k, -1);
  for (int j : up.active) {
    a.first[j] = lp.weights(up.gens[j].size());
    a.x.add_weighted(up.gens[j], a.first[j], 1.0);
  }
  return a;
}

Vec alpha_values(const AlphaBlock& a, const UpperData& up, const Vec& z) {
  Vec alpha(a.first.size(), 0.0);
  for (int j : up.active) alpha[j] = sum_at(z, a.first[j], up.gens[j].size());
  return alpha;
}

double gen_scale(const PointData& d) {
  double s = 0.0;
  for (const auto* gs : {&d.F, &d.f})
    for (const auto& g : *gs) s = std::max(s, inf_norm(g));
  for (const auto& gi : d.g)
    for (const auto& g : gi) s = std::max(s, inf_norm(g));
  return s;
}

// Least residual of (x*, 0) in hull ∂f + sum u_i hull ∂g_i at one point,
// over u >= 0 (or with u fixed). Without x* only the y-part is fitted.
struct LowerFit {
  Vec u;
  double residual = kInf;
};

LowerFit fit_lower(const PointData& d, int n, int p, const Vec* xstar, const Vec* u_fixed) {
  const int m = static_cast<int>(d.y.size());
  ResidualLP lp;
  VecRows rows(n + m);
  const int lam = lp.weights(d.f.size());
  lp.eq(weight_sum(lam, d.f.size()), 1.0);
  rows.add_weighted(d.f, lam, 1.0);
  std::vector<int> first(p, -1);
  for (int i : d.active) {
    first[i] = lp.weights(d.g[i].size());
    if (u_fixed) lp.eq(weight_sum(first[i], d.g[i].size()), (*u_fixed)[i]);
    rows.add_weighted(d.g[i], first[i], 1.0);
  }
  for (int c = xstar ? 0 : n; c < n + m; ++c) lp.residual_row(rows.rows[c], c < n ? (*xstar)[c] : 0.0);
  LowerFit out;
  out.u.assign(p, 0.0);
  LPResult res = lp.solve();
  if (!res.optimal()) return out;
  out.residual = std::max(res.objective, 0.0);
  for (int i : d.active) out.u[i] = u_fixed ? (*u_fixed)[i] : sum_at(res.z, first[i], d.g[i].size());
  return out;
}

// Weights with at most dim+1 nonzeros and the same weighted sum of points.
Vec caratheodory(const std::vector<Vec>& pts, Vec w) {
  if (pts.empty()) return w;
  const int dim = static_cast<int>(pts[0].size());
  for (;;) {
    std::vector<int> sup;
    for (std::size_t k = 0; k < w.size(); ++k)
      if (w[k] > 0) sup.push_back(static_cast<int>(k));
    if (static_cast<int>(sup.size()) <= dim + 1) return w;
    sup.resize(dim + 2);
    Eigen::MatrixXd M(dim + 1, dim + 2);
    for (int c = 0; c < dim + 2; ++c) {
      for (int r = 0; r < dim; ++r) M(r, c) = pts[sup[c]][r];
      M(dim, c) = 1.0;
    }
    Eigen::VectorXd ker = Eigen::FullPivLU<Eigen::MatrixXd>(M).kernel().col(0);
    if (ker.maxCoeff() <= 0) ker = -ker;
    double theta = kInf;
    int hit = -1;
    for (int c = 0; c < dim + 2; ++c)
      if (ker(c) > 0 && w[sup[c]] / ker(c) < theta) {
        theta = w[sup[c]] / ker(c);
        hit = c;
      }
    for (int c = 0; c < dim + 2; ++c) w[sup[c]] = std::max(0.0, w[sup[c]] - theta * ker(c));
    w[sup[hit]] = 0.0;
  }
}

void normalize(Vec& w) {
  double s = 0.0;
  for (double v : w) s += v;
  if (s > 0)
    for (double& v : w) v /= s;
}

// Generators of the x*-sets Φ_s, labeled by sample.
struct Pieces {
  std::vector<PointData> data;
  std::vector<Polytope> sets;  // one per sample; empty when no multipliers exist
  std::vector<Vec> verts, rays;
  std::vector<int> vlabel, rlabel;
  int psi = -1, psi_rays = -1;
};

Pieces make_pieces(const BilevelProgram& prog, const Vec& xbar, const std::vector<Vec>& ys, ActivityTolerance act,
                   const Caps& caps) {
  Pieces P;
  for (std::size_t s = 0; s < ys.size(); ++s) {
    PointData d = point_data(prog, xbar, ys[s], act);
    d.y_residual = caps.y_residual;
    Polytope A = phi_gradients(d, prog.n, caps.budget);
    if (!A.is_empty()) {
      for (const auto& v : A.vertices()) {
        P.verts.push_back(v);
        P.vlabel.push_back(static_cast<int>(s));
      }
      for (const auto& r : A.rays()) {
        P.rays.push_back(r);
        P.rlabel.push_back(static_cast<int>(s));
      }
    }
    P.data.push_back(std::move(d));
    P.sets.push_back(std::move(A));
  }
  return P;
}

// total * (a point of conv of the pieces), subtracted from x.
void add_shift(ResidualLP& lp, Pieces& P, const Terms& total, VecRows& x, double u_max) {
  P.psi = lp.weights(P.verts.size());
  Terms t = weight_sum(P.psi, P.verts.size());
  for (auto [v, c] : total) t.push_back({v, -c});
  lp.eq(t, 0.0);
  P.psi_rays = lp.weights(P.rays.size());
  for (std::size_t d = 0; d < P.rays.size(); ++d) {
    Terms cap{{P.psi_rays + static_cast<int>(d), 1.0}};
    for (auto [v, c] : total) cap.push_back({v, -u_max * c});
    lp.le(cap, 0.0);
  }
  x.add_weighted(P.verts, P.psi, -1.0);
  x.add_weighted(P.rays, P.psi_rays, -1.0);
}

struct ShiftValue {
  std::vector<int> labels;  // samples with v_s > 0
  Vec v;
  std::vector<Vec> xs;
  Vec w;  // sum v_s x*_s
};

ShiftValue recover_shift(const Pieces& P, const Vec& z, int n) {
  const std::size_t S = P.sets.size();
  Vec mass(S, 0.0);
  std::vector<Vec> acc(S, Vec(n, 0.0));
  for (std::size_t q = 0; q < P.verts.size(); ++q) {
    double a = std::max(z[P.psi + static_cast<int>(q)], 0.0);
    mass[P.vlabel[q]] += a;
    for (int c = 0; c < n; ++c) acc[P.vlabel[q]][c] += a * P.verts[q][c];
  }
  for (std::size_t d = 0; d < P.rays.size(); ++d) {
    double a = std::max(z[P.psi_rays + static_cast<int>(d)], 0.0);
    for (int c = 0; c < n; ++c) acc[P.rlabel[d]][c] += a * P.rays[d][c];
  }
  ShiftValue out;
  std::vector<Vec> pts;
  Vec w;
  for (std::size_t s = 0; s < S; ++s)
    if (mass[s] > 0) {
      Vec x = acc[s];
      for (double& c : x) c /= mass[s];
      out.labels.push_back(static_cast<int>(s));
      pts.push_back(x);
      w.push_back(mass[s]);
    }
  if (out.labels.empty()) {
    // r = 0: the shift is inert, any admissible x*_s serves
    out.labels.push_back(P.vlabel.front());
    pts.push_back(P.verts.front());
    w.push_back(1.0);
  }
  w = caratheodory(pts, w);
  normalize(w);
  out.w.assign(n, 0.0);
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (w[k] <= 0) continue;
    out.v.push_back(w[k]);
    out.xs.push_back(pts[k]);
    for (int c = 0; c < n; ++c) out.w[c] += w[k] * pts[k][c];
  }
  std::vector<int> kept;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (w[k] > 0) kept.push_back(out.labels[k]);
  out.labels = kept;
  return out;
}

// Variables of one lower-level point. Weights are scaled by eta (pessimistic
// aggregation); eta < 0 stands for the constant 1.
struct PointBlock {
  PointData d;
  int eta = -1, rho = -1;
  int kappa = -1, kappa_y = -1, nu = -1, nu_minus = -1, nu_y = -1;
  std::vector<int> mu, mu_y, sigma;
  MultiplierSet lam;
  int psi = -1, psi_rays = -1;
  VecRows x, y;
  PointBlock(PointData data, int n, int m) : d(std::move(data)), x(n), y(m) {}
};

// ∂F + r ∂f + sum u_i ∂g_i, jointly in (x, y).
void add_joint(ResidualLP& lp, PointBlock& b, int n, int p, const Caps& caps) {
  const auto& d = b.d;
  b.kappa = lp.weights(d.F.size());
  scaled_eq(lp, weight_sum(b.kappa, d.F.size()), b.eta, 1.0);
  b.nu = lp.weights(d.f.size());
  Terms t = weight_sum(b.nu, d.f.size());
  t.push_back({b.rho, -1.0});
  lp.eq(t, 0.0);
  b.mu.assign(p, -1);
  for (int i : d.active) {
    b.mu[i] = lp.weights(d.g[i].size());
    scaled_le(lp, weight_sum(b.mu[i], d.g[i].size()), b.eta, caps.u_max);
  }
  b.x.add_weighted(d.F, b.kappa, 1.0);
  b.y.add_weighted(d.F, b.kappa, 1.0, n);
  b.x.add_weighted(d.f, b.nu, 1.0);
  b.y.add_weighted(d.f, b.nu, 1.0, n);
  for (int i : d.active) {
    b.x.add_weighted(d.g[i], b.mu[i], 1.0);
    b.y.add_weighted(d.g[i], b.mu[i], 1.0, n);
  }
}

// Partial-subdifferential system: x-row ∂_xF + r(∂_xf - ∂_xf) + sum beta_i
// ∂_xg_i - r sum gamma_i ∂_xg_i, y-row ∂_yF + r ∂_yf + sum beta_i ∂_yg_i,
// with r*gamma written as weights over the vertices of Λ.
void add_partial(ResidualLP& lp, PointBlock& b, int n, int p, const Caps& caps) {
  const auto& d = b.d;
  auto simplex = [&](std::size_t count) {
    int first = lp.weights(count);
    scaled_eq(lp, weight_sum(first, count), b.eta, 1.0);
    return first;
  };
  auto r_scaled = [&](std::size_t count) {
    int first = lp.weights(count);
    Terms t = weight_sum(first, count);
    t.push_back({b.rho, -1.0});
    lp.eq(t, 0.0);
    return first;
  };
  b.kappa = simplex(d.F.size());
  b.kappa_y = simplex(d.F.size());
  b.nu = r_scaled(d.f.size());
  b.nu_minus = r_scaled(d.f.size());
  b.nu_y = r_scaled(d.f.size());
  b.x.add_weighted(d.F, b.kappa, 1.0);
  b.y.add_weighted(d.F, b.kappa_y, 1.0, n);
  b.x.add_weighted(d.f, b.nu, 1.0);
  b.x.add_weighted(d.f, b.nu_minus, -1.0);
  b.y.add_weighted(d.f, b.nu_y, 1.0, n);

  const auto& G = b.lam.set;
  b.psi = lp.weights(G.vertices().size());
  Terms t = weight_sum(b.psi, G.vertices().size());
  t.push_back({b.rho, -1.0});
  lp.eq(t, 0.0);
  b.psi_rays = lp.weights(G.rays().size());
  for (std::size_t k = 0; k < G.rays().size(); ++k)
    lp.le({{b.psi_rays + static_cast<int>(k), 1.0}, {b.rho, -caps.u_max}}, 0.0);

  b.mu.assign(p, -1);
  b.mu_y.assign(p, -1);
  b.sigma.assign(p, -1);
  for (int i : d.active) {
    const std::size_t L = d.g[i].size();
    b.mu[i] = lp.weights(L);
    b.mu_y[i] = lp.weights(L);
    b.sigma[i] = lp.weights(L);
    Terms same = weight_sum(b.mu[i], L);
    for (auto [v, c] : weight_sum(b.mu_y[i], L, -1.0)) same.push_back({v, c});
    lp.eq(same, 0.0);
    scaled_le(lp, weight_sum(b.mu[i], L), b.eta, caps.u_max);
    Terms sig = weight_sum(b.sigma[i], L);
    for (std::size_t q = 0; q < G.vertices().size(); ++q)
      if (G.vertices()[q][i] != 0.0) sig.push_back({b.psi + static_cast<int>(q), -G.vertices()[q][i]});
    for (std::size_t k = 0; k < G.rays().size(); ++k)
      if (G.rays()[k][i] != 0.0) sig.push_back({b.psi_rays + static_cast<int>(k), -G.rays()[k][i]});
    lp.eq(sig, 0.0);
    b.x.add_weighted(d.g[i], b.mu[i], 1.0);
    b.y.add_weighted(d.g[i], b.mu_y[i], 1.0, n);
    b.x.add_weighted(d.g[i], b.sigma[i], -1.0);
  }
}

Vec gamma_of(const PointBlock& b, const Vec& z, int p) {
  const auto& G = b.lam.set;
  const double rho = std::max(z[b.rho], 0.0);
  Vec g(p, 0.0);
  double mass = 0.0;
  for (std::size_t q = 0; q < G.vertices().size(); ++q) {
    double a = std::max(z[b.psi + static_cast<int>(q)], 0.0);
    mass += a;
    for (int i = 0; i < p; ++i) g[i] += a * G.vertices()[q][i];
  }
  for (std::size_t k = 0; k < G.rays().size(); ++k) {
    double a = std::max(z[b.psi_rays + static_cast<int>(k)], 0.0);
    for (int i = 0; i < p; ++i) g[i] += a * G.rays()[k][i];
  }
  if (!(rho > 0) || !(mass > 0)) return G.vertices().front();
  for (double& c : g) c = std::max(c / mass, 0.0);
  return g;
}

Vec lower_multipliers(const PointBlock& b, const Vec& z, int p, double scale) {
  Vec u(p, 0.0);
  for (int i : b.d.active) u[i] = sum_at(z, b.mu[i], b.d.g[i].size()) / scale;
  return u;
}

double y_residual_of(const PointBlock& b, const Vec& z, double scale) {
  double r = 0.0;
  for (const auto& row : b.y.rows) r = std::max(r, std::abs(value_of(row, z)) / scale);
  return r;
}

// One solved system: recovered certificate fields plus the LP optimum.
struct Outcome {
  Certificate cert;
  double bound = kInf;
  bool posed = false;
  bool at_cap = false;
  std::string failure;  // why the system could not be posed
};

struct Setup {
  const BilevelProgram* prog = nullptr;  // F already negated for pessimistic systems
  Vec xbar;
  CertVariant variant = CertVariant::I;
  bool pessimistic = false;
  ActivityTolerance act;
  double upper_tol = 1e-9;
  Caps caps;
  std::optional<double> fixed_r;
  UpperData up;
};

Outcome solve_system(const Setup& s, const std::vector<Vec>& points, Pieces* pieces) {
  const auto& prog = *s.prog;
  const int n = prog.n, m = prog.m, p = prog.p(), k = prog.k();
  const bool partial = s.variant == CertVariant::II;
  Outcome out;
  ResidualLP lp;
  std::vector<PointBlock> blocks;
  Terms eta_sum, rho_sum;
  // points without gamma multipliers carry at least their least conv3 residual
  double unposed = kInf;
  for (const auto& y : points) {
    PointData d = point_data(prog, s.xbar, y, s.act);
    d.y_residual = s.caps.y_residual;
    PointBlock b(std::move(d), n, m);
    if (partial) {
      b.lam = lambda_set(b.d, n, p, s.caps.budget);
      if (b.lam.empty()) {
        unposed = std::min(unposed, fit_lower(b.d, n, p, nullptr, nullptr).residual);
        continue;
      }
    }
    if (s.pessimistic) {
      b.eta = lp.var(0.0, 1.0);
      b.rho = lp.var();
      eta_sum.push_back({b.eta, 1.0});
      if (s.fixed_r)
        lp.eq({{b.rho, 1.0}, {b.eta, -*s.fixed_r}}, 0.0);
      else
        lp.le({{b.rho, 1.0}, {b.eta, -s.caps.r_max}}, 0.0);
    } else {
      b.rho = s.fixed_r ? lp.var(*s.fixed_r, *s.fixed_r) : lp.var(0.0, s.caps.r_max);
    }
    rho_sum.push_back({b.rho, 1.0});
    blocks.push_back(std::move(b));
  }
  if (blocks.empty()) {
    out.failure = "the lower multiplier set is empty at every sampled point";
    out.bound = unposed;
    return out;
  }
  if (!eta_sum.empty()) lp.eq(eta_sum, 1.0);
  for (auto& b : blocks) {
    if (partial)
      add_partial(lp, b, n, p, s.caps);
    else
      add_joint(lp, b, n, p, s.caps);
    for (const auto& row : b.y.rows) lp.residual_row(row, 0.0, b.eta);
  }
  AlphaBlock alpha = add_alpha(lp, s.up, n, k);
  VecRows x(n);
  for (const auto& b : blocks)
    for (int c = 0; c < n; ++c) x.rows[c].insert(x.rows[c].end(), b.x.rows[c].begin(), b.x.rows[c].end());
  // optimistic: 0 in (...) + alpha terms; pessimistic: sum eta_t x*_t in alpha terms
  const double alpha_sign = s.pessimistic ? -1.0 : 1.0;
  for (int c = 0; c < n; ++c)
    for (auto [v, coef] : alpha.x.rows[c]) x.rows[c].push_back({v, alpha_sign * coef});
  if (pieces) add_shift(lp, *pieces, rho_sum, x, s.caps.u_max);
  for (const auto& row : x.rows) lp.residual_row(row, 0.0);

  LPResult res = lp.solve();
  if (!res.optimal()) {
    out.failure = "multiplier program is infeasible under the caps";
    return out;
  }
  const Vec& z = res.z;
  out.posed = true;
  out.bound = std::min(std::max(res.objective, 0.0), unposed);
  Certificate& c = out.cert;
  c.alpha = alpha_values(alpha, s.up, z);
  Vec alpha_x = values(alpha.x, z);

  double residual = 0.0;
  ShiftValue shift;
  if (pieces) {
    shift = recover_shift(*pieces, z, n);
    for (std::size_t q = 0; q < shift.labels.size(); ++q) {
      const PointData& d = pieces->data[shift.labels[q]];
      LowerFit fit = fit_lower(d, n, p, &shift.xs[q], nullptr);
      residual = std::max(residual, fit.residual);
      c.ys.push_back(d.y);
      c.u_s.push_back(fit.u);
      c.x_s.push_back(shift.xs[q]);
    }
    c.v = shift.v;
  }

  auto note_caps = [&](const PointBlock& b, double eta) {
    if (s.caps.r_max > 0 && z[b.rho] >= s.caps.r_max * eta * (1 - 1e-9)) out.at_cap = true;
    for (int i : b.d.active)
      if (sum_at(z, b.mu[i], b.d.g[i].size()) >= s.caps.u_max * eta * (1 - 1e-9)) out.at_cap = true;
  };

  if (!s.pessimistic) {
    const PointBlock& b = blocks.front();
    note_caps(b, 1.0);
    c.y = b.d.y;
    c.r = std::max(z[b.rho], 0.0);
    c.beta = lower_multipliers(b, z, p, 1.0);
    residual = std::max(residual, y_residual_of(b, z, 1.0));
    double xres = 0.0;
    for (const auto& row : x.rows) xres = std::max(xres, std::abs(value_of(row, z)));
    residual = std::max(residual, xres);
    if (partial) {
      c.gamma = gamma_of(b, z, p);
      residual = std::max(residual, fit_lower(b.d, n, p, nullptr, &c.gamma).residual);
    }
    c.residual = residual;
    return out;
  }

  // pessimistic: per-t data, then Carathéodory over the x*_t
  std::vector<Vec> xt;
  Vec eta;
  std::vector<double> yres;
  std::vector<int> idx;
  for (std::size_t t = 0; t < blocks.size(); ++t) {
    const PointBlock& b = blocks[t];
    const double e = z[b.eta];
    if (!(e > 1e-13)) continue;
    note_caps(b, e);
    Vec xv = values(b.x, z);
    const double r = std::max(z[b.rho], 0.0) / e;
    for (int cc = 0; cc < n; ++cc) xv[cc] = xv[cc] / e - (pieces ? r * shift.w[cc] : 0.0);
    xt.push_back(xv);
    eta.push_back(e);
    yres.push_back(y_residual_of(b, z, e));
    idx.push_back(static_cast<int>(t));
  }
  eta = caratheodory(xt, eta);
  normalize(eta);
  Vec agg(n, 0.0);
  for (std::size_t q = 0; q < idx.size(); ++q) {
    if (eta[q] <= 0) continue;
    const PointBlock& b = blocks[idx[q]];
    const double e = z[b.eta];
    c.yt.push_back(b.d.y);
    c.eta.push_back(eta[q]);
    c.r_t.push_back(std::max(z[b.rho], 0.0) / e);
    c.beta_t.push_back(lower_multipliers(b, z, p, e));
    c.x_t.push_back(xt[q]);
    residual = std::max(residual, yres[q]);
    if (partial) {
      Vec g = gamma_of(b, z, p);
      residual = std::max(residual, fit_lower(b.d, n, p, nullptr, &g).residual);
      c.gamma_t.push_back(g);
    }
    for (int cc = 0; cc < n; ++cc) agg[cc] += eta[q] * xt[q][cc];
  }
  double xres = 0.0;
  for (int cc = 0; cc < n; ++cc) xres = std::max(xres, std::abs(agg[cc] - alpha_x[cc]));
  c.residual = std::max(residual, xres);
  return out;
}

double tolerance_slack(const BilevelProgram& prog, const GridSpec& grid, const std::vector<Vec>& ys,
                       const Vec& xbar, ActivityTolerance act) {
  double scale = 1.0;
  for (const auto& y : ys) scale = std::max(scale, gen_scale(point_data(prog, xbar, y, act)));
  return grid.finest_cell(prog) * scale;
}

void decide(Certificate& c, double bound, bool at_cap) {
  c.lower_bound = bound;
  if (c.residual <= c.tol) {
    c.status = CertStatus::Certified;
  } else if (bound > c.tol) {
    c.status = CertStatus::Refuted;
    c.notes.push_back("lower bound holds over the sampled solutions with r <= r_max and multipliers <= u_max");
    if (at_cap) c.notes.push_back("caps active at the best multipliers; larger caps may lower the bound");
  } else {
    c.status = CertStatus::Inconclusive;
  }
}

std::vector<CQVerdict> bundle(const BilevelProgram& prog, Mode mode, CertVariant variant, const Vec& xbar,
                              const Vec& y, const CertifyOptions& opt) {
  BilevelProgram q = prog;
  q.mode = mode;
  const EstimateVariant ev = variant == CertVariant::I    ? EstimateVariant::Semicompact
                             : variant == CertVariant::II ? EstimateVariant::Convex
                                                          : EstimateVariant::Semicontinuous;
  CQOptions co;
  co.tol = opt.tol;
  co.caps = opt.caps;
  co.grid = opt.grid;
  co.seed = opt.seed;
  std::vector<CQVerdict> out = hypotheses_for(q, ev, xbar, y, co);
  out.push_back(check_polyhedral_calmness(q, CalmTarget::X));
  return out;
}

std::vector<Vec> samples(const SolutionSet& s, const Caps& caps) {
  return farthest_points(s.points, static_cast<std::size_t>(caps.max_y_samples));
}

Certificate header(const BilevelProgram& prog, const Vec& xbar, const std::string& variant, Mode mode,
                   const CertifyOptions& opt) {
  Certificate c;
  c.variant = variant;
  c.mode = mode;
  c.x = xbar;
  c.activity = activity_for(prog, opt.grid);
  c.caps = opt.caps;
  c.seed = opt.seed;
  return c;
}

void merge(Certificate& into, Certificate&& from) {
  std::vector<std::string> notes = std::move(into.notes);
  Certificate h = std::move(into);
  into = std::move(from);
  into.variant = h.variant;
  into.mode = h.mode;
  into.x = h.x;
  into.activity = h.activity;
  into.upper_activity = h.upper_activity;
  into.caps = h.caps;
  into.seed = h.seed;
  into.tol = h.tol;
  into.notes = std::move(notes);
}

}  // namespace

Certificate certify_value_stationarity(const BilevelProgram& prog, const Vec& xbar, const CertifyOptions& opt) {
  check_point(prog, xbar);
  opt.grid.validate();
  Certificate c = header(prog, xbar, "value", prog.mode, opt);
  UpperData up = upper_data(prog, xbar, c.upper_activity);
  const ValueKind kind = prog.mode == Mode::Optimistic ? ValueKind::PhiO : ValueKind::PhiP;
  GridSpec fine = deepened(prog, opt.grid);
  FdOptions fd;
  fd.skip_infeasible = true;
  fd.seed = opt.seed;
  c.phi_clusters = fd_subgradient_samples(value_function(prog, kind, fine), xbar, fd);
  if (c.phi_clusters.empty()) throw InfeasiblePoint("the value function is infeasible around x̄");

  const int n = prog.n;
  ResidualLP lp;
  const int w = lp.weights(c.phi_clusters.size());
  lp.eq(weight_sum(w, c.phi_clusters.size()), 1.0);
  VecRows x(n);
  x.add_weighted(c.phi_clusters, w, 1.0);
  AlphaBlock alpha = add_alpha(lp, up, n, prog.k());
  for (int cc = 0; cc < n; ++cc) {
    Terms row = x.rows[cc];
    row.insert(row.end(), alpha.x.rows[cc].begin(), alpha.x.rows[cc].end());
    lp.residual_row(row, 0.0);
  }
  LPResult res = lp.solve();
  if (!res.optimal()) throw Error("value stationarity program failed to solve");
  c.x_star = values(x, res.z);
  c.alpha = alpha_values(alpha, up, res.z);
  c.residual = std::max(res.objective, 0.0);
  double scale = 1.0;
  for (const auto& g : c.phi_clusters) scale = std::max(scale, inf_norm(g));
  c.tol = opt.tol + 10.0 * fd.radius * scale;
  // the program is the exact distance over the cluster hull
  decide(c, c.residual, false);
  if (c.status == CertStatus::Refuted) c.notes.back() = "lower bound holds over the hull of the sampled gradient clusters";
  if (opt.with_cq) c.cq.push_back(check_polyhedral_calmness(prog, CalmTarget::X));
  return c;
}

Certificate certify_optimistic(const BilevelProgram& prog, const Vec& xbar, CertVariant variant,
                               const CertifyOptions& opt) {
  check_point(prog, xbar);
  opt.caps.validate();
  opt.grid.validate();
  Certificate c = header(prog, xbar, to_string(variant), Mode::Optimistic, opt);
  Setup s;
  s.prog = &prog;
  s.xbar = xbar;
  s.variant = variant;
  s.act = c.activity;
  s.upper_tol = c.upper_activity;
  s.caps = opt.caps;
  s.fixed_r = opt.fixed_r;
  s.up = upper_data(prog, xbar, c.upper_activity);

  std::vector<Vec> ys = samples(optimistic_solutions(prog, xbar, opt.grid), opt.caps);
  Pieces pieces;
  Pieces* shift = nullptr;
  if (variant == CertVariant::III) {
    Vec ybar = opt.ybar ? *opt.ybar : ys.front();
    if (!opt.ybar && ys.size() > 1) c.notes.push_back("designated ybar is the first S_o sample in farthest-point order");
    ys = {ybar};
  }
  if (variant == CertVariant::I || variant == CertVariant::III) {
    std::vector<Vec> lower = variant == CertVariant::I ? samples(lower_solutions(prog, xbar, opt.grid), opt.caps) : ys;
    pieces = make_pieces(prog, xbar, lower, c.activity, opt.caps);
    if (pieces.verts.empty()) {
      c.tol = opt.tol;
      c.notes.push_back("no sampled lower solution admits multipliers for the phi inclusion");
      c.status = CertStatus::Inconclusive;
      return c;
    }
    shift = &pieces;
  }
  c.tol = opt.tol + tolerance_slack(prog, opt.grid, ys, xbar, c.activity);

  std::vector<Outcome> outs(ys.size());
  std::exception_ptr err;
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < ys.size(); ++k) {
    try {
      Pieces local = shift ? *shift : Pieces{};
      outs[k] = solve_system(s, {ys[k]}, shift ? &local : nullptr);
    } catch (...) {
#pragma omp critical
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  // lowest LP optimum wins; ties go to the earlier sample
  int best = -1;
  double bound = kInf;
  for (std::size_t k = 0; k < outs.size(); ++k) {
    bound = std::min(bound, outs[k].bound);
    if (outs[k].posed && (best < 0 || outs[k].cert.residual < outs[best].cert.residual)) best = static_cast<int>(k);
  }
  if (best < 0) {
    c.notes.push_back(outs.front().failure);
    decide(c, bound, false);
    return c;
  }
  bool at_cap = false;
  for (const auto& o : outs) at_cap = at_cap || (o.bound <= bound * (1 + 1e-9) + 1e-15 && o.at_cap);
  merge(c, std::move(outs[best].cert));
  if (variant == CertVariant::III && !c.x_s.empty()) {
    c.x_phi = c.x_s.front();
    c.gamma = c.u_s.front();
    c.ys.clear();
    c.x_s.clear();
    c.u_s.clear();
    c.v.clear();
  }
  decide(c, bound, at_cap);
  if (opt.with_cq) c.cq = bundle(prog, Mode::Optimistic, variant, xbar, c.y, opt);
  return c;
}

Certificate certify_pessimistic(const BilevelProgram& prog, const Vec& xbar, CertVariant variant,
                                const CertifyOptions& opt) {
  check_point(prog, xbar);
  opt.caps.validate();
  opt.grid.validate();
  Certificate c = header(prog, xbar, to_string(variant), Mode::Pessimistic, opt);
  const BilevelProgram neg = prog.with_negated_upper();
  Setup s;
  s.prog = &neg;
  s.xbar = xbar;
  s.variant = variant;
  s.pessimistic = true;
  s.act = c.activity;
  s.upper_tol = c.upper_activity;
  s.caps = opt.caps;
  s.fixed_r = opt.fixed_r;
  s.up = upper_data(prog, xbar, c.upper_activity);

  std::vector<Vec> ys = samples(pessimistic_solutions(prog, xbar, opt.grid), opt.caps);
  Pieces pieces;
  Pieces* shift = nullptr;
  if (variant == CertVariant::III) {
    Vec ybar = opt.ybar ? *opt.ybar : ys.front();
    if (!opt.ybar && ys.size() > 1) c.notes.push_back("designated ybar is the first S_o^p sample in farthest-point order");
    ys.assign(static_cast<std::size_t>(prog.n + 1), ybar);
  }
  if (variant == CertVariant::I || variant == CertVariant::III) {
    std::vector<Vec> lower = variant == CertVariant::I ? samples(lower_solutions(prog, xbar, opt.grid), opt.caps)
                                                       : std::vector<Vec>{ys.front()};
    pieces = make_pieces(neg, xbar, lower, c.activity, opt.caps);
    if (pieces.verts.empty()) {
      c.tol = opt.tol;
      c.notes.push_back("no sampled lower solution admits multipliers for the phi inclusion");
      c.status = CertStatus::Inconclusive;
      return c;
    }
    shift = &pieces;
  }
  c.tol = opt.tol + tolerance_slack(neg, opt.grid, ys, xbar, c.activity);

  Outcome o = solve_system(s, ys, shift);
  if (!o.posed) {
    c.notes.push_back(o.failure);
    decide(c, o.bound, false);
    return c;
  }
  merge(c, std::move(o.cert));
  if (variant == CertVariant::III && !c.x_s.empty()) {
    c.x_phi = c.x_s.front();
    c.gamma = c.u_s.front();
    c.ys.clear();
    c.x_s.clear();
    c.u_s.clear();
    c.v.clear();
  }
  decide(c, o.bound, o.at_cap);
  if (opt.with_cq) c.cq = bundle(prog, Mode::Pessimistic, variant, xbar, c.yt.empty() ? ys.front() : c.yt.front(), opt);
  return c;
}

MinimaxReport minimax_reduction_check(const BilevelProgram& prog, const Vec& xbar, const GridSpec& grid, double tol,
                                      const Caps& caps) {
  check_point(prog, xbar);
  if (!prog.f.is_constant()) throw NotApplicable("lower objective is not constant; S(x) differs from K(x)");
  MinimaxReport rep;
  Estimate est = estimate_pessimistic(prog, xbar, EstimateVariant::Semicompact, grid, caps);
  rep.estimate = est.set;
  rep.maximizers = samples(pessimistic_solutions(prog, xbar, grid), caps);
  const ActivityTolerance act = activity_for(prog, grid);
  std::vector<Vec> pts;
  double scale = 1.0;
  for (const auto& y : rep.maximizers)
    for (auto& g : x_generators(clarke_generators(prog.F, xbar, y, act), prog.n)) {
      scale = std::max(scale, inf_norm(g));
      pts.push_back(g);
    }
  rep.direct = hull(prog.n, pts).reduced();
  rep.excess = excess(rep.direct, rep.estimate);
  rep.tol = tol + grid.finest_cell(prog) * scale;
  rep.contained = rep.excess <= rep.tol;
  return rep;
}

}  // namespace bilevel
