#include "bilevel/cq.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/lp.hpp"
#include "bilevel/sampling.hpp"

namespace bilevel {

std::string to_string(CQKind k) {
  switch (k) {
    case CQKind::PolyhedralCalmness: return "PolyhedralCalmness";
    case CQKind::CQ_K: return "CQ_K";
    case CQKind::CQ_S: return "CQ_S";
    case CQKind::GenMFCQ: return "GenMFCQ";
    case CQKind::InnerSemicompact: return "InnerSemicompact";
    case CQKind::InnerSemicontinuous: return "InnerSemicontinuous";
    case CQKind::CodCQConvex: return "CodCQConvex";
  }
  return "?";
}

std::string to_string(CQStatus s) {
  switch (s) {
    case CQStatus::Guaranteed: return "Guaranteed";
    case CQStatus::Holds: return "Holds";
    case CQStatus::Fails: return "Fails";
    case CQStatus::Unknown: return "Unknown";
  }
  return "?";
}

CQVerdict check_polyhedral_calmness(const BilevelProgram& prog, CalmTarget which) {
  CQVerdict v;
  v.kind = CQKind::PolyhedralCalmness;
  auto all_affine = [](const std::vector<Expr>& es) {
    return std::all_of(es.begin(), es.end(), [](const Expr& e) { return e.is_affine(); });
  };
  bool affine = false;
  switch (which) {
    case CalmTarget::K:
      v.target = "Phi^K";
      affine = all_affine(prog.g);
      break;
    case CalmTarget::S:
      v.target = "Phi^S";
      affine = all_affine(prog.g) && prog.f.is_affine();
      break;
    case CalmTarget::X:
      v.target = "Phi^X";
      affine = all_affine(prog.theta1);
      break;
  }
  v.status = affine ? CQStatus::Guaranteed : CQStatus::Unknown;
  v.note = affine ? "polyhedral data" : "non-affine data: calmness not decided";
  return v;
}

namespace {

double inf_norm(const Vec& v) {
  double m = 0.0;
  for (double c : v) m = std::max(m, std::abs(c));
  return m;
}

// Weighted average of generators, as a point of their hull.
Vec combine(const std::vector<Vec>& gens, const Vec& z, int first, std::size_t dim) {
  Vec q(dim, 0.0);
  double total = 0.0;
  for (std::size_t k = 0; k < gens.size(); ++k) total += z[first + k];
  if (total <= 0) return {};
  for (std::size_t k = 0; k < gens.size(); ++k)
    for (std::size_t c = 0; c < dim; ++c) q[c] += z[first + k] / total * gens[k][c];
  return q;
}

// Hausdorff distance between two finite point sets.
double set_gap(const std::vector<Vec>& a, const std::vector<Vec>& b) {
  auto one_side = [](const std::vector<Vec>& p, const std::vector<Vec>& q) {
    double worst = 0.0;
    for (const auto& v : p) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& w : q) {
        double d = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) d = std::max(d, std::abs(v[i] - w[i]));
        best = std::min(best, d);
      }
      worst = std::max(worst, best);
    }
    return worst;
  };
  if (a.empty() || b.empty()) return a.empty() && b.empty() ? 0.0 : std::numeric_limits<double>::infinity();
  return std::max(one_side(a, b), one_side(b, a));
}

constexpr double kFdAccuracy = 1e-4;

}  // namespace

CQVerdict check_pointbased_cq(const BilevelProgram& prog, PointCQ which, const Vec& xbar, const Vec& y,
                              const CQOptions& opt) {
  opt.caps.validate();
  const int n = prog.n, m = prog.m, p = prog.p();
  CQVerdict v;
  v.kind = which == PointCQ::K ? CQKind::CQ_K : CQKind::CQ_S;
  v.target = "pointbased";
  v.tolerance = opt.tol;
  PointData d = point_data(prog, xbar, y, activity_for(prog, opt.grid));

  std::vector<Vec> phi_clusters;
  if (which == PointCQ::S) {
    // ∂φ from finite differences; two direction sets must agree
    GridSpec fine = deepened(prog, opt.grid);
    ScalarFn phi = value_function(prog, ValueKind::Phi, fine);
    FdOptions a, b;
    a.seed = opt.seed;
    b.seed = opt.seed + 7919;
    v.tolerance = opt.tol + kFdAccuracy;
    double spread = 0.0;
    try {
      phi_clusters = fd_subgradient_samples(phi, xbar, a);
      spread = set_gap(phi_clusters, fd_subgradient_samples(phi, xbar, b));
    } catch (const Infeasible&) {
      // one-sided clusters would miss the normal-cone part of ∂φ
      v.status = CQStatus::Unknown;
      v.note = "x̄ is on the boundary of dom phi";
      return v;
    }
    if (phi_clusters.empty() || spread > 10 * v.tolerance) {
      v.status = CQStatus::Unknown;
      v.measure = spread;
      v.note = "finite-difference clusters of phi are ambiguous";
      return v;
    }
  }

  // variables: mu_ik (active g generators), then for S: nu_l (f generators), rho_c (phi clusters)
  LinearProgram lp;
  std::vector<int> g_first(p, -1);
  for (int i : d.active) {
    g_first[i] = lp.num_vars();
    for (std::size_t k = 0; k < d.g[i].size(); ++k) lp.add_var();
  }
  int f_first = lp.num_vars(), rho_first = f_first;
  if (which == PointCQ::S) {
    for (std::size_t l = 0; l < d.f.size(); ++l) lp.add_var();
    rho_first = lp.num_vars();
    for (std::size_t c = 0; c < phi_clusters.size(); ++c) lp.add_var();
  }
  const int nvars = lp.num_vars();
  if (nvars == 0) {
    v.status = CQStatus::Holds;
    v.note = "no active constraints";
    return v;
  }
  auto x_coef = [&](int j) {
    Vec a = lp.zero_row();
    for (int i : d.active)
      for (std::size_t k = 0; k < d.g[i].size(); ++k) a[g_first[i] + k] = d.g[i][k][j];
    if (which == PointCQ::S) {
      for (std::size_t l = 0; l < d.f.size(); ++l) a[f_first + l] = d.f[l][j];
      for (std::size_t c = 0; c < phi_clusters.size(); ++c) a[rho_first + c] = -phi_clusters[c][j];
    }
    return a;
  };
  for (int j = 0; j < m; ++j) {
    Vec a = lp.zero_row();
    for (int i : d.active)
      for (std::size_t k = 0; k < d.g[i].size(); ++k) a[g_first[i] + k] = d.g[i][k][n + j];
    if (which == PointCQ::S)
      for (std::size_t l = 0; l < d.f.size(); ++l) a[f_first + l] = d.f[l][n + j];
    lp.add_eq(a, 0.0);
  }
  {
    Vec norm = lp.zero_row();
    for (int t = 0; t < rho_first; ++t) norm[t] = 1.0;
    lp.add_le(norm, 1.0);
  }
  for (int i : d.active) {
    Vec a = lp.zero_row();
    for (std::size_t k = 0; k < d.g[i].size(); ++k) a[g_first[i] + k] = 1.0;
    lp.add_le(a, opt.caps.u_max);
  }
  if (which == PointCQ::S) {
    Vec a = lp.zero_row(), rho = lp.zero_row();
    for (std::size_t l = 0; l < d.f.size(); ++l) a[f_first + l] = 1.0;
    lp.add_le(a, opt.caps.r_max);
    // sum rho = sum nu = r
    for (std::size_t l = 0; l < d.f.size(); ++l) rho[f_first + l] = -1.0;
    for (std::size_t c = 0; c < phi_clusters.size(); ++c) rho[rho_first + c] = 1.0;
    lp.add_eq(rho, 0.0);
  }

  double best = 0.0;
  LPResult arg;
  for (int j = 0; j < n; ++j)
    for (double sign : {1.0, -1.0}) {
      LinearProgram q = lp;
      Vec a = x_coef(j);
      for (int t = 0; t < nvars; ++t) q.c[t] = -sign * a[t];
      LPResult r = solve_lp(q);
      if (r.status == LPStatus::Unbounded) throw BudgetError("pointbased CQ program unbounded");
      if (!r.optimal()) continue;
      if (-r.objective > best) {
        best = -r.objective;
        arg = r;
      }
    }
  v.measure = best;
  if (best <= v.tolerance) {
    v.status = CQStatus::Holds;
    return v;
  }
  v.status = CQStatus::Fails;
  v.has_witness = true;
  CQWitness& w = v.witness;
  w.x_star.assign(n, 0.0);
  for (int j = 0; j < n; ++j) {
    Vec a = x_coef(j);
    for (int t = 0; t < nvars; ++t) w.x_star[j] += a[t] * arg.z[t];
  }
  w.u.assign(p, 0.0);
  w.g_points.assign(p, Vec{});
  for (int i : d.active) {
    for (std::size_t k = 0; k < d.g[i].size(); ++k) w.u[i] += arg.z[g_first[i] + k];
    w.g_points[i] = combine(d.g[i], arg.z, g_first[i], n + m);
  }
  if (which == PointCQ::S) {
    for (std::size_t l = 0; l < d.f.size(); ++l) w.r += arg.z[f_first + l];
    w.f_point = combine(d.f, arg.z, f_first, n + m);
    w.phi_point = combine(phi_clusters, arg.z, rho_first, n);
  }
  return v;
}

CQVerdict check_gen_mfcq(const BilevelProgram& prog, const Vec& xbar, const Vec& ybar, double tol) {
  const int n = prog.n, m = prog.m, p = prog.p();
  CQVerdict v;
  v.kind = CQKind::GenMFCQ;
  v.target = "lower constraints";
  v.tolerance = tol;
  PointData d = point_data(prog, xbar, ybar, ActivityTolerance{});
  if (d.active.empty()) {
    v.status = CQStatus::Holds;
    v.measure = std::numeric_limits<double>::infinity();
    v.note = "no active constraints";
    return v;
  }
  LinearProgram lp;
  std::vector<int> first(p, -1);
  for (int i : d.active) {
    first[i] = lp.num_vars();
    for (std::size_t k = 0; k < d.g[i].size(); ++k) lp.add_var();
  }
  const int t = lp.add_var(0.0, kInf, 1.0);
  Vec simplex = lp.zero_row();
  for (int s = 0; s < t; ++s) simplex[s] = 1.0;
  lp.add_eq(simplex, 1.0);
  for (int c = 0; c < n + m; ++c) {
    Vec a = lp.zero_row();
    for (int i : d.active)
      for (std::size_t k = 0; k < d.g[i].size(); ++k) a[first[i] + k] = d.g[i][k][c];
    Vec lo = a;
    a[t] = -1.0;
    lo[t] = 1.0;
    lp.add_le(a, 0.0);
    lp.add_ge(lo, 0.0);
  }
  LPResult r = solve_lp(lp);
  if (!r.optimal()) throw BudgetError("generalized MFCQ program did not solve");
  v.measure = r.objective;
  if (r.objective > tol) {
    v.status = CQStatus::Holds;
    return v;
  }
  v.status = CQStatus::Fails;
  v.has_witness = true;
  v.witness.u.assign(p, 0.0);
  v.witness.g_points.assign(p, Vec{});
  for (int i : d.active) {
    for (std::size_t k = 0; k < d.g[i].size(); ++k) v.witness.u[i] += r.z[first[i] + k];
    v.witness.g_points[i] = combine(d.g[i], r.z, first[i], n + m);
  }
  return v;
}

namespace {

SolutionSet mode_solutions(const BilevelProgram& prog, const Vec& x, const GridSpec& grid) {
  return prog.mode == Mode::Optimistic ? optimistic_solutions(prog, x, grid) : pessimistic_solutions(prog, x, grid);
}

double dist_to(const std::vector<Vec>& pts, const Vec& y) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : pts) {
    double d = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) d = std::max(d, std::abs(q[j] - y[j]));
    best = std::min(best, d);
  }
  return best;
}

}  // namespace

CQVerdict check_inner_regularity(const BilevelProgram& prog, InnerKind kind, const Vec& xbar, double radius,
                                 int n_samples, const Vec* ybar, const GridSpec& grid, std::uint64_t seed) {
  if (!(radius > 0)) throw DomainError("inner regularity: radius must be positive");
  if (n_samples < 1) throw DomainError("inner regularity: n_samples must be >= 1");
  CQVerdict v;
  v.kind = kind == InnerKind::Semicompact ? CQKind::InnerSemicompact : CQKind::InnerSemicontinuous;
  v.target = prog.mode == Mode::Optimistic ? "S_o" : "S_o^p";
  const double cell = grid.finest_cell(prog);
  Rng rng(seed);

  if (kind == InnerKind::Semicompact) {
    const double margin = 1e-6 + 4 * cell;
    v.tolerance = margin;
    for (int s = 0; s < n_samples; ++s) {
      Vec x = rng.in_cube(prog.n);
      for (int i = 0; i < prog.n; ++i) x[i] = xbar[i] + radius * x[i];
      SolutionSet S;
      try {
        S = mode_solutions(prog, x, grid);
      } catch (const Infeasible&) {
        v.status = CQStatus::Unknown;
        v.note = "solution map empty at a sampled x";
        v.witness.x_offending = x;
        return v;
      }
      for (const auto& y : S.points)
        for (int j = 0; j < prog.m; ++j)
          if (y[j] <= prog.y_box[j].lo + margin || y[j] >= prog.y_box[j].hi - margin) {
            v.status = CQStatus::Unknown;
            v.note = "solutions touch the y-box: boundedness not evidenced";
            v.witness.x_offending = x;
            return v;
          }
    }
    v.status = CQStatus::Holds;
    v.note = "nonempty and interior at every sampled x";
    return v;
  }

  Vec y0;
  if (ybar) {
    y0 = *ybar;
  } else {
    SolutionSet S0 = mode_solutions(prog, xbar, grid);
    y0 = S0.points.front();
  }
  if (!prog.lower_feasible(xbar, y0, 1e-9 + cell)) throw InfeasiblePoint("ybar is not lower-feasible at xbar");
  // distance from ȳ to the map at shrinking radii; inner semicontinuity
  // needs it to shrink with the radius
  const double slack = 4 * cell + 1e-3;
  v.tolerance = slack;
  constexpr int kLevels = 6;
  double C = 0.0;
  for (int j = 0; j < kLevels; ++j) {
    const double rho = radius * std::ldexp(1.0, -j);
    double worst = 0.0;
    Vec worst_x;
    for (int s = 0; s < n_samples; ++s) {
      Vec x = rng.in_cube(prog.n);
      // half of the samples on the cube surface, where the offset is largest
      if (s % 2 == 0) {
        int i = static_cast<int>(rng.uniform() * prog.n);
        x[std::min(i, prog.n - 1)] = rng.uniform() < 0.5 ? -1.0 : 1.0;
      }
      for (int i = 0; i < prog.n; ++i) x[i] = xbar[i] + rho * x[i];
      double d;
      try {
        d = dist_to(mode_solutions(prog, x, grid).points, y0);
      } catch (const Infeasible&) {
        v.status = CQStatus::Unknown;
        v.note = "solution map empty at a sampled x";
        v.witness.x_offending = x;
        return v;
      }
      if (d > worst || worst_x.empty()) {
        worst = d;
        worst_x = x;
      }
    }
    if (j == 0) C = 2.0 * std::max(1.0, worst / rho);
    v.measure = std::max(v.measure, worst / rho);
    if (worst > C * rho + slack) {
      v.status = CQStatus::Fails;
      v.has_witness = true;
      v.witness.x_offending = worst_x;
      v.witness.distance = worst;
      v.note = "dist(ybar, map(x)) does not shrink with |x - xbar|";
      return v;
    }
  }
  v.status = CQStatus::Holds;
  v.note = "distance shrinks with the radius at every sampled level";
  return v;
}

CQVerdict check_codcq_convex(const BilevelProgram& prog, const Vec& xbar, const Vec& ybar) {
  (void)xbar;
  (void)ybar;
  CQVerdict v;
  v.kind = CQKind::CodCQConvex;
  v.target = "parameter-independent constraints";
  if (std::any_of(prog.g.begin(), prog.g.end(), [](const Expr& e) { return e.uses_x(); }))
    throw NotApplicable("x appears in the lower constraints");
  bool affine = std::all_of(prog.g.begin(), prog.g.end(), [](const Expr& e) { return e.is_affine_in_y(); });
  v.status = affine ? CQStatus::Guaranteed : CQStatus::Unknown;
  v.note = affine ? "constraints affine in y" : "non-affine constraints";
  if (!prog.convex_declared) v.note += "; convexity not declared";
  return v;
}

std::vector<CQVerdict> hypotheses_for(const BilevelProgram& prog, EstimateVariant variant, const Vec& xbar,
                                      const Vec& y, const CQOptions& opt) {
  std::vector<CQVerdict> out;
  out.push_back(check_polyhedral_calmness(prog, CalmTarget::K));
  out.push_back(check_polyhedral_calmness(prog, CalmTarget::S));
  out.push_back(check_pointbased_cq(prog, PointCQ::K, xbar, y, opt));
  out.push_back(check_pointbased_cq(prog, PointCQ::S, xbar, y, opt));
  switch (variant) {
    case EstimateVariant::Semicompact:
      out.push_back(check_inner_regularity(prog, InnerKind::Semicompact, xbar, 0.1, 8, nullptr, opt.grid, opt.seed));
      break;
    case EstimateVariant::Semicontinuous:
      out.push_back(check_gen_mfcq(prog, xbar, y, opt.tol));
      out.push_back(check_inner_regularity(prog, InnerKind::Semicontinuous, xbar, 0.1, 8, &y, opt.grid, opt.seed));
      break;
    case EstimateVariant::Convex: {
      CQVerdict c;
      c.kind = CQKind::CodCQConvex;
      c.target = "full convexity";
      c.status = prog.convex_declared ? CQStatus::Holds : CQStatus::Unknown;
      int bad = convexity_violations(prog.F, prog, 100, opt.seed) + convexity_violations(prog.f, prog, 100, opt.seed);
      for (const auto& g : prog.g) bad += convexity_violations(g, prog, 100, opt.seed);
      if (bad > 0) {
        c.status = CQStatus::Unknown;
        c.note = "midpoint spot-check found " + std::to_string(bad) + " violations";
      } else {
        c.note = prog.convex_declared ? "declared, spot-check clean" : "not declared";
      }
      out.push_back(c);
      break;
    }
  }
  return out;
}

bool all_ok(const std::vector<CQVerdict>& verdicts) {
  return std::all_of(verdicts.begin(), verdicts.end(), [](const CQVerdict& v) { return v.ok(); });
}

double witness_violation(const BilevelProgram& prog, const CQVerdict& v, const Vec& xbar, const Vec& y) {
  if (!v.has_witness) return 0.0;
  const int n = prog.n, m = prog.m, p = prog.p();
  const CQWitness& w = v.witness;
  // every chosen point must lie in the hull of its generators
  auto in_hull = [&](const Expr& e, const Vec& q) {
    auto gens = clarke_generators(e, xbar, y, ActivityTolerance(1e-6));
    return distance(hull(n + m, gens), q) <= 1e-9;
  };
  switch (v.kind) {
    case CQKind::CQ_K:
    case CQKind::CQ_S: {
      Vec lhs(n + m, 0.0);
      for (int i = 0; i < p; ++i) {
        if (w.u[i] == 0.0) continue;
        if (w.u[i] < 0 || !in_hull(prog.g[i], w.g_points[i])) return 0.0;
        if (std::abs(prog.g[i].eval(xbar, y)) > 1e-6) return 0.0;
        for (int c = 0; c < n + m; ++c) lhs[c] += w.u[i] * w.g_points[i][c];
      }
      if (v.kind == CQKind::CQ_S && w.r > 0) {
        if (!in_hull(prog.f, w.f_point)) return 0.0;
        for (int c = 0; c < n + m; ++c) lhs[c] += w.r * w.f_point[c];
        for (int c = 0; c < n; ++c) lhs[c] -= w.r * w.phi_point[c];
      }
      for (int c = 0; c < n; ++c)
        if (std::abs(lhs[c] - w.x_star[c]) > 1e-9) return 0.0;
      for (int c = 0; c < m; ++c)
        if (std::abs(lhs[n + c]) > 1e-9) return 0.0;
      return inf_norm(w.x_star);
    }
    case CQKind::GenMFCQ: {
      Vec sum(n + m, 0.0);
      for (int i = 0; i < p; ++i) {
        if (w.u[i] == 0.0) continue;
        if (w.u[i] < 0 || !in_hull(prog.g[i], w.g_points[i])) return 0.0;
        for (int c = 0; c < n + m; ++c) sum[c] += w.u[i] * w.g_points[i][c];
      }
      if (inf_norm(sum) > v.tolerance) return 0.0;
      return inf_norm(w.u);
    }
    case CQKind::InnerSemicontinuous: {
      SolutionSet S = mode_solutions(prog, w.x_offending, GridSpec{});
      double off = 0.0;
      for (int i = 0; i < n; ++i) off = std::max(off, std::abs(w.x_offending[i] - xbar[i]));
      return dist_to(S.points, y) - off;
    }
    default:
      return 0.0;
  }
}

}  // namespace bilevel
