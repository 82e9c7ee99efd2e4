#include "bilevel/sensitivity.hpp"

#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/lp.hpp"
#include "bilevel/sampling.hpp"

namespace bilevel {

void Caps::validate() const {
  if (!(y_residual >= 0)) throw DomainError("caps: y_residual must be >= 0");
  if (!(r_max >= 0) || !(u_max > 0)) throw DomainError("caps: r_max must be >= 0 and u_max > 0");
  if (simplex_steps < 1 || max_y_samples < 1) throw DomainError("caps: simplex_steps and max_y_samples must be >= 1");
  if (log_r_max < -3) throw DomainError("caps: log_r_max must be >= -3");
}

ActivityTolerance activity_for(const BilevelProgram& prog, const GridSpec& grid) {
  return ActivityTolerance(1e-8 + 4.0 * grid.finest_cell(prog), 1e-8);
}

PointData point_data(const BilevelProgram& prog, const Vec& xbar, const Vec& y, ActivityTolerance tol) {
  PointData d;
  d.y = y;
  d.F = clarke_generators(prog.F, xbar, y, tol);
  d.f = clarke_generators(prog.f, xbar, y, tol);
  d.g.resize(prog.g.size());
  for (std::size_t i = 0; i < prog.g.size(); ++i) {
    double v = prog.g[i].eval(xbar, y);
    if (v > tol.at(std::abs(v))) throw InfeasiblePoint("y violates lower constraint " + std::to_string(i + 1));
    if (v < -tol.at(std::abs(v))) continue;
    d.active.push_back(static_cast<int>(i));
    d.g[i] = clarke_generators(prog.g[i], xbar, y, tol);
  }
  return d;
}

namespace {

// Lifted description of sums of generator hulls. Every generator gets a
// nonnegative weight; a Simplex block's weights sum to 1, a Scaled block's
// to the free scalar r, a Cone block's to its multiplier. The y-part of the
// weighted sum is forced to zero.
enum class Kind { Simplex, Scaled, Cone };

struct Block {
  const std::vector<Vec>* gens;
  Kind kind;
  int tag = -1;  // constraint index for Cone blocks
};

struct System {
  Eigen::MatrixXd M;
  Eigen::VectorXd b;
  std::vector<int> first;  // first variable of every block
  int vars = 0;
  int slack = -1;  // r cap slack variable
  double relaxed_by = 0.0;
};

System base_system(int n, int m, const std::vector<Block>& blocks, bool cap, double r_max, double y_slack) {
  System s;
  for (const auto& bl : blocks) {
    s.first.push_back(s.vars);
    s.vars += static_cast<int>(bl.gens->size());
  }
  if (cap) s.slack = s.vars++;
  const int relax = y_slack > 0 ? s.vars : -1;  // (s+, s-, pad) per y-row
  if (y_slack > 0) s.vars += 3 * m;
  int simplex_rows = 0;
  for (const auto& bl : blocks) simplex_rows += bl.kind == Kind::Simplex;
  const int rows = m + simplex_rows + (cap ? 1 : 0) + (y_slack > 0 ? m : 0);
  s.M = Eigen::MatrixXd::Zero(rows, s.vars);
  s.b = Eigen::VectorXd::Zero(rows);
  int row = m;
  const int cap_row = m + simplex_rows;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& bl = blocks[k];
    for (std::size_t l = 0; l < bl.gens->size(); ++l) {
      int v = s.first[k] + static_cast<int>(l);
      for (int j = 0; j < m; ++j) s.M(j, v) = (*bl.gens)[l][n + j];
      if (bl.kind == Kind::Simplex) s.M(row, v) = 1.0;
      if (cap && bl.kind == Kind::Scaled) s.M(cap_row, v) = 1.0;
    }
    if (bl.kind == Kind::Simplex) s.b(row++) = 1.0;
  }
  if (cap) {
    s.M(cap_row, s.slack) = 1.0;
    s.b(cap_row) = r_max;
  }
  for (int j = 0; y_slack > 0 && j < m; ++j) {
    const int v = relax + 3 * j, r = rows - m + j;
    s.M(j, v) = 1.0;
    s.M(j, v + 1) = -1.0;
    s.M(r, v) = s.M(r, v + 1) = s.M(r, v + 2) = 1.0;
    s.b(r) = y_slack;
  }
  return s;
}

// Least infinity-norm residual of the y-rows over the nonnegative weights
// meeting the remaining rows; +inf when those rows alone are infeasible.
double least_residual(const System& s, int m) {
  LinearProgram lp;
  for (int v = 0; v < s.vars; ++v) lp.add_var();
  const int t = lp.add_var(0.0, kInf, 1.0);
  for (int r = 0; r < s.M.rows(); ++r) {
    Vec a = lp.zero_row();
    for (int v = 0; v < s.vars; ++v) a[v] = s.M(r, v);
    if (r < m) {
      Vec lo = a;
      lo[t] = 1.0;
      a[t] = -1.0;
      lp.add_le(a, s.b(r));
      lp.add_ge(lo, s.b(r));
    } else {
      lp.add_eq(a, s.b(r));
    }
  }
  LPResult res = solve_lp(lp);
  return res.optimal() ? std::max(res.objective, 0.0) : kInf;
}

// Exact y-rows when they can be met; otherwise rows relaxed to the least
// attainable residual, provided it does not exceed max_residual.
System build_system(int n, int m, const std::vector<Block>& blocks, bool cap, double r_max, double max_residual) {
  System s = base_system(n, m, blocks, cap, r_max, 0.0);
  if (!(max_residual > 0)) return s;
  const double t = least_residual(s, m);
  if (t <= 1e-12 || t > max_residual) return s;
  System relaxed = base_system(n, m, blocks, cap, r_max, t * (1 + 1e-9) + 1e-15);
  relaxed.relaxed_by = t;
  return relaxed;
}

// Output rows: x-part of the weighted sum minus r * shift (when given).
Eigen::MatrixXd x_rows(int n, const std::vector<Block>& blocks, const System& s, const Vec* shift) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, s.vars);
  for (std::size_t k = 0; k < blocks.size(); ++k)
    for (std::size_t l = 0; l < blocks[k].gens->size(); ++l) {
      int v = s.first[k] + static_cast<int>(l);
      for (int i = 0; i < n; ++i) {
        L(i, v) = (*blocks[k].gens)[l][i];
        if (shift && blocks[k].kind == Kind::Scaled) L(i, v) -= (*shift)[i];
      }
    }
  return L;
}

Eigen::RowVectorXd r_row(const std::vector<Block>& blocks, const System& s) {
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(s.vars);
  for (std::size_t k = 0; k < blocks.size(); ++k)
    if (blocks[k].kind == Kind::Scaled)
      for (std::size_t l = 0; l < blocks[k].gens->size(); ++l) r(s.first[k] + static_cast<int>(l)) = 1.0;
  return r;
}

// One row per lower constraint: the multiplier of constraint i (zero row
// when inactive), so complementarity holds exactly.
Eigen::MatrixXd multiplier_rows(int p, const std::vector<Block>& blocks, const System& s) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(p, s.vars);
  for (std::size_t k = 0; k < blocks.size(); ++k)
    if (blocks[k].kind == Kind::Cone)
      for (std::size_t l = 0; l < blocks[k].gens->size(); ++l) L(blocks[k].tag, s.first[k] + static_cast<int>(l)) = 1.0;
  return L;
}

void add_cones(const PointData& d, std::vector<Block>& blocks) {
  for (int i : d.active) blocks.push_back({&d.g[i], Kind::Cone, i});
}

// Sign-exact multipliers: round-off below zero from the basis solves is
// clipped so emitted generators satisfy the sign constraints exactly.
Polytope clip_nonnegative(const Polytope& P) {
  if (P.is_empty()) return P;
  auto fix = [](std::vector<Vec> vs) {
    for (auto& v : vs)
      for (auto& c : v)
        if (c < 0 && c > -1e-11) c = 0.0;
    return vs;
  };
  return hull(P.dim(), fix(P.vertices()), fix(P.rays())).reduced();
}

Polytope drop_last(const Polytope& P) {
  if (P.is_empty()) return Polytope::empty(P.dim() - 1);
  auto cut = [](const std::vector<Vec>& vs) {
    std::vector<Vec> out;
    for (auto v : vs) {
      v.pop_back();
      out.push_back(std::move(v));
    }
    return out;
  };
  return hull(P.dim() - 1, cut(P.vertices()), cut(P.rays())).reduced();
}

std::vector<Vec> sample_points(const SolutionSet& s, const Caps& caps) {
  return farthest_points(s.points, static_cast<std::size_t>(caps.max_y_samples));
}

void check_domains(const BilevelProgram& prog) {
  if (prog.has_undeclared_domains())
    throw NotApplicable("div/log without assume_safe_domains: the data may not be Lipschitz");
}

Polytope hull_x(const std::vector<Vec>& gens, int n) { return hull(n, x_generators(gens, n)).reduced(); }

// Sum of lambda_i * P_i with every P_i bounded.
Polytope weighted_sum(int n, Polytope acc, const std::vector<std::pair<double, Polytope>>& terms) {
  for (const auto& [w, P] : terms) {
    if (w == 0.0) continue;
    acc = minkowski_sum(acc, w > 0 ? scale(P, w) : scale(negate(P), -w));
  }
  (void)n;
  return acc;
}

bool any_r_at_cap(const Polytope& P, double r_max) {
  if (r_max <= 0) return false;
  for (const auto& v : P.vertices())
    if (v.back() >= r_max * (1 - 1e-12)) return true;
  return false;
}

bool any_r_positive(const Polytope& P) {
  for (const auto& v : P.vertices())
    if (v.back() > 0) return true;
  return false;
}

// Multiplier estimate over the given upper points and lower
// points. Returns the hull, accumulating diagnostics into est.
Polytope compact_estimate(const BilevelProgram& prog, const Vec& xbar, const std::vector<Vec>& upper_ys,
                          const std::vector<Vec>& lower_ys, ActivityTolerance tol, const Caps& caps, Estimate& est) {
  const int n = prog.n;
  std::vector<Polytope> pieces;
  for (const auto& ys : lower_ys) {
    PointData d = point_data(prog, xbar, ys, tol);
    d.y_residual = caps.y_residual;
    Polytope A = phi_gradients(d, n, caps.budget);
    if (A.is_empty())
      ++est.empty_multiplier_points;
    else
      pieces.push_back(A);
  }
  if (pieces.empty()) throw EmptyEstimate("no sampled lower solution admits multipliers for the phi inclusion");
  Polytope Phi = hull_union(n, pieces);

  std::vector<Polytope> parts;
  for (const auto& y : upper_ys) {
    PointData d = point_data(prog, xbar, y, tol);
    d.y_residual = caps.y_residual;
    std::vector<Vec> pts, rays;
    bool r_pos = false;
    for (const auto& phi : Phi.vertices()) {
      Polytope U = upper_terms(d, n, phi, caps.r_max, caps.budget);
      if (U.is_empty()) continue;
      if (any_r_at_cap(U, caps.r_max)) est.truncated = true;
      r_pos = r_pos || any_r_positive(U);
      Polytope X = drop_last(U);
      pts.insert(pts.end(), X.vertices().begin(), X.vertices().end());
      rays.insert(rays.end(), X.rays().begin(), X.rays().end());
    }
    if (pts.empty()) {
      ++est.empty_multiplier_points;
      continue;
    }
    // rays of Phi enter as -r * d for any admissible r > 0
    if (r_pos)
      for (auto ray : Phi.rays()) {
        for (auto& c : ray) c = -c;
        rays.push_back(ray);
      }
    parts.push_back(hull(n, pts, rays).reduced());
  }
  if (parts.empty()) throw EmptyEstimate("no sampled upper solution admits multipliers for the upper inclusion");
  return hull_union(n, parts);
}

Polytope convex_estimate(const BilevelProgram& prog, const Vec& xbar, const std::vector<Vec>& upper_ys,
                         ActivityTolerance tol, const Caps& caps, Estimate& est) {
  const int n = prog.n, p = static_cast<int>(prog.g.size());
  std::vector<Polytope> parts;
  for (const auto& y : upper_ys) {
    PointData d = point_data(prog, xbar, y, tol);
    d.y_residual = caps.y_residual;
    MultiplierSet lam = lambda_set(d, n, p, caps.budget);
    // (r, beta) with r <= r_max, from the capped lifted system
    std::vector<Block> blocks{{&d.F, Kind::Simplex}, {&d.f, Kind::Scaled}};
    add_cones(d, blocks);
    System s = build_system(n, prog.m, blocks, true, caps.r_max, d.y_residual);
    Eigen::MatrixXd L(1 + p, s.vars);
    L << r_row(blocks, s), multiplier_rows(p, blocks, s);
    Polytope lo = clip_nonnegative(project_polyhedron(s.M, s.b, L, caps.budget));
    if (lam.empty() || lo.is_empty()) {
      ++est.empty_multiplier_points;
      continue;
    }
    Polytope Fx = hull_x(d.F, n), fx = hull_x(d.f, n);
    Polytope fdiff = minkowski_sum(fx, negate(fx));
    std::vector<Polytope> gx(p);
    for (int i : d.active) gx[i] = hull_x(d.g[i], n);

    std::vector<Vec> pts, rays;
    double r_hi = 0.0;
    for (const auto& rb : lo.vertices()) {
      const double r = rb[0];
      r_hi = std::max(r_hi, r);
      if (caps.r_max > 0 && r >= caps.r_max * (1 - 1e-12)) est.truncated = true;
      for (const auto& gam : lam.set.vertices()) {
        std::vector<std::pair<double, Polytope>> terms{{r, fdiff}};
        for (int i : d.active) {
          terms.push_back({rb[1 + i], gx[i]});
          terms.push_back({-r * gam[i], gx[i]});
        }
        Polytope S = weighted_sum(n, Fx, terms);
        pts.insert(pts.end(), S.vertices().begin(), S.vertices().end());
      }
    }
    // beta rays (r is capped, so every ray of the capped set has r = 0)
    for (const auto& rb : lo.rays()) {
      std::vector<std::pair<double, Polytope>> terms;
      for (int i : d.active) terms.push_back({rb[1 + i], gx[i]});
      Polytope D = weighted_sum(n, Polytope::origin(n), terms);
      rays.insert(rays.end(), D.vertices().begin(), D.vertices().end());
    }
    // gamma rays scale with r
    if (r_hi > 0)
      for (const auto& gd : lam.set.rays()) {
        std::vector<std::pair<double, Polytope>> terms;
        for (int i : d.active) terms.push_back({-gd[i], gx[i]});
        Polytope D = weighted_sum(n, Polytope::origin(n), terms);
        rays.insert(rays.end(), D.vertices().begin(), D.vertices().end());
      }
    parts.push_back(hull(n, pts, rays).reduced());
  }
  if (parts.empty()) throw EmptyEstimate("multiplier sets are empty at every sampled solution");
  return hull_union(n, parts);
}

}  // namespace

MultiplierSet lambda_set(const PointData& d, int n, int p, std::size_t budget) {
  std::vector<Block> blocks{{&d.f, Kind::Simplex}};
  add_cones(d, blocks);
  System s = build_system(n, static_cast<int>(d.y.size()), blocks, false, 0.0, d.y_residual);
  MultiplierSet out;
  out.kind = MultiplierKind::Lambda;
  out.active = d.active;
  out.set = clip_nonnegative(project_polyhedron(s.M, s.b, multiplier_rows(p, blocks, s), budget));
  return out;
}

MultiplierSet lambda_o_set(const PointData& d, int n, int p, std::size_t budget) {
  std::vector<Block> blocks{{&d.F, Kind::Simplex}, {&d.f, Kind::Scaled}};
  add_cones(d, blocks);
  System s = build_system(n, static_cast<int>(d.y.size()), blocks, false, 0.0, d.y_residual);
  Eigen::MatrixXd L(1 + p, s.vars);
  L << r_row(blocks, s), multiplier_rows(p, blocks, s);
  MultiplierSet out;
  out.kind = MultiplierKind::LambdaO;
  out.active = d.active;
  out.set = clip_nonnegative(project_polyhedron(s.M, s.b, L, budget));
  return out;
}

MultiplierSet lambda_set(const BilevelProgram& prog, const Vec& xbar, const Vec& y, ActivityTolerance tol,
                         std::size_t budget) {
  return lambda_set(point_data(prog, xbar, y, tol), prog.n, static_cast<int>(prog.g.size()), budget);
}

MultiplierSet lambda_o_set(const BilevelProgram& prog, const Vec& xbar, const Vec& y, ActivityTolerance tol,
                           std::size_t budget) {
  return lambda_o_set(point_data(prog, xbar, y, tol), prog.n, static_cast<int>(prog.g.size()), budget);
}

Polytope phi_gradients(const PointData& d, int n, std::size_t budget) {
  std::vector<Block> blocks{{&d.f, Kind::Simplex}};
  add_cones(d, blocks);
  System s = build_system(n, static_cast<int>(d.y.size()), blocks, false, 0.0, d.y_residual);
  return project_polyhedron(s.M, s.b, x_rows(n, blocks, s, nullptr), budget);
}

Polytope upper_terms(const PointData& d, int n, const Vec& phi, double r_max, std::size_t budget) {
  std::vector<Block> blocks{{&d.F, Kind::Simplex}, {&d.f, Kind::Scaled}};
  add_cones(d, blocks);
  System s = build_system(n, static_cast<int>(d.y.size()), blocks, true, r_max, d.y_residual);
  Eigen::MatrixXd L(n + 1, s.vars);
  L << x_rows(n, blocks, s, &phi), r_row(blocks, s);
  return project_polyhedron(s.M, s.b, L, budget);
}

EstimateVariant parse_estimate_variant(const std::string& s) {
  if (s == "semicompact") return EstimateVariant::Semicompact;
  if (s == "convex") return EstimateVariant::Convex;
  if (s == "semicontinuous") return EstimateVariant::Semicontinuous;
  throw DomainError("unknown estimate variant '" + s + "' (expected semicompact, convex or semicontinuous)");
}

std::string to_string(EstimateVariant v) {
  switch (v) {
    case EstimateVariant::Semicompact: return "semicompact";
    case EstimateVariant::Convex: return "convex";
    case EstimateVariant::Semicontinuous: return "semicontinuous";
  }
  return "?";
}

Estimate estimate_optimistic(const BilevelProgram& prog, const Vec& xbar, EstimateVariant variant,
                             const GridSpec& grid, const Caps& caps, const Vec* ybar) {
  caps.validate();
  check_domains(prog);
  Estimate est;
  est.variant = variant;
  est.mode = Mode::Optimistic;
  const ActivityTolerance tol = activity_for(prog, grid);
  est.ys = sample_points(optimistic_solutions(prog, xbar, grid), caps);
  switch (variant) {
    case EstimateVariant::Semicompact:
      est.ys_lower = sample_points(lower_solutions(prog, xbar, grid), caps);
      est.set = compact_estimate(prog, xbar, est.ys, est.ys_lower, tol, caps, est);
      break;
    case EstimateVariant::Semicontinuous: {
      Vec y = ybar ? *ybar : est.ys.front();
      if (!ybar && est.ys.size() > 1)
        est.notes.push_back("S_o sample has several points; designated ybar is the first in farthest-point order");
      est.ys = {y};
      est.ys_lower = {y};
      est.set = compact_estimate(prog, xbar, est.ys, est.ys_lower, tol, caps, est);
      break;
    }
    case EstimateVariant::Convex:
      if (!prog.convex_declared) est.notes.push_back("full convexity not declared (options: convex=true)");
      est.set = convex_estimate(prog, xbar, est.ys, tol, caps, est);
      break;
  }
  if (est.truncated) est.notes.push_back("r truncated at r_max");
  return est;
}

Estimate estimate_pessimistic(const BilevelProgram& prog, const Vec& xbar, EstimateVariant variant,
                              const GridSpec& grid, const Caps& caps, const Vec* ybar) {
  Estimate est = estimate_optimistic(prog.with_negated_upper(), xbar, variant, grid, caps, ybar);
  est.mode = Mode::Pessimistic;
  est.set = negate(est.set).reduced();
  return est;
}

Estimate estimate_simple_convex(const BilevelProgram& prog, const Vec& xbar, const GridSpec& grid, const Caps& caps) {
  caps.validate();
  check_domains(prog);
  if (prog.f.uses_x() || std::any_of(prog.g.begin(), prog.g.end(), [](const Expr& e) { return e.uses_x(); }))
    throw NotApplicable("lower-level data depend on x; the solution set is not parameter independent");
  Estimate est;
  est.variant = EstimateVariant::Convex;
  est.notes.push_back("parameter-independent lower level");
  if (!prog.convex_declared) est.notes.push_back("full convexity not declared (options: convex=true)");
  for (const Expr* e : {&prog.F, &prog.f})
    if (convexity_violations(*e, prog, 200, 1) > 0) est.notes.push_back("midpoint convexity violated by " + e->to_string());
  for (const auto& g : prog.g)
    if (convexity_violations(g, prog, 200, 1) > 0) est.notes.push_back("midpoint convexity violated by " + g.to_string());
  const ActivityTolerance tol = activity_for(prog, grid);
  est.ys = sample_points(optimistic_solutions(prog, xbar, grid), caps);
  std::vector<Vec> pts;
  for (const auto& y : est.ys)
    for (auto& g : x_generators(clarke_generators(prog.F, xbar, y, tol), prog.n)) pts.push_back(g);
  est.set = hull(prog.n, pts).reduced();
  return est;
}

std::vector<Vec> farthest_points(const std::vector<Vec>& pts, std::size_t k) {
  std::vector<Vec> out;
  if (pts.empty() || k == 0) return out;
  std::vector<double> gap(pts.size(), std::numeric_limits<double>::infinity());
  std::vector<char> taken(pts.size(), 0);
  std::size_t next = 0;
  while (out.size() < std::min(k, pts.size())) {
    taken[next] = 1;
    out.push_back(pts[next]);
    std::size_t best = pts.size();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (taken[i]) continue;
      double d = 0.0;
      for (std::size_t j = 0; j < pts[i].size(); ++j) d = std::max(d, std::abs(pts[i][j] - pts[next][j]));
      gap[i] = std::min(gap[i], d);
      if (best == pts.size() || gap[i] > gap[best]) best = i;
    }
    if (best == pts.size()) break;
    next = best;
  }
  return out;
}

int convexity_violations(const Expr& e, const BilevelProgram& prog, int trials, std::uint64_t seed) {
  Rng rng(seed);
  int bad = 0;
  auto draw = [&](const std::vector<Interval>& box) {
    Vec v(box.size());
    for (std::size_t i = 0; i < box.size(); ++i) v[i] = rng.uniform(box[i].lo, box[i].hi);
    return v;
  };
  for (int t = 0; t < trials; ++t) {
    Vec xa = draw(prog.x_box), ya = draw(prog.y_box), xb = draw(prog.x_box), yb = draw(prog.y_box);
    Vec xm(xa.size()), ym(ya.size());
    for (std::size_t i = 0; i < xa.size(); ++i) xm[i] = 0.5 * (xa[i] + xb[i]);
    for (std::size_t j = 0; j < ya.size(); ++j) ym[j] = 0.5 * (ya[j] + yb[j]);
    try {
      double mid = e.eval(xm, ym), avg = 0.5 * (e.eval(xa, ya) + e.eval(xb, yb));
      if (mid > avg + 1e-9 * (1 + std::abs(avg))) ++bad;
    } catch (const DomainError&) {
    }
  }
  return bad;
}

}  // namespace bilevel
