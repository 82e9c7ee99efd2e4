#include "bilevel/valuefn.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>

#include "bilevel/errors.hpp"
#include "bilevel/grid.hpp"
#include "bilevel/lp.hpp"

namespace bilevel {

void GridSpec::validate() const {
  if (points < 3) throw DomainError("grid needs at least 3 points per dimension");
  if (depth < 0) throw DomainError("refinement depth must be nonnegative");
  if (incumbents < 1 || refine_points < 3) throw DomainError("refinement needs incumbents and >= 3 local points");
}

double GridSpec::coarse_cell(const BilevelProgram& prog) const {
  double c = 0.0;
  for (const auto& iv : prog.y_box) c = std::max(c, (iv.hi - iv.lo) / (points - 1));
  return c;
}

double GridSpec::finest_cell(const BilevelProgram& prog) const {
  return coarse_cell(prog) / std::pow(10.0, depth);
}

namespace {

struct Pool {
  std::vector<Vec> ys;
  std::vector<grid::PointEval> ev;
};

void add_points(const BilevelProgram& prog, const Vec& x, const GridSpec& spec, Pool& pool,
                std::vector<Vec> ys) {
  std::vector<grid::PointEval> ev;
  if (spec.parallel)
    grid::evaluate_parallel(prog, x, ys, spec.tol_feas, ev);
  else
    grid::evaluate_serial(prog, x, ys, spec.tol_feas, ev);
  pool.ys.insert(pool.ys.end(), std::make_move_iterator(ys.begin()), std::make_move_iterator(ys.end()));
  pool.ev.insert(pool.ev.end(), ev.begin(), ev.end());
}

// Deterministic ranking: smaller score first, then lexicographically smaller y.
template <class Score>
std::vector<std::size_t> ranked(const Pool& pool, const std::vector<std::size_t>& idx, Score score) {
  std::vector<std::size_t> out = idx;
  std::sort(out.begin(), out.end(), [&](std::size_t a, std::size_t b) {
    double sa = score(a), sb = score(b);
    if (sa != sb) return sa < sb;
    return pool.ys[a] < pool.ys[b];
  });
  return out;
}

std::vector<std::size_t> top_distinct(const Pool& pool, const std::vector<std::size_t>& order, int k) {
  std::vector<std::size_t> out;
  for (std::size_t i : order) {
    if (static_cast<int>(out.size()) >= k) break;
    bool dup = std::any_of(out.begin(), out.end(), [&](std::size_t j) { return pool.ys[j] == pool.ys[i]; });
    if (!dup) out.push_back(i);
  }
  return out;
}

// One refinement level: a lattice patch with spacing coarse cell / 10^level
// around the best admissible incumbents.
template <class Admissible, class Score>
void refine_level(const BilevelProgram& prog, const Vec& x, const GridSpec& spec, Pool& pool, int level,
                  Admissible admissible, Score score) {
  long long divisions = spec.points - 1;
  for (int l = 0; l < level; ++l) divisions *= 10;
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < pool.ys.size(); ++i)
    if (admissible(i)) idx.push_back(i);
  if (idx.empty()) return;
  auto inc = top_distinct(pool, ranked(pool, idx, score), spec.incumbents);
  std::vector<Vec> fresh;
  for (std::size_t i : inc) {
    auto loc = grid::local_grid(prog.y_box, divisions, pool.ys[i], spec.refine_points);
    fresh.insert(fresh.end(), loc.begin(), loc.end());
  }
  add_points(prog, x, spec, pool, std::move(fresh));
}

bool lower_affine_in_y(const BilevelProgram& prog) {
  if (!prog.f.is_affine_in_y()) return false;
  return std::all_of(prog.g.begin(), prog.g.end(), [](const Expr& e) { return e.is_affine_in_y(); });
}

// Exact minimizer of an affine objective over {g <= 0, extra <= 0, box},
// all affine in y at this x. Empty when the LP fails or evaluation does.
std::vector<Vec> polish(const BilevelProgram& prog, const Vec& x, const Expr& objective, double sign,
                        const std::vector<std::pair<Expr, double>>& extra) {
  try {
    LinearProgram lp;
    AffineForm obj = affine_form_in_y(objective, x, prog.m);
    for (int j = 0; j < prog.m; ++j) lp.add_var(prog.y_box[j].lo, prog.y_box[j].hi, sign * obj.c[j]);
    for (const auto& g : prog.g) {
      AffineForm a = affine_form_in_y(g, x, prog.m);
      lp.add_le(a.c, -a.c0);
    }
    for (const auto& [e, rhs] : extra) {
      AffineForm a = affine_form_in_y(e, x, prog.m);
      lp.add_le(a.c, rhs - a.c0);
    }
    LPResult r = solve_lp(lp);
    if (!r.optimal()) return {};
    // Snap to a 2^-40 lattice: vertices of dyadic data come out exact instead
    // of carrying LU round-off like -1.8e-16 into reported values.
    for (int j = 0; j < prog.m; ++j)
      r.z[j] = std::clamp(std::ldexp(std::round(std::ldexp(r.z[j], 40)), -40), prog.y_box[j].lo, prog.y_box[j].hi);
    return {r.z};
  } catch (const Error&) {
    return {};
  }
}

// Every search runs level by level, so the pool at depth d + 1 always
// extends the pool at depth d. The lower phase only ever looks at its own
// points, which keeps phi identical between lower_value and the upper
// searches. The upper phase (when present) refines around the best points
// of the current optimality band after each lower level.
struct Search {
  Pool pool;
  std::vector<char> lower_phase;
  double phi = std::numeric_limits<double>::infinity();
};

void add_lower(const BilevelProgram& prog, const Vec& x, const GridSpec& spec, Search& s, std::vector<Vec> ys) {
  std::size_t before = s.pool.ys.size();
  add_points(prog, x, spec, s.pool, std::move(ys));
  s.lower_phase.resize(s.pool.ys.size(), 0);
  for (std::size_t i = before; i < s.pool.ys.size(); ++i) {
    s.lower_phase[i] = 1;
    if (s.pool.ev[i].feasible) s.phi = std::min(s.phi, s.pool.ev[i].f);
  }
}

void add_upper(const BilevelProgram& prog, const Vec& x, const GridSpec& spec, Search& s, std::vector<Vec> ys) {
  add_points(prog, x, spec, s.pool, std::move(ys));
  s.lower_phase.resize(s.pool.ys.size(), 0);
}

// Hook run after the coarse stage (level 0) and after every lower level.
using UpperStage = std::function<void(Search&, int level)>;

Search staged_search(const BilevelProgram& prog, const Vec& x, const GridSpec& spec, const UpperStage& upper) {
  spec.validate();
  if (static_cast<int>(x.size()) != prog.n) throw DimensionMismatch("x has the wrong dimension");
  Search s;
  add_lower(prog, x, spec, s, grid::tensor_grid(prog.y_box, spec.points));
  if (spec.polish && lower_affine_in_y(prog)) add_lower(prog, x, spec, s, polish(prog, x, prog.f, 1.0, {}));
  if (!std::isfinite(s.phi)) throw Infeasible("lower level infeasible on the grid at the given x");
  if (upper) upper(s, 0);
  for (int level = 1; level <= spec.depth; ++level) {
    Pool& pool = s.pool;
    std::size_t before = pool.ys.size();
    refine_level(prog, x, spec, pool, level,
                 [&](std::size_t i) { return s.lower_phase[i] && pool.ev[i].feasible; },
                 [&](std::size_t i) { return pool.ev[i].f; });
    s.lower_phase.resize(pool.ys.size(), 0);
    for (std::size_t i = before; i < pool.ys.size(); ++i) {
      s.lower_phase[i] = 1;
      if (pool.ev[i].feasible) s.phi = std::min(s.phi, pool.ev[i].f);
    }
    if (upper) upper(s, level);
  }
  return s;
}

Pool lower_pool(const BilevelProgram& prog, const Vec& x, const GridSpec& spec, double& phi) {
  Search s = staged_search(prog, x, spec, nullptr);
  phi = s.phi;
  return std::move(s.pool);
}

// Minimizes F over the lower solution band, or maximizes it with its own
// comparisons when direct_max is set (the negation-free reference path).
struct UpperResult {
  Pool pool;
  double phi = 0.0;
  double tol_val = 0.0;
  double best = 0.0;  // optimum of the upper search in its own sense
  std::vector<std::size_t> admissible;
};

UpperResult upper_search(const BilevelProgram& prog, const Vec& x, const GridSpec& spec, bool direct_max,
                         double tol_val) {
  auto band_of = [&](double phi) { return phi + (std::isnan(tol_val) ? default_tol_val(phi) : tol_val); };
  const bool affine = spec.polish && lower_affine_in_y(prog) && prog.F.is_affine_in_y();
  // With affine data phi is an exact LP value, so the upper optimum is taken
  // over a much tighter band than the membership one: the loose band would
  // let points slide off S(x) by tol_val / |grad f| and bend piecewise-linear
  // curves. Membership in the returned band still uses tol_val.
  auto value_band = [&](double phi) { return affine ? phi + 1e-10 * (1.0 + std::abs(phi)) : band_of(phi); };
  UpperStage stage = [&](Search& s, int level) {
    Pool& pool = s.pool;
    const double band = value_band(s.phi);
    if (level == 0) {
      if (affine) add_upper(prog, x, spec, s, polish(prog, x, prog.F, direct_max ? -1.0 : 1.0, {{prog.f, band}}));
      return;
    }
    auto admissible = [&](std::size_t i) { return pool.ev[i].feasible && pool.ev[i].f <= band; };
    if (direct_max)
      refine_level(prog, x, spec, pool, level, admissible, [&](std::size_t i) { return -pool.ev[i].F; });
    else
      refine_level(prog, x, spec, pool, level, admissible, [&](std::size_t i) { return pool.ev[i].F; });
    s.lower_phase.resize(pool.ys.size(), 0);
  };
  Search s = staged_search(prog, x, spec, stage);
  UpperResult out;
  out.phi = s.phi;
  out.tol_val = band_of(s.phi) - s.phi;
  out.pool = std::move(s.pool);
  const Pool& pool = out.pool;
  const double band = band_of(out.phi), vband = value_band(out.phi);
  bool first = true;
  for (std::size_t i = 0; i < pool.ys.size(); ++i) {
    if (!(pool.ev[i].feasible && pool.ev[i].f <= band)) continue;
    out.admissible.push_back(i);
    if (pool.ev[i].f > vband) continue;
    double v = pool.ev[i].F;
    if (first || (direct_max ? v > out.best : v < out.best)) out.best = v;
    first = false;
  }
  return out;
}

SolutionSet collect(const Pool& pool, const std::vector<std::size_t>& members,
                    const std::function<double(std::size_t)>& score, double value, double tol_val,
                    double resolution) {
  SolutionSet s;
  s.value = value;
  s.tol_val = tol_val;
  for (std::size_t i : ranked(pool, members, score)) {
    const Vec& y = pool.ys[i];
    bool close = std::any_of(s.points.begin(), s.points.end(), [&](const Vec& q) {
      double d = 0.0;
      for (std::size_t j = 0; j < y.size(); ++j) d = std::max(d, std::abs(y[j] - q[j]));
      return d < resolution;
    });
    if (!close) s.points.push_back(y);
  }
  return s;
}

}  // namespace

ValueAnalysis analyze_lower(const BilevelProgram& prog, const Vec& x, const GridSpec& grid) {
  ValueAnalysis a;
  Pool pool = lower_pool(prog, x, grid, a.phi);
  a.x = x;
  a.tol_val = default_tol_val(a.phi);
  a.ys = std::move(pool.ys);
  for (const auto& e : pool.ev) {
    a.feasible.push_back(e.feasible);
    a.f.push_back(e.feasible ? e.f : std::numeric_limits<double>::quiet_NaN());
    a.F.push_back(e.F);
  }
  a.finest_cell = grid.finest_cell(prog);
  return a;
}

double lower_value(const BilevelProgram& prog, const Vec& x, const GridSpec& grid) {
  double phi = 0.0;
  lower_pool(prog, x, grid, phi);
  return phi;
}

SolutionSet lower_solutions(const BilevelProgram& prog, const Vec& x, const GridSpec& grid, double tol_val) {
  double phi = 0.0;
  Pool pool = lower_pool(prog, x, grid, phi);
  double tol = std::isnan(tol_val) ? default_tol_val(phi) : tol_val;
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < pool.ys.size(); ++i)
    if (pool.ev[i].feasible && pool.ev[i].f <= phi + tol) members.push_back(i);
  return collect(pool, members, [&](std::size_t i) { return pool.ev[i].f; }, phi, tol,
                 0.5 * grid.finest_cell(prog));
}

double optimistic_value(const BilevelProgram& prog, const Vec& x, const GridSpec& grid) {
  return upper_search(prog, x, grid, false, kAutoTol).best;
}

double pessimistic_value(const BilevelProgram& prog, const Vec& x, const GridSpec& grid) {
  return -optimistic_value(prog.with_negated_upper(), x, grid);
}

double pessimistic_value_direct(const BilevelProgram& prog, const Vec& x, const GridSpec& grid) {
  return upper_search(prog, x, grid, true, kAutoTol).best;
}

SolutionSet optimistic_solutions(const BilevelProgram& prog, const Vec& x, const GridSpec& grid, double tol_val) {
  UpperResult r = upper_search(prog, x, grid, false, kAutoTol);
  double tol = std::isnan(tol_val) ? default_tol_val(r.best) : tol_val;
  std::vector<std::size_t> members;
  for (std::size_t i : r.admissible)
    if (r.pool.ev[i].F <= r.best + tol) members.push_back(i);
  return collect(r.pool, members, [&](std::size_t i) { return r.pool.ev[i].F; }, r.best, tol,
                 0.5 * grid.finest_cell(prog));
}

SolutionSet pessimistic_solutions(const BilevelProgram& prog, const Vec& x, const GridSpec& grid, double tol_val) {
  SolutionSet s = optimistic_solutions(prog.with_negated_upper(), x, grid, tol_val);
  s.value = -s.value;
  return s;
}

ValueKind parse_value_kind(const std::string& s) {
  if (s == "phi") return ValueKind::Phi;
  if (s == "phi_o") return ValueKind::PhiO;
  if (s == "phi_p") return ValueKind::PhiP;
  throw DomainError("unknown value function '" + s + "' (expected phi, phi_o or phi_p)");
}

std::string to_string(ValueKind k) {
  switch (k) {
    case ValueKind::Phi: return "phi";
    case ValueKind::PhiO: return "phi_o";
    case ValueKind::PhiP: return "phi_p";
  }
  return "?";
}

double value_of(const BilevelProgram& prog, ValueKind which, const Vec& x, const GridSpec& grid) {
  switch (which) {
    case ValueKind::Phi: return lower_value(prog, x, grid);
    case ValueKind::PhiO: return optimistic_value(prog, x, grid);
    case ValueKind::PhiP: return pessimistic_value(prog, x, grid);
  }
  return 0.0;
}

std::function<double(const Vec&)> value_function(const BilevelProgram& prog, ValueKind which, GridSpec grid) {
  return [prog, which, grid](const Vec& x) { return value_of(prog, which, x, grid); };
}

GridSpec deepened(const BilevelProgram& prog, GridSpec base, double cell) {
  while (base.finest_cell(prog) > cell && base.depth < 12) ++base.depth;
  return base;
}

std::vector<Vec> x_grid(const std::vector<Interval>& ranges, const std::vector<int>& counts) {
  const std::size_t n = ranges.size();
  std::vector<Vec> out;
  std::vector<int> idx(n, 0);
  Vec x(n);
  for (;;) {
    for (std::size_t i = 0; i < n; ++i) {
      int c = counts[i];
      x[i] = c == 1 ? ranges[i].lo
                    : (idx[i] == c - 1 ? ranges[i].hi
                                       : ranges[i].lo + (ranges[i].hi - ranges[i].lo) * idx[i] / (c - 1));
    }
    out.push_back(x);
    std::size_t i = n;
    // last coordinate varies fastest so rows read naturally
    while (i > 0 && ++idx[i - 1] == counts[i - 1]) idx[--i] = 0;
    if (i == 0) break;
  }
  return out;
}

std::vector<CurveRow> sample_curve(const BilevelProgram& prog, ValueKind which, const std::vector<Vec>& xs,
                                   const GridSpec& grid) {
  if (prog.n > 2) throw UnsupportedDimension("curve tabulation supports n <= 2");
  std::vector<CurveRow> rows;
  for (const auto& x : xs) {
    CurveRow r;
    r.x = x;
    try {
      r.value = value_of(prog, which, x, grid);
    } catch (const Infeasible&) {
      r.feasible = false;
      r.value = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // no "-0" in reports
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

void write_curve_csv(std::ostream& out, const std::vector<CurveRow>& rows, int n) {
  for (int i = 1; i <= n; ++i) out << 'x' << i << ',';
  out << "value,status\n";
  for (const auto& r : rows) {
    for (double c : r.x) out << format_double(c) << ',';
    out << format_double(r.value) << ',' << (r.feasible ? "ok" : "infeasible") << '\n';
  }
}

}  // namespace bilevel
