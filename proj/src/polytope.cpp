#include <algorithm>
#include <cmath>

#include "bilevel/errors.hpp"
#include "bilevel/lp.hpp"
#include "bilevel/polytope.hpp"

namespace bilevel {

namespace {

double inf_norm(const Vec& v) {
  double m = 0.0;
  for (double c : v) m = std::max(m, std::abs(c));
  return m;
}

bool near(const Vec& a, const Vec& b, double tol) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > tol) return false;
  return true;
}

void dedupe(std::vector<Vec>& v, double tol) {
  std::sort(v.begin(), v.end());
  std::vector<Vec> out;
  for (auto& p : v) {
    bool dup = false;
    for (const auto& q : out)
      if (near(p, q, tol * (1.0 + inf_norm(q)))) {
        dup = true;
        break;
      }
    if (!dup) out.push_back(std::move(p));
  }
  v = std::move(out);
}

// min_t  |sum lam_k V_k + sum mu_j R_j - v|_inf <= t, with lam on the simplex
// (or lam absent for pure cone membership).
NearestPoint nearest(const std::vector<Vec>& V, const std::vector<Vec>& R, const Vec& v, bool use_simplex) {
  const int d = static_cast<int>(v.size());
  LinearProgram lp;
  const int nv = static_cast<int>(V.size()), nr = static_cast<int>(R.size());
  for (int k = 0; k < nv; ++k) lp.add_var(0.0, kInf);
  for (int j = 0; j < nr; ++j) lp.add_var(0.0, kInf);
  int t = lp.add_var(0.0, kInf, 1.0);
  if (use_simplex) {
    Vec row = lp.zero_row();
    for (int k = 0; k < nv; ++k) row[k] = 1.0;
    lp.add_eq(row, 1.0);
  }
  for (int c = 0; c < d; ++c) {
    Vec row = lp.zero_row();
    for (int k = 0; k < nv; ++k) row[k] = V[k][c];
    for (int j = 0; j < nr; ++j) row[nv + j] = R[j][c];
    Vec lo = row, hi = row;
    hi[t] = -1.0;
    lo[t] = 1.0;
    lp.add_le(hi, v[c]);
    lp.add_ge(lo, v[c]);
  }
  LPResult res = solve_lp(lp);
  NearestPoint np;
  if (!res.optimal()) {
    np.distance = kInf;
    return np;
  }
  np.distance = std::max(res.z[t], 0.0);
  np.vertex_weights.assign(res.z.begin(), res.z.begin() + nv);
  np.ray_weights.assign(res.z.begin() + nv, res.z.begin() + nv + nr);
  np.point.assign(d, 0.0);
  for (int c = 0; c < d; ++c) {
    for (int k = 0; k < nv; ++k) np.point[c] += np.vertex_weights[k] * V[k][c];
    for (int j = 0; j < nr; ++j) np.point[c] += np.ray_weights[j] * R[j][c];
  }
  return np;
}

bool ray_in_cone(const std::vector<Vec>& R, const Vec& r) {
  if (R.empty()) return false;
  return nearest({}, R, r, false).distance <= 1e-10;
}

}  // namespace

Polytope Polytope::empty(int dim) {
  Polytope p;
  p.dim_ = dim;
  p.empty_ = true;
  return p;
}

Polytope Polytope::point(Vec v) {
  Polytope p;
  p.dim_ = static_cast<int>(v.size());
  p.empty_ = false;
  p.vertices_.push_back(std::move(v));
  return p;
}

Polytope hull(int dim, const std::vector<Vec>& points, const std::vector<Vec>& rays) {
  Polytope p;
  p.dim_ = dim;
  for (const auto& v : points)
    if (static_cast<int>(v.size()) != dim) throw DimensionMismatch("generator dimension differs from hull dimension");
  for (const auto& r : rays)
    if (static_cast<int>(r.size()) != dim) throw DimensionMismatch("ray dimension differs from hull dimension");
  if (points.empty()) return Polytope::empty(dim);
  p.empty_ = false;
  p.vertices_ = points;
  for (const auto& r : rays) {
    double nrm = inf_norm(r);
    if (nrm <= 1e-14) continue;
    Vec u = r;
    for (auto& c : u) c /= nrm;
    p.rays_.push_back(std::move(u));
  }
  dedupe(p.rays_, 1e-12);
  return p;
}

Polytope Polytope::reduced() const {
  if (empty_) return *this;
  Polytope out = *this;
  dedupe(out.vertices_, 1e-12);
  dedupe(out.rays_, 1e-12);
  if (dim_ == 1) {
    bool up = false, down = false;
    for (const auto& r : out.rays_) (r[0] > 0 ? up : down) = true;
    double lo = kInf, hi = -kInf;
    for (const auto& v : out.vertices_) {
      lo = std::min(lo, v[0]);
      hi = std::max(hi, v[0]);
    }
    out.rays_.clear();
    out.vertices_.clear();
    if (up && down) {
      out.vertices_.push_back({0.0});
      out.rays_ = {{-1.0}, {1.0}};
      // any vertex works once both directions are free; keep the origin-nearest
      out.vertices_[0][0] = std::clamp(0.0, lo, hi);
      return out;
    }
    if (!up) out.vertices_.push_back({hi});
    if (!down && (up || lo != hi)) out.vertices_.push_back({lo});
    if (up) out.rays_.push_back({1.0});
    if (down) out.rays_.push_back({-1.0});
    std::sort(out.vertices_.begin(), out.vertices_.end());
    return out;
  }
  // Rays first: drop any ray inside the cone of the remaining rays.
  for (std::size_t i = 0; i < out.rays_.size();) {
    std::vector<Vec> others;
    for (std::size_t j = 0; j < out.rays_.size(); ++j)
      if (j != i) others.push_back(out.rays_[j]);
    if (ray_in_cone(others, out.rays_[i]))
      out.rays_.erase(out.rays_.begin() + static_cast<long>(i));
    else
      ++i;
  }
  for (std::size_t i = 0; i < out.vertices_.size() && out.vertices_.size() > 1;) {
    std::vector<Vec> others;
    for (std::size_t j = 0; j < out.vertices_.size(); ++j)
      if (j != i) others.push_back(out.vertices_[j]);
    double tol = 1e-10 * (1.0 + inf_norm(out.vertices_[i]));
    if (nearest(others, out.rays_, out.vertices_[i], true).distance <= tol)
      out.vertices_.erase(out.vertices_.begin() + static_cast<long>(i));
    else
      ++i;
  }
  std::sort(out.vertices_.begin(), out.vertices_.end());
  std::sort(out.rays_.begin(), out.rays_.end());
  return out;
}

Polytope hull_union(int dim, const std::vector<Polytope>& parts) {
  std::vector<Vec> pts, rays;
  for (const auto& p : parts) {
    if (p.dim() != dim) throw DimensionMismatch("hull_union parts differ in dimension");
    if (p.is_empty()) continue;
    pts.insert(pts.end(), p.vertices().begin(), p.vertices().end());
    rays.insert(rays.end(), p.rays().begin(), p.rays().end());
  }
  return hull(dim, pts, rays).reduced();
}

Polytope minkowski_sum(const Polytope& a, const Polytope& b) {
  if (a.dim() != b.dim()) throw DimensionMismatch("minkowski_sum of different dimensions");
  if (a.is_empty() || b.is_empty()) throw EmptySet("minkowski_sum with an empty operand");
  std::vector<Vec> pts;
  for (const auto& u : a.vertices())
    for (const auto& v : b.vertices()) {
      Vec s(u.size());
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = u[i] + v[i];
      pts.push_back(std::move(s));
    }
  std::vector<Vec> rays = a.rays();
  rays.insert(rays.end(), b.rays().begin(), b.rays().end());
  return hull(a.dim(), pts, rays).reduced();
}

Polytope scale(const Polytope& p, double lambda) {
  if (lambda < 0) throw DomainError("scale factor must be nonnegative");
  if (p.is_empty()) throw EmptySet("scale of an empty set");
  if (lambda == 0.0) return Polytope::origin(p.dim());
  std::vector<Vec> pts = p.vertices();
  for (auto& v : pts)
    for (auto& c : v) c *= lambda;
  return hull(p.dim(), pts, p.rays());
}

Polytope negate(const Polytope& p) {
  if (p.is_empty()) return p;
  std::vector<Vec> pts = p.vertices(), rays = p.rays();
  for (auto* set : {&pts, &rays})
    for (auto& v : *set)
      for (auto& c : v) c = -c;
  return hull(p.dim(), pts, rays);
}

NearestPoint nearest_point(const Polytope& p, const Vec& v) {
  if (static_cast<int>(v.size()) != p.dim()) throw DimensionMismatch("point dimension differs from set");
  if (p.is_empty()) throw EmptySet("distance to an empty set");
  return nearest(p.vertices(), p.rays(), v, true);
}

double distance(const Polytope& p, const Vec& v) { return nearest_point(p, v).distance; }

bool contains(const Polytope& p, const Vec& v, double tol) { return distance(p, v) <= tol; }

double excess(const Polytope& inner, const Polytope& outer) {
  if (inner.dim() != outer.dim()) throw DimensionMismatch("excess of different dimensions");
  if (inner.is_empty()) return 0.0;
  if (outer.is_empty()) return kInf;
  for (const auto& r : inner.rays())
    if (!ray_in_cone(outer.rays(), r)) return kInf;
  double worst = 0.0;
  for (const auto& v : inner.vertices()) worst = std::max(worst, distance(outer, v));
  return worst;
}

}  // namespace bilevel
