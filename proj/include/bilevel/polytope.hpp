#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <vector>

#include "bilevel/expr.hpp"

namespace bilevel {

// Convex set in R^d given by generators: conv(vertices) + cone(rays).
// Distances and containment use the infinity norm throughout.
class Polytope {
 public:
  Polytope() = default;
  static Polytope empty(int dim);
  static Polytope point(Vec v);
  static Polytope origin(int dim) { return point(Vec(dim, 0.0)); }

  int dim() const { return dim_; }
  bool is_empty() const { return empty_; }
  const std::vector<Vec>& vertices() const { return vertices_; }
  const std::vector<Vec>& rays() const { return rays_; }
  bool is_bounded() const { return rays_.empty(); }

  // Drops generators that lie in the hull of the others. Order of survivors
  // is lexicographic, so reduction is canonical for a given generator set.
  Polytope reduced() const;

  friend Polytope hull(int dim, const std::vector<Vec>& points, const std::vector<Vec>& rays);

 private:
  int dim_ = 0;
  bool empty_ = true;
  std::vector<Vec> vertices_;
  std::vector<Vec> rays_;
};

Polytope hull(int dim, const std::vector<Vec>& points, const std::vector<Vec>& rays = {});
Polytope hull_union(int dim, const std::vector<Polytope>& parts);
Polytope minkowski_sum(const Polytope& a, const Polytope& b);
Polytope scale(const Polytope& p, double lambda);
Polytope negate(const Polytope& p);

// Infinity-norm distance from v to the set. Throws EmptySet on Empty.
double distance(const Polytope& p, const Vec& v);
bool contains(const Polytope& p, const Vec& v, double tol);

// Nearest point as convex weights on vertices and conic weights on rays.
struct NearestPoint {
  double distance = 0.0;
  Vec point;
  Vec vertex_weights;
  Vec ray_weights;
};
NearestPoint nearest_point(const Polytope& p, const Vec& v);

// One-sided Hausdorff excess sup_{a in inner} dist(a, outer). Infinite when a
// ray of inner escapes the recession cone of outer.
double excess(const Polytope& inner, const Polytope& outer);

// {w >= 0 : M w = b} mapped through L, as generators. Vertices come from
// basis enumeration; rays are the vertices of the normalized recession cone.
// Throws BudgetError when the number of candidate bases exceeds the budget.
Polytope project_polyhedron(const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                            const Eigen::MatrixXd& L, std::size_t budget = 2'000'000);

// Raw vertices (and extreme rays) of {w >= 0 : M w = b} in w-space.
struct Vertices {
  std::vector<Eigen::VectorXd> points;
  std::vector<Eigen::VectorXd> rays;
};
Vertices enumerate_vertices(const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                            std::size_t budget = 2'000'000);

}  // namespace bilevel
