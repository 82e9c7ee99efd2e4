#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "bilevel/polytope.hpp"
#include "bilevel/program.hpp"

namespace bilevel {

using ScalarFn = std::function<double(const Vec&)>;

// Seeded generator with hand-rolled uniform and normal draws. The standard
// distributions are implementation-defined, which would make reports differ
// between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  Vec unit_sphere(int d);  // Euclidean unit sphere
  Vec in_cube(int d);      // uniform in [-1, 1]^d, the infinity-norm ball

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct FdOptions {
  int n_dirs = 16;
  double radius = 1e-5;
  double step = 1e-6;
  double cluster_tol = 1e-6;
  // Drop samples whose stencil straddles a kink, detected as a mismatch
  // between forward and backward differences above this (relative) level.
  double straddle_tol = 1e-3;
  bool skip_infeasible = false;
  std::uint64_t seed = 1;
};

// Central-difference gradients at x̄ + radius * u for sphere directions u,
// merged into clusters (cluster mean, in order of first appearance).
// Infeasible from h propagates unless skip_infeasible is set.
std::vector<Vec> fd_subgradient_samples(const ScalarFn& h, const Vec& xbar, const FdOptions& opt = {});

// Greedy clustering in the infinity norm; representatives are cluster means.
std::vector<Vec> cluster_points(const std::vector<Vec>& pts, double tol);

// Max of |h(a) - h(b)| / |a - b|_inf over pairs drawn in the radius cube
// around x̄. +inf when any evaluation is Infeasible.
double lipschitz_estimate(const ScalarFn& h, const Vec& xbar, double radius, int n_pairs = 100,
                          std::uint64_t seed = 1);

// N_X(x̄) for X = {x : theta1(x) <= 0} with every theta1 affine: {0} plus the
// gradients of the active constraints as rays.
Polytope normal_cone_polyhedral(const std::vector<Expr>& theta1, int n, const Vec& xbar, double tol_active = 1e-9);

}  // namespace bilevel
