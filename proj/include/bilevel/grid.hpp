#pragma once

#include <vector>

#include "bilevel/program.hpp"

// Sweep kernels behind the value-function module. The parallel and serial
// kernels fill the same indexed output, so results never depend on thread
// count or scheduling.
namespace bilevel::grid {

struct PointEval {
  bool feasible = false;
  double f = 0.0;
  double F = 0.0;
};

// Feasible means every g_i <= tol_feas; evaluation domain errors count as
// infeasible points.
PointEval evaluate_point(const BilevelProgram& prog, const Vec& x, const Vec& y, double tol_feas);

void evaluate_serial(const BilevelProgram& prog, const Vec& x, const std::vector<Vec>& ys,
                     double tol_feas, std::vector<PointEval>& out);
void evaluate_parallel(const BilevelProgram& prog, const Vec& x, const std::vector<Vec>& ys,
                       double tol_feas, std::vector<PointEval>& out);

// Uniform tensor grid with `points` nodes per coordinate, endpoints included.
std::vector<Vec> tensor_grid(const std::vector<Interval>& box, int points);

// Odd-sized patch of the lattice that splits each box side into `divisions`
// equal parts, centered at the node nearest to `center`. Nodes outside the
// box are dropped. With divisions = (points - 1) * 10^level every level
// refines the coarse tensor grid, so shared nodes are bitwise identical.
std::vector<Vec> local_grid(const std::vector<Interval>& box, long long divisions, const Vec& center,
                            int points);

}  // namespace bilevel::grid
