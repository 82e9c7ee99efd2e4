#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bilevel/program.hpp"
#include "bilevel/sensitivity.hpp"
#include "bilevel/valuefn.hpp"

namespace bilevel {

enum class CQKind { PolyhedralCalmness, CQ_K, CQ_S, GenMFCQ, InnerSemicompact, InnerSemicontinuous, CodCQConvex };
enum class CQStatus { Guaranteed, Holds, Fails, Unknown };

std::string to_string(CQKind k);
std::string to_string(CQStatus s);

// Everything needed to re-check a Fails verdict by substitution.
struct CQWitness {
  Vec x_star;                 // pointbased CQs: nonzero x* with (x*, 0) in the right-hand side
  Vec u;                      // constraint multipliers (gamma for GenMFCQ)
  double r = 0.0;             // CQ_S only
  std::vector<Vec> g_points;  // chosen element of the generator hull of g_i, (x, y) layout; empty when u_i = 0
  Vec f_point;                // CQ_S: element of the hull of ∂f
  Vec phi_point;              // CQ_S: element of the hull of the ∂φ clusters
  Vec x_offending;            // inner semicontinuity: sample x far from the solution map
  double distance = 0.0;      // dist(ȳ, S_o(x_offending))
};

struct CQVerdict {
  CQKind kind = CQKind::PolyhedralCalmness;
  CQStatus status = CQStatus::Unknown;
  std::string target;  // which map or point the verdict is about
  bool has_witness = false;
  CQWitness witness;
  double tolerance = 0.0;
  double measure = 0.0;  // optimum of the defining program (meaning depends on kind)
  std::string note;

  bool ok() const { return status == CQStatus::Guaranteed || status == CQStatus::Holds; }
};

enum class CalmTarget { K, S, X };

// Syntactic: Guaranteed when the data defining the map are affine, else Unknown.
CQVerdict check_polyhedral_calmness(const BilevelProgram& prog, CalmTarget which);

enum class PointCQ { K, S };

struct CQOptions {
  double tol = 1e-6;
  Caps caps;
  GridSpec grid;
  std::uint64_t seed = 1;
};

// max |x*|_inf over (x*, 0) in the generator relaxation of the right-hand
// side, normalized by r + sum u <= 1 (and capped by u_max, r_max).
CQVerdict check_pointbased_cq(const BilevelProgram& prog, PointCQ which, const Vec& xbar, const Vec& y,
                              const CQOptions& opt = {});

// min |sum gamma_i G_i|_inf over the simplex on active indices, G_i in the
// hull of the generators of g_i.
CQVerdict check_gen_mfcq(const BilevelProgram& prog, const Vec& xbar, const Vec& ybar, double tol = 1e-6);

enum class InnerKind { Semicompact, Semicontinuous };

// Samples the mode's solution map (S_o or S_o^p) around x̄. ybar is used by
// the semicontinuous check (default: first point of the map at x̄).
CQVerdict check_inner_regularity(const BilevelProgram& prog, InnerKind kind, const Vec& xbar, double radius = 0.1,
                                 int n_samples = 8, const Vec* ybar = nullptr, const GridSpec& grid = {},
                                 std::uint64_t seed = 1);

CQVerdict check_codcq_convex(const BilevelProgram& prog, const Vec& xbar, const Vec& ybar);

// Hypotheses of one estimate variant at (x̄, y), in a fixed order.
std::vector<CQVerdict> hypotheses_for(const BilevelProgram& prog, EstimateVariant variant, const Vec& xbar,
                                      const Vec& y, const CQOptions& opt = {});
bool all_ok(const std::vector<CQVerdict>& verdicts);

// Independent re-substitution of a Fails witness: returns by how much the
// witness violates the defining implication (> tol means a genuine failure).
double witness_violation(const BilevelProgram& prog, const CQVerdict& v, const Vec& xbar, const Vec& y);

}  // namespace bilevel
