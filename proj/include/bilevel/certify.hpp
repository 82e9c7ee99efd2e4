#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/cq.hpp"
#include "bilevel/polytope.hpp"
#include "bilevel/program.hpp"
#include "bilevel/sensitivity.hpp"
#include "bilevel/valuefn.hpp"

namespace bilevel {

enum class CertVariant { I, II, III };
CertVariant parse_cert_variant(const std::string& s);  // "i", "ii", "iii"
std::string to_string(CertVariant v);

enum class CertStatus { Certified, Refuted, Inconclusive };
std::string to_string(CertStatus s);

// A multiplier assignment for one necessary-optimality system. Which fields
// are populated depends on `variant` ("value", "i", "ii", "iii") and mode.
struct Certificate {
  std::string variant;
  Mode mode = Mode::Optimistic;
  Vec x;
  ActivityTolerance activity;   // lower constraints and kinks at grid points
  double upper_activity = 1e-9; // upper constraints at x̄

  // optimistic systems
  Vec y;                    // y in S_o(x̄), or ȳ
  double r = 0.0;
  Vec beta;                 // u of variant i, beta of ii/iii
  Vec gamma;                // ii/iii
  Vec x_phi;                // iii: x*_φ
  // Carathéodory data over S(x̄), variant i
  std::vector<Vec> ys;
  Vec v;
  std::vector<Vec> u_s;
  std::vector<Vec> x_s;
  // pessimistic systems, one entry per t
  std::vector<Vec> yt;
  Vec eta;
  Vec r_t;
  std::vector<Vec> beta_t;
  std::vector<Vec> gamma_t;
  std::vector<Vec> x_t;

  Vec alpha;                // one entry per upper constraint (0 when inactive)
  // value stationarity
  std::vector<Vec> phi_clusters;
  Vec x_star;

  double residual = std::numeric_limits<double>::infinity();
  double lower_bound = 0.0;  // over the searched region; meaningful for Refuted
  double tol = 0.0;          // effective tolerance (with grid slack)
  CertStatus status = CertStatus::Inconclusive;
  std::vector<CQVerdict> cq;
  Caps caps;
  std::uint64_t seed = 1;
  std::vector<std::string> notes;
};

struct CertifyOptions {
  double tol = 1e-6;
  GridSpec grid;
  Caps caps;
  std::uint64_t seed = 1;
  bool with_cq = true;              // attach the hypothesis bundle
  std::optional<double> fixed_r;    // pin r (every r_t) to one value
  const Vec* ybar = nullptr;        // designated point for variant iii
};

// 0 ∈ ∂φ(x̄) + N_X(x̄) with ∂φ from finite-difference clusters of φ_o or φ_p
// (by prog.mode). Needs affine upper constraints.
Certificate certify_value_stationarity(const BilevelProgram& prog, const Vec& xbar, const CertifyOptions& opt = {});

Certificate certify_optimistic(const BilevelProgram& prog, const Vec& xbar, CertVariant variant,
                               const CertifyOptions& opt = {});
Certificate certify_pessimistic(const BilevelProgram& prog, const Vec& xbar, CertVariant variant,
                                const CertifyOptions& opt = {});

// Standalone re-evaluation of a certificate's residual from its multipliers
// alone, through polytope distances (no linear programs). +inf when a sign,
// complementarity or simplex condition fails.
double recheck_residual(const BilevelProgram& prog, const Certificate& c);

struct MinimaxReport {
  Polytope estimate;  // pessimistic estimate
  Polytope direct;    // conv of ∂_x F generators over maximizers in K(x̄)
  double excess = 0.0;  // sup over direct of the distance to estimate
  double tol = 0.0;
  bool contained = false;
  std::vector<Vec> maximizers;
};

// Requires a constant lower objective, so that S(x) = K(x).
MinimaxReport minimax_reduction_check(const BilevelProgram& prog, const Vec& xbar, const GridSpec& grid = {},
                                      double tol = 1e-4, const Caps& caps = {});

}  // namespace bilevel
