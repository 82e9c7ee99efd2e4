#include "bilevel/report.hpp"

#include <cmath>

namespace bilevel {

Json number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return 0.0;
  return v;
}

Json to_json(const Vec& v) {
  Json a = Json::array();
  for (double c : v) a.push_back(number(c));
  return a;
}

Json to_json(const std::vector<Vec>& vs) {
  Json a = Json::array();
  for (const auto& v : vs) a.push_back(to_json(v));
  return a;
}

Json to_json(const Polytope& P) {
  Json j;
  j["dim"] = P.dim();
  j["empty"] = P.is_empty();
  j["vertices"] = to_json(P.vertices());
  j["rays"] = to_json(P.rays());
  return j;
}

Json to_json(const Caps& caps) {
  Json j;
  j["r_max"] = number(caps.r_max);
  j["u_max"] = number(caps.u_max);
  j["simplex_steps"] = caps.simplex_steps;
  j["log_r_max"] = caps.log_r_max;
  j["max_y_samples"] = caps.max_y_samples;
  j["budget"] = caps.budget;
  j["y_residual"] = number(caps.y_residual);
  return j;
}

Json to_json(const GridSpec& grid) {
  Json j;
  j["points"] = grid.points;
  j["depth"] = grid.depth;
  j["tol_feas"] = number(grid.tol_feas);
  j["incumbents"] = grid.incumbents;
  j["refine_points"] = grid.refine_points;
  j["polish"] = grid.polish;
  j["parallel"] = grid.parallel;
  return j;
}

Json to_json(const CQVerdict& v) {
  Json j;
  j["kind"] = to_string(v.kind);
  j["status"] = to_string(v.status);
  j["target"] = v.target;
  j["tolerance"] = number(v.tolerance);
  j["measure"] = number(v.measure);
  if (!v.note.empty()) j["note"] = v.note;
  if (v.has_witness) {
    const auto& w = v.witness;
    Json wj;
    if (!w.x_star.empty()) wj["x_star"] = to_json(w.x_star);
    if (!w.u.empty()) wj["u"] = to_json(w.u);
    if (w.r != 0.0) wj["r"] = number(w.r);
    if (!w.g_points.empty()) wj["g_points"] = to_json(w.g_points);
    if (!w.f_point.empty()) wj["f_point"] = to_json(w.f_point);
    if (!w.phi_point.empty()) wj["phi_point"] = to_json(w.phi_point);
    if (!w.x_offending.empty()) {
      wj["x_offending"] = to_json(w.x_offending);
      wj["distance"] = number(w.distance);
    }
    j["witness"] = wj;
  }
  return j;
}

Json to_json(const std::vector<CQVerdict>& vs) {
  Json a = Json::array();
  for (const auto& v : vs) a.push_back(to_json(v));
  return a;
}

Json to_json(const Estimate& est) {
  Json j;
  j["variant"] = to_string(est.variant);
  j["mode"] = to_string(est.mode);
  j["set"] = to_json(est.set);
  j["truncated"] = est.truncated;
  j["ys"] = to_json(est.ys);
  j["ys_lower"] = to_json(est.ys_lower);
  j["empty_multiplier_points"] = est.empty_multiplier_points;
  j["notes"] = est.notes;
  return j;
}

Json to_json(const Certificate& c) {
  Json j;
  j["variant"] = c.variant;
  j["mode"] = to_string(c.mode);
  j["x"] = to_json(c.x);
  if (!c.y.empty()) j["y"] = to_json(c.y);
  j["ys"] = to_json(c.ys);
  if (!c.yt.empty()) j["yt"] = to_json(c.yt);

  Json m;
  m["alpha"] = to_json(c.alpha);
  if (c.mode == Mode::Pessimistic && c.variant != "value") {
    m["r"] = to_json(c.r_t);
    m["beta"] = to_json(c.beta_t);
    if (!c.gamma_t.empty()) m["gamma"] = to_json(c.gamma_t);
    else if (!c.gamma.empty()) m["gamma"] = to_json(c.gamma);
  } else {
    m["r"] = number(c.r);
    m["beta"] = to_json(c.beta);
    m["gamma"] = to_json(c.gamma);
  }
  m["u_s"] = to_json(c.u_s);
  m["v"] = to_json(c.v);
  m["eta"] = to_json(c.eta);
  m["x_s"] = to_json(c.x_s);
  if (!c.x_t.empty()) m["x_t"] = to_json(c.x_t);
  if (!c.x_phi.empty()) m["x_phi"] = to_json(c.x_phi);
  if (!c.x_star.empty()) m["x_star"] = to_json(c.x_star);
  j["multipliers"] = m;
  if (!c.phi_clusters.empty()) j["phi_clusters"] = to_json(c.phi_clusters);

  j["residual"] = number(c.residual);
  j["lower_bound"] = number(c.lower_bound);
  j["tol"] = number(c.tol);
  j["status"] = to_string(c.status);
  j["activity"] = {{"abs", number(c.activity.abs)}, {"rel", number(c.activity.rel)}, {"upper", number(c.upper_activity)}};
  j["cq_verdicts"] = to_json(c.cq);
  j["caps"] = to_json(c.caps);
  j["seed"] = c.seed;
  j["notes"] = c.notes;
  return j;
}

Json to_json(const MinimaxReport& rep) {
  Json j;
  j["estimate"] = to_json(rep.estimate);
  j["direct"] = to_json(rep.direct);
  j["maximizers"] = to_json(rep.maximizers);
  j["excess"] = number(rep.excess);
  j["tol"] = number(rep.tol);
  j["contained"] = rep.contained;
  return j;
}

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace bilevel
