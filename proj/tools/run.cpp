#include "run.hpp"

#include <CLI11.hpp>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "bilevel/certify.hpp"
#include "bilevel/cq.hpp"
#include "bilevel/errors.hpp"
#include "bilevel/report.hpp"
#include "bilevel/sensitivity.hpp"
#include "bilevel/valuefn.hpp"

namespace bilevel::cli {
namespace {

struct Options {
  std::string command;
  std::string input;
  std::string out;
  std::string variant;
  std::string x_text;
  std::string y_text;
  std::string which = "phi_o";
  std::vector<std::string> ranges;
  std::string mode;
  int grid = GridSpec{}.points;
  int refine = GridSpec{}.depth;
  double tol = -1.0;  // negative: command default
  std::uint64_t seed = 1;
  double rmax = Caps{}.r_max;
  double umax = Caps{}.u_max;
  bool serial = false;
};

double parse_decimal(const std::string& s, const char* what) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && *b == ' ') ++b;
  if (b < e && *b == '+') ++b;
  auto [p, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || p != e || !std::isfinite(v))
    throw CLI::ValidationError(what, "'" + s + "' is not a finite decimal");
  return v;
}

Vec parse_point(const std::string& text, const char* what) {
  Vec v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(parse_decimal(item, what));
  if (v.empty()) throw CLI::ValidationError(what, "empty point");
  return v;
}

struct Range {
  double lo, hi;
  int count;
};

Range parse_range(const std::string& text) {
  auto a = text.find(':');
  auto b = a == std::string::npos ? a : text.find(':', a + 1);
  if (b == std::string::npos) throw CLI::ValidationError("--range", "expected lo:hi:count");
  Range r{parse_decimal(text.substr(0, a), "--range"), parse_decimal(text.substr(a + 1, b - a - 1), "--range"), 0};
  const std::string c = text.substr(b + 1);
  auto [p, ec] = std::from_chars(c.data(), c.data() + c.size(), r.count);
  if (ec != std::errc() || p != c.data() + c.size() || r.count < 1)
    throw CLI::ValidationError("--range", "count must be a positive integer");
  if (r.count > 1 && !(r.lo < r.hi)) throw CLI::ValidationError("--range", "need lo < hi");
  return r;
}

EstimateVariant estimate_variant(const std::string& v) {
  if (v == "i") return EstimateVariant::Semicompact;
  if (v == "ii") return EstimateVariant::Convex;
  if (v == "iii") return EstimateVariant::Semicontinuous;
  return parse_estimate_variant(v);
}

class Runner {
 public:
  Runner(const Options& o, std::ostream& out) : o_(o), out_(out) {}

  int operator()() {
    prog_ = load_program(o_.input);
    if (o_.mode == "optimistic") prog_.mode = Mode::Optimistic;
    if (o_.mode == "pessimistic") prog_.mode = Mode::Pessimistic;
    grid_.points = o_.grid;
    grid_.depth = o_.refine;
    grid_.parallel = !o_.serial;
    grid_.validate();
    caps_.r_max = o_.rmax;
    caps_.u_max = o_.umax;
    caps_.validate();
    if (o_.command == "sample") return sample();
    if (o_.command == "estimate") return estimate();
    if (o_.command == "cq") return cq();
    if (o_.command == "certify") return certify();
    return reduce();
  }

 private:
  Vec xbar() const {
    if (o_.x_text.empty()) throw CLI::RequiredError("--x");
    Vec x = parse_point(o_.x_text, "--x");
    if (static_cast<int>(x.size()) != prog_.n)
      throw DimensionMismatch("--x has " + std::to_string(x.size()) + " entries, the program has n=" +
                              std::to_string(prog_.n));
    return x;
  }

  std::optional<Vec> ybar() const {
    if (o_.y_text.empty()) return std::nullopt;
    Vec y = parse_point(o_.y_text, "--y");
    if (static_cast<int>(y.size()) != prog_.m)
      throw DimensionMismatch("--y has " + std::to_string(y.size()) + " entries, the program has m=" +
                              std::to_string(prog_.m));
    return y;
  }

  double tol(double fallback) const { return o_.tol < 0 ? fallback : o_.tol; }

  // Effective configuration with every default resolved.
  Json config(double tol_used) const {
    Json j;
    j["command"] = o_.command;
    j["input"] = o_.input;
    j["mode"] = to_string(prog_.mode);
    if (!o_.variant.empty()) j["variant"] = o_.variant;
    if (!o_.x_text.empty()) j["x"] = to_json(parse_point(o_.x_text, "--x"));
    if (!o_.y_text.empty()) j["y"] = to_json(parse_point(o_.y_text, "--y"));
    if (o_.command == "sample") {
      j["which"] = o_.which;
      j["range"] = o_.ranges;
    }
    j["grid"] = to_json(grid_);
    j["caps"] = to_json(caps_);
    if (!std::isnan(tol_used)) j["tol"] = number(tol_used);
    j["seed"] = o_.seed;
    return j;
  }

  void emit(const std::string& text) {
    if (o_.out.empty()) {
      out_ << text;
      return;
    }
    std::ofstream f(o_.out, std::ios::binary);
    if (!f) throw Error("cannot open output file " + o_.out);
    f << text;
    if (!f) throw Error("failed writing " + o_.out);
  }

  int sample() {
    ValueKind which = parse_value_kind(o_.which);
    std::vector<Interval> box;
    std::vector<int> counts;
    if (o_.ranges.empty()) {
      for (const auto& iv : prog_.x_box) {
        box.push_back(iv);
        counts.push_back(41);
      }
    } else {
      for (const auto& s : o_.ranges) {
        Range r = parse_range(s);
        box.push_back({r.lo, r.hi});
        counts.push_back(r.count);
      }
    }
    if (static_cast<int>(box.size()) != prog_.n)
      throw DimensionMismatch("need one --range per x coordinate (n=" + std::to_string(prog_.n) + ")");
    auto rows = sample_curve(prog_, which, x_grid(box, counts), grid_);
    std::ostringstream s;
    s << "# config " << config(std::nan("")).dump() << "\n";
    write_curve_csv(s, rows, prog_.n);
    emit(s.str());
    return kOk;
  }

  int estimate() {
    Vec x = xbar();
    auto y = ybar();
    const std::string v = o_.variant.empty() ? "i" : o_.variant;
    Json j;
    Estimate est;
    std::vector<CQVerdict> hyp;
    if (v == "simple") {
      est = estimate_simple_convex(prog_, x, grid_, caps_);
    } else {
      EstimateVariant ev = estimate_variant(v);
      const Vec* yp = y ? &*y : nullptr;
      est = prog_.mode == Mode::Optimistic ? estimate_optimistic(prog_, x, ev, grid_, caps_, yp)
                                           : estimate_pessimistic(prog_, x, ev, grid_, caps_, yp);
      Vec yh = y ? *y : (est.ys.empty() ? Vec(prog_.m, 0.0) : est.ys.front());
      hyp = hypotheses_for(prog_, ev, x, yh, cq_options(tol(1e-6)));
    }
    j["config"] = config(tol(1e-6));
    j["estimate"] = to_json(est);
    j["cq_verdicts"] = to_json(hyp);
    emit(dump(j));
    return kOk;
  }

  CQOptions cq_options(double t) const {
    CQOptions c;
    c.tol = t;
    c.caps = caps_;
    c.grid = grid_;
    c.seed = o_.seed;
    return c;
  }

  int cq() {
    Vec x = xbar();
    auto y = ybar();
    EstimateVariant ev = estimate_variant(o_.variant.empty() ? "i" : o_.variant);
    Vec yv;
    if (y) {
      yv = *y;
    } else {
      auto S = prog_.mode == Mode::Optimistic ? optimistic_solutions(prog_, x, grid_)
                                              : pessimistic_solutions(prog_, x, grid_);
      if (S.points.empty()) throw InfeasiblePoint("no lower-level solution at --x");
      yv = S.points.front();
    }
    auto verdicts = hypotheses_for(prog_, ev, x, yv, cq_options(tol(1e-6)));
    Json j;
    j["config"] = config(tol(1e-6));
    j["y"] = to_json(yv);
    j["all_ok"] = all_ok(verdicts);
    j["verdicts"] = to_json(verdicts);
    emit(dump(j));
    return kOk;
  }

  int certify() {
    Vec x = xbar();
    auto y = ybar();
    CertifyOptions opt;
    opt.tol = tol(1e-6);
    opt.grid = grid_;
    opt.caps = caps_;
    opt.seed = o_.seed;
    if (y) opt.ybar = &*y;
    const std::string v = o_.variant.empty() ? "ii" : o_.variant;
    Certificate c;
    if (v == "value") {
      c = certify_value_stationarity(prog_, x, opt);
    } else {
      CertVariant cv = parse_cert_variant(v);
      c = prog_.mode == Mode::Optimistic ? certify_optimistic(prog_, x, cv, opt)
                                         : certify_pessimistic(prog_, x, cv, opt);
    }
    Json j;
    j["config"] = config(opt.tol);
    j["certificate"] = to_json(c);
    emit(dump(j));
    return c.status == CertStatus::Inconclusive ? kInconclusive : kOk;
  }

  int reduce() {
    Vec x = xbar();
    auto rep = minimax_reduction_check(prog_, x, grid_, tol(1e-4), caps_);
    Json j;
    j["config"] = config(tol(1e-4));
    j["minimax"] = to_json(rep);
    emit(dump(j));
    return kOk;
  }

  const Options& o_;
  std::ostream& out_;
  BilevelProgram prog_;
  GridSpec grid_;
  Caps caps_;
};

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Bilevel value-function sensitivity and stationarity certificates", "bilevel"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto common = [&](CLI::App* sub, bool needs_x) {
    sub->add_option("input", o.input, "problem file")->required()->check(CLI::ExistingFile);
    auto* xo = sub->add_option("--x", o.x_text, "point x̄ as comma-separated decimals");
    if (needs_x) xo->required();
    sub->add_option("--y", o.y_text, "designated lower-level point");
    sub->add_option("--grid", o.grid, "grid points per coordinate")->check(CLI::Range(2, 100000));
    sub->add_option("--refine", o.refine, "refinement levels")->check(CLI::Range(0, 12));
    sub->add_option("--tol", o.tol, "tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--rmax", o.rmax, "cap on r")->check(CLI::PositiveNumber);
    sub->add_option("--umax", o.umax, "cap on multipliers")->check(CLI::PositiveNumber);
    sub->add_option("--mode", o.mode, "override the file's mode")
        ->check(CLI::IsMember({"optimistic", "pessimistic"}));
    sub->add_flag("--serial", o.serial, "serial grid sweeps");
    sub->add_option("--out", o.out, "output path (default stdout)");
  };

  auto* sample = app.add_subcommand("sample", "CSV curve of phi, phi_o or phi_p");
  common(sample, false);
  sample->add_option("--which", o.which, "phi | phi_o | phi_p")->check(CLI::IsMember({"phi", "phi_o", "phi_p"}));
  sample->add_option("--range", o.ranges, "lo:hi:count, once per x coordinate");

  auto* est = app.add_subcommand("estimate", "upper estimate of the value-function subdifferential");
  common(est, true);
  est->add_option("--variant", o.variant, "i | ii | iii | simple")
      ->check(CLI::IsMember({"i", "ii", "iii", "simple"}));

  auto* cq = app.add_subcommand("cq", "constraint-qualification verdicts");
  common(cq, true);
  cq->add_option("--variant", o.variant, "i | ii | iii")->check(CLI::IsMember({"i", "ii", "iii"}));

  auto* cert = app.add_subcommand("certify", "stationarity certificate");
  common(cert, true);
  cert->add_option("--variant", o.variant, "i | ii | iii | value")
      ->check(CLI::IsMember({"i", "ii", "iii", "value"}));

  auto* red = app.add_subcommand("reduce", "minimax reduction check");
  common(red, true);

  try {
    app.parse(argc, argv);
    o.command = app.get_subcommands().front()->get_name();
    return Runner(o, out)();
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::Error& e) {
    err << "usage: " << one_line(e.what()) << "\n";
    return kUsage;
  } catch (const SyntaxError& e) {
    err << "parse error: " << o.input << ": " << one_line(e.what()) << "\n";
    return kUsage;
  } catch (const IndexError& e) {
    err << "parse error: " << one_line(e.what()) << "\n";
    return kUsage;
  } catch (const SemanticsError& e) {
    err << "parse error: " << one_line(e.what()) << "\n";
    return kUsage;
  } catch (const DomainError& e) {
    err << "invalid input: " << one_line(e.what()) << "\n";
    return kUsage;
  } catch (const DimensionMismatch& e) {
    err << "invalid input: " << one_line(e.what()) << "\n";
    return kUsage;
  } catch (const Infeasible& e) {
    err << "infeasible: " << one_line(e.what()) << "\n";
    return kNotApplicable;
  } catch (const InfeasiblePoint& e) {
    err << "infeasible: " << one_line(e.what()) << "\n";
    return kNotApplicable;
  } catch (const EmptySet& e) {
    err << "infeasible: " << one_line(e.what()) << "\n";
    return kNotApplicable;
  } catch (const NotApplicable& e) {
    err << "not applicable: " << one_line(e.what()) << "\n";
    return kNotApplicable;
  } catch (const NotPolyhedral& e) {
    err << "not applicable: " << one_line(e.what()) << "\n";
    return kNotApplicable;
  } catch (const UnsupportedDimension& e) {
    err << "not applicable: " << one_line(e.what()) << "\n";
    return kNotApplicable;
  } catch (const EmptyEstimate& e) {
    err << "not applicable: " << one_line(e.what()) << "\n";
    return kNotApplicable;
  } catch (const BudgetError& e) {
    err << "budget exceeded: " << one_line(e.what()) << "\n";
    return kInternal;
  } catch (const std::exception& e) {
    err << "internal error: " << one_line(e.what()) << "\n";
    return kInternal;
  }
}

}  // namespace bilevel::cli
