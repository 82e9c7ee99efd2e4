#include "bilevel/expr.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bilevel/errors.hpp"

namespace bilevel {

struct Expr::Node {
  Op op = Op::Const;
  double value = 0.0;  // Const
  int index = 0;       // VarX / VarY / Pow exponent
  bool safe = false;   // Div / Log
  std::shared_ptr<const Node> a, b;
};

namespace {

using NodeP = std::shared_ptr<const Expr::Node>;

NodeP make(Op op, NodeP a = nullptr, NodeP b = nullptr, double value = 0.0, int index = 0,
           bool safe = false) {
  auto n = std::make_shared<Expr::Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  n->value = value;
  n->index = index;
  n->safe = safe;
  return n;
}

int arity_of(Op op) {
  switch (op) {
    case Op::Const:
    case Op::VarX:
    case Op::VarY:
      return 0;
    case Op::Neg:
    case Op::Pow:
    case Op::Exp:
    case Op::Log:
    case Op::Abs:
      return 1;
    default:
      return 2;
  }
}

double ipow(double base, int k) {
  double r = 1.0;
  for (int i = 0; i < k; ++i) r *= base;
  return r;
}

struct Ctx {
  std::span<const double> x, y;
  ActivityTolerance tol;
  std::size_t dim() const { return x.size() + y.size(); }
};

double eval_node(const Expr::Node& n, std::span<const double> x, std::span<const double> y) {
  switch (n.op) {
    case Op::Const:
      return n.value;
    case Op::VarX:
      if (n.index < 1 || static_cast<std::size_t>(n.index) > x.size())
        throw IndexError("x" + std::to_string(n.index) + " outside the point's dimension");
      return x[n.index - 1];
    case Op::VarY:
      if (n.index < 1 || static_cast<std::size_t>(n.index) > y.size())
        throw IndexError("y" + std::to_string(n.index) + " outside the point's dimension");
      return y[n.index - 1];
    case Op::Neg:
      return -eval_node(*n.a, x, y);
    case Op::Add:
      return eval_node(*n.a, x, y) + eval_node(*n.b, x, y);
    case Op::Sub:
      return eval_node(*n.a, x, y) - eval_node(*n.b, x, y);
    case Op::Mul:
      return eval_node(*n.a, x, y) * eval_node(*n.b, x, y);
    case Op::Div: {
      double num = eval_node(*n.a, x, y);
      double den = eval_node(*n.b, x, y);
      if (den == 0.0) throw DomainError("division by zero");
      return num / den;
    }
    case Op::Pow:
      return ipow(eval_node(*n.a, x, y), n.index);
    case Op::Exp:
      return std::exp(eval_node(*n.a, x, y));
    case Op::Log: {
      double u = eval_node(*n.a, x, y);
      if (!(u > 0.0)) throw DomainError("log of nonpositive value");
      return std::log(u);
    }
    case Op::Abs:
      return std::abs(eval_node(*n.a, x, y));
    case Op::Max:
      return std::max(eval_node(*n.a, x, y), eval_node(*n.b, x, y));
    case Op::Min:
      return std::min(eval_node(*n.a, x, y), eval_node(*n.b, x, y));
  }
  return 0.0;
}

// All active selections of a subtree share one value (the exact node value);
// they differ only in their gradients.
struct Sel {
  std::string id;
  Vec grad;
};
struct Local {
  double value;
  std::vector<Sel> sels;
};

Local branches(const Expr::Node& n, const Ctx& c);

template <class F>
Local combine(const Local& l, const Local& r, double value, F&& grad) {
  Local out{value, {}};
  out.sels.reserve(l.sels.size() * r.sels.size());
  for (const auto& sl : l.sels)
    for (const auto& sr : r.sels) {
      Vec g(sl.grad.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = grad(sl.grad[i], sr.grad[i]);
      out.sels.push_back({sl.id + sr.id, std::move(g)});
    }
  return out;
}

template <class F>
Local map_unary(Local u, double value, F&& scale) {
  for (auto& s : u.sels)
    for (auto& g : s.grad) g = scale(g);
  u.value = value;
  return u;
}

Local branches(const Expr::Node& n, const Ctx& c) {
  switch (n.op) {
    case Op::Const:
      return {n.value, {{"", Vec(c.dim(), 0.0)}}};
    case Op::VarX:
    case Op::VarY: {
      double v = eval_node(n, c.x, c.y);
      Vec g(c.dim(), 0.0);
      g[(n.op == Op::VarX ? 0 : c.x.size()) + n.index - 1] = 1.0;
      return {v, {{"", std::move(g)}}};
    }
    case Op::Neg: {
      Local u = branches(*n.a, c);
      double v = -u.value;
      return map_unary(std::move(u), v, [](double g) { return -g; });
    }
    case Op::Add: {
      Local l = branches(*n.a, c), r = branches(*n.b, c);
      return combine(l, r, l.value + r.value, [](double p, double q) { return p + q; });
    }
    case Op::Sub: {
      Local l = branches(*n.a, c), r = branches(*n.b, c);
      return combine(l, r, l.value - r.value, [](double p, double q) { return p - q; });
    }
    case Op::Mul: {
      Local l = branches(*n.a, c), r = branches(*n.b, c);
      double a = l.value, b = r.value;
      return combine(l, r, a * b, [a, b](double p, double q) { return p * b + a * q; });
    }
    case Op::Div: {
      Local l = branches(*n.a, c), r = branches(*n.b, c);
      double a = l.value, b = r.value;
      if (b == 0.0) throw DomainError("division by zero");
      return combine(l, r, a / b, [a, b](double p, double q) { return (p * b - a * q) / (b * b); });
    }
    case Op::Pow: {
      Local u = branches(*n.a, c);
      int k = n.index;
      double a = u.value;
      double d = k == 0 ? 0.0 : k * ipow(a, k - 1);
      return map_unary(std::move(u), ipow(a, k), [d](double g) { return d * g; });
    }
    case Op::Exp: {
      Local u = branches(*n.a, c);
      double e = std::exp(u.value);
      return map_unary(std::move(u), e, [e](double g) { return e * g; });
    }
    case Op::Log: {
      Local u = branches(*n.a, c);
      double a = u.value;
      if (!(a > 0.0)) throw DomainError("log of nonpositive value");
      return map_unary(std::move(u), std::log(a), [a](double g) { return g / a; });
    }
    case Op::Abs: {
      Local u = branches(*n.a, c);
      double a = u.value;
      Local out{std::abs(a), {}};
      bool kink = std::abs(a) <= c.tol.at(std::abs(a));
      for (auto& s : u.sels) {
        if (kink || a > 0) out.sels.push_back({s.id + "+", s.grad});
        if (kink || a < 0) {
          Vec g = s.grad;
          for (auto& v : g) v = -v;
          out.sels.push_back({s.id + "-", std::move(g)});
        }
      }
      return out;
    }
    case Op::Max:
    case Op::Min: {
      Local l = branches(*n.a, c), r = branches(*n.b, c);
      double a = l.value, b = r.value;
      bool is_max = n.op == Op::Max;
      Local out{is_max ? std::max(a, b) : std::min(a, b), {}};
      bool tie = std::abs(a - b) <= c.tol.at(std::max(std::abs(a), std::abs(b)));
      bool take_l = tie || (is_max ? a > b : a < b);
      bool take_r = tie || !take_l;
      if (take_l)
        for (auto& s : l.sels) out.sels.push_back({s.id + "L", s.grad});
      if (take_r)
        for (auto& s : r.sels) out.sels.push_back({s.id + "R", s.grad});
      return out;
    }
  }
  return {0.0, {}};
}

int count_kinks(const Expr::Node& n) {
  int k = (n.op == Op::Abs || n.op == Op::Max || n.op == Op::Min) ? 1 : 0;
  if (n.a) k += count_kinks(*n.a);
  if (n.b) k += count_kinks(*n.b);
  return k;
}

int max_index(const Expr::Node& n, Op var) {
  int k = n.op == var ? n.index : 0;
  if (n.a) k = std::max(k, max_index(*n.a, var));
  if (n.b) k = std::max(k, max_index(*n.b, var));
  return k;
}

// Polynomial-style degree in the selected variable class: 0 constant,
// 1 affine, 2 anything else.
int degree(const Expr::Node& n, bool in_x, bool in_y) {
  switch (n.op) {
    case Op::Const:
      return 0;
    case Op::VarX:
      return in_x ? 1 : 0;
    case Op::VarY:
      return in_y ? 1 : 0;
    case Op::Neg:
      return degree(*n.a, in_x, in_y);
    case Op::Add:
    case Op::Sub:
      return std::max(degree(*n.a, in_x, in_y), degree(*n.b, in_x, in_y));
    case Op::Mul: {
      int da = degree(*n.a, in_x, in_y), db = degree(*n.b, in_x, in_y);
      if (da == 0) return db;
      if (db == 0) return da;
      return 2;
    }
    case Op::Div:
      return degree(*n.b, in_x, in_y) == 0 ? degree(*n.a, in_x, in_y) : 2;
    case Op::Pow: {
      int d = degree(*n.a, in_x, in_y);
      if (d == 0 || n.index == 0) return 0;
      return n.index == 1 ? d : 2;
    }
    case Op::Exp:
    case Op::Log:
    case Op::Abs:
      return degree(*n.a, in_x, in_y) == 0 ? 0 : 2;
    case Op::Max:
    case Op::Min:
      return std::max(degree(*n.a, in_x, in_y), degree(*n.b, in_x, in_y)) == 0 ? 0 : 2;
  }
  return 2;
}

bool undeclared(const Expr::Node& n) {
  if ((n.op == Op::Div || n.op == Op::Log) && !n.safe) {
    // A constant nonzero denominator can never leave the domain.
    bool const_den = n.op == Op::Div && degree(*n.b, true, true) == 0;
    if (!const_den) return true;
  }
  return (n.a && undeclared(*n.a)) || (n.b && undeclared(*n.b));
}

std::string fmt_num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::string print(const Expr::Node& n) {
  auto un = [&](const char* f) { return std::string(f) + "(" + print(*n.a) + ")"; };
  auto bin = [&](const char* o) { return "(" + print(*n.a) + " " + o + " " + print(*n.b) + ")"; };
  switch (n.op) {
    case Op::Const:
      return n.value < 0 ? "(" + fmt_num(n.value) + ")" : fmt_num(n.value);
    case Op::VarX:
      return "x" + std::to_string(n.index);
    case Op::VarY:
      return "y" + std::to_string(n.index);
    case Op::Neg:
      return "(-" + print(*n.a) + ")";
    case Op::Add:
      return bin("+");
    case Op::Sub:
      return bin("-");
    case Op::Mul:
      return bin("*");
    case Op::Div:
      return bin("/");
    case Op::Pow:
      return "(" + print(*n.a) + ")^" + std::to_string(n.index);
    case Op::Exp:
      return un("exp");
    case Op::Log:
      return un("log");
    case Op::Abs:
      return un("abs");
    case Op::Max:
      return "max(" + print(*n.a) + ", " + print(*n.b) + ")";
    case Op::Min:
      return "min(" + print(*n.a) + ", " + print(*n.b) + ")";
  }
  return "?";
}

}  // namespace

Expr::Expr() : node_(make(Op::Const)) {}
Expr::Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

Expr Expr::constant(double value) { return Expr(make(Op::Const, nullptr, nullptr, value)); }
Expr Expr::x(int index) { return Expr(make(Op::VarX, nullptr, nullptr, 0.0, index)); }
Expr Expr::y(int index) { return Expr(make(Op::VarY, nullptr, nullptr, 0.0, index)); }
Expr Expr::pow(const Expr& base, int exponent) {
  if (exponent < 0) throw SemanticsError("pow exponent must be a nonnegative integer");
  return Expr(make(Op::Pow, base.node_, nullptr, 0.0, exponent));
}
Expr Expr::exp(const Expr& arg) { return Expr(make(Op::Exp, arg.node_)); }
Expr Expr::log(const Expr& arg, bool declared_safe) {
  return Expr(make(Op::Log, arg.node_, nullptr, 0.0, 0, declared_safe));
}
Expr Expr::abs(const Expr& arg) { return Expr(make(Op::Abs, arg.node_)); }
Expr Expr::max(const Expr& lhs, const Expr& rhs) { return Expr(make(Op::Max, lhs.node_, rhs.node_)); }
Expr Expr::min(const Expr& lhs, const Expr& rhs) { return Expr(make(Op::Min, lhs.node_, rhs.node_)); }
Expr Expr::divide(const Expr& num, const Expr& den, bool declared_safe) {
  return Expr(make(Op::Div, num.node_, den.node_, 0.0, 0, declared_safe));
}

Expr operator-(const Expr& arg) { return Expr(make(Op::Neg, arg.node_)); }
Expr operator+(const Expr& l, const Expr& r) { return Expr(make(Op::Add, l.node_, r.node_)); }
Expr operator-(const Expr& l, const Expr& r) { return Expr(make(Op::Sub, l.node_, r.node_)); }
Expr operator*(const Expr& l, const Expr& r) { return Expr(make(Op::Mul, l.node_, r.node_)); }
Expr operator/(const Expr& l, const Expr& r) { return Expr::divide(l, r); }

Op Expr::op() const { return node_->op; }
double Expr::constant_value() const { return node_->value; }
int Expr::index() const { return node_->index; }
int Expr::exponent() const { return node_->index; }
bool Expr::declared_safe() const { return node_->safe; }
int Expr::arity() const { return arity_of(node_->op); }
Expr Expr::child(int which) const {
  const auto& c = which == 0 ? node_->a : node_->b;
  if (!c) throw SemanticsError("node has no child " + std::to_string(which));
  return Expr(c);
}

double Expr::eval(std::span<const double> x, std::span<const double> y) const {
  return eval_node(*node_, x, y);
}

std::vector<Branch> Expr::smooth_branches(std::span<const double> x, std::span<const double> y,
                                          ActivityTolerance tol) const {
  if (kink_count() > kMaxKinkNodes)
    throw BudgetError("expression has " + std::to_string(kink_count()) + " kink nodes (limit " +
                      std::to_string(kMaxKinkNodes) + ")");
  Local loc = branches(*node_, Ctx{x, y, tol});
  std::vector<Branch> out;
  out.reserve(loc.sels.size());
  for (auto& s : loc.sels)
    out.push_back({s.id.empty() ? "smooth" : s.id, loc.value, std::move(s.grad)});
  return out;
}

std::vector<Vec> Expr::clarke_generators(std::span<const double> x, std::span<const double> y,
                                         ActivityTolerance tol) const {
  std::vector<Vec> g;
  for (auto& b : smooth_branches(x, y, tol)) g.push_back(std::move(b.gradient));
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

int Expr::kink_count() const { return count_kinks(*node_); }
int Expr::max_x_index() const { return max_index(*node_, Op::VarX); }
int Expr::max_y_index() const { return max_index(*node_, Op::VarY); }
bool Expr::is_constant() const { return degree(*node_, true, true) == 0; }
bool Expr::is_affine() const { return degree(*node_, true, true) <= 1; }
bool Expr::is_affine_in_y() const { return degree(*node_, false, true) <= 1; }
bool Expr::is_affine_in_x() const { return degree(*node_, true, false) <= 1; }
bool Expr::has_undeclared_domain() const { return undeclared(*node_); }
std::string Expr::to_string() const { return print(*node_); }

double eval_expr(const Expr& e, std::span<const double> x, std::span<const double> y) {
  return e.eval(x, y);
}
std::vector<Branch> smooth_branches(const Expr& e, std::span<const double> x,
                                    std::span<const double> y, ActivityTolerance tol) {
  return e.smooth_branches(x, y, tol);
}
std::vector<Vec> clarke_generators(const Expr& e, std::span<const double> x,
                                   std::span<const double> y, ActivityTolerance tol) {
  return e.clarke_generators(x, y, tol);
}

AffineForm affine_form_in_y(const Expr& e, std::span<const double> x, int m) {
  AffineForm a;
  Vec y(m, 0.0);
  a.c0 = e.eval(x, y);
  a.c.resize(m);
  for (int j = 0; j < m; ++j) {
    y[j] = 1.0;
    a.c[j] = e.eval(x, y) - a.c0;
    y[j] = 0.0;
  }
  return a;
}

double AffineForm::at(std::span<const double> y) const {
  double s = c0;
  for (std::size_t j = 0; j < c.size(); ++j) s += c[j] * y[j];
  return s;
}

Vec x_part(const Vec& g, int n) { return Vec(g.begin(), g.begin() + n); }
Vec y_part(const Vec& g, int n) { return Vec(g.begin() + n, g.end()); }

namespace {
std::vector<Vec> unique_sorted(std::vector<Vec> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}
}  // namespace

std::vector<Vec> x_generators(const std::vector<Vec>& gens, int n) {
  std::vector<Vec> out;
  for (const auto& g : gens) out.push_back(x_part(g, n));
  return unique_sorted(std::move(out));
}
std::vector<Vec> y_generators(const std::vector<Vec>& gens, int n) {
  std::vector<Vec> out;
  for (const auto& g : gens) out.push_back(y_part(g, n));
  return unique_sorted(std::move(out));
}

}  // namespace bilevel
