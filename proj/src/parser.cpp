#include <cctype>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include "bilevel/errors.hpp"
#include "bilevel/program.hpp"

namespace bilevel {

namespace {

// Recursive-descent parser for one expression. Columns are reported relative
// to the original line via col0.
class ExprParser {
 public:
  ExprParser(std::string_view s, int line, int col0, int n, int m, bool safe)
      : s_(s), line_(line), col0_(col0), n_(n), m_(m), safe_(safe) {}

  Expr parse() {
    Expr e = sum();
    skip_ws();
    if (pos_ < s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const {
    throw SyntaxError(line_, col0_ + static_cast<int>(pos_), msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }

  bool eat(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expr sum() {
    Expr e = product();
    for (;;) {
      if (eat('+'))
        e = e + product();
      else if (eat('-'))
        e = e - product();
      else
        return e;
    }
  }

  Expr product() {
    Expr e = unary();
    for (;;) {
      if (eat('*')) {
        e = e * unary();
      } else if (eat('/')) {
        Expr d = unary();
        e = Expr::divide(e, d, safe_);
      } else {
        return e;
      }
    }
  }

  Expr unary() {
    if (eat('-')) return -unary();
    if (eat('+')) return unary();
    return power();
  }

  Expr power() {
    Expr base = primary();
    if (!eat('^')) return base;
    skip_ws();
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    if (start == pos_) fail("exponent must be a nonnegative integer literal");
    if (pos_ < s_.size() && (s_[pos_] == '.' || s_[pos_] == 'e' || s_[pos_] == 'E')) {
      pos_ = start;
      fail("exponent must be a nonnegative integer literal");
    }
    int k = 0;
    auto [p, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, k);
    if (ec != std::errc()) {
      pos_ = start;
      fail("exponent out of range");
    }
    return Expr::pow(base, k);
  }

  Expr primary() {
    skip_ws();
    if (pos_ >= s_.size()) fail("unexpected end of expression");
    char c = s_[pos_];
    if (c == '(') {
      ++pos_;
      Expr e = sum();
      if (!eat(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
    fail("unexpected '" + std::string(1, c) + "'");
  }

  Expr number() {
    std::size_t start = pos_;
    while (pos_ < s_.size() &&
           (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.'))
      ++pos_;
    if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
      std::size_t save = pos_++;
      if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
      if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_])))
        pos_ = save;
      else
        while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    double v = 0.0;
    auto [p, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc() || p != s_.data() + pos_) {
      pos_ = start;
      fail("malformed number");
    }
    return Expr::constant(v);
  }

  Expr identifier() {
    std::size_t start = pos_;
    while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    std::string id(s_.substr(start, pos_ - start));
    if ((id[0] == 'x' || id[0] == 'y') && id.size() > 1 &&
        std::all_of(id.begin() + 1, id.end(), [](char ch) { return std::isdigit(ch); })) {
      int idx = 0;
      std::from_chars(id.data() + 1, id.data() + id.size(), idx);
      int bound = id[0] == 'x' ? n_ : m_;
      if (idx < 1 || idx > bound) {
        throw IndexError("line " + std::to_string(line_) + ", col " +
                         std::to_string(col0_ + static_cast<int>(start)) + ": " + id +
                         " outside 1.." + std::to_string(bound));
      }
      return id[0] == 'x' ? Expr::x(idx) : Expr::y(idx);
    }
    std::vector<Expr> args;
    if (!eat('(')) {
      pos_ = start;
      fail("unknown identifier '" + id + "'");
    }
    args.push_back(sum());
    while (eat(',')) args.push_back(sum());
    if (!eat(')')) fail("expected ')'");
    auto want = [&](std::size_t k) {
      if (args.size() != k) {
        pos_ = start;
        fail(id + " takes " + std::to_string(k) + " argument(s)");
      }
    };
    if (id == "abs") {
      want(1);
      return Expr::abs(args[0]);
    }
    if (id == "exp") {
      want(1);
      return Expr::exp(args[0]);
    }
    if (id == "log") {
      want(1);
      return Expr::log(args[0], safe_);
    }
    if (id == "max" || id == "min") {
      if (args.size() < 2) {
        pos_ = start;
        fail(id + " takes at least 2 arguments");
      }
      Expr e = args[0];
      for (std::size_t i = 1; i < args.size(); ++i)
        e = id == "max" ? Expr::max(e, args[i]) : Expr::min(e, args[i]);
      return e;
    }
    pos_ = start;
    fail("unknown function '" + id + "'");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_, col0_, n_, m_;
  bool safe_;
};

struct Item {
  int line;
  int col;  // 1-based column of the first character of text
  std::string text;
};

std::string_view trim(std::string_view s, int* lead = nullptr) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  if (lead) *lead = static_cast<int>(a);
  return s.substr(a, b - a);
}

// Split "key=value" items separated by whitespace, where values may contain
// commas (box entries) but no whitespace-separated continuation.
std::vector<std::pair<Item, Item>> key_values(const Item& it) {
  std::vector<std::pair<Item, Item>> out;
  const std::string& s = it.text;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size()) break;
    std::size_t k0 = i;
    while (i < s.size() && s[i] != '=' && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t k1 = i;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i >= s.size() || s[i] != '=')
      throw SyntaxError(it.line, it.col + static_cast<int>(k0), "expected key=value");
    ++i;
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    std::size_t v0 = i;
    // value runs until whitespace that is followed by another key=.
    while (i < s.size()) {
      if (std::isspace(static_cast<unsigned char>(s[i]))) {
        std::size_t j = i;
        while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        std::size_t k = j;
        while (k < s.size() && std::isalnum(static_cast<unsigned char>(s[k]))) ++k;
        std::size_t e = k;
        while (e < s.size() && std::isspace(static_cast<unsigned char>(s[e]))) ++e;
        bool next_key = k > j && e < s.size() && s[e] == '=' && s[j] != ',' &&
                        (i == 0 || s[i - 1] != ',');
        if (next_key || j >= s.size()) break;
        i = j;
        continue;
      }
      ++i;
    }
    std::size_t v1 = i;
    while (v1 > v0 && std::isspace(static_cast<unsigned char>(s[v1 - 1]))) --v1;
    out.push_back({Item{it.line, it.col + static_cast<int>(k0), s.substr(k0, k1 - k0)},
                   Item{it.line, it.col + static_cast<int>(v0), s.substr(v0, v1 - v0)}});
  }
  return out;
}

double parse_double(const Item& it, std::string_view s, int offset) {
  int lead = 0;
  std::string_view t = trim(s, &lead);
  double v = 0.0;
  auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc() || p != t.data() + t.size())
    throw SyntaxError(it.line, it.col + offset + lead, "malformed number '" + std::string(t) + "'");
  return v;
}

int parse_int(const Item& it) {
  int v = 0;
  auto [p, ec] = std::from_chars(it.text.data(), it.text.data() + it.text.size(), v);
  if (it.text.empty() || ec != std::errc() || p != it.text.data() + it.text.size())
    throw SyntaxError(it.line, it.col, "expected an integer");
  return v;
}

}  // namespace

Expr parse_expr(std::string_view text, int n, int m, bool safe_domains) {
  return ExprParser(text, 1, 1, n, m, safe_domains).parse();
}

BilevelProgram parse_program(std::string_view text) {
  static const char* kSections[] = {"dims", "upper", "lower", "box", "mode", "options"};
  std::map<std::string, std::vector<Item>> sec;
  std::string current;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view raw = text.substr(start, end - start);
    ++line_no;
    start = end + 1;
    if (std::size_t hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
    if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
    int lead = 0;
    std::string_view t = trim(raw, &lead);
    int col = lead + 1;
    if (t.empty()) {
      if (end == text.size()) break;
      continue;
    }
    if (t.front() == '[') {
      std::size_t close = t.find(']');
      if (close == std::string_view::npos) throw SyntaxError(line_no, col, "unterminated section header");
      std::string name(trim(t.substr(1, close - 1)));
      if (std::find(std::begin(kSections), std::end(kSections), name) == std::end(kSections))
        throw SyntaxError(line_no, col + 1, "unknown section '" + name + "'");
      current = name;
      sec[current];
      int rest_lead = 0;
      std::string_view rest = trim(t.substr(close + 1), &rest_lead);
      if (!rest.empty())
        sec[current].push_back({line_no, col + static_cast<int>(close) + 1 + rest_lead, std::string(rest)});
    } else {
      if (current.empty()) throw SyntaxError(line_no, col, "content before the first section");
      sec[current].push_back({line_no, col, std::string(t)});
    }
    if (end == text.size()) break;
  }

  BilevelProgram prog;
  for (const auto& it : sec["options"])
    for (const auto& [k, v] : key_values(it)) {
      bool on = v.text == "true" || v.text == "1" || v.text == "yes";
      bool off = v.text == "false" || v.text == "0" || v.text == "no";
      if (!on && !off) throw SyntaxError(v.line, v.col, "expected true or false");
      if (k.text == "assume_safe_domains")
        prog.safe_domains_declared = on;
      else if (k.text == "convex")
        prog.convex_declared = on;
      else
        throw SyntaxError(k.line, k.col, "unknown option '" + k.text + "'");
    }

  for (const auto& it : sec["dims"])
    for (const auto& [k, v] : key_values(it)) {
      if (k.text == "n")
        prog.n = parse_int(v);
      else if (k.text == "m")
        prog.m = parse_int(v);
      else
        throw SyntaxError(k.line, k.col, "unknown dimension '" + k.text + "'");
    }
  if (prog.n < 1 || prog.m < 1) throw SemanticsError("[dims] must declare n >= 1 and m >= 1");

  auto expr_of = [&](const Item& v) {
    return ExprParser(v.text, v.line, v.col, prog.n, prog.m, prog.safe_domains_declared).parse();
  };
  auto level = [&](const char* name, Expr& obj, std::vector<Expr>& cons) {
    bool have_obj = false;
    for (const auto& it : sec[name]) {
      std::size_t eq = it.text.find('=');
      if (eq == std::string::npos) throw SyntaxError(it.line, it.col, "expected key=<expr>");
      std::string key(trim(std::string_view(it.text).substr(0, eq)));
      int lead = 0;
      std::string_view rhs = trim(std::string_view(it.text).substr(eq + 1), &lead);
      Item v{it.line, it.col + static_cast<int>(eq) + 1 + lead, std::string(rhs)};
      if (key == "objective") {
        if (have_obj) throw SyntaxError(it.line, it.col, "duplicate objective");
        obj = expr_of(v);
        have_obj = true;
      } else if (key == "constraint") {
        cons.push_back(expr_of(v));
      } else {
        throw SyntaxError(it.line, it.col, "unknown key '" + key + "'");
      }
    }
    if (!have_obj) throw SemanticsError(std::string("[") + name + "] has no objective");
  };
  level("upper", prog.F, prog.theta1);
  level("lower", prog.f, prog.g);

  // Unspecified coordinates default to the desk-scale box [-5, 5].
  prog.x_box.assign(prog.n, Interval{-5.0, 5.0});
  prog.y_box.assign(prog.m, Interval{-5.0, 5.0});
  for (const auto& it : sec["box"])
    for (const auto& [k, v] : key_values(it)) {
      bool ok = k.text.size() > 1 && (k.text[0] == 'x' || k.text[0] == 'y');
      int idx = 0;
      if (ok) {
        auto [p, ec] = std::from_chars(k.text.data() + 1, k.text.data() + k.text.size(), idx);
        ok = ec == std::errc() && p == k.text.data() + k.text.size();
      }
      if (!ok) throw SyntaxError(k.line, k.col, "expected a variable name like x1 or y2");
      auto& box = k.text[0] == 'x' ? prog.x_box : prog.y_box;
      if (idx < 1 || idx > static_cast<int>(box.size()))
        throw IndexError("line " + std::to_string(k.line) + ", col " + std::to_string(k.col) +
                         ": " + k.text + " outside the declared dimensions");
      std::size_t comma = v.text.find(',');
      if (comma == std::string::npos) throw SyntaxError(v.line, v.col, "expected <lo>,<hi>");
      double lo = parse_double(v, std::string_view(v.text).substr(0, comma), 0);
      double hi = parse_double(v, std::string_view(v.text).substr(comma + 1), static_cast<int>(comma) + 1);
      box[idx - 1] = {lo, hi};
    }

  for (const auto& it : sec["mode"]) {
    std::string t = it.text;
    if (auto eq = t.find('='); eq != std::string::npos) t = std::string(trim(std::string_view(t).substr(eq + 1)));
    if (t == "optimistic")
      prog.mode = Mode::Optimistic;
    else if (t == "pessimistic")
      prog.mode = Mode::Pessimistic;
    else
      throw SyntaxError(it.line, it.col, "mode must be optimistic or pessimistic");
  }

  prog.validate();
  return prog;
}

BilevelProgram load_program(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_program(ss.str());
}

}  // namespace bilevel
