#include "eqv/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <unordered_map>
#include <unordered_set>

namespace eqv {

// ---------------------------------------------------------------------------
// Vocabulary tables

const std::array<FnInfo, kFnCount>& fn_table() {
  static const std::array<FnInfo, kFnCount> table = {{
      {Fn::kSin, "sin", 1, true},     {Fn::kCos, "cos", 1, true},
      {Fn::kCsc, "csc", 1, true},     {Fn::kSec, "sec", 1, true},
      {Fn::kTan, "tan", 1, true},     {Fn::kCot, "cot", 1, true},
      {Fn::kAsin, "asin", 1, true},   {Fn::kAcos, "acos", 1, true},
      {Fn::kAcsc, "acsc", 1, true},   {Fn::kAsec, "asec", 1, true},
      {Fn::kAtan, "atan", 1, true},   {Fn::kAcot, "acot", 1, true},
      {Fn::kSinh, "sinh", 1, true},   {Fn::kCosh, "cosh", 1, true},
      {Fn::kCsch, "csch", 1, true},   {Fn::kSech, "sech", 1, true},
      {Fn::kTanh, "tanh", 1, true},   {Fn::kCoth, "coth", 1, true},
      {Fn::kAsinh, "asinh", 1, true}, {Fn::kAcosh, "acosh", 1, true},
      {Fn::kAcsch, "acsch", 1, true}, {Fn::kAsech, "asech", 1, true},
      {Fn::kAtanh, "atanh", 1, true}, {Fn::kAcoth, "acoth", 1, true},
      {Fn::kExp, "exp", 1, true},
      {Fn::kAdd, "+", 2, true},       {Fn::kMul, "*", 2, true},
      {Fn::kPow, "^", 2, true},
      {Fn::kAtan2, "atan2", 2, false},{Fn::kLog, "log", 1, false},
  }};
  return table;
}

const FnInfo& fn_info(Fn f) { return fn_table()[static_cast<size_t>(f)]; }

const FnInfo* find_fn(std::string_view name) {
  for (const auto& info : fn_table()) {
    if (name == info.name) return &info;
  }
  return nullptr;
}

const std::vector<ConstInfo>& const_table() {
  static const std::vector<ConstInfo> table = {
      // Default vocabulary, enumeration order.
      {"0", 0.0, 0, true},
      {"1", 1.0, 100, true},
      {"2", 2.0, 200, true},
      {"3", 3.0, 300, true},
      {"4", 4.0, 400, true},
      {"10", 10.0, 1000, true},
      {"0.5", 0.5, 50, true},
      {"-1", -1.0, -100, true},
      {"0.4", 0.4, 40, true},
      {"0.7", 0.7, 70, true},
      {"pi", std::numbers::pi_v<double>, INT32_MIN, true},
      // Digits needed only by decimal expansion trees.
      {"5", 5.0, 500, false},
      {"6", 6.0, 600, false},
      {"7", 7.0, 700, false},
      {"8", 8.0, 800, false},
      {"9", 9.0, 900, false},
  };
  return table;
}

int find_const(std::string_view token) {
  const auto& table = const_table();
  for (size_t i = 0; i < table.size(); ++i) {
    if (token == table[i].token) return static_cast<int>(i);
  }
  return -1;
}

// ---------------------------------------------------------------------------
// Terminals

Terminal Terminal::constant(int id) {
  if (id < 0 || id >= static_cast<int>(const_table().size()))
    throw EqvError("constant id out of range: " + std::to_string(id));
  Terminal t;
  t.kind = Kind::kConstant;
  t.const_id = static_cast<int8_t>(id);
  return t;
}

Terminal Terminal::constant(std::string_view token) {
  int id = find_const(token);
  if (id < 0) throw EqvError("unknown constant: " + std::string(token));
  return constant(id);
}

Terminal Terminal::variable(std::string name) {
  Terminal t;
  t.kind = Kind::kVariable;
  t.var = std::move(name);
  return t;
}

Terminal Terminal::number_from_cents(int cents) {
  for (size_t i = 0; i < const_table().size(); ++i) {
    if (const_table()[i].cents == cents) return constant(static_cast<int>(i));
  }
  if (cents < -314 || cents > 314)
    throw EqvError("number out of range: " + std::to_string(cents / 100.0));
  Terminal t;
  t.kind = Kind::kNumber;
  t.cents = static_cast<int16_t>(cents);
  return t;
}

double Terminal::value() const {
  switch (kind) {
    case Kind::kConstant: return const_table()[const_id].value;
    case Kind::kNumber: return cents / 100.0;
    case Kind::kVariable:
      throw EqvError("variable '" + var + "' has no value without an environment");
  }
  throw EqvError("corrupt terminal");
}

static std::string cents_to_token(int cents) {
  std::string s;
  int a = cents;
  if (a < 0) {
    s += '-';
    a = -a;
  }
  s += std::to_string(a / 100);
  int frac = a % 100;
  if (frac != 0) {
    s += '.';
    if (frac % 10 == 0) {
      s += std::to_string(frac / 10);
    } else {
      if (frac < 10) s += '0';
      s += std::to_string(frac);
    }
  }
  return s;
}

std::string Terminal::token() const {
  switch (kind) {
    case Kind::kConstant: return const_table()[const_id].token;
    case Kind::kVariable: return var;
    case Kind::kNumber: return cents_to_token(cents);
  }
  throw EqvError("corrupt terminal");
}

bool operator==(const Terminal& a, const Terminal& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Terminal::Kind::kConstant: return a.const_id == b.const_id;
    case Terminal::Kind::kVariable: return a.var == b.var;
    case Terminal::Kind::kNumber: return a.cents == b.cents;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Expr

struct Expr::Node {
  Terminal term;
  Fn fn = Fn::kSin;
  bool is_terminal = true;
  std::vector<Expr> children;
  int depth = 1;
  int node_count = 1;
};

Expr Expr::make(Terminal t) {
  auto n = std::make_shared<Node>();
  n->term = std::move(t);
  Expr e;
  e.n_ = std::move(n);
  return e;
}

Expr Expr::make(Fn fn, std::vector<Expr> children) {
  const FnInfo& info = fn_info(fn);
  if (static_cast<int>(children.size()) != info.arity)
    throw EqvError(std::string(info.name) + " expects " +
                   std::to_string(info.arity) + " children, got " +
                   std::to_string(children.size()));
  auto n = std::make_shared<Node>();
  n->is_terminal = false;
  n->fn = fn;
  n->depth = 0;
  n->node_count = 1;
  for (const Expr& c : children) {
    if (!c.valid()) throw EqvError("invalid child expression");
    n->depth = std::max(n->depth, c.depth());
    n->node_count += c.node_count();
  }
  n->depth += 1;
  n->children = std::move(children);
  Expr e;
  e.n_ = std::move(n);
  return e;
}

bool Expr::is_terminal() const { return n_->is_terminal; }
const Terminal& Expr::terminal() const {
  if (!n_->is_terminal) throw EqvError("not a terminal");
  return n_->term;
}
Fn Expr::fn() const {
  if (n_->is_terminal) throw EqvError("terminal has no function");
  return n_->fn;
}
std::span<const Expr> Expr::children() const { return n_->children; }
int Expr::depth() const { return n_->depth; }
int Expr::node_count() const { return n_->node_count; }

bool structural_equal(const Expr& a, const Expr& b) {
  if (a.depth() != b.depth() || a.node_count() != b.node_count()) return false;
  if (a.is_terminal() != b.is_terminal()) return false;
  if (a.is_terminal()) return a.terminal() == b.terminal();
  if (a.fn() != b.fn()) return false;
  for (size_t i = 0; i < a.children().size(); ++i) {
    if (!structural_equal(a.children()[i], b.children()[i])) return false;
  }
  return true;
}

static void collect_positions(const Expr& e, Path& cur, std::vector<Path>& out) {
  out.push_back(cur);
  if (e.is_terminal()) return;
  for (size_t i = 0; i < e.children().size(); ++i) {
    cur.push_back(static_cast<int>(i));
    collect_positions(e.children()[i], cur, out);
    cur.pop_back();
  }
}

std::vector<Path> all_positions(const Expr& e) {
  std::vector<Path> out;
  Path cur;
  collect_positions(e, cur, out);
  return out;
}

Expr subtree_at(const Expr& e, std::span<const int> path) {
  Expr cur = e;
  for (int idx : path) {
    if (cur.is_terminal() || idx < 0 ||
        idx >= static_cast<int>(cur.children().size()))
      throw EqvError("path does not exist in expression");
    cur = cur.children()[idx];
  }
  return cur;
}

Expr substitute(const Expr& e, std::span<const int> path, const Expr& replacement) {
  if (path.empty()) return replacement;
  if (e.is_terminal()) throw EqvError("path does not exist in expression");
  int idx = path[0];
  if (idx < 0 || idx >= static_cast<int>(e.children().size()))
    throw EqvError("path does not exist in expression");
  std::vector<Expr> kids(e.children().begin(), e.children().end());
  kids[idx] = substitute(kids[idx], path.subspan(1), replacement);
  return Expr::make(e.fn(), std::move(kids));
}

// ---------------------------------------------------------------------------
// Grammar

std::vector<Fn> Grammar::unary() const {
  std::vector<Fn> out;
  for (Fn f : functions)
    if (fn_info(f).arity == 1) out.push_back(f);
  return out;
}

std::vector<Fn> Grammar::binary() const {
  std::vector<Fn> out;
  for (Fn f : functions)
    if (fn_info(f).arity == 2) out.push_back(f);
  return out;
}

std::vector<Terminal> Grammar::terminals() const {
  std::vector<Terminal> out;
  for (int id : constants) out.push_back(Terminal::constant(id));
  for (const std::string& v : variables) out.push_back(Terminal::variable(v));
  return out;
}

const Grammar& Grammar::standard() {
  static const Grammar g = [] {
    Grammar g;
    for (const auto& info : fn_table())
      if (info.core) g.functions.push_back(info.fn);
    for (size_t i = 0; i < const_table().size(); ++i)
      if (const_table()[i].core) g.constants.push_back(static_cast<int>(i));
    g.variables = {"x", "y", "z", "th"};
    return g;
  }();
  return g;
}

// ---------------------------------------------------------------------------
// Printing

static void print_rec(const Expr& e, std::string& out) {
  if (e.is_terminal()) {
    out += e.terminal().token();
    return;
  }
  out += '(';
  out += fn_info(e.fn()).name;
  for (const Expr& c : e.children()) {
    out += ' ';
    print_rec(c, out);
  }
  out += ')';
}

std::string print_expr(const Expr& e) {
  if (!e.valid()) throw EqvError("cannot print invalid expression");
  std::string out;
  out.reserve(static_cast<size_t>(e.node_count()) * 6);
  print_rec(e, out);
  return out;
}

// ---------------------------------------------------------------------------
// Parsing

namespace {

struct Lexer {
  std::string_view text;
  size_t pos = 0;

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos])))
      ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= text.size();
  }

  // Returns "(" / ")" / a bare token; empty on end.
  std::string_view peek_kind() {
    skip_ws();
    if (pos >= text.size()) return {};
    if (text[pos] == '(') return text.substr(pos, 1);
    if (text[pos] == ')') return text.substr(pos, 1);
    return text.substr(pos, token_len());
  }

  size_t token_len() {
    size_t end = pos;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end])) &&
           text[end] != '(' && text[end] != ')')
      ++end;
    return end - pos;
  }

  std::string_view take() {
    skip_ws();
    if (pos >= text.size()) throw ParseError("unexpected end of input", pos);
    if (text[pos] == '(' || text[pos] == ')') return text.substr(pos++, 1);
    size_t len = token_len();
    auto tok = text.substr(pos, len);
    pos += len;
    return tok;
  }
};

bool parse_number_token(std::string_view tok, size_t at, int& cents_out) {
  size_t i = 0;
  bool neg = false;
  if (i < tok.size() && tok[i] == '-') {
    neg = true;
    ++i;
  }
  size_t int_start = i;
  while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
  if (i == int_start) return false;  // not numeric at all
  long long whole = 0;
  for (size_t k = int_start; k < i; ++k) whole = whole * 10 + (tok[k] - '0');
  int frac = 0;
  if (i < tok.size()) {
    if (tok[i] != '.') return false;
    ++i;
    size_t frac_start = i;
    while (i < tok.size() && std::isdigit(static_cast<unsigned char>(tok[i]))) ++i;
    size_t digits = i - frac_start;
    if (digits == 0 || i != tok.size())
      throw ParseError("malformed number '" + std::string(tok) + "'", at);
    if (digits > 2)
      throw ParseError("number '" + std::string(tok) +
                           "' exceeds two decimal places",
                       at);
    frac = (tok[frac_start] - '0') * 10;
    if (digits == 2) frac += tok[frac_start + 1] - '0';
  } else if (i != tok.size()) {
    return false;
  }
  long long cents = whole * 100 + frac;
  if (neg) cents = -cents;
  if (cents < INT16_MIN || cents > INT16_MAX)
    throw ParseError("number '" + std::string(tok) + "' out of range", at);
  cents_out = static_cast<int>(cents);
  return true;
}

Expr parse_terminal_token(std::string_view tok, size_t at, const Grammar& g) {
  int cid = find_const(tok);
  if (cid >= 0) return Expr::make(Terminal::constant(cid));
  for (const std::string& v : g.variables) {
    if (tok == v) return Expr::make(Terminal::variable(v));
  }
  int cents = 0;
  if (parse_number_token(tok, at, cents)) {
    if (cents < -314 || cents > 314)
      throw ParseError("number '" + std::string(tok) +
                           "' outside [-3.14, 3.14]",
                       at);
    return Expr::make(Terminal::number_from_cents(cents));
  }
  throw ParseError("unknown symbol '" + std::string(tok) + "'", at);
}

Expr parse_rec(Lexer& lex, const Grammar& g) {
  size_t at = lex.pos;
  std::string_view tok = lex.take();
  if (tok == ")") throw ParseError("unexpected ')'", at);
  if (tok != "(") return parse_terminal_token(tok, at, g);

  size_t head_at = lex.pos;
  std::string_view head = lex.take();
  if (head == "(" || head == ")")
    throw ParseError("expected a function name after '('", head_at);
  const FnInfo* info = find_fn(head);
  if (info == nullptr)
    throw ParseError("unknown function '" + std::string(head) + "'", head_at);
  bool enabled = std::find(g.functions.begin(), g.functions.end(), info->fn) !=
                 g.functions.end();
  if (!enabled)
    throw ParseError("function '" + std::string(head) + "' is not enabled",
                     head_at);

  std::vector<Expr> kids;
  while (true) {
    if (lex.at_end()) throw ParseError("missing ')'", lex.pos);
    if (lex.peek_kind() == ")") {
      lex.take();
      break;
    }
    kids.push_back(parse_rec(lex, g));
  }
  if (static_cast<int>(kids.size()) != info->arity)
    throw ParseError("'" + std::string(head) + "' expects " +
                         std::to_string(info->arity) + " arguments, got " +
                         std::to_string(kids.size()),
                     at);
  return Expr::make(info->fn, std::move(kids));
}

}  // namespace

Expr parse_expr(std::string_view text, const Grammar& g) {
  Lexer lex{text};
  if (lex.at_end()) throw ParseError("empty expression", 0);
  Expr e = parse_rec(lex, g);
  if (!lex.at_end())
    throw ParseError("trailing input after expression", lex.pos);
  return e;
}

// ---------------------------------------------------------------------------
// Equations

int Equation::depth() const { return std::max(lhs.depth(), rhs.depth()); }

std::string Equation::key() const { return print_equation(*this); }

bool has_number_terminal(const Expr& e) {
  if (e.is_terminal()) return e.terminal().kind == Terminal::Kind::kNumber;
  for (const Expr& c : e.children())
    if (has_number_terminal(c)) return true;
  return false;
}

bool has_variable(const Expr& e) {
  if (e.is_terminal()) return e.terminal().kind == Terminal::Kind::kVariable;
  for (const Expr& c : e.children())
    if (has_variable(c)) return true;
  return false;
}

Equation make_equation(Expr lhs, Expr rhs, Label label, EqKind kind) {
  if (!lhs.valid() || !rhs.valid()) throw EqvError("equation side is invalid");
  if (kind == EqKind::kSymbolic &&
      (has_number_terminal(lhs) || has_number_terminal(rhs)))
    throw EqvError("symbolic equation contains a number terminal");
  if (kind == EqKind::kFuncEval && (has_variable(lhs) || has_variable(rhs)))
    throw EqvError("function-evaluation equation contains a variable");
  Equation eq;
  eq.lhs = std::move(lhs);
  eq.rhs = std::move(rhs);
  eq.label = label;
  eq.kind = kind;
  return eq;
}

std::string print_equation(const Equation& eq) {
  return print_expr(eq.lhs) + " = " + print_expr(eq.rhs);
}

Equation parse_equation(std::string_view text, const Grammar& g, Label label,
                        EqKind kind) {
  size_t sep = text.find(" = ");
  if (sep == std::string_view::npos)
    throw ParseError("equation must contain ' = '", 0);
  Expr lhs = parse_expr(text.substr(0, sep), g);
  Expr rhs = parse_expr(text.substr(sep + 3), g);
  return make_equation(std::move(lhs), std::move(rhs), label, kind);
}

// ---------------------------------------------------------------------------
// Pattern matching

static bool match_rec(const Expr& pattern, const Expr& target, Binding& b) {
  if (pattern.is_terminal()) {
    const Terminal& t = pattern.terminal();
    if (t.kind == Terminal::Kind::kVariable) {
      auto it = b.find(t.var);
      if (it == b.end()) {
        b.emplace(t.var, target);
        return true;
      }
      return structural_equal(it->second, target);
    }
    return target.is_terminal() && target.terminal() == t;
  }
  if (target.is_terminal() || target.fn() != pattern.fn()) return false;
  for (size_t i = 0; i < pattern.children().size(); ++i) {
    if (!match_rec(pattern.children()[i], target.children()[i], b)) return false;
  }
  return true;
}

std::optional<Binding> match_pattern(const Expr& pattern, const Expr& target) {
  Binding b;
  if (match_rec(pattern, target, b)) return b;
  return std::nullopt;
}

std::vector<SubtreeMatch> match_subtree(const Expr& e, const Expr& pattern) {
  std::vector<SubtreeMatch> out;
  for (const Path& p : all_positions(e)) {
    Expr sub = subtree_at(e, p);
    if (auto b = match_pattern(pattern, sub)) out.push_back({p, std::move(*b)});
  }
  return out;
}

Expr instantiate(const Expr& pattern, const Binding& binding) {
  if (pattern.is_terminal()) {
    const Terminal& t = pattern.terminal();
    if (t.kind == Terminal::Kind::kVariable) {
      auto it = binding.find(t.var);
      if (it == binding.end())
        throw EqvError("unbound pattern variable '" + t.var + "'");
      return it->second;
    }
    return pattern;
  }
  std::vector<Expr> kids;
  kids.reserve(pattern.children().size());
  for (const Expr& c : pattern.children()) kids.push_back(instantiate(c, binding));
  return Expr::make(pattern.fn(), kids);
}

// ---------------------------------------------------------------------------
// Decimal expansion trees

static Expr digit_expr(int d) {
  return Expr::make(Terminal::constant(std::to_string(d)));
}

// Exponent k as it appears under ^(10, .): 0 stays 0, -k becomes (* -1 k).
static Expr exponent_expr(int k) {
  if (k >= 0) return digit_expr(k);
  return Expr::make(Fn::kMul, {Expr::make(Terminal::constant("-1")), digit_expr(-k)});
}

static Expr place_term(int digit, int power) {
  Expr ten_pow = Expr::make(Fn::kPow, {Expr::make(Terminal::constant("10")),
                                       exponent_expr(power)});
  return Expr::make(Fn::kMul, {digit_expr(digit), std::move(ten_pow)});
}

Expr decimal_tree(int cents) {
  if (cents < -314 || cents > 314)
    throw EqvError("decimal expansion expects |value| <= 3.14");
  if (cents < 0)
    return Expr::make(Fn::kMul, {Expr::make(Terminal::constant("-1")),
                                 decimal_tree(-cents)});
  // Digits at powers 0, -1, -2; zero digits are dropped.
  int digits[3] = {cents / 100, (cents / 10) % 10, cents % 10};
  int powers[3] = {0, -1, -2};
  std::vector<Expr> terms;
  for (int i = 0; i < 3; ++i)
    if (digits[i] != 0) terms.push_back(place_term(digits[i], powers[i]));
  if (terms.empty()) return place_term(0, 0);  // 0 -> (* 0 (^ 10 0))
  Expr acc = terms[0];
  for (size_t i = 1; i < terms.size(); ++i)
    acc = Expr::make(Fn::kAdd, {acc, terms[i]});
  return acc;
}

// ---------------------------------------------------------------------------
// Enumeration

std::vector<Expr> enumerate_exprs(int max_depth,
                                  std::span<const Terminal> terminals,
                                  const Grammar& g) {
  if (max_depth < 1) return {};
  std::vector<Expr> all;
  std::unordered_set<std::string> seen;
  auto push = [&](Expr e) {
    std::string s = print_expr(e);
    if (seen.insert(std::move(s)).second) all.push_back(std::move(e));
  };

  std::vector<Expr> prev_depths;  // everything with depth < current level
  std::vector<Expr> level;
  for (const Terminal& t : terminals) {
    Expr e = Expr::make(t);
    push(e);
    level.push_back(std::move(e));
  }

  std::vector<Fn> unary = g.unary();
  std::vector<Fn> binary = g.binary();
  for (int d = 2; d <= max_depth; ++d) {
    // depth-d expressions need at least one child of depth d-1
    std::vector<Expr> next;
    auto add = [&](Expr e) {
      std::string s = print_expr(e);
      if (seen.insert(std::move(s)).second) {
        all.push_back(e);
        next.push_back(std::move(e));
      }
    };
    for (Fn f : unary) {
      for (const Expr& c : level) add(Expr::make(f, {c}));
    }
    for (Fn f : binary) {
      for (const Expr& a : level)
        for (const Expr& b : level) add(Expr::make(f, {a, b}));
      for (const Expr& a : level)
        for (const Expr& b : prev_depths) add(Expr::make(f, {a, b}));
      for (const Expr& a : prev_depths)
        for (const Expr& b : level) add(Expr::make(f, {a, b}));
    }
    prev_depths.insert(prev_depths.end(), level.begin(), level.end());
    level = std::move(next);
  }
  return all;
}

}  // namespace eqv
