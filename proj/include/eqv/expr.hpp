#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace eqv {

struct EqvError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : EqvError {
  ParseError(const std::string& msg, size_t pos)
      : EqvError(msg + " (at offset " + std::to_string(pos) + ")"), pos(pos) {}
  size_t pos;
};

// ---------------------------------------------------------------------------
// Function vocabulary

enum class Fn : uint8_t {
  kSin, kCos, kCsc, kSec, kTan, kCot,
  kAsin, kAcos, kAcsc, kAsec, kAtan, kAcot,
  kSinh, kCosh, kCsch, kSech, kTanh, kCoth,
  kAsinh, kAcosh, kAcsch, kAsech, kAtanh, kAcoth,
  kExp,
  kAdd, kMul, kPow,
  // Present in the vocabulary but disabled by default; kept so datasets that
  // opt into them parse and evaluate.
  kAtan2, kLog,
};

inline constexpr int kFnCount = 30;

struct FnInfo {
  Fn fn;
  const char* name;
  int arity;
  bool core;  // part of the default grammar
};

const std::array<FnInfo, kFnCount>& fn_table();
const FnInfo& fn_info(Fn f);
const FnInfo* find_fn(std::string_view name);

// ---------------------------------------------------------------------------
// Terminals

// Named constants. The first block is the default generation vocabulary; the
// digits 5..9 exist so decimal expansions of numbers can be written as trees,
// but they do not participate in random generation or enumeration.
struct ConstInfo {
  const char* token;
  double value;
  int cents;  // value * 100 when that is exact, else INT32_MIN (pi)
  bool core;
};

const std::vector<ConstInfo>& const_table();
int find_const(std::string_view token);  // -1 if absent

struct Terminal {
  enum class Kind : uint8_t { kConstant, kVariable, kNumber };

  Kind kind = Kind::kConstant;
  int8_t const_id = 0;  // kConstant: index into const_table()
  int16_t cents = 0;    // kNumber: value * 100 (precision-2 grid)
  std::string var;      // kVariable: token

  static Terminal constant(int id);
  static Terminal constant(std::string_view token);
  static Terminal variable(std::string name);
  // Canonicalizes: a grid value that coincides with a named constant becomes
  // that constant. Throws EqvError when |value| > 3.14 survives as a Number.
  static Terminal number_from_cents(int cents);

  double value() const;  // throws EqvError for variables
  std::string token() const;
};

bool operator==(const Terminal& a, const Terminal& b);
inline bool operator!=(const Terminal& a, const Terminal& b) { return !(a == b); }

// ---------------------------------------------------------------------------
// Expressions: immutable trees with structural sharing.

class Expr {
 public:
  Expr() = default;  // invalid handle

  static Expr make(Terminal t);
  static Expr make(Fn fn, std::vector<Expr> children);  // checks arity

  bool valid() const { return n_ != nullptr; }
  bool is_terminal() const;
  const Terminal& terminal() const;
  Fn fn() const;
  std::span<const Expr> children() const;

  int depth() const;       // terminal = 1; cached
  int node_count() const;  // cached

 private:
  struct Node;
  std::shared_ptr<const Node> n_;
};

bool structural_equal(const Expr& a, const Expr& b);

// Path from the root: child indexes, empty = root itself.
using Path = std::vector<int>;

// All node positions in preorder (root first).
std::vector<Path> all_positions(const Expr& e);
// Subtree at a path; throws EqvError if the path does not exist.
Expr subtree_at(const Expr& e, std::span<const int> path);
// Replace the subtree at `path`, rebuilding only the spine.
Expr substitute(const Expr& e, std::span<const int> path, const Expr& replacement);

// ---------------------------------------------------------------------------
// Grammar: which functions / constants / variables are in play.

struct Grammar {
  std::vector<Fn> functions;          // enabled functions, table order
  std::vector<int> constants;         // const_table ids, enumeration order
  std::vector<std::string> variables; // variable alphabet

  std::vector<Fn> unary() const;
  std::vector<Fn> binary() const;
  // Terminals eligible for generation/enumeration, in enumeration order:
  // constants first, then variables.
  std::vector<Terminal> terminals() const;

  static const Grammar& standard();
};

// ---------------------------------------------------------------------------
// Text form: prefix notation, e.g. (+ (^ (sin th) 2) (^ (cos th) 2))

std::string print_expr(const Expr& e);
Expr parse_expr(std::string_view text, const Grammar& g);

// ---------------------------------------------------------------------------
// Equations

enum class Label : uint8_t { kCorrect, kIncorrect };
enum class EqKind : uint8_t { kSymbolic, kFuncEval };

struct Equation {
  Expr lhs, rhs;
  Label label = Label::kIncorrect;
  EqKind kind = EqKind::kSymbolic;

  int depth() const;         // max of the two sides
  std::string key() const;   // canonical "lhs = rhs"
};

// Validates the kind invariants: symbolic equations carry no Number
// terminals, function-evaluation equations carry no variables.
Equation make_equation(Expr lhs, Expr rhs, Label label, EqKind kind);

bool has_number_terminal(const Expr& e);
bool has_variable(const Expr& e);

// "lhs = rhs" with both sides in prefix form.
std::string print_equation(const Equation& eq);
Equation parse_equation(std::string_view text, const Grammar& g, Label label,
                        EqKind kind);

// ---------------------------------------------------------------------------
// Pattern matching (variables act as wildcards)

using Binding = std::map<std::string, Expr>;

// Match `pattern` against `target` at the root. Repeated variables must bind
// to structurally identical subtrees.
std::optional<Binding> match_pattern(const Expr& pattern, const Expr& target);

struct SubtreeMatch {
  Path path;
  Binding binding;
};
// Every position of `e` where `pattern` matches, in preorder.
std::vector<SubtreeMatch> match_subtree(const Expr& e, const Expr& pattern);

// Instantiate a pattern with a complete binding; throws EqvError when a
// pattern variable is unbound.
Expr instantiate(const Expr& pattern, const Binding& binding);

// ---------------------------------------------------------------------------
// Decimal expansion of a precision-2 number as a tree over digits and powers
// of ten, e.g. 2.5 -> (+ (* 2 (^ 10 0)) (* 5 (^ 10 (* -1 1)))).

Expr decimal_tree(int cents);

// ---------------------------------------------------------------------------
// Exhaustive enumeration of expressions up to a depth over a terminal pool.
// Deduplicated by printed form, first occurrence kept; ordering is by depth,
// then functions in table order, then terminals in pool order.

std::vector<Expr> enumerate_exprs(int max_depth,
                                  std::span<const Terminal> terminals,
                                  const Grammar& g);

}  // namespace eqv
