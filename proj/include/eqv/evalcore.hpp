#pragma once

#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "eqv/expr.hpp"

namespace eqv {

// Variable assignment. Alphabets are tiny, so a flat vector beats a map.
using Env = std::vector<std::pair<std::string, double>>;

const double* env_lookup(const Env& env, std::string_view name);

// Numeric evaluation. nullopt signals a domain failure: an undefined input
// (e.g. acosh of 0.5, 0 to a negative power, a negative base with fractional
// exponent) or any non-finite intermediate. An unbound variable is a caller
// bug and throws instead.
std::optional<double> eval_expr(const Expr& e, const Env& env);

// Half-away-from-zero rounding to `precision` decimal places. The small nudge
// keeps values that are decimal halves (2.175) from rounding down due to
// binary representation error.
double round_to_precision(double v, int precision);
int round_to_cents(double v);  // round_to_precision(v, 2) * 100 as int

// ---------------------------------------------------------------------------
// Sampling oracle for symbolic identities.

struct OracleConfig {
  int samples = 64;        // random assignments per equation
  double abs_tol = 1e-8;
  double rel_tol = 1e-6;
  int min_valid = 8;       // fewer valid samples than this => Undecided
  double lo = -3.14;
  double hi = 3.14;
  uint64_t seed = 0;       // per-equation streams are derived from this
};

enum class Verdict : uint8_t { kCorrect, kIncorrect, kUndecided };

struct OracleResult {
  Verdict verdict = Verdict::kUndecided;
  int valid = 0;  // assignments where both sides evaluated
  int tried = 0;
};

// Decides a symbolic equation by sampling. Probe assignments (every variable
// set to the same value from {-1, -0.5, 0, 0.5, 1}) run first, then `samples`
// uniform draws from [lo, hi]. One disagreement beyond tolerance is enough
// for Incorrect; agreement on at least min_valid evaluable assignments is
// Correct; otherwise Undecided. Ground equations are decided by the single
// evaluation they admit.
OracleResult verify_identity(const Equation& eq, const OracleConfig& cfg);

// Function-evaluation equations are ground; both sides are rounded to two
// decimals and compared exactly. A domain failure on either side is Incorrect.
Label verify_func_eval(const Equation& eq);

// The 629-value grid of precision-2 numbers in [-3.14, 3.14], in cents.
std::vector<int> precision2_grid_cents();

}  // namespace eqv
