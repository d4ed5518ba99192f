#include "eqv/evalcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "eqv/rng.hpp"

namespace eqv {

const double* env_lookup(const Env& env, std::string_view name) {
  for (const auto& [k, v] : env)
    if (k == name) return &v;
  return nullptr;
}

namespace {

constexpr double kPi = std::numbers::pi_v<double>;

// Evaluates one application given finite child values; may return non-finite,
// the caller screens that.
double apply_fn(Fn f, const double* a) {
  switch (f) {
    case Fn::kSin: return std::sin(a[0]);
    case Fn::kCos: return std::cos(a[0]);
    case Fn::kCsc: return 1.0 / std::sin(a[0]);
    case Fn::kSec: return 1.0 / std::cos(a[0]);
    case Fn::kTan: return std::tan(a[0]);
    case Fn::kCot: return std::cos(a[0]) / std::sin(a[0]);
    case Fn::kAsin: return std::asin(a[0]);
    case Fn::kAcos: return std::acos(a[0]);
    case Fn::kAcsc: return std::asin(1.0 / a[0]);
    case Fn::kAsec: return std::acos(1.0 / a[0]);
    case Fn::kAtan: return std::atan(a[0]);
    // Continuous branch: acot(x) = pi/2 - atan(x), so acot(0) = pi/2.
    case Fn::kAcot: return kPi / 2.0 - std::atan(a[0]);
    case Fn::kSinh: return std::sinh(a[0]);
    case Fn::kCosh: return std::cosh(a[0]);
    case Fn::kCsch: return 1.0 / std::sinh(a[0]);
    case Fn::kSech: return 1.0 / std::cosh(a[0]);
    case Fn::kTanh: return std::tanh(a[0]);
    case Fn::kCoth: return std::cosh(a[0]) / std::sinh(a[0]);
    case Fn::kAsinh: return std::asinh(a[0]);
    case Fn::kAcosh: return std::acosh(a[0]);
    case Fn::kAcsch: return std::asinh(1.0 / a[0]);
    case Fn::kAsech: return std::acosh(1.0 / a[0]);
    case Fn::kAtanh: return std::atanh(a[0]);
    case Fn::kAcoth: return std::atanh(1.0 / a[0]);
    case Fn::kExp: return std::exp(a[0]);
    case Fn::kAdd: return a[0] + a[1];
    case Fn::kMul: return a[0] * a[1];
    case Fn::kPow: {
      // 0^0 = 1; negative base demands an integer exponent.
      if (a[0] < 0.0 && a[1] != std::nearbyint(a[1]))
        return std::numeric_limits<double>::quiet_NaN();
      return std::pow(a[0], a[1]);
    }
    case Fn::kAtan2: return std::atan2(a[0], a[1]);
    case Fn::kLog: return std::log(a[0]);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::optional<double> eval_rec(const Expr& e, const Env& env) {
  if (e.is_terminal()) {
    const Terminal& t = e.terminal();
    if (t.kind == Terminal::Kind::kVariable) {
      const double* v = env_lookup(env, t.var);
      if (v == nullptr)
        throw EqvError("unbound variable '" + t.var + "' during evaluation");
      return *v;
    }
    return t.value();
  }
  double args[2];
  auto kids = e.children();
  for (size_t i = 0; i < kids.size(); ++i) {
    auto v = eval_rec(kids[i], env);
    if (!v) return std::nullopt;
    args[i] = *v;
  }
  double r = apply_fn(e.fn(), args);
  if (!std::isfinite(r)) return std::nullopt;
  return r;
}

}  // namespace

std::optional<double> eval_expr(const Expr& e, const Env& env) {
  if (!e.valid()) throw EqvError("cannot evaluate invalid expression");
  return eval_rec(e, env);
}

double round_to_precision(double v, int precision) {
  double scale = std::pow(10.0, precision);
  double y = v * scale;
  double r = y >= 0.0 ? std::floor(y + 0.5 + 1e-9) : std::ceil(y - 0.5 - 1e-9);
  return r / scale;
}

int round_to_cents(double v) {
  double y = v * 100.0;
  double r = y >= 0.0 ? std::floor(y + 0.5 + 1e-9) : std::ceil(y - 0.5 - 1e-9);
  return static_cast<int>(r);
}

// ---------------------------------------------------------------------------
// Oracle

static void collect_variables(const Expr& e, std::vector<std::string>& out) {
  if (e.is_terminal()) {
    const Terminal& t = e.terminal();
    if (t.kind == Terminal::Kind::kVariable &&
        std::find(out.begin(), out.end(), t.var) == out.end())
      out.push_back(t.var);
    return;
  }
  for (const Expr& c : e.children()) collect_variables(c, out);
}

OracleResult verify_identity(const Equation& eq, const OracleConfig& cfg) {
  std::vector<std::string> vars;
  collect_variables(eq.lhs, vars);
  collect_variables(eq.rhs, vars);
  std::sort(vars.begin(), vars.end());

  OracleResult res;
  auto check_one = [&](const Env& env) -> std::optional<bool> {
    ++res.tried;
    auto l = eval_expr(eq.lhs, env);
    auto r = eval_expr(eq.rhs, env);
    if (!l || !r) return std::nullopt;  // not a valid sample
    ++res.valid;
    double tol = cfg.abs_tol + cfg.rel_tol * std::max(std::abs(*l), std::abs(*r));
    return std::abs(*l - *r) <= tol;
  };

  if (vars.empty()) {
    // Ground equation: decided by its single evaluation.
    auto ok = check_one({});
    if (!ok) return res;  // Undecided: not evaluable
    res.verdict = *ok ? Verdict::kCorrect : Verdict::kIncorrect;
    return res;
  }

  Env env;
  for (const std::string& v : vars) env.emplace_back(v, 0.0);

  static const double kProbes[] = {-1.0, -0.5, 0.0, 0.5, 1.0};
  for (double p : kProbes) {
    for (auto& [k, v] : env) v = p;
    auto ok = check_one(env);
    if (ok && !*ok) {
      res.verdict = Verdict::kIncorrect;
      return res;
    }
  }

  Rng rng(mix_seed(cfg.seed, fnv1a(print_equation(eq))));
  for (int i = 0; i < cfg.samples; ++i) {
    for (auto& [k, v] : env) v = rng.uniform(cfg.lo, cfg.hi);
    auto ok = check_one(env);
    if (ok && !*ok) {
      res.verdict = Verdict::kIncorrect;
      return res;
    }
  }

  res.verdict = res.valid >= cfg.min_valid ? Verdict::kCorrect : Verdict::kUndecided;
  return res;
}

Label verify_func_eval(const Equation& eq) {
  auto l = eval_expr(eq.lhs, {});
  auto r = eval_expr(eq.rhs, {});
  if (!l || !r) return Label::kIncorrect;
  // Compare at two decimals; done in doubles so large magnitudes cannot
  // overflow an integer cents representation.
  return round_to_precision(*l, 2) == round_to_precision(*r, 2)
             ? Label::kCorrect
             : Label::kIncorrect;
}

std::vector<int> precision2_grid_cents() {
  std::vector<int> out;
  out.reserve(629);
  for (int c = -314; c <= 314; ++c) out.push_back(c);
  return out;
}

}  // namespace eqv
