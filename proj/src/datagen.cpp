#include "eqv/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>
#include <unordered_set>

namespace eqv {

std::string_view label_name(Label l) {
  return l == Label::kCorrect ? "correct" : "incorrect";
}
std::string_view kind_name(EqKind k) {
  return k == EqKind::kSymbolic ? "symbolic" : "funceval";
}
std::string_view split_name(Split s) {
  return s == Split::kTrain ? "train" : "test";
}
std::string_view provenance_name(Provenance p) {
  switch (p) {
    case Provenance::kAxiom: return "axiom";
    case Provenance::kRewrite: return "rewrite";
    case Provenance::kMutation: return "mutation";
    case Provenance::kFuncEval: return "funceval";
  }
  return "?";
}

DatasetStats Dataset::stats() const {
  DatasetStats s;
  for (const Record& r : records) {
    ++s.total;
    if (r.eq.label == Label::kCorrect) ++s.correct;
    if (r.eq.kind == EqKind::kSymbolic) ++s.symbolic; else ++s.funceval;
    if (r.split == Split::kTrain) ++s.train; else ++s.test;
    int d = r.eq.depth();
    if (d >= 0 && d < static_cast<int>(s.by_depth.size())) ++s.by_depth[d];
  }
  return s;
}

// ---------------------------------------------------------------------------
// Axioms

std::vector<Equation> parse_axioms(std::string_view text, const Grammar& g,
                                   const OracleConfig& oracle) {
  std::vector<Equation> out;
  size_t lineno = 0;
  size_t start = 0;
  while (start <= text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    // trim
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.front())))
      line.remove_prefix(1);
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back())))
      line.remove_suffix(1);
    if (line.empty()) continue;
    Equation eq;
    try {
      eq = parse_equation(line, g, Label::kCorrect, EqKind::kSymbolic);
    } catch (const EqvError& e) {
      throw EqvError("axiom line " + std::to_string(lineno) + ": " + e.what());
    }
    OracleResult res = verify_identity(eq, oracle);
    if (res.verdict != Verdict::kCorrect) {
      throw EqvError("axiom line " + std::to_string(lineno) + " ('" +
                     std::string(line) + "') does not verify: " +
                     (res.verdict == Verdict::kIncorrect ? "incorrect"
                                                         : "undecided"));
    }
    out.push_back(std::move(eq));
  }
  return out;
}

std::vector<Equation> load_axioms(const std::string& path, const Grammar& g,
                                  const OracleConfig& oracle) {
  std::ifstream in(path);
  if (!in) throw EqvError("cannot open axiom file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_axioms(ss.str(), g, oracle);
}

// ---------------------------------------------------------------------------
// GenConfig

std::vector<int> GenConfig::effective_depth_caps() const {
  if (!depth_caps.empty()) return depth_caps;
  std::vector<int> caps(static_cast<size_t>(max_depth), 0);
  for (int d = 1; d <= max_depth; ++d) {
    double share;
    if (d == 1) share = 0.01;
    else if (d == max_depth) share = 0.18;
    else if (d == max_depth - 1) share = 0.72;
    else share = 0.30;
    caps[d - 1] = std::max(40, static_cast<int>(share * symbolic_total));
  }
  return caps;
}

// ---------------------------------------------------------------------------
// Mutations

namespace {

struct EqPos {
  int side;  // 0 = lhs, 1 = rhs
  Path path;
};

const Expr& side_of(const Equation& eq, int side) {
  return side == 0 ? eq.lhs : eq.rhs;
}

std::vector<EqPos> equation_positions(const Equation& eq) {
  std::vector<EqPos> out;
  for (int side = 0; side < 2; ++side)
    for (Path& p : all_positions(side_of(eq, side)))
      out.push_back({side, std::move(p)});
  return out;
}

Expr random_terminal_expr(Rng& rng, const Grammar& g) {
  auto ts = g.terminals();
  return Expr::make(ts[rng.below(ts.size())]);
}

CandidatePair with_side(const Equation& src, int side, Expr replaced) {
  CandidatePair out{src.lhs, src.rhs};
  (side == 0 ? out.lhs : out.rhs) = std::move(replaced);
  return out;
}

}  // namespace

std::optional<CandidatePair> apply_mutation(const Equation& src,
                                            MutationAction action, Rng& rng,
                                            const Grammar& g) {
  switch (action) {
    case MutationAction::kShrinkNode: {
      std::vector<EqPos> internal;
      for (EqPos& p : equation_positions(src))
        if (!subtree_at(side_of(src, p.side), p.path).is_terminal())
          internal.push_back(std::move(p));
      if (internal.empty()) return std::nullopt;
      const EqPos& pos = internal[rng.below(internal.size())];
      const Expr& e = side_of(src, pos.side);
      Expr sub = subtree_at(e, pos.path);
      Expr child = sub.children()[rng.below(sub.children().size())];
      return with_side(src, pos.side, substitute(e, pos.path, child));
    }
    case MutationAction::kReplaceNode: {
      auto positions = equation_positions(src);
      const EqPos& pos = positions[rng.below(positions.size())];
      const Expr& e = side_of(src, pos.side);
      Expr sub = subtree_at(e, pos.path);
      Expr repl;
      if (sub.is_terminal()) {
        std::vector<Terminal> pool;
        for (Terminal& t : g.terminals())
          if (t != sub.terminal()) pool.push_back(std::move(t));
        if (pool.empty()) return std::nullopt;
        repl = Expr::make(pool[rng.below(pool.size())]);
      } else {
        std::vector<Fn> pool;
        for (Fn f : g.functions)
          if (f != sub.fn() && fn_info(f).arity == fn_info(sub.fn()).arity)
            pool.push_back(f);
        if (pool.empty()) return std::nullopt;
        std::vector<Expr> kids(sub.children().begin(), sub.children().end());
        repl = Expr::make(pool[rng.below(pool.size())], std::move(kids));
      }
      return with_side(src, pos.side, substitute(e, pos.path, repl));
    }
    case MutationAction::kGrowNode: {
      auto positions = equation_positions(src);
      const EqPos& pos = positions[rng.below(positions.size())];
      const Expr& e = side_of(src, pos.side);
      Expr sub = subtree_at(e, pos.path);
      Fn f = g.functions[rng.below(g.functions.size())];
      Expr grown = fn_info(f).arity == 1
                       ? Expr::make(f, {sub})
                       : Expr::make(f, {sub, random_terminal_expr(rng, g)});
      return with_side(src, pos.side, substitute(e, pos.path, grown));
    }
    case MutationAction::kGrowSides: {
      auto binary = g.binary();
      if (binary.empty()) return std::nullopt;
      Fn f = binary[rng.below(binary.size())];
      Expr t = random_terminal_expr(rng, g);
      CandidatePair out;
      out.lhs = Expr::make(f, {src.lhs, t});
      out.rhs = Expr::make(f, {src.rhs, t});
      return out;
    }
  }
  return std::nullopt;
}

std::optional<CandidatePair> mutate_equation(const Equation& src, Rng& rng,
                                             const Grammar& g) {
  auto action = static_cast<MutationAction>(rng.below(4));
  return apply_mutation(src, action, rng, g);
}

// ---------------------------------------------------------------------------
// Rewrite table

namespace {
// Bucket indexes: one per function, then terminal-rooted patterns, then
// bare-variable patterns (which match anywhere).
constexpr int kTerminalBucket = kFnCount;
constexpr int kWildcardBucket = kFnCount + 1;

int bucket_of_pattern(const Expr& pattern) {
  if (!pattern.is_terminal()) return static_cast<int>(pattern.fn());
  return pattern.terminal().kind == Terminal::Kind::kVariable ? kWildcardBucket
                                                              : kTerminalBucket;
}

void collect_pattern_vars(const Expr& e, std::vector<std::string>& out) {
  if (e.is_terminal()) {
    if (e.terminal().kind == Terminal::Kind::kVariable &&
        std::find(out.begin(), out.end(), e.terminal().var) == out.end())
      out.push_back(e.terminal().var);
    return;
  }
  for (const Expr& c : e.children()) collect_pattern_vars(c, out);
}
}  // namespace

void RewriteTable::add_rule(Expr pattern, Expr value) {
  rules_.push_back({std::move(pattern), std::move(value)});
}

void RewriteTable::add_equation(const Equation& eq) {
  add_rule(eq.lhs, eq.rhs);
  add_rule(eq.rhs, eq.lhs);
}

std::optional<CandidatePair> RewriteTable::rewrite_once(const Equation& src,
                                                        Rng& rng,
                                                        const Grammar& g) const {
  if (rules_.empty()) return std::nullopt;
  // Lazily maintained root index, rebuilt when rules were added since.
  static thread_local std::vector<std::vector<int>> index;
  static thread_local const RewriteTable* indexed_for = nullptr;
  static thread_local size_t indexed_count = 0;
  if (indexed_for != this || indexed_count != rules_.size()) {
    index.assign(kFnCount + 2, {});
    for (size_t i = 0; i < rules_.size(); ++i)
      index[bucket_of_pattern(rules_[i].pattern)].push_back(static_cast<int>(i));
    indexed_for = this;
    indexed_count = rules_.size();
  }

  for (int attempt = 0; attempt < 8; ++attempt) {
    int side = static_cast<int>(rng.below(2));
    const Expr& e = side == 0 ? src.lhs : src.rhs;
    auto positions = all_positions(e);
    const Path& p = positions[rng.below(positions.size())];
    Expr sub = subtree_at(e, p);

    std::vector<std::pair<int, Binding>> hits;
    auto scan = [&](const std::vector<int>& bucket) {
      for (int ri : bucket)
        if (auto b = match_pattern(rules_[ri].pattern, sub))
          hits.emplace_back(ri, std::move(*b));
    };
    scan(index[sub.is_terminal() ? kTerminalBucket
                                 : static_cast<int>(sub.fn())]);
    scan(index[kWildcardBucket]);
    if (hits.empty()) continue;

    auto& [ri, binding] = hits[rng.below(hits.size())];
    // Wildcards that appear only on the value side get random terminals.
    std::vector<std::string> value_vars;
    collect_pattern_vars(rules_[ri].value, value_vars);
    for (const std::string& v : value_vars)
      if (!binding.count(v)) binding.emplace(v, random_terminal_expr(rng, g));
    Expr repl = instantiate(rules_[ri].value, binding);

    CandidatePair out{src.lhs, src.rhs};
    (side == 0 ? out.lhs : out.rhs) = substitute(e, p, repl);
    return out;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Symbolic generation

Dataset generate_symbolic(const std::vector<Equation>& axioms,
                          const GenConfig& cfg, const Grammar& g) {
  if (axioms.empty()) throw EqvError("symbolic generation needs axioms");
  OracleConfig oracle = cfg.oracle;
  oracle.seed = cfg.seed;
  auto caps = cfg.effective_depth_caps();
  const int target = cfg.symbolic_total;
  const int correct_cap =
      static_cast<int>(std::floor(cfg.correct_frac_hi * target));
  const int incorrect_cap =
      static_cast<int>(std::floor((1.0 - cfg.correct_frac_lo) * target));

  Dataset ds;
  std::unordered_set<std::string> seen;
  std::vector<Equation> stored;
  std::vector<int> correct_idx;
  std::vector<int> depth_counts(static_cast<size_t>(cfg.max_depth) + 1, 0);
  int correct_count = 0;

  RewriteTable table;
  Rng rng(mix_seed(cfg.seed, 1));

  for (const Equation& ax : axioms) {
    table.add_equation(ax);
    int d = ax.depth();
    if (static_cast<int>(ds.records.size()) >= target) continue;
    if (d > cfg.max_depth || depth_counts[d] >= caps[d - 1]) continue;
    if (correct_count >= correct_cap) continue;
    if (!seen.insert(ax.key()).second) continue;
    ds.records.push_back({ax, Split::kTrain, Provenance::kAxiom});
    stored.push_back(ax);
    correct_idx.push_back(static_cast<int>(stored.size()) - 1);
    ++depth_counts[d];
    ++correct_count;
  }

  int stall = 0;
  const long max_attempts = 400L * target + 100000;
  long attempts = 0;
  while (static_cast<int>(ds.records.size()) < target &&
         attempts < max_attempts) {
    ++attempts;
    int made = static_cast<int>(ds.records.size());
    double frac = made == 0 ? 0.5 : static_cast<double>(correct_count) / made;
    bool want_correct = frac < 0.5;

    std::optional<CandidatePair> cand;
    Provenance prov = Provenance::kMutation;
    if (stall >= cfg.stall_limit) {
      // Too many dead draws in a row: grow a fresh axiom to open new space.
      const Equation& src = axioms[rng.below(axioms.size())];
      cand = apply_mutation(src, MutationAction::kGrowSides, rng, g);
    } else if (!correct_idx.empty() &&
               rng.bernoulli(want_correct ? 0.7 : 0.25)) {
      const Equation& src = stored[correct_idx[rng.below(correct_idx.size())]];
      cand = table.rewrite_once(src, rng, g);
      prov = Provenance::kRewrite;
    } else {
      // Local changes start from a verified identity, so every Incorrect
      // row sits exactly one edit away from the correct manifold.
      const Equation& src =
          correct_idx.empty()
              ? axioms[rng.below(axioms.size())]
              : stored[correct_idx[rng.below(correct_idx.size())]];
      cand = mutate_equation(src, rng, g);
    }
    if (!cand) {
      ++stall;
      continue;
    }

    int d = std::max(cand->lhs.depth(), cand->rhs.depth());
    if (d > cfg.max_depth || depth_counts[d] >= caps[d - 1]) {
      ++stall;
      continue;
    }
    Equation probe;
    probe.lhs = cand->lhs;
    probe.rhs = cand->rhs;
    probe.kind = EqKind::kSymbolic;
    std::string key = print_equation(probe);
    if (seen.count(key)) {
      ++stall;
      continue;
    }
    OracleResult res = verify_identity(probe, oracle);
    if (res.verdict == Verdict::kUndecided) {
      ++stall;
      continue;
    }
    bool correct = res.verdict == Verdict::kCorrect;
    // A rewrite of a verified identity should stay an identity; the rare
    // sampling disagreement is dropped rather than mislabeled.
    if (prov == Provenance::kRewrite && !correct) {
      ++stall;
      continue;
    }
    if (correct && correct_count >= correct_cap) {
      ++stall;
      continue;
    }
    if (!correct && made - correct_count >= incorrect_cap) {
      ++stall;
      continue;
    }

    Equation eq = make_equation(cand->lhs, cand->rhs,
                                correct ? Label::kCorrect : Label::kIncorrect,
                                EqKind::kSymbolic);
    seen.insert(std::move(key));
    ds.records.push_back({eq, Split::kTrain, prov});
    stored.push_back(eq);
    if (correct) {
      correct_idx.push_back(static_cast<int>(stored.size()) - 1);
      ++correct_count;
      if (d <= cfg.rewrite_max_depth) table.add_equation(eq);
    }
    ++depth_counts[d];
    stall = 0;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Function-evaluation generation

namespace {

// Seeded fraction of the precision-2 grid used as function inputs; the rest
// of the grid is never seen in training data, so trained models can be
// probed on genuinely new numbers.
std::vector<int> grid_subset(double fraction, uint64_t seed) {
  std::vector<int> cents = precision2_grid_cents();
  Rng rng(mix_seed(seed, 0x681d));
  for (size_t i = cents.size(); i > 1; --i)
    std::swap(cents[i - 1], cents[rng.below(i)]);
  auto keep = static_cast<size_t>(
      std::lround(fraction * static_cast<double>(cents.size())));
  keep = std::clamp<size_t>(keep, 1, cents.size());
  cents.resize(keep);
  return cents;
}

Expr pool_number_leaf(Rng& rng, const std::vector<int>& pool) {
  return Expr::make(Terminal::number_from_cents(pool[rng.below(pool.size())]));
}

// Exact-depth application tree over numeric leaves: depth 2 is a single
// input-output example of one function; depth 3 nests one more call.
Expr random_application(Rng& rng, int depth, const Grammar& g,
                        const std::vector<int>& pool) {
  if (depth <= 1) return pool_number_leaf(rng, pool);
  Fn f = g.functions[rng.below(g.functions.size())];
  Expr a = random_application(rng, depth - 1, g, pool);
  if (fn_info(f).arity == 1) return Expr::make(f, {a});
  Expr b = random_application(rng, rng.uniform_int(1, depth - 1), g, pool);
  if (rng.bernoulli(0.5)) std::swap(a, b);
  return Expr::make(f, {a, b});
}

// Incorrect rows move the stated result far enough that the gap is
// unambiguous (well past the training margin) yet stays modest, so a
// truthfully decoding model keeps a small mean squared disagreement.
int perturb_cents(int cents, Rng& rng) {
  int delta = rng.uniform_int(25, 60);
  bool plus = rng.bernoulli(0.5);
  if (cents + delta > 314) plus = false;
  if (cents - delta < -314) plus = true;
  return cents + (plus ? delta : -delta);
}

}  // namespace

Dataset generate_funceval(const GenConfig& cfg, const Grammar& g) {
  Dataset ds;
  if (cfg.funceval_total <= 0) return ds;
  Rng rng(mix_seed(cfg.seed, 2));
  std::vector<int> pool = grid_subset(cfg.number_grid_fraction, cfg.seed);
  std::unordered_set<std::string> seen;
  int correct = 0, incorrect = 0;
  const long max_attempts = 2000L * cfg.funceval_total + 100000;
  long attempts = 0;
  while (static_cast<int>(ds.records.size()) < cfg.funceval_total &&
         ++attempts < max_attempts) {
    double shape = rng.uniform(0.0, 1.0);
    Expr lhs;
    if (shape < 0.15) {
      lhs = decimal_tree(pool[rng.below(pool.size())]);
    } else if (shape < 0.60) {
      lhs = random_application(rng, 2, g, pool);
    } else {
      lhs = random_application(rng, 3, g, pool);
    }
    auto v = eval_expr(lhs, {});
    if (!v || std::abs(*v) > 3.144) continue;  // keep the target on the grid
    // Every intermediate result must sit inside the representable number
    // range too, or the row asks the decoder for values it can never carry.
    bool in_range = true;
    for (const Path& p : all_positions(lhs)) {
      Expr sub = subtree_at(lhs, p);
      if (sub.is_terminal()) continue;
      auto sv = eval_expr(sub, {});
      in_range = in_range && sv && std::abs(*sv) <= 3.144;
    }
    if (!in_range) continue;
    int cents = round_to_cents(*v);
    bool want_correct = correct <= incorrect;
    int rhs_cents = want_correct ? cents : perturb_cents(cents, rng);
    Equation eq = make_equation(
        lhs, Expr::make(Terminal::number_from_cents(rhs_cents)),
        want_correct ? Label::kCorrect : Label::kIncorrect, EqKind::kFuncEval);
    if (verify_func_eval(eq) != eq.label) continue;  // label sanity check
    if (!seen.insert(eq.key()).second) continue;
    ds.records.push_back({std::move(eq), Split::kTrain, Provenance::kFuncEval});
    ++(want_correct ? correct : incorrect);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Assembly and splits

void assign_splits(Dataset& ds, double test_fraction, uint64_t seed) {
  std::map<std::tuple<int, int, int>, std::vector<int>> strata;
  for (size_t i = 0; i < ds.records.size(); ++i) {
    const Equation& eq = ds.records[i].eq;
    strata[{static_cast<int>(eq.kind), static_cast<int>(eq.label), eq.depth()}]
        .push_back(static_cast<int>(i));
  }
  for (auto& [key, idx] : strata) {
    auto [kind, label, depth] = key;
    uint64_t salt = 0x5b1e7 + static_cast<uint64_t>(kind) * 1009 +
                    static_cast<uint64_t>(label) * 101 +
                    static_cast<uint64_t>(depth);
    Rng rng(mix_seed(seed, salt));
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.below(i)]);
    auto n_test = static_cast<size_t>(
        std::lround(test_fraction * static_cast<double>(idx.size())));
    for (size_t i = 0; i < idx.size(); ++i)
      ds.records[idx[i]].split = i < n_test ? Split::kTest : Split::kTrain;
  }
}

void hold_out_depth(Dataset& ds, int depth) {
  for (Record& r : ds.records) {
    if (r.eq.kind == EqKind::kSymbolic)
      r.split = r.eq.depth() == depth ? Split::kTest : Split::kTrain;
    else
      r.split = Split::kTrain;  // grounding data stays available
  }
}

Dataset generate_dataset(const std::vector<Equation>& axioms,
                         const GenConfig& cfg, const Grammar& g) {
  Dataset ds = generate_symbolic(axioms, cfg, g);
  Dataset fe = generate_funceval(cfg, g);
  ds.records.insert(ds.records.end(),
                    std::make_move_iterator(fe.records.begin()),
                    std::make_move_iterator(fe.records.end()));
  assign_splits(ds, cfg.test_fraction, cfg.seed);
  return ds;
}

// ---------------------------------------------------------------------------
// Serialization

static const char kHeader[] = "lhs\trhs\tlabel\tkind\tdepth\tsplit\tprovenance";

std::string dataset_to_string(const Dataset& ds) {
  std::string out = kHeader;
  out += '\n';
  for (const Record& r : ds.records) {
    out += print_expr(r.eq.lhs);
    out += '\t';
    out += print_expr(r.eq.rhs);
    out += '\t';
    out += label_name(r.eq.label);
    out += '\t';
    out += kind_name(r.eq.kind);
    out += '\t';
    out += std::to_string(r.eq.depth());
    out += '\t';
    out += split_name(r.split);
    out += '\t';
    out += provenance_name(r.prov);
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  size_t start = 0;
  while (true) {
    size_t t = line.find('\t', start);
    if (t == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, t - start));
    start = t + 1;
  }
}

template <typename T>
T parse_enum(std::string_view tok, std::initializer_list<std::pair<std::string_view, T>> names,
             const char* what, size_t lineno) {
  for (const auto& [n, v] : names)
    if (tok == n) return v;
  throw EqvError("line " + std::to_string(lineno) + ": bad " + what + " '" +
                 std::string(tok) + "'");
}

}  // namespace

Dataset dataset_from_string(std::string_view text, const Grammar& g) {
  Dataset ds;
  size_t start = 0, lineno = 0;
  bool saw_header = false;
  while (start < text.size()) {
    size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++lineno;
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != kHeader)
        throw EqvError("dataset header mismatch on line 1");
      saw_header = true;
      continue;
    }
    auto f = split_tabs(line);
    if (f.size() != 7)
      throw EqvError("line " + std::to_string(lineno) + ": expected 7 fields, got " +
                     std::to_string(f.size()));
    Label label = parse_enum<Label>(
        f[2], {{"correct", Label::kCorrect}, {"incorrect", Label::kIncorrect}},
        "label", lineno);
    EqKind kind = parse_enum<EqKind>(
        f[3], {{"symbolic", EqKind::kSymbolic}, {"funceval", EqKind::kFuncEval}},
        "kind", lineno);
    Split split = parse_enum<Split>(
        f[5], {{"train", Split::kTrain}, {"test", Split::kTest}}, "split", lineno);
    Provenance prov = parse_enum<Provenance>(
        f[6],
        {{"axiom", Provenance::kAxiom},
         {"rewrite", Provenance::kRewrite},
         {"mutation", Provenance::kMutation},
         {"funceval", Provenance::kFuncEval}},
        "provenance", lineno);
    Equation eq;
    try {
      eq = make_equation(parse_expr(f[0], g), parse_expr(f[1], g), label, kind);
    } catch (const EqvError& e) {
      throw EqvError("line " + std::to_string(lineno) + ": " + e.what());
    }
    int depth = 0;
    auto [p, ec] = std::from_chars(f[4].data(), f[4].data() + f[4].size(), depth);
    if (ec != std::errc() || p != f[4].data() + f[4].size() || depth != eq.depth())
      throw EqvError("line " + std::to_string(lineno) +
                     ": depth field disagrees with the equation");
    ds.records.push_back({std::move(eq), split, prov});
  }
  if (!saw_header) throw EqvError("dataset is empty (missing header)");
  return ds;
}

void save_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EqvError("cannot write dataset file: " + path);
  std::string s = dataset_to_string(ds);
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw EqvError("failed writing dataset file: " + path);
}

Dataset load_dataset(const std::string& path, const Grammar& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EqvError("cannot open dataset file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return dataset_from_string(ss.str(), g);
}

Dataset filter_dataset(const Dataset& ds, Split split) {
  Dataset out;
  for (const Record& r : ds.records)
    if (r.split == split) out.records.push_back(r);
  return out;
}

Dataset filter_dataset(const Dataset& ds, EqKind kind) {
  Dataset out;
  for (const Record& r : ds.records)
    if (r.eq.kind == kind) out.records.push_back(r);
  return out;
}

}  // namespace eqv
