#include "eqv/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <utility>

namespace eqv {
namespace {

std::string fmt_num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string fmt_hex(uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Nodes eligible for blanking: subtree depth 1 or 2, preorder over lhs then
// rhs so the uniform pick is reproducible.
std::vector<BlankRef> blankable_nodes(const Equation& eq) {
  std::vector<BlankRef> out;
  for (int side = 0; side < 2; ++side) {
    const Expr& root = side == 0 ? eq.lhs : eq.rhs;
    for (Path& p : all_positions(root)) {
      int d = subtree_at(root, p).depth();
      if (d == 1 || d == 2) out.push_back({side, std::move(p)});
    }
  }
  return out;
}

std::vector<Expr> funceval_candidates(const Grammar& g) {
  std::vector<Expr> out;
  std::vector<std::string> seen;
  auto push = [&](Terminal t) {
    Expr e = Expr::make(std::move(t));
    std::string key = print_expr(e);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) return;
    seen.push_back(std::move(key));
    out.push_back(std::move(e));
  };
  for (int cents : precision2_grid_cents()) push(Terminal::number_from_cents(cents));
  for (int id : g.constants) push(Terminal::constant(id));
  return out;
}

}  // namespace

Equation CompletionInstance::filled(const Expr& candidate) const {
  Expr lhs = eq.lhs, rhs = eq.rhs;
  (blank.side == 0 ? lhs : rhs) =
      substitute(blank.side == 0 ? eq.lhs : eq.rhs, blank.path, candidate);
  return make_equation(std::move(lhs), std::move(rhs), eq.label, eq.kind);
}

CompletionSet make_completion_instances(const Dataset& ds, EqKind kind,
                                        uint64_t seed, const Grammar& g,
                                        int max_instances) {
  CompletionSet set;
  set.kind = kind;
  if (kind == EqKind::kSymbolic) {
    std::vector<Terminal> pool = g.terminals();
    set.candidates = enumerate_exprs(2, pool, g);
  } else {
    set.candidates = funceval_candidates(g);
  }

  std::vector<const Equation*> eligible;
  for (const Record& r : ds.records)
    if (r.split == Split::kTest && r.eq.kind == kind &&
        r.eq.label == Label::kCorrect)
      eligible.push_back(&r.eq);
  if (max_instances > 0 && std::cmp_greater(eligible.size(), max_instances)) {
    Rng pick(mix_seed(seed, 0xc0317));
    for (size_t i = eligible.size(); i > 1; --i)
      std::swap(eligible[i - 1], eligible[pick.below(i)]);
    eligible.resize(max_instances);
  }

  for (const Equation* eq : eligible) {
    std::vector<BlankRef> nodes = blankable_nodes(*eq);
    if (kind == EqKind::kFuncEval) {
      std::erase_if(nodes, [&](const BlankRef& b) {
        const Expr& root = b.side == 0 ? eq->lhs : eq->rhs;
        return !eval_expr(subtree_at(root, b.path), {}).has_value();
      });
    }
    if (nodes.empty()) {
      ++set.skipped;
      continue;
    }
    // Independent of instance order: the stream is keyed by the equation.
    Rng rng(mix_seed(seed, fnv1a(eq->key())));
    CompletionInstance inst;
    inst.eq = *eq;
    inst.blank = nodes[rng.below(nodes.size())];
    const Expr& root = inst.blank.side == 0 ? eq->lhs : eq->rhs;
    inst.ground_truth = subtree_at(root, inst.blank.path);
    if (kind == EqKind::kFuncEval)
      inst.true_value = *eval_expr(inst.ground_truth, {});
    set.instances.push_back(std::move(inst));
  }
  return set;
}

std::vector<ScoredFill> rank_candidates(Model& model, const CompletionSet& set,
                                        const CompletionInstance& inst) {
  std::vector<ScoredFill> out;
  out.reserve(set.candidates.size());
  for (size_t i = 0; i < set.candidates.size(); ++i) {
    Equation filled = inst.filled(set.candidates[i]);
    double conf = set.kind == EqKind::kSymbolic
                      ? model.predict_prob(filled)
                      : -model.predict_sq_err(filled);
    out.push_back({static_cast<int>(i), conf});
  }
  std::vector<std::string> prints(set.candidates.size());
  for (size_t i = 0; i < prints.size(); ++i)
    prints[i] = print_expr(set.candidates[i]);
  std::sort(out.begin(), out.end(), [&](const ScoredFill& a, const ScoredFill& b) {
    if (a.confidence != b.confidence) return a.confidence > b.confidence;
    return prints[a.candidate] < prints[b.candidate];
  });
  return out;
}

std::vector<double> top_k_accuracy_curve(
    const CompletionSet& set,
    const std::vector<std::vector<ScoredFill>>& rankings, int max_k,
    const OracleConfig& oracle) {
  if (set.kind != EqKind::kSymbolic)
    throw EqvError("top-k accuracy is defined for symbolic completion");
  if (rankings.size() != set.instances.size())
    throw EqvError("rankings do not match instances");

  // The oracle is the expensive part; fills repeat across instances.
  std::unordered_map<std::string, bool> verdicts;
  auto is_correct = [&](const Equation& eq) {
    auto [it, fresh] = verdicts.try_emplace(eq.key(), false);
    if (fresh)
      it->second = verify_identity(eq, oracle).verdict == Verdict::kCorrect;
    return it->second;
  };

  std::vector<int> first_hit(set.instances.size(), max_k + 1);
  for (size_t i = 0; i < set.instances.size(); ++i) {
    const auto& ranked = rankings[i];
    int limit = std::min<int>(max_k, static_cast<int>(ranked.size()));
    for (int k = 0; k < limit; ++k) {
      Equation filled =
          set.instances[i].filled(set.candidates[ranked[k].candidate]);
      if (is_correct(filled)) {
        first_hit[i] = k + 1;
        break;
      }
    }
  }

  std::vector<double> curve(max_k);
  for (int k = 1; k <= max_k; ++k) {
    int hits = 0;
    for (int h : first_hit) hits += h <= k;
    curve[k - 1] = set.instances.empty()
                       ? 0.0
                       : static_cast<double>(hits) / set.instances.size();
  }
  for (int k = 1; k < max_k; ++k)
    if (curve[k] < curve[k - 1])
      throw EqvError("top-k accuracy decreased with k");
  return curve;
}

std::vector<double> top_k_min_mse_curve(
    const CompletionSet& set,
    const std::vector<std::vector<ScoredFill>>& rankings, int max_k) {
  if (set.kind != EqKind::kFuncEval)
    throw EqvError("top-k min-MSE is defined for function-evaluation completion");
  if (rankings.size() != set.instances.size())
    throw EqvError("rankings do not match instances");

  std::vector<double> values(set.candidates.size());
  for (size_t i = 0; i < values.size(); ++i) {
    auto v = eval_expr(set.candidates[i], {});
    values[i] = v ? *v : std::numeric_limits<double>::infinity();
  }

  std::vector<double> curve(max_k, 0.0);
  for (size_t i = 0; i < set.instances.size(); ++i) {
    const auto& ranked = rankings[i];
    double best = std::numeric_limits<double>::infinity();
    for (int k = 0; k < max_k; ++k) {
      if (std::cmp_less(k, ranked.size())) {
        double gap = values[ranked[k].candidate] - set.instances[i].true_value;
        best = std::min(best, gap * gap);
      }
      curve[k] += best;
    }
  }
  for (double& c : curve)
    c = set.instances.empty() ? 0.0 : c / set.instances.size();
  for (int k = 1; k < max_k; ++k)
    if (curve[k] > curve[k - 1] + 1e-12)
      throw EqvError("top-k min-MSE increased with k");
  return curve;
}

// ---------------------------------------------------------------------------
// Experiments

namespace {

std::string variant_name(const ExperimentVariant& v) {
  std::string s{arch_name(v.arch)};
  if (v.use_funceval) s += "+data";
  return s;
}

std::vector<ExperimentVariant> effective_variants(const ExperimentConfig& cfg) {
  if (!cfg.variants.empty()) return cfg.variants;
  // The report set: every architecture alone, plus grounded variants of the
  // tree models (chains cannot decode a side embedding any better, but the
  // comparison of interest is tree vs tree).
  return {{Arch::kRnn, false},      {Arch::kLstm, false},
          {Arch::kTreeNn, false},   {Arch::kTreeLstm, false},
          {Arch::kTreeNn, true},    {Arch::kTreeLstm, true}};
}

void write_file(const std::string& path, const std::string& content,
                std::vector<std::string>& files) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EqvError("cannot write " + path);
  out << content;
  files.push_back(path);
}

uint64_t file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EqvError("cannot read " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return fnv1a(bytes);
}

struct TrainedVariant {
  VariantOutcome outcome;
  Model model;
};

TrainedVariant train_variant(const ExperimentVariant& v, const Dataset& ds,
                             const ExperimentConfig& cfg, const Grammar& g,
                             std::vector<std::string>& files) {
  ModelConfig mcfg{v.arch, cfg.dim, cfg.train.seed};
  TrainConfig tcfg = cfg.train;
  tcfg.use_funceval = v.use_funceval;
  TrainResult res = train_model(mcfg, tcfg, ds, g);

  VariantOutcome out;
  out.variant = v;
  Dataset sym = filter_dataset(ds, EqKind::kSymbolic);
  out.sym_test = evaluate_model(res.model, sym, Split::kTest, tcfg.epochs);
  out.funceval_mse = std::numeric_limits<double>::quiet_NaN();
  if (v.use_funceval)
    out.funceval_mse =
        evaluate_model(res.model, ds, Split::kTest, tcfg.epochs).mse;

  out.checkpoint = cfg.out_dir + "/" + variant_name(v) + ".ckpt";
  res.model.save(out.checkpoint);
  files.push_back(out.checkpoint);
  return {std::move(out), std::move(res.model)};
}

std::string outcome_csv(const std::vector<VariantOutcome>& outcomes) {
  std::string s = "arch,use_funceval,sym_accuracy,funceval_mse,depth1,depth2,depth3,depth4\n";
  for (const VariantOutcome& o : outcomes) {
    s += std::string(arch_name(o.variant.arch)) + "," +
         (o.variant.use_funceval ? "true" : "false") + "," +
         fmt_num(o.sym_test.accuracy) + "," + fmt_num(o.funceval_mse);
    for (double d : o.sym_test.depth_acc) s += "," + fmt_num(d);
    s += "\n";
  }
  return s;
}

std::string manifest_text(const std::string& experiment, const Dataset& ds,
                          const ExperimentConfig& cfg,
                          const std::vector<VariantOutcome>& outcomes,
                          const std::vector<std::pair<std::string, std::string>>& extra) {
  std::string s;
  s += "experiment " + experiment + "\n";
  s += "dataset_digest " + fmt_hex(fnv1a(dataset_to_string(ds))) + "\n";
  s += "dim " + std::to_string(cfg.dim) + "\n";
  s += "epochs " + std::to_string(cfg.train.epochs) + "\n";
  s += "seed " + std::to_string(cfg.train.seed) + "\n";
  s += "traincfg_digest " + fmt_hex(traincfg_digest(cfg.train)) + "\n";
  for (const auto& [k, v] : extra) s += k + " " + v + "\n";
  for (const VariantOutcome& o : outcomes)
    s += "checkpoint " + variant_name(o.variant) + " " +
         fmt_hex(file_digest(o.checkpoint)) + "\n";
  return s;
}

ExperimentReport run_table_experiment(const std::string& name,
                                      const Dataset& ds,
                                      const ExperimentConfig& cfg,
                                      const Grammar& g,
                                      std::vector<std::pair<std::string, std::string>> extra) {
  std::filesystem::create_directories(cfg.out_dir);
  ExperimentReport rep;
  for (const ExperimentVariant& v : effective_variants(cfg))
    rep.outcomes.push_back(
        train_variant(v, ds, cfg, g, rep.files).outcome);
  write_file(cfg.out_dir + "/" + name + ".csv", outcome_csv(rep.outcomes),
             rep.files);
  write_file(cfg.out_dir + "/" + name + "_manifest.txt",
             manifest_text(name, ds, cfg, rep.outcomes, std::move(extra)),
             rep.files);
  return rep;
}

}  // namespace

ExperimentReport run_generalization(const Dataset& ds,
                                    const ExperimentConfig& cfg,
                                    const Grammar& g) {
  return run_table_experiment("generalization", ds, cfg, g, {});
}

ExperimentReport run_extrapolation(Dataset ds, const ExperimentConfig& cfg,
                                   const Grammar& g) {
  hold_out_depth(ds, cfg.extrapolation_depth);
  return run_table_experiment(
      "extrapolation", ds, cfg, g,
      {{"test_depth", std::to_string(cfg.extrapolation_depth)}});
}

ExperimentReport run_completion(const Dataset& ds, const ExperimentConfig& cfg,
                                const Grammar& g) {
  std::filesystem::create_directories(cfg.out_dir);
  ExperimentReport rep;

  CompletionSet sym = make_completion_instances(
      ds, EqKind::kSymbolic, cfg.train.seed, g, cfg.completion_max_instances);
  CompletionSet fe = make_completion_instances(
      ds, EqKind::kFuncEval, cfg.train.seed, g, cfg.completion_max_instances);

  std::string acc_csv = "arch,use_funceval,k,accuracy\n";
  std::string mse_csv = "arch,use_funceval,k,min_mse\n";
  for (const ExperimentVariant& v : effective_variants(cfg)) {
    TrainedVariant tv = train_variant(v, ds, cfg, g, rep.files);
    CompletionCurve curve;
    curve.variant = v;

    std::vector<std::vector<ScoredFill>> rankings;
    rankings.reserve(sym.instances.size());
    for (const CompletionInstance& inst : sym.instances)
      rankings.push_back(rank_candidates(tv.model, sym, inst));
    curve.accuracy =
        top_k_accuracy_curve(sym, rankings, cfg.completion_top_k, cfg.oracle);
    for (int k = 1; k <= cfg.completion_top_k; ++k)
      acc_csv += std::string(arch_name(v.arch)) + "," +
                 (v.use_funceval ? "true" : "false") + "," +
                 std::to_string(k) + "," + fmt_num(curve.accuracy[k - 1]) + "\n";

    if (v.use_funceval) {
      rankings.clear();
      for (const CompletionInstance& inst : fe.instances)
        rankings.push_back(rank_candidates(tv.model, fe, inst));
      curve.min_mse = top_k_min_mse_curve(fe, rankings, cfg.completion_top_k);
      for (int k = 1; k <= cfg.completion_top_k; ++k)
        mse_csv += std::string(arch_name(v.arch)) + "," +
                   (v.use_funceval ? "true" : "false") + "," +
                   std::to_string(k) + "," + fmt_num(curve.min_mse[k - 1]) + "\n";
    }
    rep.outcomes.push_back(std::move(tv.outcome));
    rep.curves.push_back(std::move(curve));
  }

  write_file(cfg.out_dir + "/completion_accuracy.csv", acc_csv, rep.files);
  write_file(cfg.out_dir + "/completion_min_mse.csv", mse_csv, rep.files);
  write_file(cfg.out_dir + "/completion_manifest.txt",
             manifest_text("completion", ds, cfg, rep.outcomes,
                           {{"symbolic_instances", std::to_string(sym.instances.size())},
                            {"symbolic_skipped", std::to_string(sym.skipped)},
                            {"funceval_instances", std::to_string(fe.instances.size())},
                            {"funceval_skipped", std::to_string(fe.skipped)},
                            {"candidates_symbolic", std::to_string(sym.candidates.size())},
                            {"candidates_funceval", std::to_string(fe.candidates.size())}}),
             rep.files);
  return rep;
}

// ---------------------------------------------------------------------------
// Gradient property suite

namespace {

Expr random_small_expr(Rng& rng, int depth, const Grammar& g, bool numbers) {
  if (depth <= 1) {
    if (numbers && rng.bernoulli(0.5))
      return Expr::make(Terminal::number_from_cents(rng.uniform_int(-314, 314)));
    std::vector<Terminal> pool = g.terminals();
    if (numbers) {  // ground expressions cannot carry variables
      std::erase_if(pool, [](const Terminal& t) {
        return t.kind == Terminal::Kind::kVariable;
      });
    }
    return Expr::make(pool[rng.below(pool.size())]);
  }
  if (rng.bernoulli(0.25)) return random_small_expr(rng, 1, g, numbers);
  std::vector<Fn> un = g.unary(), bin = g.binary();
  if (rng.bernoulli(0.5)) {
    Fn f = un[rng.below(un.size())];
    return Expr::make(f, {random_small_expr(rng, depth - 1, g, numbers)});
  }
  Fn f = bin[rng.below(bin.size())];
  return Expr::make(f, {random_small_expr(rng, depth - 1, g, numbers),
                        random_small_expr(rng, rng.uniform_int(1, depth - 1),
                                          g, numbers)});
}

}  // namespace

GradSuiteResult run_gradient_suite(int configs, uint64_t seed,
                                   const Grammar& g) {
  constexpr Arch kArchs[] = {Arch::kRnn, Arch::kLstm, Arch::kTreeNn,
                             Arch::kTreeLstm};
  GradSuiteResult out;
  for (int i = 0; i < configs; ++i) {
    Rng rng(mix_seed(seed, 0x6ad0 + static_cast<uint64_t>(i)));
    ModelConfig mcfg;
    mcfg.arch = kArchs[i % 4];
    mcfg.dim = 2 + static_cast<int>(rng.below(7));  // 2..8
    mcfg.seed = rng.next();
    Model model(mcfg, g);

    bool funceval_head = i % 2 == 1;
    int depth = 2 + static_cast<int>(rng.below(2));
    Equation eq = make_equation(
        random_small_expr(rng, depth, g, funceval_head),
        random_small_expr(rng, rng.uniform_int(1, depth), g, funceval_head),
        rng.bernoulli(0.5) ? Label::kCorrect : Label::kIncorrect,
        funceval_head ? EqKind::kFuncEval : EqKind::kSymbolic);

    double label = rng.bernoulli(0.5) ? 1.0 : 0.0;
    double target = rng.uniform(-2.0, 2.0);
    double margin = 0.05;
    auto build = [&](ad::Tape& t) -> ad::Value {
      if (!funceval_head)
        return t.bce_logit(model.verify_logit(t, eq, 0.0, nullptr), label);
      auto o = model.funceval_outputs(t, eq, 0.0, nullptr);
      // Sum of both label losses so every head path joins one graph.
      ad::Value anchor = t.mse(o.dec_rhs, t.scalar(target));
      ad::Value hinge =
          t.relu_(t.add(t.scalar(margin), t.scale(o.sq_err, -1.0)));
      return t.add(t.add(o.sq_err, anchor), hinge);
    };
    auto params = model.params();
    auto res = ad::grad_check(params, build, 2, rng.next());
    out.max_rel_err = std::max(out.max_rel_err, res.max_rel_err);
    out.coords_checked += res.checked;
    ++out.configs;
  }
  return out;
}

}  // namespace eqv
