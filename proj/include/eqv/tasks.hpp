#pragma once

#include <span>
#include <string>
#include <vector>

#include "eqv/training.hpp"

namespace eqv {

// ---------------------------------------------------------------------------
// Equation completion: blank a small subtree of a correct equation, score
// every candidate fill with a trained model, and measure ranking quality.

// A node inside an equation: which side, then child indices from that
// side's root. An empty path names the side's root itself.
struct BlankRef {
  int side = 0;  // 0 = lhs, 1 = rhs
  Path path;
};

struct CompletionInstance {
  Equation eq;        // the original, Correct-labeled equation
  BlankRef blank;     // a node whose subtree depth is 1 or 2
  Expr ground_truth;  // the subtree currently at the blank
  // Shared candidate pool index; pools live in the owning CompletionSet.
  double true_value = 0.0;  // numeric value of ground_truth (funceval only)

  Equation filled(const Expr& candidate) const;
};

struct CompletionSet {
  EqKind kind = EqKind::kSymbolic;
  std::vector<CompletionInstance> instances;
  std::vector<Expr> candidates;  // one pool shared by every instance
  int skipped = 0;  // Correct rows with no depth-1/2 node or unevaluable blank
};

// One instance per Correct test-split equation of `kind` (seeded subsample of
// `max_instances` when positive). The blank is drawn uniformly among nodes
// with subtree depth 1 or 2, from a per-equation stream. Symbolic candidates
// enumerate every expression of depth <= 2 over the grammar terminals;
// function-evaluation candidates are the precision-2 grid plus the named
// constants.
CompletionSet make_completion_instances(const Dataset& ds, EqKind kind,
                                        uint64_t seed, const Grammar& g,
                                        int max_instances = 0);

struct ScoredFill {
  int candidate = 0;  // index into CompletionSet::candidates
  double confidence = 0.0;
};

// Candidates in descending confidence: verification probability of the
// filled equation for symbolic instances, negative squared decoder
// disagreement for function evaluation. Ties break on the candidate's
// printed form, so the order is total and reproducible.
std::vector<ScoredFill> rank_candidates(Model& model, const CompletionSet& set,
                                        const CompletionInstance& inst);

// Fraction of instances with at least one oracle-verified-Correct fill among
// the top k, for k = 1..max_k. Symbolic sets only. Nondecreasing in k by
// construction; violations throw.
std::vector<double> top_k_accuracy_curve(
    const CompletionSet& set,
    const std::vector<std::vector<ScoredFill>>& rankings, int max_k,
    const OracleConfig& oracle);

// Mean over instances of the squared gap between the blank's true value and
// the closest of the top-k candidate values, for k = 1..max_k.
// Function-evaluation sets only. Nonincreasing in k; violations throw.
std::vector<double> top_k_min_mse_curve(
    const CompletionSet& set,
    const std::vector<std::vector<ScoredFill>>& rankings, int max_k);

// ---------------------------------------------------------------------------
// Experiments: train the requested model variants on a dataset and emit CSV
// reports plus a manifest recording every input digest.

struct ExperimentVariant {
  Arch arch = Arch::kTreeLstm;
  bool use_funceval = false;
};

struct ExperimentConfig {
  int dim = 50;
  TrainConfig train;
  std::vector<ExperimentVariant> variants;  // empty = all 8 combinations
  std::string out_dir = ".";
  int completion_top_k = 25;
  int completion_max_instances = 200;
  int extrapolation_depth = 4;
  OracleConfig oracle;  // judges completion fills
};

struct VariantOutcome {
  ExperimentVariant variant;
  Metrics sym_test;          // symbolic rows only
  double funceval_mse = 0.0;  // decoded-side MSE on funceval test rows
  std::string checkpoint;     // saved model path
};

struct CompletionCurve {
  ExperimentVariant variant;
  std::vector<double> accuracy;  // k = 1..K over symbolic instances
  std::vector<double> min_mse;   // k = 1..K over funceval instances
};

struct ExperimentReport {
  std::vector<VariantOutcome> outcomes;
  std::vector<CompletionCurve> curves;  // completion only
  std::vector<std::string> files;       // everything written, manifest last
};

// 80/20-split verification: trains every variant, writes generalization.csv
// (rows = variants; columns = symbolic accuracy, funceval MSE, per-depth
// accuracy) and checkpoints.
ExperimentReport run_generalization(const Dataset& ds,
                                    const ExperimentConfig& cfg,
                                    const Grammar& g);

// Reassigns splits so symbolic equations of cfg.extrapolation_depth are the
// test set, then proceeds as run_generalization; writes extrapolation.csv.
ExperimentReport run_extrapolation(Dataset ds, const ExperimentConfig& cfg,
                                   const Grammar& g);

// Trains every variant, builds completion instances from the test split, and
// writes completion_accuracy.csv / completion_min_mse.csv top-k curves.
ExperimentReport run_completion(const Dataset& ds, const ExperimentConfig& cfg,
                                const Grammar& g);

// ---------------------------------------------------------------------------
// Gradient property suite: random small models (every architecture, dim <= 8)
// built on random equations, checking analytic gradients of both heads
// against central finite differences.

struct GradSuiteResult {
  double max_rel_err = 0.0;
  long coords_checked = 0;
  int configs = 0;
};

GradSuiteResult run_gradient_suite(int configs, uint64_t seed,
                                   const Grammar& g);

}  // namespace eqv
