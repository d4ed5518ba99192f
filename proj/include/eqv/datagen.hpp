#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eqv/evalcore.hpp"
#include "eqv/expr.hpp"
#include "eqv/rng.hpp"

namespace eqv {

enum class Split : uint8_t { kTrain, kTest };
enum class Provenance : uint8_t { kAxiom, kRewrite, kMutation, kFuncEval };

std::string_view label_name(Label l);
std::string_view kind_name(EqKind k);
std::string_view split_name(Split s);
std::string_view provenance_name(Provenance p);

struct Record {
  Equation eq;
  Split split = Split::kTrain;
  Provenance prov = Provenance::kAxiom;
};

struct DatasetStats {
  int total = 0;
  int correct = 0;
  int symbolic = 0;
  int funceval = 0;
  int train = 0;
  int test = 0;
  std::array<int, 9> by_depth{};  // indexed by depth, 1..8 in practice

  double correct_fraction() const {
    return total == 0 ? 0.0 : static_cast<double>(correct) / total;
  }
};

struct Dataset {
  std::vector<Record> records;
  DatasetStats stats() const;
};

// ---------------------------------------------------------------------------
// Axioms: "lhs = rhs" per line, '#' comments, blank lines ignored. Every
// axiom must pass the oracle; a failure reports the offending line.

std::vector<Equation> parse_axioms(std::string_view text, const Grammar& g,
                                   const OracleConfig& oracle);
std::vector<Equation> load_axioms(const std::string& path, const Grammar& g,
                                  const OracleConfig& oracle);

// ---------------------------------------------------------------------------
// Generation config

struct GenConfig {
  int symbolic_total = 10000;
  int funceval_total = 2000;
  int max_depth = 4;
  // Per-depth acceptance caps for symbolic equations, index 0 = depth 1.
  // Empty means: derive from symbolic_total.
  std::vector<int> depth_caps;
  double correct_frac_lo = 0.45;
  double correct_frac_hi = 0.55;
  double test_fraction = 0.2;
  // Consecutive rejected candidates before generation falls back to growing
  // a fresh axiom; a generous multiple of this aborts generation entirely.
  int stall_limit = 50;
  // Verified-correct symbolic equations up to this depth join the rewrite
  // table as new rules.
  int rewrite_max_depth = 3;
  // Share of the precision-2 grid eligible as function-evaluation inputs
  // (seeded); the remainder stays unseen for generalization probes.
  double number_grid_fraction = 0.3;
  uint64_t seed = 0;
  OracleConfig oracle;  // oracle.seed is overridden with `seed`

  std::vector<int> effective_depth_caps() const;
};

// ---------------------------------------------------------------------------
// Mutations: structural edits that usually break an identity (and
// occasionally preserve it). The verdict always comes from the oracle.

enum class MutationAction : uint8_t {
  kShrinkNode,   // replace an internal node by one of its children
  kReplaceNode,  // swap a function for one of equal arity, or a terminal for another
  kGrowNode,     // wrap a subtree in a function, drawing a terminal second arg
  kGrowSides,    // apply one binary op with one shared terminal to both sides
};

struct CandidatePair {
  Expr lhs, rhs;
};

std::optional<CandidatePair> apply_mutation(const Equation& src,
                                            MutationAction action, Rng& rng,
                                            const Grammar& g);
// Uniformly random action.
std::optional<CandidatePair> mutate_equation(const Equation& src, Rng& rng,
                                             const Grammar& g);

// ---------------------------------------------------------------------------
// Rewrite table: oriented rules pattern -> value whose variables are
// wildcards. Applying a rule to a verified identity yields a new identity.

class RewriteTable {
 public:
  void add_rule(Expr pattern, Expr value);
  // Adds both orientations of an equation.
  void add_equation(const Equation& eq);
  size_t size() const { return rules_.size(); }

  // Picks a random node on a random side, matches all rules rooted there and
  // applies one; pattern variables missing from the value's binding are
  // filled with random terminals. A handful of node picks are attempted
  // before giving up.
  std::optional<CandidatePair> rewrite_once(const Equation& src, Rng& rng,
                                            const Grammar& g) const;

 private:
  struct Rule {
    Expr pattern, value;
  };
  std::vector<Rule> rules_;
};

// ---------------------------------------------------------------------------
// Generators. Outputs are deterministic functions of (axioms, config).

Dataset generate_symbolic(const std::vector<Equation>& axioms,
                          const GenConfig& cfg, const Grammar& g);
Dataset generate_funceval(const GenConfig& cfg, const Grammar& g);
// Symbolic + funceval with train/test splits assigned.
Dataset generate_dataset(const std::vector<Equation>& axioms,
                         const GenConfig& cfg, const Grammar& g);

// Stratified by (kind, label, depth); within each stratum the test picks are
// a seeded shuffle, so the assignment is stable under record reordering of
// other strata.
void assign_splits(Dataset& ds, double test_fraction, uint64_t seed);

// Depth-extrapolation split: every symbolic equation of exactly `depth`
// becomes test, everything else (including all function-evaluation rows)
// trains.
void hold_out_depth(Dataset& ds, int depth);

// ---------------------------------------------------------------------------
// Serialization: TSV with a fixed header; loading re-derives and checks the
// depth column. save/load round-trips byte-identically.

std::string dataset_to_string(const Dataset& ds);
Dataset dataset_from_string(std::string_view text, const Grammar& g);
void save_dataset(const std::string& path, const Dataset& ds);
Dataset load_dataset(const std::string& path, const Grammar& g);

// Subsets, preserving order.
Dataset filter_dataset(const Dataset& ds, Split split);
Dataset filter_dataset(const Dataset& ds, EqKind kind);

}  // namespace eqv
