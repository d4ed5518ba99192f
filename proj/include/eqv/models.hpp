#pragma once

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eqv/autodiff.hpp"
#include "eqv/expr.hpp"

namespace eqv {

enum class Arch : uint8_t { kRnn, kLstm, kTreeNn, kTreeLstm };

std::string_view arch_name(Arch a);
std::optional<Arch> parse_arch(std::string_view s);

struct ModelConfig {
  Arch arch = Arch::kTreeLstm;
  int dim = 50;
  uint64_t seed = 0;
};

// A model instance: the parameter store plus graph builders for the two
// heads. Tree architectures embed an expression bottom-up with one cell per
// function and score verification by sigma(<h_lhs, h_rhs>). Chain
// architectures consume the prefix token stream "lhs = rhs" and score through
// a linear layer on the final hidden state. The function-evaluation head
// decodes a side embedding to a scalar and is shared by every architecture.
// Dropout, when enabled, masks each cell input (child embedding or chain
// token vector); evaluation mode never drops.
class Model {
 public:
  Model(const ModelConfig& cfg, const Grammar& g);
  Model(Model&&) noexcept;
  Model& operator=(Model&&) noexcept;
  ~Model();

  Arch arch() const { return cfg_.arch; }
  int dim() const { return cfg_.dim; }
  uint64_t seed() const { return cfg_.seed; }

  // Calibrated decision threshold for the function-evaluation head: predict
  // Correct when the squared side difference is at most this.
  double funceval_threshold = 0.0;
  // Provenance of the weights, recorded in checkpoints: how many training
  // epochs produced them, a digest of the training config, and a digest of
  // the dataset file (0 = untrained/unknown).
  int trained_epochs = 0;
  uint64_t traincfg_digest = 0;
  uint64_t dataset_digest = 0;

  std::vector<ad::Param*> params();
  ad::Param& param(std::string_view name);

  // --- graph builders -----------------------------------------------------
  // dropout_rng == nullptr disables dropout (evaluation mode). Dropout is
  // applied to each side embedding before the heads.

  ad::Value embed_side(ad::Tape& t, const Expr& e, double dropout,
                       Rng* dropout_rng);
  ad::Value verify_logit(ad::Tape& t, const Equation& eq, double dropout,
                         Rng* dropout_rng);
  struct SidePair {
    ad::Value dec_lhs, dec_rhs;  // scalars
    ad::Value sq_err;            // (dec_lhs - dec_rhs)^2
  };
  SidePair funceval_outputs(ad::Tape& t, const Equation& eq, double dropout,
                            Rng* dropout_rng);

  // Number autoencoder pieces (shared with Number terminal embedding).
  ad::Value encode_number(ad::Tape& t, double v);
  ad::Value decode_embedding(ad::Tape& t, ad::Value h);

  // --- evaluation-mode conveniences (fresh local tape) ---------------------
  double predict_prob(const Equation& eq);    // verification probability
  double predict_sq_err(const Equation& eq);  // funceval side disagreement
  double predict_value(const Expr& e);        // decode one side's embedding
  double autoencode(double v);                // decode(encode(v))

  // --- persistence ---------------------------------------------------------
  // Text checkpoint; doubles stored as hex bit patterns, so save/load is
  // bit-exact. Optimizer state rides along, which is what makes resuming
  // training mid-run exact. The grammar digest guards against loading under
  // a different vocabulary.
  void save(const std::string& path) const;
  static Model load(const std::string& path, const Grammar& g);

 private:
  struct TreeOut {
    ad::Value h, c;
  };
  struct Tables;  // cached per-function/per-token Param pointers

  TreeOut embed_tree(ad::Tape& t, const Expr& e, double dropout,
                     Rng* dropout_rng);
  ad::Value embed_chain(ad::Tape& t, const Expr& e, double dropout,
                        Rng* dropout_rng);
  ad::Value chain_step(ad::Tape& t, ad::Value x, ad::Value& h, ad::Value& c);
  ad::Value terminal_embedding(ad::Tape& t, const Terminal& term);
  ad::Value maybe_drop(ad::Tape& t, ad::Value v, double dropout,
                       Rng* dropout_rng);
  ad::Value zeros(ad::Tape& t);

  ad::Param& add_param(const std::string& name, int rows, int cols);
  void init_params();

  ModelConfig cfg_;
  const Grammar* grammar_;
  std::vector<std::unique_ptr<ad::Param>> store_;
  std::vector<ad::Param*> order_;
  std::vector<double> zero_buf_;
  std::unique_ptr<Tables> tables_;
};

uint64_t grammar_digest(const Grammar& g);

// Prefix-order token sequence a chain model consumes: one token per tree
// node, e.g. (sin x) -> "sin", "x". Number terminals keep their value. The
// verification sequence is lhs tokens, "=", rhs tokens.
struct ChainToken {
  std::string text;
  bool is_number = false;
  double value = 0.0;
};
std::vector<ChainToken> chain_tokens(const Expr& e);

}  // namespace eqv
