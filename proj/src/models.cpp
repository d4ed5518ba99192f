#include "eqv/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <unordered_map>

namespace eqv {

using ad::Param;
using ad::Tape;
using ad::Value;

std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::kRnn: return "rnn";
    case Arch::kLstm: return "lstm";
    case Arch::kTreeNn: return "treenn";
    case Arch::kTreeLstm: return "treelstm";
  }
  return "?";
}

std::optional<Arch> parse_arch(std::string_view s) {
  for (Arch a : {Arch::kRnn, Arch::kLstm, Arch::kTreeNn, Arch::kTreeLstm})
    if (s == arch_name(a)) return a;
  return std::nullopt;
}

uint64_t grammar_digest(const Grammar& g) {
  std::string blob;
  for (Fn f : g.functions) {
    blob += fn_info(f).name;
    blob += ';';
  }
  for (const auto& c : const_table()) {
    blob += c.token;
    blob += ';';
  }
  for (const std::string& v : g.variables) {
    blob += v;
    blob += ';';
  }
  return fnv1a(blob);
}

std::vector<ChainToken> chain_tokens(const Expr& e) {
  std::vector<ChainToken> out;
  struct Walk {
    std::vector<ChainToken>& out;
    void operator()(const Expr& x) {
      if (x.is_terminal()) {
        const Terminal& t = x.terminal();
        if (t.kind == Terminal::Kind::kNumber)
          out.push_back({t.token(), true, t.value()});
        else
          out.push_back({t.token(), false, 0.0});
        return;
      }
      out.push_back({fn_info(x.fn()).name, false, 0.0});
      for (const Expr& c : x.children()) (*this)(c);
    }
  } walk{out};
  walk(e);
  return out;
}

// ---------------------------------------------------------------------------
// Parameter store

namespace {
struct TreeNnCell {
  Param* w = nullptr;
  Param* b = nullptr;
};
struct TreeLstmCell {
  Param* ui[2] = {};     // input gate, driven by child l
  Param* uo[2] = {};     // output gate
  Param* uu[2] = {};     // candidate update
  Param* uf[2][2] = {};  // forget gate of child k, driven by child l
  Param* bi = nullptr;
  Param* bo = nullptr;
  Param* bu = nullptr;
  Param* bf = nullptr;
};
struct ChainLstmCell {
  Param* u[4] = {};  // recurrent weights, gate order i f o u
  Param* w[4] = {};  // input weights
  Param* b[4] = {};
};
}  // namespace

// Pointer caches so graph building never assembles parameter names.
struct Model::Tables {
  std::unordered_map<std::string, Param*> by_name;
  std::unordered_map<std::string, Param*> sym;  // terminal token -> embedding
  std::unordered_map<std::string, Param*> tok;  // chain fn/separator tokens
  std::array<TreeNnCell, kFnCount> treenn{};
  std::array<TreeLstmCell, kFnCount> treelstm{};
  Param* rnn_wh = nullptr;
  Param* rnn_wx = nullptr;
  Param* rnn_b = nullptr;
  ChainLstmCell chain{};
  Param* head_w = nullptr;  // chain verification head
  Param* head_b = nullptr;
  Param* numenc_w1 = nullptr;
  Param* numenc_b1 = nullptr;
  Param* numenc_w2 = nullptr;
  Param* numenc_b2 = nullptr;
  Param* numdec_w1 = nullptr;
  Param* numdec_b1 = nullptr;
  Param* numdec_w2 = nullptr;
  Param* numdec_b2 = nullptr;
};

Model::Model(Model&&) noexcept = default;
Model& Model::operator=(Model&&) noexcept = default;
Model::~Model() = default;

Param& Model::add_param(const std::string& name, int rows, int cols) {
  store_.push_back(std::make_unique<Param>(name, rows, cols));
  Param* p = store_.back().get();
  order_.push_back(p);
  tables_->by_name.emplace(name, p);
  return *p;
}

ad::Param& Model::param(std::string_view name) {
  auto it = tables_->by_name.find(std::string(name));
  if (it == tables_->by_name.end())
    throw EqvError("no such model parameter: " + std::string(name));
  return *it->second;
}

std::vector<Param*> Model::params() { return order_; }

static void init_uniform(Param& p, int fan_in, uint64_t seed) {
  Rng rng(mix_seed(seed, fnv1a(p.name)));
  double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : p.value) v = rng.uniform(-a, a);
}

void Model::init_params() {
  Tables& tab = *tables_;
  const int d = cfg_.dim;
  const uint64_t seed = cfg_.seed;

  auto mat = [&](const std::string& name, int rows, int cols) {
    Param& p = add_param(name, rows, cols);
    init_uniform(p, cols, seed);
    return &p;
  };
  auto vec = [&](const std::string& name) {
    return &add_param(name, d, 1);  // biases start at zero
  };
  auto embedding = [&](const std::string& name) {
    Param& p = add_param(name, d, 1);
    init_uniform(p, d, seed);
    return &p;
  };

  // Number autoencoder; every architecture carries one so Number terminals
  // and the function-evaluation head work uniformly.
  tab.numenc_w1 = mat("numenc_w1", d, 1);
  tab.numenc_b1 = vec("numenc_b1");
  tab.numenc_w2 = mat("numenc_w2", d, d);
  tab.numenc_b2 = vec("numenc_b2");
  tab.numdec_w1 = mat("numdec_w1", d, d);
  tab.numdec_b1 = vec("numdec_b1");
  tab.numdec_w2 = mat("numdec_w2", 1, d);
  tab.numdec_b2 = &add_param("numdec_b2", 1, 1);

  // Terminal embeddings: every named constant plus the variable alphabet.
  for (const auto& c : const_table())
    tab.sym.emplace(c.token, embedding(std::string("sym_") + c.token));
  for (const std::string& v : grammar_->variables)
    tab.sym.emplace(v, embedding("sym_" + v));

  switch (cfg_.arch) {
    case Arch::kTreeNn:
      for (Fn f : grammar_->functions) {
        const FnInfo& info = fn_info(f);
        TreeNnCell& cell = tab.treenn[static_cast<size_t>(f)];
        std::string base = std::string("tree_") + std::string(info.name);
        cell.w = mat(base + "_w", d, info.arity * d);
        cell.b = vec(base + "_b");
      }
      break;
    case Arch::kTreeLstm:
      for (Fn f : grammar_->functions) {
        const FnInfo& info = fn_info(f);
        TreeLstmCell& cell = tab.treelstm[static_cast<size_t>(f)];
        std::string base = std::string("lstm_") + std::string(info.name);
        for (int l = 0; l < info.arity; ++l) {
          std::string suf = std::to_string(l + 1);
          cell.ui[l] = mat(base + "_i_u" + suf, d, d);
          cell.uo[l] = mat(base + "_o_u" + suf, d, d);
          cell.uu[l] = mat(base + "_u_u" + suf, d, d);
          for (int k = 0; k < info.arity; ++k)
            cell.uf[k][l] =
                mat(base + "_f_u" + std::to_string(k + 1) + suf, d, d);
        }
        cell.bi = vec(base + "_i_b");
        cell.bo = vec(base + "_o_b");
        cell.bu = vec(base + "_u_b");
        cell.bf = vec(base + "_f_b");
        // Forget gates start open so cell memory survives early training.
        std::fill(cell.bf->value.begin(), cell.bf->value.end(), 1.0);
      }
      break;
    case Arch::kRnn:
      tab.rnn_wh = mat("rnn_wh", d, d);
      tab.rnn_wx = mat("rnn_wx", d, d);
      tab.rnn_b = vec("rnn_b");
      break;
    case Arch::kLstm: {
      static const char* gates[] = {"i", "f", "o", "u"};
      for (int gi = 0; gi < 4; ++gi) {
        std::string base = std::string("chain_") + gates[gi];
        tab.chain.u[gi] = mat(base + "_u", d, d);
        tab.chain.w[gi] = mat(base + "_w", d, d);
        tab.chain.b[gi] = vec(base + "_b");
      }
      std::fill(tab.chain.b[1]->value.begin(), tab.chain.b[1]->value.end(),
                1.0);
      break;
    }
  }

  if (cfg_.arch == Arch::kRnn || cfg_.arch == Arch::kLstm) {
    std::vector<std::string> structural = {"="};
    for (Fn f : grammar_->functions)
      structural.push_back(std::string(fn_info(f).name));
    for (const std::string& s : structural)
      tab.tok.emplace(s, embedding("tok_" + s));
    tab.head_w = mat("chain_head_w", 1, d);
    tab.head_b = &add_param("chain_head_b", 1, 1);
  }
}

Model::Model(const ModelConfig& cfg, const Grammar& g)
    : cfg_(cfg), grammar_(&g), tables_(std::make_unique<Tables>()) {
  if (cfg.dim < 1) throw EqvError("model dimension must be positive");
  zero_buf_.assign(static_cast<size_t>(cfg.dim), 0.0);
  init_params();
}

// ---------------------------------------------------------------------------
// Graph builders

Value Model::zeros(Tape& t) { return t.leaf(zero_buf_); }

Value Model::maybe_drop(Tape& t, Value v, double dropout, Rng* dropout_rng) {
  if (dropout_rng == nullptr || dropout <= 0.0) return v;
  return t.hadamard(v, t.dropout_mask(cfg_.dim, dropout, *dropout_rng));
}

Value Model::encode_number(Tape& t, double v) {
  Tables& tab = *tables_;
  Value x = t.scalar(v);
  Value h1 =
      t.tanh_(t.add(t.matvec(*tab.numenc_w1, x), t.param_vec(*tab.numenc_b1)));
  return t.add(t.matvec(*tab.numenc_w2, h1), t.param_vec(*tab.numenc_b2));
}

Value Model::decode_embedding(Tape& t, Value h) {
  Tables& tab = *tables_;
  Value h1 =
      t.tanh_(t.add(t.matvec(*tab.numdec_w1, h), t.param_vec(*tab.numdec_b1)));
  return t.add(t.matvec(*tab.numdec_w2, h1), t.param_vec(*tab.numdec_b2));
}

Value Model::terminal_embedding(Tape& t, const Terminal& term) {
  if (term.kind == Terminal::Kind::kNumber)
    return encode_number(t, term.value());
  auto it = tables_->sym.find(term.token());
  if (it == tables_->sym.end())
    throw EqvError("no embedding for terminal '" + term.token() + "'");
  return t.param_vec(*it->second);
}

Model::TreeOut Model::embed_tree(Tape& t, const Expr& e, double dropout,
                                 Rng* dropout_rng) {
  if (e.is_terminal())
    return {terminal_embedding(t, e.terminal()), Value{}};  // leaf memory is 0

  auto kids = e.children();
  int n = static_cast<int>(kids.size());
  TreeOut child[2];
  for (int i = 0; i < n; ++i) {
    child[i] = embed_tree(t, kids[i], dropout, dropout_rng);
    // Dropout sits on the cell inputs: each child vector is masked once and
    // the masked version feeds every gate of this node.
    child[i].h = maybe_drop(t, child[i].h, dropout, dropout_rng);
  }

  Tables& tab = *tables_;
  if (cfg_.arch == Arch::kTreeNn) {
    const TreeNnCell& cell = tab.treenn[static_cast<size_t>(e.fn())];
    if (cell.w == nullptr)
      throw EqvError("no cell for function " +
                     std::string(fn_info(e.fn()).name));
    Value in = n == 1 ? child[0].h : t.concat(child[0].h, child[1].h);
    Value h = t.tanh_(t.add(t.matvec(*cell.w, in), t.param_vec(*cell.b)));
    return {h, Value{}};
  }

  const TreeLstmCell& cell = tab.treelstm[static_cast<size_t>(e.fn())];
  if (cell.bi == nullptr)
    throw EqvError("no cell for function " + std::string(fn_info(e.fn()).name));
  auto gate_pre = [&](Param* const us[2], Param* b) {
    Value acc = t.param_vec(*b);
    for (int l = 0; l < n; ++l) acc = t.add(acc, t.matvec(*us[l], child[l].h));
    return acc;
  };
  Value i = t.sigmoid_(gate_pre(cell.ui, cell.bi));
  Value o = t.sigmoid_(gate_pre(cell.uo, cell.bo));
  Value u = t.tanh_(gate_pre(cell.uu, cell.bu));
  Value c = t.hadamard(i, u);
  for (int k = 0; k < n; ++k) {
    // A leaf child's memory cell is identically zero: its forget term is a
    // no-op in both value and gradient, so it is skipped outright.
    if (!child[k].c.valid()) continue;
    Value f = t.sigmoid_(gate_pre(cell.uf[k], cell.bf));
    c = t.add(c, t.hadamard(f, child[k].c));
  }
  Value h = t.hadamard(o, t.tanh_(c));
  return {h, c};
}

// One recurrence step; h and c are updated in place.
Value Model::chain_step(Tape& t, Value x, Value& h, Value& c) {
  Tables& tab = *tables_;
  if (cfg_.arch == Arch::kRnn) {
    h = t.tanh_(t.add(t.add(t.matvec(*tab.rnn_wh, h), t.matvec(*tab.rnn_wx, x)),
                      t.param_vec(*tab.rnn_b)));
    return h;
  }
  auto gate = [&](int gi) {
    return t.add(t.add(t.matvec(*tab.chain.u[gi], h),
                       t.matvec(*tab.chain.w[gi], x)),
                 t.param_vec(*tab.chain.b[gi]));
  };
  Value i = t.sigmoid_(gate(0));
  Value f = t.sigmoid_(gate(1));
  Value o = t.sigmoid_(gate(2));
  Value u = t.tanh_(gate(3));
  c = t.add(t.hadamard(f, c), t.hadamard(i, u));
  h = t.hadamard(o, t.tanh_(c));
  return h;
}

Value Model::embed_chain(Tape& t, const Expr& e, double dropout,
                         Rng* dropout_rng) {
  Tables& tab = *tables_;
  Value h = zeros(t);
  Value c = zeros(t);
  for (const ChainToken& tok : chain_tokens(e)) {
    Value x;
    if (tok.is_number) {
      x = encode_number(t, tok.value);
    } else if (auto it = tab.tok.find(tok.text); it != tab.tok.end()) {
      x = t.param_vec(*it->second);
    } else if (auto is = tab.sym.find(tok.text); is != tab.sym.end()) {
      x = t.param_vec(*is->second);
    } else {
      throw EqvError("no embedding for token '" + tok.text + "'");
    }
    chain_step(t, maybe_drop(t, x, dropout, dropout_rng), h, c);
  }
  return h;
}

Value Model::embed_side(Tape& t, const Expr& e, double dropout,
                        Rng* dropout_rng) {
  if (cfg_.arch == Arch::kTreeNn || cfg_.arch == Arch::kTreeLstm)
    return embed_tree(t, e, dropout, dropout_rng).h;
  return embed_chain(t, e, dropout, dropout_rng);
}

Value Model::verify_logit(Tape& t, const Equation& eq, double dropout,
                          Rng* dropout_rng) {
  if (cfg_.arch == Arch::kTreeNn || cfg_.arch == Arch::kTreeLstm) {
    Value hl = embed_side(t, eq.lhs, dropout, dropout_rng);
    Value hr = embed_side(t, eq.rhs, dropout, dropout_rng);
    return t.dot(hl, hr);
  }
  // Chains read one prefix stream: lhs tokens, "=", rhs tokens, then a
  // linear layer on the final state.
  Tables& tab = *tables_;
  Value h = zeros(t);
  Value c = zeros(t);
  auto feed = [&](const Expr& side) {
    for (const ChainToken& tok : chain_tokens(side)) {
      Value x;
      if (tok.is_number) {
        x = encode_number(t, tok.value);
      } else if (auto it = tab.tok.find(tok.text); it != tab.tok.end()) {
        x = t.param_vec(*it->second);
      } else if (auto is = tab.sym.find(tok.text); is != tab.sym.end()) {
        x = t.param_vec(*is->second);
      } else {
        throw EqvError("no embedding for token '" + tok.text + "'");
      }
      chain_step(t, maybe_drop(t, x, dropout, dropout_rng), h, c);
    }
  };
  feed(eq.lhs);
  chain_step(t, maybe_drop(t, t.param_vec(*tab.tok.at("=")), dropout,
                           dropout_rng),
             h, c);
  feed(eq.rhs);
  return t.add(t.matvec(*tab.head_w, h), t.param_vec(*tab.head_b));
}

Model::SidePair Model::funceval_outputs(Tape& t, const Equation& eq,
                                        double dropout, Rng* dropout_rng) {
  Value hl = embed_side(t, eq.lhs, dropout, dropout_rng);
  Value hr = embed_side(t, eq.rhs, dropout, dropout_rng);
  SidePair out;
  out.dec_lhs = decode_embedding(t, hl);
  out.dec_rhs = decode_embedding(t, hr);
  out.sq_err = t.mse(out.dec_lhs, out.dec_rhs);
  return out;
}

static double host_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

double Model::predict_prob(const Equation& eq) {
  Tape t;
  return host_sigmoid(t.scalar_value(verify_logit(t, eq, 0.0, nullptr)));
}

double Model::predict_sq_err(const Equation& eq) {
  Tape t;
  return t.scalar_value(funceval_outputs(t, eq, 0.0, nullptr).sq_err);
}

double Model::predict_value(const Expr& e) {
  Tape t;
  return t.scalar_value(decode_embedding(t, embed_side(t, e, 0.0, nullptr)));
}

double Model::autoencode(double v) {
  Tape t;
  return t.scalar_value(decode_embedding(t, encode_number(t, v)));
}

// ---------------------------------------------------------------------------
// Persistence

static std::string hex_bits(double d) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(std::bit_cast<uint64_t>(d)));
  return buf;
}

static std::string hex_u64(uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

static double bits_hex(std::string_view s, const std::string& what) {
  if (s.empty() || s.size() > 16)
    throw EqvError("bad checkpoint value for " + what);
  uint64_t bits = 0;
  for (char ch : s) {
    int dig;
    if (ch >= '0' && ch <= '9') dig = ch - '0';
    else if (ch >= 'a' && ch <= 'f') dig = ch - 'a' + 10;
    else throw EqvError("bad checkpoint value for " + what);
    bits = bits * 16 + static_cast<uint64_t>(dig);
  }
  return std::bit_cast<double>(bits);
}

void Model::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EqvError("cannot write checkpoint: " + path);
  out << "eqv-model 1\n"
      << "arch " << arch_name(cfg_.arch) << "\n"
      << "dim " << cfg_.dim << "\n"
      << "seed " << cfg_.seed << "\n"
      << "grammar " << hex_u64(grammar_digest(*grammar_)) << "\n"
      << "threshold " << hex_bits(funceval_threshold) << "\n"
      << "epochs " << trained_epochs << "\n"
      << "traincfg " << hex_u64(traincfg_digest) << "\n"
      << "dataset " << hex_u64(dataset_digest) << "\n"
      << "params " << order_.size() << "\n";
  for (const Param* p : order_) {
    out << p->name << " " << p->rows << " " << p->cols << " " << p->steps
        << "\n";
    auto dump = [&](const std::vector<double>& xs) {
      for (size_t i = 0; i < xs.size(); ++i) {
        if (i) out << ' ';
        out << hex_bits(xs[i]);
      }
      out << "\n";
    };
    dump(p->value);
    dump(p->m);
    dump(p->v);
  }
  out << "end\n";
  if (!out) throw EqvError("failed writing checkpoint: " + path);
}

Model Model::load(const std::string& path, const Grammar& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EqvError("cannot open checkpoint: " + path);
  auto expect = [&](const char* tag) {
    std::string word;
    if (!(in >> word) || word != tag)
      throw EqvError(std::string("checkpoint missing field '") + tag + "'");
  };
  expect("eqv-model");
  int version = 0;
  in >> version;
  if (version != 1) throw EqvError("unsupported checkpoint version");

  expect("arch");
  std::string archs;
  in >> archs;
  auto arch = parse_arch(archs);
  if (!arch) throw EqvError("unknown arch in checkpoint: " + archs);
  ModelConfig cfg;
  cfg.arch = *arch;
  expect("dim");
  in >> cfg.dim;
  expect("seed");
  in >> cfg.seed;
  if (!in || cfg.dim < 1) throw EqvError("bad checkpoint header");

  expect("grammar");
  std::string ghex;
  in >> ghex;
  if (ghex != hex_u64(grammar_digest(g)))
    throw EqvError("checkpoint was written under a different grammar");

  Model m(cfg, g);
  expect("threshold");
  std::string thex;
  in >> thex;
  m.funceval_threshold = bits_hex(thex, "threshold");
  expect("epochs");
  in >> m.trained_epochs;
  expect("traincfg");
  std::string chex;
  in >> chex;
  m.traincfg_digest =
      std::bit_cast<uint64_t>(bits_hex(chex, "traincfg"));
  expect("dataset");
  std::string dhex;
  in >> dhex;
  m.dataset_digest = std::bit_cast<uint64_t>(bits_hex(dhex, "dataset"));

  expect("params");
  size_t count = 0;
  in >> count;
  if (!in || count != m.order_.size())
    throw EqvError("checkpoint parameter count mismatch");
  for (size_t i = 0; i < count; ++i) {
    std::string name;
    int rows = 0, cols = 0;
    int64_t steps = 0;
    if (!(in >> name >> rows >> cols >> steps))
      throw EqvError("truncated checkpoint at parameter " + std::to_string(i));
    Param& p = m.param(name);
    if (p.rows != rows || p.cols != cols)
      throw EqvError("checkpoint shape mismatch for " + name);
    p.steps = steps;
    auto slurp = [&](std::vector<double>& xs) {
      for (double& v : xs) {
        std::string hex;
        if (!(in >> hex)) throw EqvError("truncated values for " + name);
        v = bits_hex(hex, name);
      }
    };
    slurp(p.value);
    slurp(p.m);
    slurp(p.v);
  }
  expect("end");
  return m;
}

}  // namespace eqv
