#include "eqv/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace eqv {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

[[noreturn]] void bad(int line, const std::string& msg) {
  throw EqvError("config line " + std::to_string(line) + ": " + msg);
}

double to_double(std::string_view v, int line) {
  try {
    size_t used = 0;
    double d = std::stod(std::string(v), &used);
    if (used != v.size()) bad(line, "trailing characters in number '" + std::string(v) + "'");
    return d;
  } catch (const EqvError&) {
    throw;
  } catch (...) {
    bad(line, "expected a number, got '" + std::string(v) + "'");
  }
}

int to_int(std::string_view v, int line) {
  int out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad(line, "expected an integer, got '" + std::string(v) + "'");
  return out;
}

uint64_t to_u64(std::string_view v, int line) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    bad(line, "expected an unsigned integer, got '" + std::string(v) + "'");
  return out;
}

bool to_bool(std::string_view v, int line) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(line, "expected true/false, got '" + std::string(v) + "'");
}

std::vector<int> to_int_list(std::string_view v, int line) {
  std::vector<int> out;
  std::istringstream in{std::string(v)};
  std::string tok;
  while (in >> tok) out.push_back(to_int(tok, line));
  return out;
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  std::string section;  // "" = top level
  int line_no = 0;
  std::string_view rest = text;

  while (!rest.empty()) {
    size_t nl = rest.find('\n');
    std::string_view raw = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;

    std::string_view ln = raw;
    size_t hash = ln.find_first_of("#;");
    if (hash != std::string_view::npos) ln = ln.substr(0, hash);
    ln = trim(ln);
    if (ln.empty()) continue;

    if (ln.front() == '[') {
      if (ln.back() != ']') bad(line_no, "unterminated section header");
      section = std::string(trim(ln.substr(1, ln.size() - 2)));
      if (section != "oracle" && section != "generation" &&
          section != "training" && section != "experiment" &&
          section != "paths")
        bad(line_no, "unknown section [" + section + "]");
      continue;
    }

    size_t eq = ln.find('=');
    if (eq == std::string_view::npos) bad(line_no, "expected 'key = value'");
    std::string key{trim(ln.substr(0, eq))};
    std::string_view val = trim(ln.substr(eq + 1));
    if (key.empty()) bad(line_no, "empty key");

    auto unknown = [&]() -> void {
      bad(line_no, "unknown key '" + key + "'" +
                       (section.empty() ? "" : " in [" + section + "]"));
    };

    if (section.empty()) {
      if (key == "seed") cfg.seed = to_u64(val, line_no);
      else if (key == "jobs") cfg.jobs = to_int(val, line_no);
      else unknown();
    } else if (section == "oracle") {
      if (key == "samples") cfg.oracle.samples = to_int(val, line_no);
      else if (key == "abs_tol") cfg.oracle.abs_tol = to_double(val, line_no);
      else if (key == "rel_tol") cfg.oracle.rel_tol = to_double(val, line_no);
      else if (key == "min_valid") cfg.oracle.min_valid = to_int(val, line_no);
      else if (key == "lo") cfg.oracle.lo = to_double(val, line_no);
      else if (key == "hi") cfg.oracle.hi = to_double(val, line_no);
      else unknown();
    } else if (section == "generation") {
      if (key == "symbolic_total") cfg.generation.symbolic_total = to_int(val, line_no);
      else if (key == "funceval_total") cfg.generation.funceval_total = to_int(val, line_no);
      else if (key == "max_depth") cfg.generation.max_depth = to_int(val, line_no);
      else if (key == "depth_caps") cfg.generation.depth_caps = to_int_list(val, line_no);
      else if (key == "correct_frac_lo") cfg.generation.correct_frac_lo = to_double(val, line_no);
      else if (key == "correct_frac_hi") cfg.generation.correct_frac_hi = to_double(val, line_no);
      else if (key == "test_fraction") cfg.generation.test_fraction = to_double(val, line_no);
      else if (key == "stall_limit") cfg.generation.stall_limit = to_int(val, line_no);
      else if (key == "rewrite_max_depth") cfg.generation.rewrite_max_depth = to_int(val, line_no);
      else if (key == "number_grid_fraction") cfg.generation.number_grid_fraction = to_double(val, line_no);
      else unknown();
    } else if (section == "training") {
      if (key == "arch") {
        auto a = parse_arch(val);
        if (!a) bad(line_no, "unknown arch '" + std::string(val) + "'");
        cfg.arch = *a;
      }
      else if (key == "dim") cfg.dim = to_int(val, line_no);
      else if (key == "epochs") cfg.training.epochs = to_int(val, line_no);
      else if (key == "lr") cfg.training.lr = to_double(val, line_no);
      else if (key == "adam_beta1") cfg.training.adam_beta1 = to_double(val, line_no);
      else if (key == "adam_beta2") cfg.training.adam_beta2 = to_double(val, line_no);
      else if (key == "adam_eps") cfg.training.adam_eps = to_double(val, line_no);
      else if (key == "l2") cfg.training.l2 = to_double(val, line_no);
      else if (key == "dropout") cfg.training.dropout = to_double(val, line_no);
      else if (key == "use_funceval") cfg.training.use_funceval = to_bool(val, line_no);
      else if (key == "autoencoder_passes") cfg.training.autoencoder_passes = to_int(val, line_no);
      else if (key == "funceval_margin") cfg.training.funceval_margin = to_double(val, line_no);
      else if (key == "log_every") cfg.training.log_every = to_int(val, line_no);
      else if (key == "calibration_fraction") cfg.training.calibration_fraction = to_double(val, line_no);
      else unknown();
    } else if (section == "experiment") {
      if (key == "kind") {
        if (val != "generalization" && val != "extrapolation" && val != "completion")
          bad(line_no, "unknown experiment kind '" + std::string(val) + "'");
        cfg.experiment = std::string(val);
      }
      else if (key == "extrapolation_depth") cfg.extrapolation_depth = to_int(val, line_no);
      else if (key == "completion_top_k") cfg.completion_top_k = to_int(val, line_no);
      else if (key == "completion_max_instances") cfg.completion_max_instances = to_int(val, line_no);
      else unknown();
    } else {  // paths
      if (key == "axioms") cfg.paths.axioms = std::string(val);
      else if (key == "dataset") cfg.paths.dataset = std::string(val);
      else if (key == "checkpoint") cfg.paths.checkpoint = std::string(val);
      else if (key == "metrics") cfg.paths.metrics = std::string(val);
      else if (key == "out_dir") cfg.paths.out_dir = std::string(val);
      else unknown();
    }
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw EqvError("cannot open config file " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_config(text);
}

GenConfig RunConfig::gen_config() const {
  GenConfig g = generation;
  g.seed = seed;
  g.oracle = oracle;
  g.oracle.seed = seed;
  return g;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig t = training;
  t.seed = seed;
  return t;
}

ModelConfig RunConfig::model_config() const { return {arch, dim, seed}; }

ExperimentConfig RunConfig::experiment_config() const {
  ExperimentConfig e;
  e.dim = dim;
  e.train = train_config();
  e.out_dir = paths.out_dir;
  e.completion_top_k = completion_top_k;
  e.completion_max_instances = completion_max_instances;
  e.extrapolation_depth = extrapolation_depth;
  e.oracle = oracle;
  e.oracle.seed = seed;
  return e;
}

std::string default_config_text() {
  return R"(# Run configuration. Values shown are the defaults.
seed = 0                      # master seed for generation and training
jobs = 1                      # parallel workers for read-only evaluation

[oracle]
samples = 64                  # random assignments per equation
abs_tol = 1e-08               # absolute agreement tolerance
rel_tol = 1e-06               # relative agreement tolerance
min_valid = 8                 # fewer evaluable samples => Undecided
lo = -3.14                    # sampling range, lower end
hi = 3.14                     # sampling range, upper end

[generation]
symbolic_total = 10000        # symbolic equations to generate
funceval_total = 2000         # function-evaluation equations to generate
max_depth = 4                 # deepest generated equation
depth_caps =                  # per-depth caps; empty = derive from totals
correct_frac_lo = 0.45        # balance band, lower end
correct_frac_hi = 0.55        # balance band, upper end
test_fraction = 0.2           # held-out share per stratum
stall_limit = 50              # dead draws before growing a fresh axiom
rewrite_max_depth = 3         # correct equations up to this depth become rules
number_grid_fraction = 0.3    # share of the number grid used as inputs

[training]
arch = treelstm               # rnn | lstm | treenn | treelstm
dim = 50                      # hidden dimension
epochs = 50                   # training epochs
lr = 0.001                    # Adam learning rate
adam_beta1 = 0.9              # Adam first-moment decay
adam_beta2 = 0.999            # Adam second-moment decay
adam_eps = 1e-08              # Adam denominator floor
l2 = 1e-05                    # weight decay
dropout = 0.2                 # cell-input dropout rate
use_funceval = false          # train on function-evaluation rows too
autoencoder_passes = 2000     # number-autoencoder pretraining passes
funceval_margin = 0.05        # hinge margin for incorrect funceval rows
log_every = 10                # epochs between metric snapshots
calibration_fraction = 0.1    # funceval train share held out for the threshold

[experiment]
kind = generalization         # generalization | extrapolation | completion
extrapolation_depth = 4       # symbolic depth held out for extrapolation
completion_top_k = 25         # k range for completion curves
completion_max_instances = 200 # cap on completion instances (0 = all)

[paths]
axioms = data/axioms.txt      # identity list seeding generation
dataset = out/dataset.tsv     # dataset file (gen output, train/eval input)
checkpoint = out/model.ckpt   # model file (train output, eval input)
metrics = out/metrics.csv     # metrics log written by train/eval
out_dir = out                 # directory for experiment reports
)";
}

}  // namespace eqv
