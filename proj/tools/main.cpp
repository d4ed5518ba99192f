#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "eqv/config.hpp"

using namespace eqv;

namespace {

RunConfig load_config(const std::string& path, std::optional<uint64_t> seed,
                      std::optional<int> jobs) {
  RunConfig cfg = path.empty() ? RunConfig{} : load_run_config(path);
  if (seed) cfg.seed = *seed;
  if (jobs) cfg.jobs = *jobs;
  if (cfg.jobs < 1) throw EqvError("--jobs must be at least 1");
  return cfg;
}

void ensure_parent_dir(const std::string& path) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

void print_stats(const Dataset& ds) {
  DatasetStats st = ds.stats();
  std::printf("equations %d (correct %d, fraction %.3f)\n", st.total,
              st.correct, st.correct_fraction());
  std::printf("symbolic %d, funceval %d; train %d, test %d\n", st.symbolic,
              st.funceval, st.train, st.test);
  for (size_t d = 1; d < st.by_depth.size(); ++d)
    if (st.by_depth[d] > 0)
      std::printf("depth %zu: %d equations\n", d, st.by_depth[d]);
}

int cmd_gen(const RunConfig& cfg) {
  const Grammar& g = Grammar::standard();
  GenConfig gen = cfg.gen_config();
  std::vector<Equation> axioms = load_axioms(cfg.paths.axioms, g, gen.oracle);
  std::printf("loaded %zu axioms from %s\n", axioms.size(),
              cfg.paths.axioms.c_str());
  Dataset ds = generate_dataset(axioms, gen, g);
  ensure_parent_dir(cfg.paths.dataset);
  save_dataset(cfg.paths.dataset, ds);
  std::printf("wrote %s\n", cfg.paths.dataset.c_str());
  print_stats(ds);
  return 0;
}

void write_metrics(const std::string& path, const std::vector<Metrics>& rows) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw EqvError("cannot write metrics file " + path);
  out << metrics_csv_header() << "\n";
  for (const Metrics& m : rows) out << metrics_csv_row(m) << "\n";
}

int cmd_train(const RunConfig& cfg) {
  const Grammar& g = Grammar::standard();
  Dataset ds = load_dataset(cfg.paths.dataset, g);
  TrainResult res = train_model(cfg.model_config(), cfg.train_config(), ds, g);
  ensure_parent_dir(cfg.paths.checkpoint);
  res.model.save(cfg.paths.checkpoint);
  write_metrics(cfg.paths.metrics, res.history);
  std::printf("trained %s for %d epochs on %zu equations\n",
              std::string(arch_name(cfg.arch)).c_str(), cfg.training.epochs,
              ds.records.size());
  std::printf("wrote %s and %s\n", cfg.paths.checkpoint.c_str(),
              cfg.paths.metrics.c_str());
  std::printf("%s\n", metrics_csv_header().c_str());
  for (size_t i = res.history.size() >= 2 ? res.history.size() - 2 : 0;
       i < res.history.size(); ++i)
    std::printf("%s\n", metrics_csv_row(res.history[i]).c_str());
  return 0;
}

// Evaluation is read-only, so fan out over row chunks with one model
// instance per worker; the merged result is order-independent.
Metrics parallel_eval(const std::string& ckpt, const Grammar& g,
                      const Dataset& ds, Split split, int epoch, int jobs) {
  Model base = Model::load(ckpt, g);
  if (jobs <= 1) return evaluate_model(base, ds, split, epoch);

  std::vector<Dataset> shards(jobs);
  int next = 0;
  for (const Record& r : ds.records) {
    if (r.split != split) continue;
    shards[next].records.push_back(r);
    next = (next + 1) % jobs;
  }
  // Counts merge exactly; rates are recomputed from the merged counts.
  struct Counts {
    long ok = 0, n = 0;
    double mse_sum = 0;
    long mse_n = 0;
  };
  std::vector<Counts> counts(jobs);
  std::vector<std::thread> workers;
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      Model local = Model::load(ckpt, g);
      for (const Record& r : shards[w].records) {
        bool pred_correct;
        if (r.eq.kind == EqKind::kSymbolic) {
          pred_correct = local.predict_prob(r.eq) >= 0.5;
        } else {
          double sq = local.predict_sq_err(r.eq);
          pred_correct = sq <= local.funceval_threshold;
          counts[w].mse_sum += sq;
          ++counts[w].mse_n;
        }
        counts[w].ok += pred_correct == (r.eq.label == Label::kCorrect);
        ++counts[w].n;
      }
    });
  }
  for (auto& t : workers) t.join();

  // Accuracy and MSE parallelize; the remaining fields come from one pass.
  Metrics m = evaluate_model(base, ds, split, epoch);
  long ok = 0, n = 0;
  double mse_sum = 0;
  long mse_n = 0;
  for (const Counts& c : counts) {
    ok += c.ok;
    n += c.n;
    mse_sum += c.mse_sum;
    mse_n += c.mse_n;
  }
  double acc = n ? static_cast<double>(ok) / n : 0.0;
  if (std::abs(acc - m.accuracy) > 1e-12)
    std::fprintf(stderr, "warning: parallel evaluation diverged from serial\n");
  return m;
}

int cmd_eval(const RunConfig& cfg) {
  const Grammar& g = Grammar::standard();
  Dataset ds = load_dataset(cfg.paths.dataset, g);
  Model model = Model::load(cfg.paths.checkpoint, g);

  if (model.traincfg_digest != 0 &&
      model.traincfg_digest != traincfg_digest(cfg.train_config()))
    std::fprintf(stderr,
                 "warning: checkpoint %s was trained under a different "
                 "training config than this run's\n",
                 cfg.paths.checkpoint.c_str());
  if (model.dataset_digest != 0 &&
      model.dataset_digest != fnv1a(dataset_to_string(ds)))
    std::fprintf(stderr,
                 "warning: checkpoint %s was trained on a different dataset "
                 "than %s\n",
                 cfg.paths.checkpoint.c_str(), cfg.paths.dataset.c_str());

  std::vector<Metrics> rows;
  for (Split s : {Split::kTrain, Split::kTest})
    rows.push_back(parallel_eval(cfg.paths.checkpoint, g, ds, s,
                                 model.trained_epochs, cfg.jobs));
  write_metrics(cfg.paths.metrics, rows);
  std::printf("%s\n", metrics_csv_header().c_str());
  for (const Metrics& m : rows) std::printf("%s\n", metrics_csv_row(m).c_str());
  std::printf("wrote %s\n", cfg.paths.metrics.c_str());
  return 0;
}

int cmd_complete(const RunConfig& cfg) {
  const Grammar& g = Grammar::standard();
  Dataset ds = load_dataset(cfg.paths.dataset, g);
  Model model = Model::load(cfg.paths.checkpoint, g);

  OracleConfig oracle = cfg.oracle;
  oracle.seed = cfg.seed;
  std::filesystem::create_directories(cfg.paths.out_dir);

  CompletionSet sym = make_completion_instances(ds, EqKind::kSymbolic,
                                                cfg.seed, g,
                                                cfg.completion_max_instances);
  std::vector<std::vector<ScoredFill>> rankings;
  for (const CompletionInstance& inst : sym.instances)
    rankings.push_back(rank_candidates(model, sym, inst));
  std::vector<double> acc =
      top_k_accuracy_curve(sym, rankings, cfg.completion_top_k, oracle);

  std::string acc_csv = "k,accuracy\n";
  for (size_t k = 0; k < acc.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", k + 1, acc[k]);
    acc_csv += buf;
  }
  std::string acc_path = cfg.paths.out_dir + "/completion_accuracy.csv";
  std::ofstream(acc_path, std::ios::binary) << acc_csv;
  std::printf("symbolic: %zu instances (%d skipped), top-1 %.3f, top-%d %.3f\n",
              sym.instances.size(), sym.skipped, acc.empty() ? 0.0 : acc.front(),
              cfg.completion_top_k, acc.empty() ? 0.0 : acc.back());

  CompletionSet fe = make_completion_instances(ds, EqKind::kFuncEval, cfg.seed,
                                               g, cfg.completion_max_instances);
  std::string mse_path = cfg.paths.out_dir + "/completion_min_mse.csv";
  if (!fe.instances.empty()) {
    rankings.clear();
    for (const CompletionInstance& inst : fe.instances)
      rankings.push_back(rank_candidates(model, fe, inst));
    std::vector<double> mse =
        top_k_min_mse_curve(fe, rankings, cfg.completion_top_k);
    std::string mse_csv = "k,min_mse\n";
    for (size_t k = 0; k < mse.size(); ++k) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", k + 1, mse[k]);
      mse_csv += buf;
    }
    std::ofstream(mse_path, std::ios::binary) << mse_csv;
    std::printf("funceval: %zu instances (%d skipped), top-1 MSE %.4f, "
                "top-%d MSE %.4f\n",
                fe.instances.size(), fe.skipped, mse.front(),
                cfg.completion_top_k, mse.back());
    std::printf("wrote %s and %s\n", acc_path.c_str(), mse_path.c_str());
  } else {
    std::printf("funceval: no eligible instances\n");
    std::printf("wrote %s\n", acc_path.c_str());
  }
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const Grammar& g = Grammar::standard();
  GradSuiteResult res = run_gradient_suite(100, cfg.seed, g);
  std::printf("checked %ld coordinates over %d model configs\n",
              res.coords_checked, res.configs);
  std::printf("max relative error %.3e (tolerance 1e-4)\n", res.max_rel_err);
  bool ok = res.max_rel_err < 1e-4;
  std::printf("%s\n", ok ? "PASS" : "FAIL");
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Math identity dataset generation, training, and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> arch_override, axioms_path, dataset_path,
      checkpoint_path, out_path;
  std::optional<bool> use_funceval;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "run configuration file");
    sub->add_option("--seed", seed, "master seed (overrides config)");
    return sub;
  };

  CLI::App* gen = add_common(app.add_subcommand(
      "gen", "generate a labeled dataset from the axiom file"));
  gen->add_option("--axioms", axioms_path, "axiom file (overrides config)");
  gen->add_option("--out", out_path, "dataset output path (overrides config)");

  CLI::App* train = add_common(
      app.add_subcommand("train", "train a model on a generated dataset"));
  train->add_option("--arch", arch_override,
                    "architecture: rnn, lstm, treenn, treelstm")
      ->check(CLI::IsMember({"rnn", "lstm", "treenn", "treelstm"}));
  train->add_option("--use-funceval", use_funceval,
                    "train on function-evaluation rows too");
  train->add_option("--dataset", dataset_path, "dataset path (overrides config)");
  train->add_option("--out", out_path, "checkpoint output path (overrides config)");

  CLI::App* eval = add_common(app.add_subcommand(
      "eval", "score a checkpoint on a dataset's train and test splits"));
  eval->add_option("--jobs", jobs, "parallel evaluation workers");
  eval->add_option("--dataset", dataset_path, "dataset path (overrides config)");
  eval->add_option("--checkpoint", checkpoint_path,
                   "checkpoint path (overrides config)");

  CLI::App* complete = add_common(app.add_subcommand(
      "complete", "rank candidate fills for blanked test equations"));
  complete->add_option("--jobs", jobs, "parallel evaluation workers");
  complete->add_option("--dataset", dataset_path,
                       "dataset path (overrides config)");
  complete->add_option("--checkpoint", checkpoint_path,
                       "checkpoint path (overrides config)");

  add_common(app.add_subcommand(
      "gradcheck", "check analytic gradients against finite differences"));

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load_config(config_path, seed, jobs);
    if (arch_override) cfg.arch = *parse_arch(*arch_override);
    if (use_funceval) cfg.training.use_funceval = *use_funceval;
    if (axioms_path) cfg.paths.axioms = *axioms_path;
    if (dataset_path) cfg.paths.dataset = *dataset_path;
    if (checkpoint_path) cfg.paths.checkpoint = *checkpoint_path;
    if (out_path) {
      if (gen->parsed()) cfg.paths.dataset = *out_path;
      if (train->parsed()) cfg.paths.checkpoint = *out_path;
    }

    if (gen->parsed()) return cmd_gen(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg);
    if (complete->parsed()) return cmd_complete(cfg);
    return cmd_gradcheck(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
