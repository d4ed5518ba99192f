#include "eqv/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

using namespace eqv;

namespace {

// Reference Adam written independently of the production code; one dense
// parameter trained for `n` steps with constant gradient.
double reference_adam(double value, double grad, int n, const TrainConfig& c) {
  double m = 0.0, v = 0.0;
  for (int s = 1; s <= n; ++s) {
    double g = grad + c.l2 * value;
    m = c.adam_beta1 * m + (1.0 - c.adam_beta1) * g;
    v = c.adam_beta2 * v + (1.0 - c.adam_beta2) * g * g;
    double mh = m / (1.0 - std::pow(c.adam_beta1, s));
    double vh = v / (1.0 - std::pow(c.adam_beta2, s));
    value -= c.lr * mh / (std::sqrt(vh) + c.adam_eps);
  }
  return value;
}

Dataset tiny_dataset() {
  const Grammar& g = Grammar::standard();
  Dataset ds;
  auto add = [&](const char* text, Label l, EqKind k, Split s) {
    ds.records.push_back(
        {parse_equation(text, g, l, k), s, Provenance::kAxiom});
  };
  // Symbolic block: simple identities and their broken variants.
  add("(+ x 0) = x", Label::kCorrect, EqKind::kSymbolic, Split::kTrain);
  add("(* x 1) = x", Label::kCorrect, EqKind::kSymbolic, Split::kTrain);
  add("(+ x y) = (+ y x)", Label::kCorrect, EqKind::kSymbolic, Split::kTrain);
  add("(* x y) = (* y x)", Label::kCorrect, EqKind::kSymbolic, Split::kTrain);
  add("(^ x 1) = x", Label::kCorrect, EqKind::kSymbolic, Split::kTrain);
  add("(+ x 1) = x", Label::kIncorrect, EqKind::kSymbolic, Split::kTrain);
  add("(* x 2) = x", Label::kIncorrect, EqKind::kSymbolic, Split::kTrain);
  add("(+ x y) = (* y x)", Label::kIncorrect, EqKind::kSymbolic,
      Split::kTrain);
  add("(sin x) = (cos x)", Label::kIncorrect, EqKind::kSymbolic,
      Split::kTrain);
  add("(^ x 2) = x", Label::kIncorrect, EqKind::kSymbolic, Split::kTrain);
  add("(* x 0) = 0", Label::kCorrect, EqKind::kSymbolic, Split::kTest);
  add("(+ x 2) = x", Label::kIncorrect, EqKind::kSymbolic, Split::kTest);
  // Function-evaluation block.
  add("(sin 0) = 0", Label::kCorrect, EqKind::kFuncEval, Split::kTrain);
  add("(+ 1 2) = 3", Label::kCorrect, EqKind::kFuncEval, Split::kTrain);
  add("(* 2 0.5) = 1", Label::kCorrect, EqKind::kFuncEval, Split::kTrain);
  add("(cos 0) = 0.5", Label::kIncorrect, EqKind::kFuncEval, Split::kTrain);
  add("(+ 1 1) = 3", Label::kIncorrect, EqKind::kFuncEval, Split::kTrain);
  add("(sin 1.57) = 1", Label::kCorrect, EqKind::kFuncEval, Split::kTest);
  add("(sin 1.57) = 0", Label::kIncorrect, EqKind::kFuncEval, Split::kTest);
  return ds;
}

}  // namespace

TEST_CASE("adam matches a reference implementation") {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.l2 = 0.0;
  ad::Param p("p", 2, 1);
  p.value = {1.0, -2.0};
  ad::Param* ps[] = {&p};
  for (int s = 0; s < 5; ++s) {
    p.grad = {0.5, -0.25};
    adam_step(ps, cfg);
  }
  CHECK(p.steps == 5);
  CHECK(p.grad[0] == 0.0);
  CHECK(p.grad[1] == 0.0);
  // Constant raw gradient and zero L2 make the closed-form reference exact.
  CHECK(p.value[0] == doctest::Approx(reference_adam(1.0, 0.5, 5, cfg))
                          .epsilon(1e-12));
  CHECK(p.value[1] == doctest::Approx(reference_adam(-2.0, -0.25, 5, cfg))
                          .epsilon(1e-12));
}

TEST_CASE("adam applies weight decay through the gradient") {
  TrainConfig cfg;
  cfg.l2 = 0.1;
  ad::Param p("p", 1, 1);
  p.value = {2.0};
  p.grad = {0.0};  // pure decay
  ad::Param* ps[] = {&p};
  adam_step(ps, cfg);
  CHECK(p.value[0] < 2.0);
  CHECK(p.value[0] == doctest::Approx(reference_adam(2.0, 0.0, 1, cfg))
                          .epsilon(1e-12));
}

TEST_CASE("sparsely touched params keep their own step counts") {
  TrainConfig cfg;
  ad::Param often("a", 1, 1), rarely("b", 1, 1);
  often.value = {1.0};
  rarely.value = {1.0};
  ad::Param* both[] = {&often, &rarely};
  ad::Param* first[] = {&often};
  for (int s = 0; s < 3; ++s) {
    often.grad = {0.1};
    adam_step(first, cfg);
  }
  often.grad = {0.1};
  rarely.grad = {0.1};
  adam_step(both, cfg);
  CHECK(often.steps == 4);
  CHECK(rarely.steps == 1);
  // The rare param's single update must look exactly like a first step.
  TrainConfig ref = cfg;
  CHECK(rarely.value[0] == doctest::Approx(reference_adam(1.0, 0.1, 1, ref))
                               .epsilon(1e-12));
}

TEST_CASE("metrics csv shape") {
  CHECK(metrics_csv_header() ==
        "epoch,split,arch,accuracy,precision,recall,mse,"
        "depth1,depth2,depth3,depth4");
  Metrics m;
  m.epoch = 7;
  m.split = Split::kTest;
  m.arch = Arch::kRnn;
  m.accuracy = 0.5;
  m.precision = 1.0 / 3.0;
  m.recall = 1.0;
  m.mse = std::numeric_limits<double>::quiet_NaN();
  m.depth_acc = {1.0, 0.25, std::numeric_limits<double>::quiet_NaN(), 0.0};
  CHECK(metrics_csv_row(m) ==
        "7,test,rnn,0.500000,0.333333,1.000000,nan,"
        "1.000000,0.250000,nan,0.000000");
}

TEST_CASE("evaluate_model agrees with per-record predictions") {
  Dataset ds = tiny_dataset();
  ModelConfig mc;
  mc.arch = Arch::kTreeNn;
  mc.dim = 8;
  mc.seed = 3;
  Model model(mc, Grammar::standard());
  model.funceval_threshold = 0.01;

  for (Split split : {Split::kTrain, Split::kTest}) {
    long hits = 0, total = 0, mse_n = 0;
    double mse_sum = 0.0;
    for (const Record& r : ds.records) {
      if (r.split != split) continue;
      bool actual = r.eq.label == Label::kCorrect;
      bool pred = r.eq.kind == EqKind::kSymbolic
                      ? model.predict_prob(r.eq) >= 0.5
                      : model.predict_sq_err(r.eq) <= model.funceval_threshold;
      hits += pred == actual;
      ++total;
      if (r.eq.kind == EqKind::kFuncEval) {
        mse_sum += model.predict_sq_err(r.eq);
        ++mse_n;
      }
    }
    Metrics m = evaluate_model(model, ds, split, 1);
    CHECK(m.accuracy == doctest::Approx(double(hits) / total).epsilon(1e-12));
    CHECK(m.mse == doctest::Approx(mse_sum / mse_n).epsilon(1e-12));
  }
}

TEST_CASE("evaluate_model scores a majority-negative predictor at zero "
          "precision and recall") {
  Dataset ds;
  const Grammar& g = Grammar::standard();
  // One Correct row that an untrained-threshold model will call Incorrect.
  ds.records.push_back({parse_equation("(sin 0) = 0", g, Label::kCorrect,
                                       EqKind::kFuncEval),
                        Split::kTrain, Provenance::kFuncEval});
  ModelConfig mc;
  mc.dim = 6;
  Model model(mc, g);
  model.funceval_threshold = -1.0;  // nothing passes
  Metrics m = evaluate_model(model, ds, Split::kTrain, 1);
  CHECK(m.accuracy == 0.0);
  CHECK(m.precision == 0.0);  // no positive predictions
  CHECK(m.recall == 0.0);     // positives exist but none retrieved
}

TEST_CASE("evaluate_model reports nan for empty strata") {
  Dataset ds;
  const Grammar& g = Grammar::standard();
  ds.records.push_back({parse_equation("(+ x 0) = x", g, Label::kCorrect,
                                       EqKind::kSymbolic),
                        Split::kTrain, Provenance::kAxiom});
  ModelConfig mc;
  mc.dim = 6;
  Model model(mc, g);
  Metrics m = evaluate_model(model, ds, Split::kTrain, 1);
  CHECK(!std::isnan(m.accuracy));
  CHECK(std::isnan(m.mse));             // no funceval rows
  CHECK(!std::isnan(m.depth_acc[1]));   // the one record sits at depth 2
  CHECK(std::isnan(m.depth_acc[3]));    // nothing at depth 4
  Metrics empty = evaluate_model(model, ds, Split::kTest, 1);
  CHECK(std::isnan(empty.accuracy));
}

TEST_CASE("autoencoder pretraining reduces reconstruction error") {
  ModelConfig mc;
  mc.arch = Arch::kTreeLstm;
  mc.dim = 16;
  mc.seed = 5;
  Model model(mc, Grammar::standard());
  double before = autoencoder_max_error(model);
  TrainConfig tc;
  tc.seed = 5;
  tc.autoencoder_passes = 25;
  pretrain_autoencoder(model, tc);
  double after = autoencoder_max_error(model);
  CHECK(after < before);
  CHECK(after < 0.5);
}

TEST_CASE("threshold calibration maximizes balanced accuracy") {
  Dataset ds = tiny_dataset();
  ModelConfig mc;
  mc.arch = Arch::kTreeNn;
  mc.dim = 8;
  mc.seed = 11;
  Model model(mc, Grammar::standard());
  std::vector<const Equation*> rows;
  for (const Record& r : ds.records)
    if (r.eq.kind == EqKind::kFuncEval && r.split == Split::kTrain)
      rows.push_back(&r.eq);
  calibrate_funceval_threshold(model, rows);

  // Recompute by brute force over every cut between consecutive scores.
  std::vector<std::pair<double, bool>> pts;
  for (const Equation* eq : rows)
    pts.push_back({model.predict_sq_err(*eq), eq->label == Label::kCorrect});
  auto balanced_at = [&](double cut) {
    long tp = 0, fn = 0, tn = 0, fp = 0;
    for (auto& [sq, correct] : pts) {
      bool pred = sq <= cut;
      if (correct) (pred ? tp : fn)++;
      else (pred ? fp : tn)++;
    }
    return 0.5 * (double(tp) / (tp + fn) + double(tn) / (tn + fp));
  };
  double best = 0.0;
  std::vector<double> cuts = {-1.0, 1e9};
  for (auto& [sq, c] : pts) cuts.push_back(sq);
  for (double cut : cuts) best = std::max(best, balanced_at(cut));
  CHECK(balanced_at(model.funceval_threshold) ==
        doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("threshold calibration rejects single-label rows") {
  const Grammar& g = Grammar::standard();
  Equation only = parse_equation("(sin 0) = 0", g, Label::kCorrect,
                                 EqKind::kFuncEval);
  ModelConfig mc;
  mc.dim = 6;
  Model model(mc, g);
  std::vector<const Equation*> rows = {&only, &only};
  CHECK_THROWS_AS(calibrate_funceval_threshold(model, rows), EqvError);
}

TEST_CASE("training runs deterministically and logs metrics") {
  Dataset ds = tiny_dataset();
  ModelConfig mc;
  mc.arch = Arch::kTreeNn;
  mc.dim = 8;
  mc.seed = 17;
  TrainConfig tc;
  tc.epochs = 8;
  tc.log_every = 4;
  tc.seed = 17;

  TrainResult a = train_model(mc, tc, ds, Grammar::standard());
  TrainResult b = train_model(mc, tc, ds, Grammar::standard());

  REQUIRE(a.history.size() == 4);  // epochs 4 and 8, train + test each
  CHECK(a.history[0].epoch == 4);
  CHECK(a.history[2].epoch == 8);
  CHECK(a.history[0].split == Split::kTrain);
  CHECK(a.history[1].split == Split::kTest);
  for (size_t i = 0; i < a.history.size(); ++i)
    CHECK(metrics_csv_row(a.history[i]) == metrics_csv_row(b.history[i]));
  REQUIRE(a.epoch_loss.size() == 8);
  for (size_t i = 0; i < a.epoch_loss.size(); ++i)
    CHECK(a.epoch_loss[i] == b.epoch_loss[i]);
  CHECK(a.model.trained_epochs == 8);
  CHECK(a.model.traincfg_digest == traincfg_digest(tc));

  auto pa = a.model.params();
  auto pb = b.model.params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    for (size_t j = 0; j < pa[i]->value.size(); ++j)
      CHECK(pa[i]->value[j] == pb[i]->value[j]);
}

TEST_CASE("training fits the tiny symbolic dataset") {
  Dataset ds = tiny_dataset();
  ModelConfig mc;
  mc.arch = Arch::kTreeLstm;
  mc.dim = 12;
  mc.seed = 1;
  TrainConfig tc;
  tc.epochs = 60;
  tc.log_every = 60;
  tc.dropout = 0.0;
  tc.seed = 1;
  TrainResult r = train_model(mc, tc, ds, Grammar::standard());
  // Ten linearly separable training rows: the model must nail them.
  CHECK(r.history.front().accuracy >= 0.9);
}

TEST_CASE("zero learning rate leaves weights untouched") {
  Dataset ds = tiny_dataset();
  ModelConfig mc;
  mc.arch = Arch::kTreeNn;
  mc.dim = 8;
  mc.seed = 29;
  TrainConfig tc;
  tc.epochs = 2;
  tc.lr = 0.0;
  tc.seed = 29;
  Model fresh(mc, Grammar::standard());
  TrainResult r = train_model(mc, tc, ds, Grammar::standard());
  auto pf = fresh.params();
  auto pr = r.model.params();
  REQUIRE(pf.size() == pr.size());
  for (size_t i = 0; i < pf.size(); ++i)
    for (size_t j = 0; j < pf[i]->value.size(); ++j)
      CHECK(pr[i]->value[j] == pf[i]->value[j]);
  // Optimizer state still advanced; only the step size was zero.
  bool any_steps = false;
  for (const ad::Param* p : pr) any_steps = any_steps || p->steps > 0;
  CHECK(any_steps);
}

TEST_CASE("training loss falls over the first epochs") {
  Dataset ds = tiny_dataset();
  ModelConfig mc;
  mc.arch = Arch::kTreeLstm;
  mc.dim = 12;
  mc.seed = 31;
  TrainConfig tc;
  tc.epochs = 5;
  tc.log_every = 5;
  tc.dropout = 0.0;
  tc.seed = 31;
  TrainResult r = train_model(mc, tc, ds, Grammar::standard());
  REQUIRE(r.epoch_loss.size() == 5);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  for (double l : r.epoch_loss) CHECK(std::isfinite(l));
}

TEST_CASE("resume reproduces an uninterrupted run exactly") {
  namespace fs = std::filesystem;
  Dataset ds = tiny_dataset();
  const Grammar& g = Grammar::standard();
  ModelConfig mc;
  mc.arch = Arch::kTreeLstm;
  mc.dim = 8;
  mc.seed = 41;
  TrainConfig full;
  full.epochs = 6;
  full.log_every = 3;
  full.use_funceval = true;
  full.autoencoder_passes = 10;
  full.seed = 41;

  TrainResult straight = train_model(mc, full, ds, g);

  TrainConfig half = full;
  half.epochs = 3;
  TrainResult part = train_model(mc, half, ds, g);
  fs::path file = fs::temp_directory_path() / "eqv_resume_test.ckpt";
  part.model.save(file.string());
  Model revived = Model::load(file.string(), g);
  CHECK(revived.trained_epochs == 3);
  TrainResult resumed = resume_training(std::move(revived), full, ds, g);
  fs::remove(file);

  // Final logged metrics and every weight must match bit for bit.
  REQUIRE(resumed.history.size() == 2);  // epoch 6, train + test
  CHECK(metrics_csv_row(resumed.history[0]) ==
        metrics_csv_row(straight.history[2]));
  CHECK(metrics_csv_row(resumed.history[1]) ==
        metrics_csv_row(straight.history[3]));
  CHECK(resumed.model.funceval_threshold == straight.model.funceval_threshold);
  auto ps = straight.model.params();
  auto pr = resumed.model.params();
  REQUIRE(ps.size() == pr.size());
  for (size_t i = 0; i < ps.size(); ++i) {
    CHECK(pr[i]->steps == ps[i]->steps);
    for (size_t j = 0; j < ps[i]->value.size(); ++j) {
      CHECK(pr[i]->value[j] == ps[i]->value[j]);
      CHECK(pr[i]->m[j] == ps[i]->m[j]);
      CHECK(pr[i]->v[j] == ps[i]->v[j]);
    }
  }
}

TEST_CASE("function-evaluation training wires the full objective") {
  Dataset ds = tiny_dataset();
  ModelConfig mc;
  mc.arch = Arch::kTreeLstm;
  mc.dim = 12;
  mc.seed = 9;
  TrainConfig tc;
  tc.epochs = 10;
  tc.log_every = 10;
  tc.use_funceval = true;
  tc.autoencoder_passes = 15;
  tc.seed = 9;
  TrainResult r = train_model(mc, tc, ds, Grammar::standard());
  const Metrics& train = r.history.front();
  CHECK(!std::isnan(train.mse));  // Correct funceval rows were scored
  // Calibration ran: the threshold moved off its zero default.
  CHECK(r.model.funceval_threshold != 0.0);
}
