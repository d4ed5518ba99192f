#include "eqv/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <limits>

namespace eqv {

using ad::Param;
using ad::Tape;
using ad::Value;

void adam_step(std::span<Param* const> params, const TrainConfig& cfg) {
  for (Param* p : params) {
    p->steps += 1;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, p->steps);
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, p->steps);
    for (size_t i = 0; i < p->value.size(); ++i) {
      double g = p->grad[i] + cfg.l2 * p->value[i];
      p->m[i] = cfg.adam_beta1 * p->m[i] + (1.0 - cfg.adam_beta1) * g;
      p->v[i] = cfg.adam_beta2 * p->v[i] + (1.0 - cfg.adam_beta2) * g * g;
      p->value[i] -=
          cfg.lr * (p->m[i] / bc1) / (std::sqrt(p->v[i] / bc2) + cfg.adam_eps);
      p->grad[i] = 0.0;
    }
  }
}

uint64_t traincfg_digest(const TrainConfig& cfg) {
  std::string blob;
  auto add_bits = [&](double v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx;",
                  static_cast<unsigned long long>(std::bit_cast<uint64_t>(v)));
    blob += buf;
  };
  blob += std::to_string(cfg.epochs) + ";";
  add_bits(cfg.lr);
  add_bits(cfg.adam_beta1);
  add_bits(cfg.adam_beta2);
  add_bits(cfg.adam_eps);
  add_bits(cfg.l2);
  add_bits(cfg.dropout);
  blob += cfg.use_funceval ? "1;" : "0;";
  blob += std::to_string(cfg.autoencoder_passes) + ";";
  add_bits(cfg.funceval_margin);
  blob += std::to_string(cfg.seed) + ";";
  add_bits(cfg.calibration_fraction);
  return fnv1a(blob);
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_csv_header() {
  return "epoch,split,arch,accuracy,precision,recall,mse,"
         "depth1,depth2,depth3,depth4";
}

static void append_number(std::string& out, double v) {
  if (std::isnan(v)) {
    out += "nan";
    return;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  out += buf;
}

std::string metrics_csv_row(const Metrics& m) {
  std::string out = std::to_string(m.epoch);
  out += ',';
  out += split_name(m.split);
  out += ',';
  out += arch_name(m.arch);
  for (double v : {m.accuracy, m.precision, m.recall, m.mse, m.depth_acc[0],
                   m.depth_acc[1], m.depth_acc[2], m.depth_acc[3]}) {
    out += ',';
    append_number(out, v);
  }
  return out;
}

Metrics evaluate_model(Model& model, const Dataset& ds, Split split,
                       int epoch) {
  constexpr double kNan = std::numeric_limits<double>::quiet_NaN();
  Metrics m;
  m.epoch = epoch;
  m.split = split;
  m.arch = model.arch();

  long tp = 0, fp = 0, tn = 0, fn = 0;
  std::array<long, 4> depth_hit{}, depth_n{};
  double mse_sum = 0.0;
  long mse_n = 0;

  Tape t;
  for (const Record& r : ds.records) {
    if (r.split != split) continue;
    const Equation& eq = r.eq;
    bool actual = eq.label == Label::kCorrect;
    bool pred;
    t.reset();
    if (eq.kind == EqKind::kSymbolic) {
      pred = t.scalar_value(model.verify_logit(t, eq, 0.0, nullptr)) >= 0.0;
    } else {
      double sq = t.scalar_value(
          model.funceval_outputs(t, eq, 0.0, nullptr).sq_err);
      pred = sq <= model.funceval_threshold;
      mse_sum += sq;
      ++mse_n;
    }
    if (pred && actual) ++tp;
    else if (pred && !actual) ++fp;
    else if (!pred && !actual) ++tn;
    else ++fn;
    int depth = eq.depth();
    if (depth >= 1 && depth <= 4) {
      ++depth_n[depth - 1];
      if (pred == actual) ++depth_hit[depth - 1];
    }
  }

  long total = tp + fp + tn + fn;
  m.accuracy = total == 0 ? kNan : static_cast<double>(tp + tn) / total;
  m.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
  m.recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
  m.mse = mse_n == 0 ? kNan : mse_sum / mse_n;
  for (int d = 0; d < 4; ++d)
    m.depth_acc[d] = depth_n[d] == 0
                         ? kNan
                         : static_cast<double>(depth_hit[d]) / depth_n[d];
  return m;
}

// ---------------------------------------------------------------------------
// Autoencoder

double autoencoder_max_error(Model& model) {
  double worst = 0.0;
  Tape t;
  for (int cents : precision2_grid_cents()) {
    double v = cents / 100.0;
    t.reset();
    double out =
        t.scalar_value(model.decode_embedding(t, model.encode_number(t, v)));
    worst = std::max(worst, std::abs(out - v));
  }
  return worst;
}

void pretrain_autoencoder(Model& model, const TrainConfig& cfg) {
  std::vector<int> order = precision2_grid_cents();
  // Reconstruction wants to end in a fine-grained regime: decay the step
  // size a hundredfold across the run and skip weight decay entirely.
  TrainConfig pre = cfg;
  pre.l2 = 0.0;
  Tape t;
  for (int pass = 1; pass <= cfg.autoencoder_passes; ++pass) {
    double frac = cfg.autoencoder_passes > 1
                      ? static_cast<double>(pass - 1) /
                            (cfg.autoencoder_passes - 1)
                      : 1.0;
    pre.lr = cfg.lr * std::pow(0.01, frac);
    Rng rng(mix_seed(cfg.seed, 0xAE000 + static_cast<uint64_t>(pass)));
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.below(i)]);
    for (int cents : order) {
      double v = cents / 100.0;
      t.reset();
      Value out = model.decode_embedding(t, model.encode_number(t, v));
      t.backward(t.mse(out, t.scalar(v)));
      adam_step(t.touched(), pre);
    }
  }
}

// ---------------------------------------------------------------------------
// Threshold calibration

void calibrate_funceval_threshold(Model& model,
                                  std::span<const Equation* const> rows) {
  struct Point {
    double sq;
    bool correct;
  };
  std::vector<Point> pts;
  pts.reserve(rows.size());
  for (const Equation* eq : rows)
    pts.push_back({model.predict_sq_err(*eq), eq->label == Label::kCorrect});
  long pos = 0, neg = 0;
  for (const Point& p : pts) (p.correct ? pos : neg) += 1;
  if (pos == 0 || neg == 0)
    throw EqvError("threshold calibration needs both labels");

  std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
    return a.sq < b.sq;
  });

  // Sweep cuts between adjacent distinct scores; predicting Correct means
  // sq <= cut, so the running prefix counts give TPR/TNR directly.
  auto balanced = [&](long tp_at, long fp_at) {
    double tpr = static_cast<double>(tp_at) / pos;
    double tnr = static_cast<double>(neg - fp_at) / neg;
    return 0.5 * (tpr + tnr);
  };

  double best_cut = pts.front().sq - 1.0;  // everything predicted Incorrect
  double best = balanced(0, 0);
  long tp_at = 0, fp_at = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    (pts[i].correct ? tp_at : fp_at) += 1;
    if (i + 1 < pts.size() && pts[i + 1].sq == pts[i].sq) continue;
    double cut = i + 1 < pts.size() ? 0.5 * (pts[i].sq + pts[i + 1].sq)
                                    : pts[i].sq + 1.0;
    double b = balanced(tp_at, fp_at);
    if (b > best) {
      best = b;
      best_cut = cut;
    }
  }
  model.funceval_threshold = best_cut;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {
struct Example {
  const Equation* eq;
  double target = 0.0;  // Correct funceval rows: true value of the rhs
};
}  // namespace

static TrainResult run_training(Model model, const TrainConfig& tcfg,
                                const Dataset& ds, const Grammar& g,
                                int start_epoch) {
  (void)g;
  model.traincfg_digest = traincfg_digest(tcfg);
  model.dataset_digest = fnv1a(dataset_to_string(ds));

  // Models without the function-evaluation head are scored without its rows.
  Dataset eval_ds =
      tcfg.use_funceval ? ds : filter_dataset(ds, EqKind::kSymbolic);

  // A seeded slice of the funceval training rows never reaches the
  // optimizer; it exists to pick the decision threshold.
  std::vector<const Equation*> funceval_train;
  for (const Record& r : ds.records)
    if (r.split == Split::kTrain && r.eq.kind == EqKind::kFuncEval)
      funceval_train.push_back(&r.eq);
  std::vector<const Equation*> calibration;
  std::vector<bool> held_out(funceval_train.size(), false);
  if (tcfg.use_funceval && !funceval_train.empty()) {
    std::vector<size_t> idx(funceval_train.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    Rng rng(mix_seed(tcfg.seed, 0xCA11B));
    for (size_t i = idx.size(); i > 1; --i)
      std::swap(idx[i - 1], idx[rng.below(i)]);
    size_t take = static_cast<size_t>(
        std::ceil(tcfg.calibration_fraction * funceval_train.size()));
    take = std::min(take, funceval_train.size());
    auto has_both = [&] {
      bool pos = false, neg = false;
      for (const Equation* eq : calibration)
        (eq->label == Label::kCorrect ? pos : neg) = true;
      return pos && neg;
    };
    for (size_t i = 0; i < idx.size(); ++i) {
      // Tiny sets can land a one-label slice; extend until calibratable.
      if (i >= take && has_both()) break;
      calibration.push_back(funceval_train[idx[i]]);
      held_out[idx[i]] = true;
    }
    if (!has_both()) {  // degenerate data: train on everything, skip calibration
      calibration.clear();
      std::fill(held_out.begin(), held_out.end(), false);
    }
  }

  std::vector<Example> examples;
  {
    size_t fe_seen = 0;
    for (const Record& r : ds.records) {
      if (r.split != Split::kTrain) continue;
      if (r.eq.kind == EqKind::kFuncEval) {
        size_t pos = fe_seen++;
        if (!tcfg.use_funceval || held_out[pos]) continue;
        Example ex{&r.eq, 0.0};
        if (r.eq.label == Label::kCorrect) {
          auto target = eval_expr(r.eq.rhs, {});
          if (!target) continue;  // defensive; Correct rows always evaluate
          ex.target = *target;
        }
        examples.push_back(ex);
      } else {
        examples.push_back({&r.eq, 0.0});
      }
    }
  }

  TrainResult result{std::move(model), {}, {}};
  Model& m = result.model;

  std::vector<size_t> order(examples.size());

  Tape t;
  for (int epoch = start_epoch + 1; epoch <= tcfg.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(tcfg.seed, 0x5481 + static_cast<uint64_t>(epoch)));
    Rng drop_rng(mix_seed(tcfg.seed, 0xd809 + static_cast<uint64_t>(epoch)));
    // Shuffle from the identity so each epoch's order depends only on the
    // seed and epoch number; a resumed run then replays it exactly.
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.below(i)]);

    double loss_sum = 0.0;
    for (size_t i : order) {
      const Example& ex = examples[i];
      t.reset();
      Value loss;
      if (ex.eq->kind == EqKind::kSymbolic) {
        Value logit = m.verify_logit(t, *ex.eq, tcfg.dropout, &drop_rng);
        loss = t.bce_logit(logit, ex.eq->label == Label::kCorrect ? 1.0 : 0.0);
      } else {
        auto out = m.funceval_outputs(t, *ex.eq, tcfg.dropout, &drop_rng);
        if (ex.eq->label == Label::kCorrect) {
          loss = t.add(out.sq_err, t.mse(out.dec_rhs, t.scalar(ex.target)));
        } else {
          loss = t.relu_(t.add(t.scalar(tcfg.funceval_margin),
                               t.scale(out.sq_err, -1.0)));
        }
      }
      double lv = t.scalar_value(loss);
      if (!std::isfinite(lv))
        throw EqvError("training diverged: non-finite loss at epoch " +
                       std::to_string(epoch));
      loss_sum += lv;
      t.backward(loss);
      adam_step(t.touched(), tcfg);
    }
    result.epoch_loss.push_back(
        examples.empty() ? 0.0 : loss_sum / static_cast<double>(examples.size()));
    m.trained_epochs = epoch;

    bool log = epoch == tcfg.epochs ||
               (tcfg.log_every > 0 && epoch % tcfg.log_every == 0);
    if (!log) continue;
    if (tcfg.use_funceval && !calibration.empty())
      calibrate_funceval_threshold(m, calibration);
    result.history.push_back(evaluate_model(m, eval_ds, Split::kTrain, epoch));
    result.history.push_back(evaluate_model(m, eval_ds, Split::kTest, epoch));
  }
  return result;
}

TrainResult train_model(const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const Dataset& ds, const Grammar& g) {
  Model model(mcfg, g);
  if (tcfg.use_funceval) pretrain_autoencoder(model, tcfg);
  return run_training(std::move(model), tcfg, ds, g, 0);
}

TrainResult resume_training(Model model, const TrainConfig& tcfg,
                            const Dataset& ds, const Grammar& g) {
  int done = model.trained_epochs;
  return run_training(std::move(model), tcfg, ds, g, done);
}

}  // namespace eqv
