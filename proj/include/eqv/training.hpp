#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "eqv/datagen.hpp"
#include "eqv/models.hpp"

namespace eqv {

struct TrainConfig {
  int epochs = 50;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double l2 = 1e-5;
  double dropout = 0.2;
  // Adds function-evaluation rows to training, pretrains the number
  // autoencoder, and calibrates the squared-difference threshold.
  bool use_funceval = false;
  int autoencoder_passes = 2000;
  // Incorrect function-evaluation rows are pushed to keep at least this much
  // squared disagreement between the decoded sides.
  double funceval_margin = 0.05;
  uint64_t seed = 0;
  // Epochs between metric snapshots; the final epoch is always logged.
  int log_every = 10;
  // Fraction of the function-evaluation training rows held out (seeded) for
  // threshold calibration instead of being trained on.
  double calibration_fraction = 0.1;
};

// Digest of every field that affects the trained weights; recorded in
// checkpoints.
uint64_t traincfg_digest(const TrainConfig& cfg);

// One Adam update over exactly the given parameters, consuming whatever the
// backward pass left in their grad buffers (plus L2), then clearing those
// grads. Per-parameter step counts keep bias correction exact for parameters
// that only some examples touch.
void adam_step(std::span<ad::Param* const> params, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  int epoch = 0;
  Split split = Split::kTrain;
  Arch arch = Arch::kTreeLstm;
  double accuracy = 0.0;
  // w.r.t. the Correct class; 0 when there are no positive predictions
  // (resp. no positive rows), so a majority-Incorrect predictor scores 0.
  double precision = 0.0;
  double recall = 0.0;
  // Mean squared disagreement of the decoded sides over the split's
  // function-evaluation rows, both labels; NaN when the split has none.
  double mse = 0.0;
  std::array<double, 4> depth_acc{};  // accuracy at depth 1..4, NaN if absent
};

std::string metrics_csv_header();
std::string metrics_csv_row(const Metrics& m);

// Scores every record of `split`: symbolic rows through the verification
// head at probability 0.5, function-evaluation rows through the calibrated
// squared-difference threshold.
Metrics evaluate_model(Model& model, const Dataset& ds, Split split,
                       int epoch);

// ---------------------------------------------------------------------------
// Training

// decode(encode(v)) worst-case absolute error over the representable grid.
double autoencoder_max_error(Model& model);

// SGD passes over the value grid (shuffled per pass) on the reconstruction
// loss. Touches only the autoencoder parameters.
void pretrain_autoencoder(Model& model, const TrainConfig& cfg);

// Sets model.funceval_threshold to the squared-difference cut that maximizes
// balanced accuracy over the given rows (midpoint sweep; ties take the
// smallest cut). Throws when the rows carry only one label.
void calibrate_funceval_threshold(Model& model,
                                  std::span<const Equation* const> rows);

struct TrainResult {
  Model model;
  std::vector<Metrics> history;     // train and test rows per logged epoch
  std::vector<double> epoch_loss;   // mean per-example loss, one per epoch
};

// Full training run: optional autoencoder pretraining, per-epoch shuffled
// single-example Adam, periodic evaluation. A seeded tenth of the
// function-evaluation training rows is withheld from updates and used to
// calibrate the threshold at each logged epoch. Models trained without
// function-evaluation data are also evaluated without it. Throws if the loss
// goes non-finite.
TrainResult train_model(const ModelConfig& mcfg, const TrainConfig& tcfg,
                        const Dataset& ds, const Grammar& g);

// Continues a run that `train_model` started: `model.trained_epochs` names
// the last completed epoch, and the remaining epochs replay exactly as the
// uninterrupted run would have (per-epoch streams are derived, and the
// checkpoint carries the optimizer state).
TrainResult resume_training(Model model, const TrainConfig& tcfg,
                            const Dataset& ds, const Grammar& g);

}  // namespace eqv
