#pragma once

#include <string>
#include <string_view>

#include "eqv/tasks.hpp"

namespace eqv {

// Everything a run needs, read from one line-oriented config file:
//
//   seed = 7            # top-level keys first
//   [generation]
//   symbolic_total = 10000
//
// '#' and ';' start comments. Section and key names are fixed; an unknown
// name is an error, so typos cannot silently fall back to defaults.
// default_config_text() lists every key with its default and doubles as the
// format reference.
struct RunConfig {
  uint64_t seed = 0;
  int jobs = 1;  // read-only evaluation fan-out

  OracleConfig oracle;
  GenConfig generation;  // generation.oracle / .seed are filled from above

  Arch arch = Arch::kTreeLstm;
  int dim = 50;
  TrainConfig training;  // training.seed is filled from `seed`

  std::string experiment = "generalization";
  int extrapolation_depth = 4;
  int completion_top_k = 25;
  int completion_max_instances = 200;

  struct Paths {
    std::string axioms = "data/axioms.txt";
    std::string dataset = "out/dataset.tsv";
    std::string checkpoint = "out/model.ckpt";
    std::string metrics = "out/metrics.csv";
    std::string out_dir = "out";
  } paths;

  // Views with the cross-references (seed, oracle) resolved.
  GenConfig gen_config() const;
  TrainConfig train_config() const;
  ModelConfig model_config() const;
  ExperimentConfig experiment_config() const;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

// A complete config file: every key, its default, one comment each.
// parse_run_config(default_config_text()) yields exactly RunConfig{}.
std::string default_config_text();

}  // namespace eqv
