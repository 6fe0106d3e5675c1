#pragma once

#include <string>
#include <vector>

#include "bnlab/analysis.hpp"
#include "bnlab/config.hpp"

namespace bnlab {

struct RunSummary {
  int replicates = 0;
  long long trainable = 0;
  long long total_params = 0;
  ReplicateStats stats;
  std::vector<std::string> checkpoint_paths;  // final checkpoint per replicate
};

// Executes `cfg.replicates` independent runs. Replicate r varies exactly the
// three seed streams (init, data order, augmentation) keyed off base_seed.
// Writes, under cfg.out_dir:
//   config.json                 resolved configuration
//   replicate_<r>/init.bnck     parameters at initialization
//   replicate_<r>/final.bnck    parameters after training
//   replicate_<r>/metrics.csv   one row per epoch
//   summary.csv                 per-replicate finals plus mean/std rows
RunSummary run_replicates(const RunConfig& cfg, bool log_to_stderr = false);

// Seeds of one replicate, exposed so tests can reproduce runs exactly.
Hyperparams replicate_hyperparams(const RunConfig& cfg, int replicate);

// Parameter-accounting CSV. which = "table1" emits the 18 ResNet
// configurations (7 depths, 6 widths of the depth-14 net, 5 imagenet
// depths); "vgg" emits the 4 VGG configurations; "family:depth[:width]"
// emits a single row. Columns: family,name,depth,width,total,batchnorm,
// output,shortcut,batchnorm_pct,output_pct,shortcut_pct.
std::string param_table_csv(const std::string& which);

// Evaluation entry point working from files.
EvalResult evaluate_checkpoint(const std::string& ckpt_path, const RunConfig& dataset_cfg);

struct VerifyOutcome {
  FrozenCheck check;
  std::string report;  // human-readable summary
};

// Rebuilds the mask from the after-checkpoint's provenance (or an explicit
// selector/seed) and bit-compares parameters.
VerifyOutcome verify_checkpoints(const std::string& before_path, const std::string& after_path,
                                 const std::string& selector_override = "",
                                 bool has_seed_override = false, uint64_t seed_override = 0);

}  // namespace bnlab
