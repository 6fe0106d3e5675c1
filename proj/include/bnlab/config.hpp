#pragma once

#include <string>

#include "bnlab/architectures.hpp"
#include "bnlab/datasets.hpp"
#include "bnlab/hyperparams.hpp"

namespace bnlab {

// Run configuration; every field has a default matching the standard CIFAR
// recipe. Files are JSON; CLI flags override individual fields through
// config_set with dotted keys (e.g. "hp.epochs", "arch.depth").
struct RunConfig {
  ArchSpec arch;                    // cifar_resnet depth 14, width 1
  std::string selector = "all";
  Hyperparams hp;
  std::string dataset = "cifar10";  // "cifar10" | "synthetic"
  std::string data_dir;             // cifar10 batch directory
  SyntheticSpec synth;
  int synth_test_n = 1000;
  int replicates = 5;
  uint64_t base_seed = 1;
  bool augment = true;              // flip + translate (cifar10 recipe)
  std::string precision = "f32";    // "f32" | "f64"
  std::string out_dir = "runs/out";

  Dtype dtype() const;
};

RunConfig config_defaults();
RunConfig config_load(const std::string& path);
std::string config_to_json(const RunConfig& cfg);
void config_save(const std::string& path, const RunConfig& cfg);

// Sets one field by dotted key from its string form; throws ConfigError for
// unknown keys or unparsable values.
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);

// Full validation (architecture constraints, selector grammar, dataset
// choice, hyperparameter sanity). Throws ConfigError.
void config_validate(const RunConfig& cfg);

// Loads the dataset pair named by the config. Honors the data-directory
// environment variable (BNLAB_DATA_DIR) when data_dir is empty.
DataPair open_dataset(const RunConfig& cfg);

}  // namespace bnlab
