#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace bnlab {

// Optimization recipe. Defaults are the standard CIFAR recipe: 160 epochs,
// SGD momentum 0.9, batch 128, lr 0.1 dropping 10x at epochs 80 and 120,
// weight decay 1e-4, no warmup.
struct Hyperparams {
  int epochs = 160;
  int batch_size = 128;
  double base_lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  // (epoch, multiplier) entries; the lr at epoch e is base_lr times the
  // product of multipliers whose epoch <= e. Epochs strictly increasing.
  std::vector<std::pair<int, double>> schedule = {{80, 0.1}, {120, 0.1}};
  double warmup_epochs = 0.0;
  uint64_t seed_init = 1;
  uint64_t seed_data = 2;
  uint64_t seed_augment = 3;
};

struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  long n_examples = 0;
};

}  // namespace bnlab
