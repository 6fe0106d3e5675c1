#pragma once

#include <string>
#include <vector>

#include "bnlab/checkpoint.hpp"
#include "bnlab/datasets.hpp"
#include "bnlab/hyperparams.hpp"
#include "bnlab/trainability.hpp"

namespace bnlab {

// Velocity buffers for SGD with momentum; allocated per parameter tensor
// that has at least one trainable entry, zero-initialized.
struct OptimizerState {
  std::vector<Tensor> velocity;  // undefined Tensor for fully frozen params
  void init(const std::vector<ParamRef>& params, const TrainabilityMask& mask);
};

// Learning rate at a global iteration: linear per-iteration warmup from 0 to
// base_lr over warmup_epochs, then base_lr times the cumulative product of
// schedule multipliers whose epoch has been reached.
double lr_at(long iteration, long iterations_per_epoch, const Hyperparams& hp);

// One SGD step over trainable entries: g' = g + wd*p, v <- m*v + g',
// p <- p - lr*v. Frozen entries are untouched by both the update and the
// weight decay. Gradients must already be mask-gated.
void sgd_step(std::vector<ParamRef>& params, const TrainabilityMask& mask, OptimizerState& state,
              double lr, double momentum, double weight_decay);

// Standard CIFAR augmentation on one [3,H,W] f32 example, in place:
// coin-flip horizontal mirror, 4-pixel zero pad + random crop back to HxW.
// Mean subtraction happens separately in batch assembly.
void augment_flip_crop(float* image, int H, int W, Prng& rng);

// Assembles a normalized (and optionally augmented) batch of the requested
// dtype from dataset rows.
Tensor prepare_batch(const Dataset& data, const std::vector<int>& indices, Dtype dt, bool augment,
                     Prng* aug_rng, std::vector<int>* labels_out);

// Batch index ranges for one epoch. The final partial batch is kept; a
// trailing batch of a single example merges into its predecessor.
std::vector<std::pair<int, int>> batch_ranges(int n, int batch_size);

struct TrainLogRow {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  bool augment = false;
  int eval_batch_size = 256;
  bool log_to_stderr = false;
};

struct TrainResult {
  std::vector<TrainLogRow> log;
  EvalResult final_eval;
};

// Epoch loop: shuffled batches (a trailing batch of one example merges into
// its predecessor), train-mode BN, backward, mask gate, SGD step. Evaluates
// on `test` after each epoch. Throws DivergenceError on non-finite loss.
TrainResult train(Network& net, const TrainabilityMask& mask, const Dataset& train_data,
                  const Dataset& test_data, const Hyperparams& hp, const TrainOptions& opts = {});

// Top-1/top-k accuracy in eval mode; ties resolve to the lowest class
// index. `topk` (the second reported metric, 5 by default) must not exceed
// the class count.
EvalResult evaluate(Network& net, const Dataset& data, int batch_size = 256, int topk = 5);

std::string metrics_csv(const std::vector<TrainLogRow>& log);

struct ReplicateStats {
  std::vector<EvalResult> per_replicate;
  double mean_top1 = 0.0, std_top1 = 0.0;
  double mean_top5 = 0.0, std_top5 = 0.0;
};
// Sample mean / standard deviation (n-1 divisor; 0 when n == 1).
ReplicateStats aggregate_replicates(const std::vector<EvalResult>& results);

}  // namespace bnlab
