#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnlab/architectures.hpp"

namespace bnlab {

// Which parameters receive optimizer updates. Group terms compose by union;
// the random-k terms mark k kernel positions per output channel of every
// body conv (the per-feature substitute baseline) or k * channel-count
// positions anywhere in each body conv (the scattered variant).
struct GroupSelector {
  bool all = false;
  bool batchnorm = false;
  bool output = false;
  bool shortcut = false;
  bool body = false;
  int random_per_channel_k = 0;  // 0 = absent
  int random_scattered_k = 0;    // 0 = absent

  // Grammar: terms joined by '+' or ','. Terms: all | batchnorm | output |
  // shortcut | body | random_per_channel(k) | random_scattered(k).
  static GroupSelector parse(const std::string& text);
  std::string str() const;
  bool empty() const {
    return !all && !batchnorm && !output && !shortcut && !body && random_per_channel_k == 0 &&
           random_scattered_k == 0;
  }
};

// Per-parameter boolean gate, aligned with Network::parameters() order.
// Masks are immutable after creation; `seed` and `selector` record
// provenance so a mask can be rebuilt from a checkpoint manifest.
struct TrainabilityMask {
  std::vector<std::string> names;
  std::vector<ParamGroup> groups;
  std::vector<std::vector<uint8_t>> bits;
  std::string selector;
  uint64_t seed = 0;
  long long trainable = 0;
  long long total = 0;

  const std::vector<uint8_t>* find(const std::string& name) const;
  bool fully_trainable(size_t param_index) const;
  bool fully_frozen(size_t param_index) const;
};

// Builds the mask from the declarative plan (shapes and groups are known
// without realizing parameters). Random selection draws from the
// mask_selection stream of `seed`.
TrainabilityMask build_mask(const LayerPlan& plan, const GroupSelector& sel, uint64_t seed);

// Zeroes gradient entries of gated-off parameters. Parameters without an
// accumulator are left untouched (nothing flowed into them).
void apply_mask(std::vector<ParamRef>& params, const TrainabilityMask& mask);

// Propagates the mask onto requires_grad so fully frozen tensors skip
// gradient computation entirely.
void apply_mask_to_requires_grad(Network& net, const TrainabilityMask& mask);

struct FrozenCheck {
  std::vector<std::string> violations;   // frozen tensors that changed
  std::vector<std::string> changed;      // trainable tensors that changed
  long long frozen_params = 0;
  long long trainable_params = 0;
  long long changed_trainable_values = 0;
  double max_abs_delta_trainable = 0.0;
  bool ok() const { return violations.empty(); }
};

// Bit-exact comparison of two same-plan parameter sets under a mask.
FrozenCheck verify_frozen(const std::vector<ParamRef>& before,
                          const std::vector<ParamRef>& after, const TrainabilityMask& mask);

}  // namespace bnlab
