#pragma once

#include <string>
#include <vector>

#include "bnlab/architectures.hpp"
#include "bnlab/hyperparams.hpp"

namespace bnlab {

struct NamedTensor {
  std::string name;
  ParamGroup group = ParamGroup::none;
  bool is_buffer = false;  // running statistics, not a parameter
  Tensor tensor;
};

// Everything needed to rebuild and resume a run: the architecture manifest,
// normalization constants, mask provenance, recipe, seeds and position.
struct CheckpointMeta {
  int version = 1;
  ArchSpec arch;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;
  bool bn_stats_ready = false;
  std::string selector;  // empty when no mask was involved
  uint64_t mask_seed = 0;
  long long trainable_count = 0;
  long long total_params = 0;
  Hyperparams hp;
  int epoch = 0;
};

struct Checkpoint {
  CheckpointMeta meta;
  std::vector<NamedTensor> tensors;  // parameters then buffers, plan order

  const NamedTensor* find(const std::string& name) const;
  std::vector<ParamRef> param_refs() const;  // parameters only, as refs
};

// Snapshot of a realized network (values are deep-copied).
Checkpoint checkpoint_from(const Network& net, const CheckpointMeta& meta);

// Rebuilds the plan from the manifest and loads every tensor into place.
Network network_from(const Checkpoint& ckpt, Dtype dt = Dtype::f32);

// Binary container: magic, version, length-prefixed manifest (structured
// text), then per-tensor records (name, dtype tag, rank, extents, raw
// little-endian payload). Save is atomic (write to temp, rename). Loads
// reject unknown magic/version, tensor-count mismatches against the
// manifest, and shape mismatches, each with a distinct message.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace bnlab
