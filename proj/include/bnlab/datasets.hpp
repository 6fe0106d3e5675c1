#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bnlab/prng.hpp"
#include "bnlab/tensor.hpp"

namespace bnlab {

// Labeled image collection. Pixels live in [0,1]; `mean_image` is the
// per-pixel mean of the *training* split and is shared with the test split
// so evaluation never leaks test statistics.
struct Dataset {
  Tensor images;              // [N,3,H,W] f32
  std::vector<int> labels;    // in [0, classes)
  int classes = 10;
  Tensor mean_image;          // [3,H,W] f32
  std::string split;          // "train" or "test"

  int size() const { return images.defined() ? images.dim(0) : 0; }
  int height() const { return images.dim(2); }
  int width() const { return images.dim(3); }
};

struct DataPair {
  Dataset train;
  Dataset test;
};

// CIFAR-10 binary batches: data_batch_1..5.bin + test_batch.bin, records of
// 3073 bytes (label byte + 3072 channel-major pixel bytes). File sizes must
// be positive multiples of the record size; labels must be < 10. Pixels are
// scaled to [0,1]; the per-pixel mean is computed from the train split.
DataPair load_cifar10(const std::string& directory);

// Reads one batch file (fixture-sized files are fine).
void read_cifar_batch(const std::string& path, std::vector<uint8_t>& labels,
                      std::vector<uint8_t>& pixels);

struct SyntheticSpec {
  int classes = 10;
  int n = 2000;               // examples in the split; divisible by classes
  int image_size = 16;
  int clusters_per_class = 2;
  double separation = 1.0;    // 0 = no class signal
  double noise = 0.25;        // pixel noise std dev
};

// Class-conditional Gaussian-blob images: each class owns
// `clusters_per_class` fixed random templates; an example is
// clip01(0.5 + separation*(template-0.5) + N(0, noise^2)). Deterministic
// per (spec, seed); balanced labels.
Dataset synthetic_dataset(const SyntheticSpec& spec, uint64_t seed);

// Train + test splits sharing the same class templates (and the train
// split's normalization statistics).
DataPair synthetic_pair(const SyntheticSpec& spec, int n_test, uint64_t seed);

}  // namespace bnlab
