#include "bnlab/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace bnlab {

namespace {

constexpr int kCifarDim = 32;
constexpr size_t kCifarRecord = 1 + 3 * 32 * 32;

Tensor mean_image_of(const Tensor& images) {
  const int n = images.dim(0);
  const int chw = images.dim(1) * images.dim(2) * images.dim(3);
  Tensor mean = Tensor::zeros({images.dim(1), images.dim(2), images.dim(3)}, Dtype::f32);
  float* m = mean.data<float>();
  const float* px = images.data<float>();
  for (int i = 0; i < n; ++i) {
    const float* row = px + static_cast<size_t>(i) * chw;
    for (int j = 0; j < chw; ++j) m[j] += row[j];
  }
  for (int j = 0; j < chw; ++j) m[j] /= static_cast<float>(n);
  return mean;
}

}  // namespace

void read_cifar_batch(const std::string& path, std::vector<uint8_t>& labels,
                      std::vector<uint8_t>& pixels) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open dataset file: " + path);
  const auto size = static_cast<size_t>(f.tellg());
  if (size == 0 || size % kCifarRecord != 0)
    throw FormatError("dataset file " + path + " has size " + std::to_string(size) +
                      ", not a positive multiple of " + std::to_string(kCifarRecord));
  const size_t records = size / kCifarRecord;
  f.seekg(0);

  std::vector<uint8_t> buf(size);
  if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(size)))
    throw IoError("short read on dataset file: " + path);

  labels.reserve(labels.size() + records);
  pixels.reserve(pixels.size() + records * (kCifarRecord - 1));
  for (size_t r = 0; r < records; ++r) {
    const uint8_t label = buf[r * kCifarRecord];
    if (label >= 10)
      throw FormatError("dataset file " + path + " record " + std::to_string(r) +
                        " (offset " + std::to_string(r * kCifarRecord) + ") has label byte " +
                        std::to_string(static_cast<int>(label)));
    labels.push_back(label);
    pixels.insert(pixels.end(), buf.begin() + static_cast<long>(r * kCifarRecord + 1),
                  buf.begin() + static_cast<long>((r + 1) * kCifarRecord));
  }
}

namespace {

Dataset dataset_from_bytes(const std::vector<uint8_t>& labels, const std::vector<uint8_t>& pixels,
                           const std::string& split) {
  Dataset ds;
  ds.split = split;
  const int n = static_cast<int>(labels.size());
  ds.images = Tensor::zeros({n, 3, kCifarDim, kCifarDim}, Dtype::f32);
  float* px = ds.images.data<float>();
  for (size_t i = 0; i < pixels.size(); ++i)
    px[i] = static_cast<float>(pixels[i]) / 255.0f;
  ds.labels.assign(labels.begin(), labels.end());
  ds.classes = 10;
  return ds;
}

}  // namespace

DataPair load_cifar10(const std::string& directory) {
  std::vector<uint8_t> train_labels, train_pixels;
  for (int i = 1; i <= 5; ++i)
    read_cifar_batch(directory + "/data_batch_" + std::to_string(i) + ".bin", train_labels,
                     train_pixels);
  std::vector<uint8_t> test_labels, test_pixels;
  read_cifar_batch(directory + "/test_batch.bin", test_labels, test_pixels);

  DataPair pair;
  pair.train = dataset_from_bytes(train_labels, train_pixels, "train");
  pair.test = dataset_from_bytes(test_labels, test_pixels, "test");
  pair.train.mean_image = mean_image_of(pair.train.images);
  pair.test.mean_image = pair.train.mean_image;
  return pair;
}

namespace {

constexpr uint64_t kTemplateKey = 0x7E31;
constexpr uint64_t kNoiseKey = 0x105E;
constexpr uint64_t kClusterKey = 0xC105;
constexpr uint64_t kTestSplitKey = 0x7E57;

// Templates come from `template_seed` (shared across splits); per-example
// cluster choice and noise come from `sample_seed` (distinct per split).
Dataset generate_synthetic(const SyntheticSpec& spec, uint64_t template_seed,
                           uint64_t sample_seed, const char* split) {
  if (spec.classes < 2) throw ConfigError("synthetic dataset needs at least 2 classes");
  if (spec.n % spec.classes != 0)
    throw ConfigError("synthetic dataset size " + std::to_string(spec.n) +
                      " not divisible by " + std::to_string(spec.classes) + " classes");
  const size_t per = static_cast<size_t>(3) * spec.image_size * spec.image_size;

  Prng tpl_rng = Prng(template_seed).split(kTemplateKey);
  std::vector<float> tpl(static_cast<size_t>(spec.classes) * spec.clusters_per_class * per);
  for (auto& v : tpl) v = static_cast<float>(tpl_rng.next_double());

  Dataset ds;
  ds.split = split;
  ds.classes = spec.classes;
  ds.images = Tensor::zeros({spec.n, 3, spec.image_size, spec.image_size}, Dtype::f32);
  ds.labels.resize(static_cast<size_t>(spec.n));
  float* px = ds.images.data<float>();

  Prng noise_rng = Prng(sample_seed).split(kNoiseKey);
  Prng cluster_rng = Prng(sample_seed).split(kClusterKey);
  for (int i = 0; i < spec.n; ++i) {
    const int label = i % spec.classes;  // balanced by construction
    ds.labels[static_cast<size_t>(i)] = label;
    const size_t cluster = cluster_rng.next_below(static_cast<uint64_t>(spec.clusters_per_class));
    const float* t =
        tpl.data() + (static_cast<size_t>(label) * spec.clusters_per_class + cluster) * per;
    float* row = px + static_cast<size_t>(i) * per;
    for (size_t j = 0; j < per; ++j) {
      const double v = 0.5 + spec.separation * (static_cast<double>(t[j]) - 0.5) +
                       spec.noise * noise_rng.next_normal();
      row[j] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return ds;
}

}  // namespace

Dataset synthetic_dataset(const SyntheticSpec& spec, uint64_t seed) {
  Dataset ds = generate_synthetic(spec, seed, seed, "train");
  ds.mean_image = mean_image_of(ds.images);
  return ds;
}

DataPair synthetic_pair(const SyntheticSpec& spec, int n_test, uint64_t seed) {
  DataPair pair;
  pair.train = generate_synthetic(spec, seed, seed, "train");
  SyntheticSpec test_spec = spec;
  test_spec.n = n_test;
  pair.test = generate_synthetic(test_spec, seed, mix_seed(seed, kTestSplitKey), "test");
  pair.train.mean_image = mean_image_of(pair.train.images);
  pair.test.mean_image = pair.train.mean_image;
  return pair;
}

}  // namespace bnlab
