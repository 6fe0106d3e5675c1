#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bnlab/batchnorm.hpp"
#include "bnlab/ops.hpp"
#include "bnlab/prng.hpp"

namespace bnlab {

enum class Family { cifar_resnet, imagenet_resnet, vgg };
const char* family_name(Family f);
Family family_parse(const std::string& name);

enum class FeatureInit { he_normal, uniform, binarized, orthogonal };
const char* feature_init_name(FeatureInit s);
FeatureInit feature_init_parse(const std::string& name);

// Parameter groups of the four-way accounting: batchnorm (all gamma/beta,
// including the ones on projection shortcuts), output (final linear layer),
// shortcut (1x1 projection conv kernels), body (all other conv parameters).
enum class ParamGroup { batchnorm, output, shortcut, body, none };
const char* param_group_name(ParamGroup g);

// Width scale kept as an exact rational so fractional scales are legal
// whenever every stage width stays integral.
struct WidthScale {
  int num = 1;
  int den = 1;

  static WidthScale parse(const std::string& text);  // "2", "1/4", "0.25"
  int scaled(int base) const;  // base*num/den, ConfigError when non-integral
  bool integral(int base) const { return (static_cast<long long>(base) * num) % den == 0; }
  double value() const { return static_cast<double>(num) / den; }
  std::string str() const;
  bool operator==(const WidthScale&) const = default;
};

struct ArchSpec {
  Family family = Family::cifar_resnet;
  int depth = 14;
  WidthScale width;
  FeatureInit feature_init = FeatureInit::he_normal;
  BnInit bn_init = BnInit::uniform01_zero;
  // Display name: ResNet-D, WRN-D-W or VGG-D.
  std::string name() const;
};

enum class LayerKind { conv, batchnorm, relu, maxpool, avgpool, linear, residual_add };

// One step of the declarative plan. `input` indexes the producing layer
// (-1 = previous layer); residual_add consumes `input` and `input2`.
struct LayerDesc {
  LayerKind kind;
  std::string name;
  ParamGroup group = ParamGroup::none;
  int in_ch = 0, out_ch = 0, kernel = 0, stride = 1, padding = 0;  // conv / pools
  bool conv_bias = false;                                          // VGG-family convs
  int in_features = 0, out_features = 0;                           // linear
  int input = -1;
  int input2 = -1;
};

struct LayerPlan {
  ArchSpec spec;
  std::vector<LayerDesc> layers;
  int num_classes = 10;
};

// Declarative builders. Plans are cheap: no parameters are allocated.
LayerPlan make_cifar_resnet(int blocks_per_stage, WidthScale width);
LayerPlan make_imagenet_resnet(int depth);
LayerPlan make_vgg(int depth);
LayerPlan make_plan(const ArchSpec& spec);  // dispatches on family, validates depth

// Weight layers as the depth formula counts them: initial conv + block convs
// + output layer (projection shortcuts excluded).
int weight_layer_depth(const LayerPlan& plan);

// One human-readable line per layer (kind, name, shape parameters, group,
// explicit inputs); embedded in checkpoint manifests.
std::string layer_desc_str(const LayerDesc& d);
std::vector<std::string> plan_manifest(const LayerPlan& plan);

struct ParamCounts {
  long long total = 0;
  long long batchnorm = 0;
  long long output = 0;
  long long shortcut = 0;
  long long body = 0;
};
ParamCounts count_params(const LayerPlan& plan);

// A parameter (or statistics buffer) of a realized network.
struct ParamRef {
  std::string name;
  ParamGroup group;
  Tensor tensor;
  int layer_index;
};

// Realized network: the plan plus allocated, initialized parameters.
class Network {
 public:
  // Derives the weights/gamma streams from `init_seed` and applies the
  // plan's feature and batchnorm initialization schemes.
  static Network build(const LayerPlan& plan, uint64_t init_seed, Dtype dt = Dtype::f32);

  // Allocates zeroed parameters without initialization (checkpoint loading).
  static Network allocate(const LayerPlan& plan, Dtype dt = Dtype::f32);

  const LayerPlan& plan() const { return plan_; }
  Dtype dtype() const { return dtype_; }

  void set_mode(BnMode m);
  BnMode mode() const { return mode_; }

  // Runs the plan. `observer`, when set, sees every layer's output.
  using Observer = std::function<void(int layer_index, const LayerDesc&, const Tensor&)>;
  Tensor forward(const Tensor& x, Tape* tape = nullptr, const Observer& observer = nullptr);

  std::vector<ParamRef>& parameters() { return params_; }
  const std::vector<ParamRef>& parameters() const { return params_; }
  // Running statistics; saved in checkpoints but never optimizer-updated.
  std::vector<ParamRef> buffers() const;

  std::vector<BatchNormState*> bn_states();
  BatchNormState& bn_state(int layer_index) { return bn_[static_cast<size_t>(layer_index)].value(); }
  const Tensor& conv_kernel(int layer_index) const { return kernel_[static_cast<size_t>(layer_index)]; }

  void mark_stats_ready();  // statistics explicitly loaded

 private:
  LayerPlan plan_;
  Dtype dtype_ = Dtype::f32;
  BnMode mode_ = BnMode::train;
  // Per-layer slots, indexed like plan_.layers.
  std::vector<Tensor> kernel_;
  std::vector<Tensor> conv_bias_;
  std::vector<std::optional<BatchNormState>> bn_;
  std::vector<Tensor> lin_weight_;
  std::vector<Tensor> lin_bias_;
  std::vector<ParamRef> params_;

  void collect_params();
};

// Applies `scheme` to every conv kernel of the realized network; linear
// output weights are He-normal and biases zero under every scheme, conv
// biases (VGG) start at zero.
void init_features(Network& net, FeatureInit scheme, Prng& rng);

}  // namespace bnlab
