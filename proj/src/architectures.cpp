#include "bnlab/architectures.hpp"

#include <cmath>
#include <numeric>

namespace bnlab {

const char* family_name(Family f) {
  switch (f) {
    case Family::cifar_resnet: return "cifar_resnet";
    case Family::imagenet_resnet: return "imagenet_resnet";
    case Family::vgg: return "vgg";
  }
  return "?";
}

Family family_parse(const std::string& name) {
  if (name == "cifar_resnet" || name == "cifar") return Family::cifar_resnet;
  if (name == "imagenet_resnet" || name == "imagenet") return Family::imagenet_resnet;
  if (name == "vgg") return Family::vgg;
  throw ConfigError("unknown architecture family: " + name);
}

const char* feature_init_name(FeatureInit s) {
  switch (s) {
    case FeatureInit::he_normal: return "he_normal";
    case FeatureInit::uniform: return "uniform";
    case FeatureInit::binarized: return "binarized";
    case FeatureInit::orthogonal: return "orthogonal";
  }
  return "?";
}

FeatureInit feature_init_parse(const std::string& name) {
  if (name == "he_normal") return FeatureInit::he_normal;
  if (name == "uniform") return FeatureInit::uniform;
  if (name == "binarized") return FeatureInit::binarized;
  if (name == "orthogonal") return FeatureInit::orthogonal;
  throw ConfigError("unknown feature init scheme: " + name);
}

const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::batchnorm: return "batchnorm";
    case ParamGroup::output: return "output";
    case ParamGroup::shortcut: return "shortcut";
    case ParamGroup::body: return "body";
    case ParamGroup::none: return "none";
  }
  return "?";
}

WidthScale WidthScale::parse(const std::string& text) {
  WidthScale w;
  auto slash = text.find('/');
  try {
    if (slash != std::string::npos) {
      w.num = std::stoi(text.substr(0, slash));
      w.den = std::stoi(text.substr(slash + 1));
    } else if (text.find('.') != std::string::npos) {
      // Decimal widths become exact rationals over a power of ten.
      const auto dot = text.find('.');
      const std::string frac = text.substr(dot + 1);
      if (frac.size() > 6) throw ConfigError("width scale has too many decimals: " + text);
      long long den = 1;
      for (size_t i = 0; i < frac.size(); ++i) den *= 10;
      w.num = static_cast<int>(std::stoll(text.substr(0, dot)) * den + std::stoll(frac));
      w.den = static_cast<int>(den);
    } else {
      w.num = std::stoi(text);
      w.den = 1;
    }
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse width scale: " + text);
  }
  if (w.num <= 0 || w.den <= 0) throw ConfigError("width scale must be positive: " + text);
  const int g = std::gcd(w.num, w.den);
  w.num /= g;
  w.den /= g;
  return w;
}

int WidthScale::scaled(int base) const {
  const long long v = static_cast<long long>(base) * num;
  if (v % den != 0)
    throw ConfigError("width scale " + str() + " gives non-integral channel count for base " +
                      std::to_string(base));
  return static_cast<int>(v / den);
}

std::string WidthScale::str() const {
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

std::string ArchSpec::name() const {
  switch (family) {
    case Family::cifar_resnet:
      if (width.num == width.den) return "ResNet-" + std::to_string(depth);
      return "WRN-" + std::to_string(depth) + "-" + width.str();
    case Family::imagenet_resnet:
      return "ResNet-" + std::to_string(depth);
    case Family::vgg:
      return "VGG-" + std::to_string(depth);
  }
  return "?";
}

namespace {

std::string stage_block(int stage, int block) {
  return "stage" + std::to_string(stage) + "/block" + std::to_string(block);
}

int push(LayerPlan& plan, LayerDesc d) {
  plan.layers.push_back(std::move(d));
  return static_cast<int>(plan.layers.size()) - 1;
}

int push_conv(LayerPlan& plan, const std::string& name, ParamGroup group, int in_ch, int out_ch,
              int kernel, int stride, int padding, int input = -1, bool bias = false) {
  LayerDesc d;
  d.kind = LayerKind::conv;
  d.name = name;
  d.group = group;
  d.in_ch = in_ch;
  d.out_ch = out_ch;
  d.kernel = kernel;
  d.stride = stride;
  d.padding = padding;
  d.input = input;
  d.conv_bias = bias;
  return push(plan, std::move(d));
}

int push_bn(LayerPlan& plan, const std::string& name, int channels, int input = -1) {
  LayerDesc d;
  d.kind = LayerKind::batchnorm;
  d.name = name;
  d.group = ParamGroup::batchnorm;
  d.in_ch = channels;
  d.out_ch = channels;
  d.input = input;
  return push(plan, std::move(d));
}

int push_relu(LayerPlan& plan, const std::string& name) {
  LayerDesc d;
  d.kind = LayerKind::relu;
  d.name = name;
  return push(plan, std::move(d));
}

int push_add(LayerPlan& plan, const std::string& name, int a, int b) {
  LayerDesc d;
  d.kind = LayerKind::residual_add;
  d.name = name;
  d.input = a;
  d.input2 = b;
  return push(plan, std::move(d));
}

}  // namespace

LayerPlan make_cifar_resnet(int blocks_per_stage, WidthScale width) {
  if (blocks_per_stage < 1) throw ConfigError("cifar_resnet needs at least one block per stage");
  for (int base : {16, 32, 64})
    if (!width.integral(base))
      throw ConfigError("width scale " + width.str() + " gives non-integral channels at base " +
                        std::to_string(base));

  LayerPlan plan;
  plan.spec.family = Family::cifar_resnet;
  plan.spec.depth = 6 * blocks_per_stage + 2;
  plan.spec.width = width;
  plan.num_classes = 10;

  const int widths[3] = {width.scaled(16), width.scaled(32), width.scaled(64)};

  push_conv(plan, "init/conv", ParamGroup::body, 3, widths[0], 3, 1, 1);
  push_bn(plan, "init/bn", widths[0]);
  push_relu(plan, "init/relu");

  int in_ch = widths[0];
  for (int s = 0; s < 3; ++s) {
    const int C = widths[s];
    for (int b = 0; b < blocks_per_stage; ++b) {
      const std::string prefix = stage_block(s + 1, b);
      // Stage 1 never downsamples; stages 2 and 3 downsample in block 0 and
      // take a projection shortcut there, identity shortcuts elsewhere.
      const bool project = s > 0 && b == 0;
      const int stride = project ? 2 : 1;
      const int fork = static_cast<int>(plan.layers.size()) - 1;

      push_conv(plan, prefix + "/conv1", ParamGroup::body, in_ch, C, 3, stride, 1);
      push_bn(plan, prefix + "/bn1", C);
      push_relu(plan, prefix + "/relu1");
      push_conv(plan, prefix + "/conv2", ParamGroup::body, C, C, 3, 1, 1);
      const int main_out = push_bn(plan, prefix + "/bn2", C);

      int skip_out = fork;
      if (project) {
        const int sc = push_conv(plan, prefix + "/shortcut/conv", ParamGroup::shortcut, in_ch, C,
                                 1, 2, 0, fork);
        skip_out = push_bn(plan, prefix + "/shortcut/bn", C, sc);
      }
      push_add(plan, prefix + "/add", main_out, skip_out);
      push_relu(plan, prefix + "/relu2");
      in_ch = C;
    }
  }

  LayerDesc pool;
  pool.kind = LayerKind::avgpool;
  pool.name = "head/avgpool";
  push(plan, std::move(pool));

  LayerDesc lin;
  lin.kind = LayerKind::linear;
  lin.name = "output/linear";
  lin.group = ParamGroup::output;
  lin.in_features = widths[2];
  lin.out_features = plan.num_classes;
  push(plan, std::move(lin));
  return plan;
}

namespace {

struct ImagenetShape {
  bool bottleneck;
  int counts[4];
};

ImagenetShape imagenet_shape(int depth) {
  switch (depth) {
    case 18: return {false, {2, 2, 2, 2}};
    case 34: return {false, {3, 4, 6, 3}};
    case 50: return {true, {3, 4, 6, 3}};
    case 101: return {true, {3, 4, 23, 3}};
    case 200: return {true, {3, 24, 36, 3}};
    default:
      throw ConfigError("imagenet_resnet depth must be one of 18/34/50/101/200, got " +
                        std::to_string(depth));
  }
}

}  // namespace

LayerPlan make_imagenet_resnet(int depth) {
  const ImagenetShape shape = imagenet_shape(depth);
  const int expansion = shape.bottleneck ? 4 : 1;

  LayerPlan plan;
  plan.spec.family = Family::imagenet_resnet;
  plan.spec.depth = depth;
  plan.num_classes = 1000;

  push_conv(plan, "init/conv", ParamGroup::body, 3, 64, 7, 2, 3);
  push_bn(plan, "init/bn", 64);
  push_relu(plan, "init/relu");
  {
    LayerDesc mp;
    mp.kind = LayerKind::maxpool;
    mp.name = "init/maxpool";
    mp.kernel = 3;
    mp.stride = 2;
    mp.padding = 1;
    push(plan, std::move(mp));
  }

  int in_ch = 64;
  for (int s = 0; s < 4; ++s) {
    const int C = 64 << s;
    const int out_ch = C * expansion;
    for (int b = 0; b < shape.counts[s]; ++b) {
      const std::string prefix = stage_block(s + 1, b);
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const bool project = b == 0 && (stride != 1 || in_ch != out_ch);
      const int fork = static_cast<int>(plan.layers.size()) - 1;

      int main_out;
      if (shape.bottleneck) {
        // 1x1 down, 3x3 (strided when downsampling), 1x1 up.
        push_conv(plan, prefix + "/conv1", ParamGroup::body, in_ch, C, 1, 1, 0);
        push_bn(plan, prefix + "/bn1", C);
        push_relu(plan, prefix + "/relu1");
        push_conv(plan, prefix + "/conv2", ParamGroup::body, C, C, 3, stride, 1);
        push_bn(plan, prefix + "/bn2", C);
        push_relu(plan, prefix + "/relu2");
        push_conv(plan, prefix + "/conv3", ParamGroup::body, C, out_ch, 1, 1, 0);
        main_out = push_bn(plan, prefix + "/bn3", out_ch);
      } else {
        push_conv(plan, prefix + "/conv1", ParamGroup::body, in_ch, C, 3, stride, 1);
        push_bn(plan, prefix + "/bn1", C);
        push_relu(plan, prefix + "/relu1");
        push_conv(plan, prefix + "/conv2", ParamGroup::body, C, C, 3, 1, 1);
        main_out = push_bn(plan, prefix + "/bn2", C);
      }

      int skip_out = fork;
      if (project) {
        const int sc = push_conv(plan, prefix + "/shortcut/conv", ParamGroup::shortcut, in_ch,
                                 out_ch, 1, stride, 0, fork);
        skip_out = push_bn(plan, prefix + "/shortcut/bn", out_ch, sc);
      }
      push_add(plan, prefix + "/add", main_out, skip_out);
      push_relu(plan, prefix + "/relu_out");
      in_ch = out_ch;
    }
  }

  LayerDesc pool;
  pool.kind = LayerKind::avgpool;
  pool.name = "head/avgpool";
  push(plan, std::move(pool));

  LayerDesc lin;
  lin.kind = LayerKind::linear;
  lin.group = ParamGroup::output;
  lin.name = "output/linear";
  lin.in_features = 512 * expansion;
  lin.out_features = plan.num_classes;
  push(plan, std::move(lin));
  return plan;
}

LayerPlan make_vgg(int depth) {
  // Channel sequences; M marks a stride-2 max-pool.
  static const int kM = -1;
  std::vector<int> cfg;
  switch (depth) {
    case 11: cfg = {64, kM, 128, kM, 256, 256, kM, 512, 512, kM, 512, 512}; break;
    case 13: cfg = {64, 64, kM, 128, 128, kM, 256, 256, kM, 512, 512, kM, 512, 512}; break;
    case 16:
      cfg = {64, 64, kM, 128, 128, kM, 256, 256, 256, kM, 512, 512, 512, kM, 512, 512, 512};
      break;
    case 19:
      cfg = {64, 64, kM, 128, 128, kM, 256, 256, 256, 256, kM,
             512, 512, 512, 512, kM, 512, 512, 512, 512};
      break;
    default:
      throw ConfigError("vgg depth must be one of 11/13/16/19, got " + std::to_string(depth));
  }

  LayerPlan plan;
  plan.spec.family = Family::vgg;
  plan.spec.depth = depth;
  plan.num_classes = 10;

  int in_ch = 3;
  int conv_idx = 0, pool_idx = 0;
  for (int entry : cfg) {
    if (entry == kM) {
      LayerDesc mp;
      mp.kind = LayerKind::maxpool;
      mp.name = "features/pool" + std::to_string(pool_idx++);
      mp.kernel = 2;
      mp.stride = 2;
      mp.padding = 0;
      push(plan, std::move(mp));
      continue;
    }
    const std::string name = "features/conv" + std::to_string(conv_idx++);
    // These convs keep their redundant bias vector; the reference family
    // counts it even though the following BatchNorm absorbs it.
    push_conv(plan, name, ParamGroup::body, in_ch, entry, 3, 1, 1, -1, /*bias=*/true);
    push_bn(plan, name + "/bn", entry);
    push_relu(plan, name + "/relu");
    in_ch = entry;
  }

  LayerDesc pool;
  pool.kind = LayerKind::avgpool;
  pool.name = "head/avgpool";
  push(plan, std::move(pool));

  LayerDesc lin;
  lin.kind = LayerKind::linear;
  lin.group = ParamGroup::output;
  lin.name = "output/linear";
  lin.in_features = in_ch;
  lin.out_features = plan.num_classes;
  push(plan, std::move(lin));
  return plan;
}

LayerPlan make_plan(const ArchSpec& spec) {
  LayerPlan plan;
  switch (spec.family) {
    case Family::cifar_resnet: {
      if (spec.depth < 8 || (spec.depth - 2) % 6 != 0)
        throw ConfigError("cifar_resnet depth must satisfy depth = 6N+2 for integer N >= 1; " +
                          std::to_string(spec.depth) + " does not");
      plan = make_cifar_resnet((spec.depth - 2) / 6, spec.width);
      break;
    }
    case Family::imagenet_resnet:
      if (!(spec.width == WidthScale{}))
        throw ConfigError("imagenet_resnet supports width scale 1 only");
      plan = make_imagenet_resnet(spec.depth);
      break;
    case Family::vgg:
      if (!(spec.width == WidthScale{}))
        throw ConfigError("vgg supports width scale 1 only");
      plan = make_vgg(spec.depth);
      break;
  }
  plan.spec.feature_init = spec.feature_init;
  plan.spec.bn_init = spec.bn_init;
  return plan;
}

int weight_layer_depth(const LayerPlan& plan) {
  int n = 0;
  for (const auto& d : plan.layers) {
    if (d.kind == LayerKind::conv && d.group == ParamGroup::body) ++n;
    if (d.kind == LayerKind::linear) ++n;
  }
  return n;
}

std::string layer_desc_str(const LayerDesc& d) {
  std::string s;
  switch (d.kind) {
    case LayerKind::conv:
      s = "conv " + d.name + " " + std::to_string(d.in_ch) + "->" + std::to_string(d.out_ch) +
          " k" + std::to_string(d.kernel) + " s" + std::to_string(d.stride) + " p" +
          std::to_string(d.padding) + (d.conv_bias ? " bias" : "") + " " +
          param_group_name(d.group);
      break;
    case LayerKind::batchnorm:
      s = "batchnorm " + d.name + " " + std::to_string(d.out_ch);
      break;
    case LayerKind::relu:
      s = "relu " + d.name;
      break;
    case LayerKind::maxpool:
      s = "maxpool " + d.name + " k" + std::to_string(d.kernel) + " s" +
          std::to_string(d.stride) + " p" + std::to_string(d.padding);
      break;
    case LayerKind::avgpool:
      s = "avgpool " + d.name;
      break;
    case LayerKind::linear:
      s = "linear " + d.name + " " + std::to_string(d.in_features) + "->" +
          std::to_string(d.out_features) + " " + param_group_name(d.group);
      break;
    case LayerKind::residual_add:
      s = "add " + d.name + " [" + std::to_string(d.input) + "," + std::to_string(d.input2) +
          "]";
      break;
  }
  if (d.kind != LayerKind::residual_add && d.input != -1)
    s += " [" + std::to_string(d.input) + "]";
  return s;
}

std::vector<std::string> plan_manifest(const LayerPlan& plan) {
  std::vector<std::string> lines;
  lines.reserve(plan.layers.size());
  for (const auto& d : plan.layers) lines.push_back(layer_desc_str(d));
  return lines;
}

ParamCounts count_params(const LayerPlan& plan) {
  ParamCounts c;
  for (const auto& d : plan.layers) {
    switch (d.kind) {
      case LayerKind::conv: {
        long long n = static_cast<long long>(d.out_ch) * d.in_ch * d.kernel * d.kernel;
        if (d.conv_bias) n += d.out_ch;
        if (d.group == ParamGroup::shortcut)
          c.shortcut += n;
        else
          c.body += n;
        break;
      }
      case LayerKind::batchnorm:
        c.batchnorm += 2LL * d.out_ch;
        break;
      case LayerKind::linear:
        c.output += static_cast<long long>(d.out_features) * d.in_features + d.out_features;
        break;
      default:
        break;
    }
  }
  c.total = c.batchnorm + c.output + c.shortcut + c.body;
  return c;
}

Network Network::allocate(const LayerPlan& plan, Dtype dt) {
  Network net;
  net.plan_ = plan;
  net.dtype_ = dt;
  const size_t L = plan.layers.size();
  net.kernel_.resize(L);
  net.conv_bias_.resize(L);
  net.bn_.resize(L);
  net.lin_weight_.resize(L);
  net.lin_bias_.resize(L);

  for (size_t i = 0; i < L; ++i) {
    const LayerDesc& d = plan.layers[i];
    switch (d.kind) {
      case LayerKind::conv:
        net.kernel_[i] =
            Tensor::zeros({d.out_ch, d.in_ch, d.kernel, d.kernel}, dt).set_requires_grad(true);
        if (d.conv_bias)
          net.conv_bias_[i] = Tensor::zeros({d.out_ch}, dt).set_requires_grad(true);
        break;
      case LayerKind::batchnorm: {
        BatchNormState st;
        st.gamma = Tensor::zeros({d.out_ch}, dt).set_requires_grad(true);
        st.beta = Tensor::zeros({d.out_ch}, dt).set_requires_grad(true);
        st.running_mean = Tensor::zeros({d.out_ch}, dt);
        st.running_var = Tensor::full({d.out_ch}, 1.0, dt);
        net.bn_[i] = std::move(st);
        break;
      }
      case LayerKind::linear:
        net.lin_weight_[i] =
            Tensor::zeros({d.out_features, d.in_features}, dt).set_requires_grad(true);
        net.lin_bias_[i] = Tensor::zeros({d.out_features}, dt).set_requires_grad(true);
        break;
      default:
        break;
    }
  }
  net.collect_params();
  return net;
}

Network Network::build(const LayerPlan& plan, uint64_t init_seed, Dtype dt) {
  Network net = allocate(plan, dt);
  Prng root(init_seed);
  Prng weights_rng = root.split(RngStream::weights);
  Prng gamma_rng = root.split(RngStream::gamma);

  init_features(net, plan.spec.feature_init, weights_rng);

  for (size_t i = 0; i < plan.layers.size(); ++i) {
    if (plan.layers[i].kind != LayerKind::batchnorm) continue;
    BatchNormState st = bn_init(plan.layers[i].out_ch, plan.spec.bn_init, gamma_rng, dt);
    st.mode = net.mode_;
    net.bn_[i] = std::move(st);
  }
  net.collect_params();
  return net;
}

void Network::collect_params() {
  params_.clear();
  for (size_t i = 0; i < plan_.layers.size(); ++i) {
    const LayerDesc& d = plan_.layers[i];
    const int li = static_cast<int>(i);
    switch (d.kind) {
      case LayerKind::conv:
        params_.push_back({d.name + "/kernel", d.group, kernel_[i], li});
        if (d.conv_bias) params_.push_back({d.name + "/bias", d.group, conv_bias_[i], li});
        break;
      case LayerKind::batchnorm:
        params_.push_back({d.name + "/gamma", ParamGroup::batchnorm, bn_[i]->gamma, li});
        params_.push_back({d.name + "/beta", ParamGroup::batchnorm, bn_[i]->beta, li});
        break;
      case LayerKind::linear:
        params_.push_back({d.name + "/weight", ParamGroup::output, lin_weight_[i], li});
        params_.push_back({d.name + "/bias", ParamGroup::output, lin_bias_[i], li});
        break;
      default:
        break;
    }
  }
}

std::vector<ParamRef> Network::buffers() const {
  std::vector<ParamRef> out;
  for (size_t i = 0; i < plan_.layers.size(); ++i) {
    if (!bn_[i]) continue;
    const LayerDesc& d = plan_.layers[i];
    out.push_back({d.name + "/running_mean", ParamGroup::none, bn_[i]->running_mean,
                   static_cast<int>(i)});
    out.push_back({d.name + "/running_var", ParamGroup::none, bn_[i]->running_var,
                   static_cast<int>(i)});
  }
  return out;
}

std::vector<BatchNormState*> Network::bn_states() {
  std::vector<BatchNormState*> out;
  for (auto& st : bn_)
    if (st) out.push_back(&*st);
  return out;
}

void Network::set_mode(BnMode m) {
  mode_ = m;
  for (auto& st : bn_)
    if (st) st->mode = m;
}

void Network::mark_stats_ready() {
  for (auto& st : bn_)
    if (st) st->stats_ready = true;
}

Tensor Network::forward(const Tensor& x, Tape* tape, const Observer& observer) {
  std::vector<Tensor> outs(plan_.layers.size());
  Tensor prev = x;
  for (size_t i = 0; i < plan_.layers.size(); ++i) {
    const LayerDesc& d = plan_.layers[i];
    Tensor in = d.input == -1 ? prev : outs[static_cast<size_t>(d.input)];
    Tensor out;
    switch (d.kind) {
      case LayerKind::conv:
        out = ops::conv2d(in, kernel_[i], d.stride, d.padding, tape);
        if (d.conv_bias) out = ops::channel_bias(out, conv_bias_[i], tape);
        break;
      case LayerKind::batchnorm:
        out = mode_ == BnMode::train ? bn_forward_train(in, *bn_[i], tape)
                                     : bn_forward_eval(in, *bn_[i]);
        break;
      case LayerKind::relu:
        out = ops::relu(in, tape);
        break;
      case LayerKind::maxpool:
        out = ops::maxpool2d(in, d.kernel, d.stride, d.padding, tape);
        break;
      case LayerKind::avgpool:
        out = ops::avgpool_global(in, tape);
        break;
      case LayerKind::linear:
        out = ops::linear(in, lin_weight_[i], lin_bias_[i], tape);
        break;
      case LayerKind::residual_add:
        out = ops::add(outs[static_cast<size_t>(d.input)], outs[static_cast<size_t>(d.input2)],
                       tape);
        break;
    }
    if (observer) observer(static_cast<int>(i), d, out);
    outs[i] = out;
    prev = out;
  }
  return prev;
}

namespace {

// Modified Gram-Schmidt over rows; rows beyond the column count (cannot all
// be mutually orthogonal) are only normalized.
void orthonormalize_rows(std::vector<double>& m, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    double* row = m.data() + static_cast<size_t>(r) * cols;
    for (int p = 0; p < r && p < cols; ++p) {
      const double* prev = m.data() + static_cast<size_t>(p) * cols;
      double dot = 0;
      for (int j = 0; j < cols; ++j) dot += row[j] * prev[j];
      for (int j = 0; j < cols; ++j) row[j] -= dot * prev[j];
    }
    double norm = 0;
    for (int j = 0; j < cols; ++j) norm += row[j] * row[j];
    norm = std::sqrt(norm);
    if (norm < 1e-12) norm = 1.0;
    for (int j = 0; j < cols; ++j) row[j] /= norm;
  }
}

}  // namespace

void init_features(Network& net, FeatureInit scheme, Prng& rng) {
  const LayerPlan& plan = net.plan();
  for (size_t i = 0; i < plan.layers.size(); ++i) {
    const LayerDesc& d = plan.layers[i];
    if (d.kind != LayerKind::conv) continue;
    Tensor k = net.conv_kernel(static_cast<int>(i));
    const int rows = d.out_ch;
    const int cols = d.in_ch * d.kernel * d.kernel;
    const double he_std = std::sqrt(2.0 / cols);
    switch (scheme) {
      case FeatureInit::he_normal:
        for (size_t j = 0; j < k.numel(); ++j) k.set_value(j, he_std * rng.next_normal());
        break;
      case FeatureInit::uniform: {
        const double bound = std::sqrt(6.0 / cols);
        for (size_t j = 0; j < k.numel(); ++j) k.set_value(j, rng.next_uniform(-bound, bound));
        break;
      }
      case FeatureInit::binarized:
        for (size_t j = 0; j < k.numel(); ++j)
          k.set_value(j, rng.next_normal() >= 0.0 ? he_std : -he_std);
        break;
      case FeatureInit::orthogonal: {
        std::vector<double> m(static_cast<size_t>(rows) * cols);
        for (auto& v : m) v = rng.next_normal();
        orthonormalize_rows(m, rows, cols);
        // Orthonormal rows rescaled to the he_normal expected row norm.
        const double scale = std::sqrt(2.0);
        for (size_t j = 0; j < k.numel(); ++j) k.set_value(j, scale * m[j]);
        break;
      }
    }
  }
  // Output layer: He normal on the weight, zero bias, independent of the
  // conv feature scheme. Conv biases (VGG) stay zero.
  for (auto& p : net.parameters()) {
    if (p.group == ParamGroup::output && p.tensor.rank() == 2) {
      const double he_std = std::sqrt(2.0 / p.tensor.dim(1));
      for (size_t j = 0; j < p.tensor.numel(); ++j)
        p.tensor.set_value(j, he_std * rng.next_normal());
    }
  }
}

}  // namespace bnlab
