#include <doctest.h>

#include <cmath>
#include <cstring>
#include <set>

#include "bnlab/architectures.hpp"
#include "testutil.hpp"

using namespace bnlab;

namespace {

// Independent feature-count enumeration for the 6N+2 family: the batchnorm
// group is 2 * (init + 2N per stage at each stage width + the two shortcut
// normalizations).
long long cifar_bn_count(int N, int w16, int w32, int w64) {
  return 2LL * (w16 + 2LL * N * w16 + 2LL * N * w32 + 2LL * N * w64 + w32 + w64);
}

}  // namespace

TEST_CASE("cifar resnet-14 exact group counts") {
  const LayerPlan plan = make_cifar_resnet(2, WidthScale{1, 1});
  const ParamCounts c = count_params(plan);
  CHECK(c.batchnorm == 1120);
  CHECK(c.batchnorm == cifar_bn_count(2, 16, 32, 64));
  CHECK(c.output == 650);     // 64*10 + 10
  CHECK(c.shortcut == 2560);  // 16*32 + 32*64
  CHECK(c.total == 175258);
  CHECK(c.total == c.batchnorm + c.output + c.shortcut + c.body);
}

TEST_CASE("cifar resnet-110 batchnorm group is exactly 8288") {
  const LayerPlan plan = make_cifar_resnet(18, WidthScale{1, 1});
  const ParamCounts c = count_params(plan);
  CHECK(c.batchnorm == 8288);
  CHECK(c.batchnorm == cifar_bn_count(18, 16, 32, 64));
  CHECK(c.output == 650);
  CHECK(c.shortcut == 2560);
}

TEST_CASE("depth formula: 6N+2 weight layers for N in 1..144") {
  for (int N : {1, 2, 3, 5, 9, 18, 36, 72, 144}) {
    const LayerPlan plan = make_cifar_resnet(N, WidthScale{1, 1});
    CHECK(weight_layer_depth(plan) == 6 * N + 2);
    CHECK(plan.spec.depth == 6 * N + 2);
  }
  // N=5 gives the depth-32 member.
  CHECK(make_cifar_resnet(5, WidthScale{1, 1}).spec.depth == 32);
}

TEST_CASE("invalid depths are configuration errors") {
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 15;
  CHECK_THROWS_AS(make_plan(spec), ConfigError);
  spec.depth = 6;
  CHECK_THROWS_AS(make_plan(spec), ConfigError);
  spec.family = Family::imagenet_resnet;
  spec.depth = 77;
  CHECK_THROWS_AS(make_plan(spec), ConfigError);
  spec.family = Family::vgg;
  spec.depth = 12;
  CHECK_THROWS_AS(make_plan(spec), ConfigError);
}

TEST_CASE("width scaling laws") {
  const ParamCounts base = count_params(make_cifar_resnet(2, WidthScale{1, 1}));
  for (int w : {2, 4, 8, 16, 32}) {
    const ParamCounts scaled = count_params(make_cifar_resnet(2, WidthScale{w, 1}));
    // Shortcut group is width-quadratic, batchnorm group width-linear.
    CHECK(scaled.shortcut == base.shortcut * w * w);
    CHECK(scaled.batchnorm == base.batchnorm * w);
  }

  // Fractional width scales work when all stage widths stay integral.
  const LayerPlan quarter = make_cifar_resnet(2, WidthScale::parse("1/4"));
  CHECK(count_params(quarter).output == 16 * 10 + 10);
  CHECK_THROWS_AS(make_cifar_resnet(2, WidthScale::parse("1/3")), ConfigError);
}

TEST_CASE("deepening leaves output and shortcut counts constant") {
  const ParamCounts d14 = count_params(make_cifar_resnet(2, WidthScale{1, 1}));
  for (int N : {3, 5, 18, 72}) {
    const ParamCounts c = count_params(make_cifar_resnet(N, WidthScale{1, 1}));
    CHECK(c.output == d14.output);
    CHECK(c.shortcut == d14.shortcut);
  }
}

TEST_CASE("imagenet resnet counts") {
  const ParamCounts r18 = count_params(make_imagenet_resnet(18));
  CHECK(r18.output == 513000);  // 512*1000 + 1000
  CHECK(r18.batchnorm == 9600);
  CHECK(r18.shortcut == 172032);
  CHECK(r18.total == 11689512);

  const ParamCounts r50 = count_params(make_imagenet_resnet(50));
  CHECK(r50.batchnorm == 53120);
  CHECK(r50.output == 2049000);  // 2048*1000 + 1000
  CHECK(r50.shortcut == 2768896);
  CHECK(r50.total == 25557032);

  // Block counts (3,4,23,3): distinguishable through the batchnorm total.
  const ParamCounts r101 = count_params(make_imagenet_resnet(101));
  CHECK(r101.batchnorm == 105344);
  CHECK(r101.total == 44549160);

  const ParamCounts r200 = count_params(make_imagenet_resnet(200));
  CHECK(r200.batchnorm == 176000);
  CHECK(r200.total == 64673832);

  CHECK(weight_layer_depth(make_imagenet_resnet(34)) == 34);
  CHECK(weight_layer_depth(make_imagenet_resnet(50)) == 50);
  CHECK(weight_layer_depth(make_imagenet_resnet(101)) == 101);
  CHECK(weight_layer_depth(make_imagenet_resnet(200)) == 200);
}

TEST_CASE("vgg counts and layer sequences") {
  const ParamCounts v11 = count_params(make_vgg(11));
  CHECK(v11.batchnorm == 5504);
  CHECK(v11.output == 5130);
  CHECK(v11.shortcut == 0);
  CHECK(v11.total == 9231114);

  const ParamCounts v19 = count_params(make_vgg(19));
  CHECK(v19.batchnorm == 11008);
  CHECK(v19.total == 20040522);

  // VGG-16: 13 conv layers plus the single output layer; the reference
  // configuration string has four pooling stages (no pool after the last
  // conv group).
  const LayerPlan v16 = make_vgg(16);
  int convs = 0, pools = 0;
  for (const auto& d : v16.layers) {
    convs += d.kind == LayerKind::conv;
    pools += d.kind == LayerKind::maxpool;
  }
  CHECK(convs == 13);
  CHECK(pools == 4);
  CHECK(weight_layer_depth(v16) == 14);
  CHECK(count_params(v16).total == 14728266);
  CHECK(count_params(make_vgg(13)).total == 9416010);
}

TEST_CASE("every conv is immediately followed by a normalization layer") {
  for (const LayerPlan& plan :
       {make_cifar_resnet(3, WidthScale{1, 1}), make_imagenet_resnet(50), make_vgg(16)}) {
    for (size_t i = 0; i < plan.layers.size(); ++i) {
      if (plan.layers[i].kind != LayerKind::conv) continue;
      REQUIRE(i + 1 < plan.layers.size());
      CHECK(plan.layers[i + 1].kind == LayerKind::batchnorm);
      CHECK(plan.layers[i + 1].out_ch == plan.layers[i].out_ch);
    }
  }
}

TEST_CASE("group labels partition the parameters") {
  for (const LayerPlan& plan :
       {make_cifar_resnet(2, WidthScale{2, 1}), make_imagenet_resnet(34), make_vgg(11)}) {
    const ParamCounts c = count_params(plan);
    CHECK(c.total == c.batchnorm + c.output + c.shortcut + c.body);
    Network net = Network::allocate(plan);
    long long from_params = 0;
    for (const auto& p : net.parameters()) {
      CHECK(p.group != ParamGroup::none);
      from_params += static_cast<long long>(p.tensor.numel());
    }
    CHECK(from_params == c.total);
  }
}

TEST_CASE("feature init: he_normal variance") {
  // 3x3 kernels with fan-in 16*9 = 144: empirical variance within 5% of 2/144.
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 20;
  spec.width = WidthScale{4, 1};  // plenty of draws
  Network net = Network::build(make_plan(spec), 7, Dtype::f32);
  double sum = 0, sum2 = 0;
  long n = 0;
  for (const auto& p : net.parameters()) {
    if (p.group != ParamGroup::body || p.tensor.rank() != 4) continue;
    if (p.tensor.dim(1) != 64 || p.tensor.dim(2) != 3) continue;  // fan-in 64*9 at width 4
    for (size_t i = 0; i < p.tensor.numel(); ++i) {
      const double v = p.tensor.value_at(i);
      sum += v;
      sum2 += v * v;
      ++n;
    }
  }
  REQUIRE(n > 100000);
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  const double expected = 2.0 / (64 * 9);
  CHECK(std::fabs(var - expected) / expected < 0.05);
}

TEST_CASE("feature init: binarized and orthogonal") {
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 8;
  spec.width = WidthScale{1, 1};
  spec.feature_init = FeatureInit::binarized;
  Network bin = Network::build(make_plan(spec), 3, Dtype::f64);
  for (const auto& p : bin.parameters()) {
    if (p.tensor.rank() != 4) continue;
    const double expect =
        std::sqrt(2.0 / (p.tensor.dim(1) * p.tensor.dim(2) * p.tensor.dim(3)));
    for (size_t i = 0; i < p.tensor.numel(); ++i)
      CHECK(std::fabs(p.tensor.value_at(i)) == doctest::Approx(expect).epsilon(1e-12));
  }

  spec.feature_init = FeatureInit::orthogonal;
  Network ortho = Network::build(make_plan(spec), 3, Dtype::f64);
  for (const auto& p : ortho.parameters()) {
    if (p.tensor.rank() != 4) continue;
    const int rows = p.tensor.dim(0);
    const int cols = p.tensor.dim(1) * p.tensor.dim(2) * p.tensor.dim(3);
    if (rows > cols) continue;
    for (int r1 = 0; r1 < rows; ++r1)
      for (int r2 = r1 + 1; r2 < rows; ++r2) {
        double dot = 0;
        for (int j = 0; j < cols; ++j)
          dot += p.tensor.value_at(static_cast<size_t>(r1) * cols + j) *
                 p.tensor.value_at(static_cast<size_t>(r2) * cols + j);
        CHECK(std::fabs(dot) < 1e-5);
      }
  }
}

TEST_CASE("identical seed gives bit-identical initialization") {
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 14;
  spec.width = WidthScale::parse("1/4");
  Network a = Network::build(make_plan(spec), 123, Dtype::f32);
  Network b = Network::build(make_plan(spec), 123, Dtype::f32);
  REQUIRE(a.parameters().size() == b.parameters().size());
  for (size_t i = 0; i < a.parameters().size(); ++i) {
    const Tensor& ta = a.parameters()[i].tensor;
    const Tensor& tb = b.parameters()[i].tensor;
    CHECK(std::memcmp(ta.raw_data(), tb.raw_data(), ta.raw_size()) == 0);
  }
}

TEST_CASE("forward shapes across families") {
  // Tiny inputs keep this fast while exercising every layer kind.
  {
    ArchSpec spec;
    spec.family = Family::cifar_resnet;
    spec.depth = 14;
    spec.width = WidthScale::parse("1/4");
    Network net = Network::build(make_plan(spec), 5, Dtype::f32);
    net.set_mode(BnMode::train);
    Tensor x = Tensor::full({2, 3, 16, 16}, 0.1, Dtype::f32);
    Tensor y = net.forward(x);
    CHECK(y.shape() == std::vector<int>{2, 10});
  }
  {
    Network net = Network::build(make_imagenet_resnet(18), 5, Dtype::f32);
    net.set_mode(BnMode::train);
    Tensor x = Tensor::full({2, 3, 64, 64}, 0.1, Dtype::f32);
    Tensor y = net.forward(x);
    CHECK(y.shape() == std::vector<int>{2, 1000});
  }
  {
    Network net = Network::build(make_vgg(11), 5, Dtype::f32);
    net.set_mode(BnMode::train);
    Tensor x = Tensor::full({2, 3, 32, 32}, 0.1, Dtype::f32);
    Tensor y = net.forward(x);
    CHECK(y.shape() == std::vector<int>{2, 10});
  }
}

TEST_CASE("bottleneck projection exists at every imagenet stage") {
  const LayerPlan plan = make_imagenet_resnet(50);
  std::set<std::string> shortcut_stages;
  for (const auto& d : plan.layers)
    if (d.kind == LayerKind::conv && d.group == ParamGroup::shortcut)
      shortcut_stages.insert(d.name.substr(0, 6));
  CHECK(shortcut_stages ==
        std::set<std::string>{"stage1", "stage2", "stage3", "stage4"});

  // Basic blocks project only where resolution or width changes.
  const LayerPlan plan18 = make_imagenet_resnet(18);
  std::set<std::string> stages18;
  for (const auto& d : plan18.layers)
    if (d.kind == LayerKind::conv && d.group == ParamGroup::shortcut)
      stages18.insert(d.name.substr(0, 6));
  CHECK(stages18 == std::set<std::string>{"stage2", "stage3", "stage4"});
}
