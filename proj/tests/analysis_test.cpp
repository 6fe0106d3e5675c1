#include <doctest.h>

#include <cmath>
#include <cstring>

#include "bnlab/analysis.hpp"
#include "testutil.hpp"

using namespace bnlab;

namespace {

Checkpoint tiny_checkpoint(uint64_t seed, BnInit scheme = BnInit::uniform01_zero) {
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 8;
  spec.width = WidthScale::parse("1/4");
  spec.bn_init = scheme;
  Network net = Network::build(make_plan(spec), seed, Dtype::f32);
  CheckpointMeta meta;
  meta.arch = spec;
  return checkpoint_from(net, meta);
}

// Overwrites every gamma in the checkpoint from a flat list (cycled).
void set_gammas(Checkpoint& ck, const std::vector<double>& values) {
  size_t k = 0;
  for (auto& t : ck.tensors) {
    if (t.is_buffer || t.group != ParamGroup::batchnorm) continue;
    if (t.name.find("/gamma") == std::string::npos) continue;
    for (size_t i = 0; i < t.tensor.numel(); ++i)
      t.tensor.set_value(i, values[k++ % values.size()]);
  }
}

}  // namespace

TEST_CASE("gamma_distribution hand counts") {
  Checkpoint ck = tiny_checkpoint(1);
  set_gammas(ck, {0.005, -0.02, 0.3});
  const GammaBetaStats stats = gamma_distribution(ck, {0.01, 0.05, 0.1, 0.2});

  // Total gamma count of the quarter-width depth-8 member: feature counts
  // 4 + 2*(4+8+16) + 8 + 16 = 84.
  CHECK(stats.gamma.count == 84);
  // Values cycle through the triple: exact thirds.
  CHECK(stats.gamma.fraction_negative == doctest::Approx(1.0 / 3.0));
  CHECK(stats.gamma.fraction_below[0] == doctest::Approx(1.0 / 3.0));  // |0.005| < 0.01
  CHECK(stats.gamma.fraction_below[1] == doctest::Approx(2.0 / 3.0));  // + |-0.02| < 0.05
  CHECK(stats.gamma.fraction_below[2] == doctest::Approx(2.0 / 3.0));
  CHECK(stats.gamma.fraction_below[3] == doctest::Approx(2.0 / 3.0));

  // All-zero gammas: mean 0, std 0, every fraction_below = 1.
  set_gammas(ck, {0.0});
  const GammaBetaStats zero = gamma_distribution(ck);
  CHECK(zero.gamma.mean == 0.0);
  CHECK(zero.gamma.stddev == 0.0);
  for (double f : zero.gamma.fraction_below) CHECK(f == 1.0);

  // fraction_below is monotone in the threshold.
  Checkpoint ck2 = tiny_checkpoint(2);
  const GammaBetaStats s2 = gamma_distribution(ck2);
  for (size_t i = 1; i < s2.gamma.fraction_below.size(); ++i)
    CHECK(s2.gamma.fraction_below[i] >= s2.gamma.fraction_below[i - 1]);
}

TEST_CASE("freshly initialized uniform01 network statistics") {
  // Large feature count: WRN-14-8 has 1120*8/2 = 4480 gammas.
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 14;
  spec.width = WidthScale{8, 1};
  Network net = Network::build(make_plan(spec), 123, Dtype::f32);
  CheckpointMeta meta;
  meta.arch = spec;
  const Checkpoint ck = checkpoint_from(net, meta);
  const GammaBetaStats stats = gamma_distribution(ck);

  CHECK(stats.gamma.count == 4480);
  CHECK(stats.gamma.fraction_negative == 0.0);
  // U[0,1): mean 0.5 within 3 sigma / sqrt(n).
  const double tol = 3.0 * std::sqrt(1.0 / 12.0) / std::sqrt(4480.0);
  CHECK(std::fabs(stats.gamma.mean - 0.5) < tol);
  // Beta all zero at initialization.
  CHECK(stats.beta.mean == 0.0);
  CHECK(stats.beta.stddev == 0.0);
}

TEST_CASE("clamp_gamma identities") {
  Checkpoint ck = tiny_checkpoint(3);
  set_gammas(ck, {0.005, -0.02, 0.3});

  // theta = 0 clamps nothing and copies everything bit-exactly.
  auto [same, zero_count] = clamp_gamma(ck, 0.0);
  CHECK(zero_count == 0);
  for (size_t i = 0; i < ck.tensors.size(); ++i)
    CHECK(std::memcmp(same.tensors[i].tensor.raw_data(), ck.tensors[i].tensor.raw_data(),
                      ck.tensors[i].tensor.raw_size()) == 0);

  auto [clamped, count] = clamp_gamma(ck, 0.01);
  CHECK(count == 28);  // one third of 84
  // Original untouched (read-only contract).
  const GammaBetaStats before = gamma_distribution(ck);
  CHECK(before.gamma.fraction_below[0] == doctest::Approx(1.0 / 3.0));

  // Idempotent: clamping twice equals clamping once.
  auto [twice, count2] = clamp_gamma(clamped, 0.01);
  CHECK(count2 == count);  // zeros still satisfy |0| < 0.01
  for (size_t i = 0; i < clamped.tensors.size(); ++i)
    CHECK(std::memcmp(twice.tensors[i].tensor.raw_data(), clamped.tensors[i].tensor.raw_data(),
                      clamped.tensors[i].tensor.raw_size()) == 0);

  // fraction_below(theta) equals clamp count / total, exactly.
  for (double theta : {0.01, 0.05, 0.1, 0.2}) {
    auto [_, c] = clamp_gamma(ck, theta);
    const GammaBetaStats g = gamma_distribution(ck, {theta});
    CHECK(g.gamma.fraction_below[0] == static_cast<double>(c) / 84.0);
  }

  CHECK_THROWS_AS(clamp_gamma(ck, -1.0), UsageError);
}

TEST_CASE("clamp sweep on a populated network") {
  // Build a tiny trained-ish network: run a few train-mode forwards so the
  // running statistics exist, then sweep.
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 8;
  spec.width = WidthScale::parse("1/4");
  Network net = Network::build(make_plan(spec), 11, Dtype::f32);
  SyntheticSpec sspec;
  sspec.n = 60;
  sspec.image_size = 8;
  DataPair data = synthetic_pair(sspec, 60, 21);
  net.set_mode(BnMode::train);
  std::vector<int> idx(30);
  for (int i = 0; i < 30; ++i) idx[static_cast<size_t>(i)] = i;
  net.forward(prepare_batch(data.train, idx, Dtype::f32, false, nullptr, nullptr));

  CheckpointMeta meta;
  meta.arch = spec;
  meta.bn_stats_ready = true;
  const Checkpoint ck = checkpoint_from(net, meta);

  const std::vector<double> thetas = {0.0, 0.01, 1e30};
  const auto rows = clamp_sweep(ck, thetas, data.test);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].delta_top1 == 0.0);
  CHECK(rows[0].clamped == 0);
  // Monotone fraction-clamped column.
  CHECK(rows[1].fraction_clamped >= rows[0].fraction_clamped);
  CHECK(rows[2].fraction_clamped >= rows[1].fraction_clamped);
  CHECK(rows[2].fraction_clamped == 1.0);
}

TEST_CASE("clamp sweep on a trained batchnorm-only model: small thresholds are benign") {
  // Brief batchnorm-only training, then sweep. Clamping |gamma| < 0.01
  // barely moves accuracy; clamping everything collapses the network to a
  // constant function (the first normalization sits before any skip fork),
  // so the delta at the huge threshold dominates.
  ArchSpec spec;
  spec.family = Family::cifar_resnet;
  spec.depth = 14;
  spec.width = WidthScale::parse("1/4");
  const LayerPlan plan = make_plan(spec);
  SyntheticSpec sspec;
  sspec.n = 500;
  sspec.image_size = 16;
  sspec.separation = 1.5;
  sspec.noise = 0.3;
  const DataPair data = synthetic_pair(sspec, 500, 77);
  const TrainabilityMask mask = build_mask(plan, GroupSelector::parse("batchnorm"), 1);
  Network net = Network::build(plan, 5, Dtype::f32);
  Hyperparams hp;
  hp.epochs = 8;
  hp.batch_size = 64;
  hp.schedule = {};
  const TrainResult tr = train(net, mask, data.train, data.test, hp);
  REQUIRE(tr.final_eval.top1 > 0.15);  // learned something above chance

  CheckpointMeta meta;
  meta.arch = spec;
  meta.bn_stats_ready = true;
  const Checkpoint ck = checkpoint_from(net, meta);
  const auto rows = clamp_sweep(ck, {0.0, 0.01, 1e30}, data.test);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].delta_top1 == 0.0);
  CHECK(std::fabs(rows[1].delta_top1) < std::fabs(rows[2].delta_top1));
  // Fully clamped: constant logits, accuracy at the most-frequent-class rate.
  CHECK(rows[2].top1 <= 0.15);
}

TEST_CASE("clamping everything on a non-residual net pins the logits") {
  // VGG has no skip connections: gamma = 0 everywhere makes the features
  // constant, so logits cannot depend on the input.
  Network net = Network::build(make_vgg(11), 5, Dtype::f32);
  SyntheticSpec sspec;
  sspec.n = 10;
  sspec.image_size = 32;
  Dataset data = synthetic_dataset(sspec, 9);
  net.set_mode(BnMode::train);
  std::vector<int> idx(8);
  for (int i = 0; i < 8; ++i) idx[static_cast<size_t>(i)] = i;
  net.forward(prepare_batch(data, idx, Dtype::f32, false, nullptr, nullptr));

  CheckpointMeta meta;
  meta.arch = net.plan().spec;
  meta.bn_stats_ready = true;
  Checkpoint ck = checkpoint_from(net, meta);
  auto [clamped, count] = clamp_gamma(ck, 1e30);
  CHECK(count > 0);

  Network zeroed = network_from(clamped, Dtype::f32);
  zeroed.set_mode(BnMode::eval);
  Tensor batch = prepare_batch(data, idx, Dtype::f32, false, nullptr, nullptr);
  Tensor logits = zeroed.forward(batch);
  for (int b = 1; b < 8; ++b)
    for (int k = 0; k < 10; ++k)
      CHECK(logits.value_at(static_cast<size_t>(b) * 10 + k) ==
            doctest::Approx(logits.value_at(static_cast<size_t>(k))).epsilon(1e-6));
}

TEST_CASE("activation zero frequency on a constructed sign pattern") {
  // Two-channel single-block network driven so channel signs are known:
  // gamma = 0 everywhere, beta determines each ReLU's output sign.
  ArchSpec spec;
  spec.family = Family::vgg;
  spec.depth = 11;
  Network net = Network::build(make_plan(spec), 13, Dtype::f32);
  for (auto* st : net.bn_states()) {
    for (size_t i = 0; i < st->gamma.numel(); ++i) {
      st->gamma.set_value(i, 0.0);
      // Alternate beta: even channels -1 (always zero after relu), odd +1.
      st->beta.set_value(i, i % 2 == 0 ? -1.0 : 1.0);
    }
    st->stats_ready = true;
  }

  CheckpointMeta meta;
  meta.arch = spec;
  meta.bn_stats_ready = true;
  const Checkpoint ck = checkpoint_from(net, meta);

  SyntheticSpec sspec;
  sspec.n = 10;
  sspec.image_size = 32;
  Dataset data = synthetic_dataset(sspec, 31);
  const ActivationStats stats = activation_zero_frequency(ck, data);

  REQUIRE(stats.units > 0);
  // Every unit is exactly 0 or exactly 1: even channels disabled.
  long ones = 0;
  for (size_t u = 0; u < stats.zero_prob.size(); ++u) {
    const bool even = stats.unit_channel[u] % 2 == 0;
    CHECK(stats.zero_prob[u] == (even ? 1.0 : 0.0));
    ones += even;
  }
  CHECK(stats.disabled_fraction ==
        doctest::Approx(static_cast<double>(ones) / stats.units));

  // Histogram top-bin mass agrees with the disabled fraction here.
  const long top = stats.bin_counts.back();
  CHECK(static_cast<double>(top) / stats.units == doctest::Approx(stats.disabled_fraction));
}

TEST_CASE("scaling regression exact fits") {
  // Collinear points with slope 0.05 per doubling.
  std::vector<ScalingPoint> points;
  for (int i = 0; i < 5; ++i)
    points.push_back({"depth", std::pow(2.0, 10 + i), 0.3 + 0.05 * i});
  const ScalingResult res = scaling_regression(points);
  CHECK(res.fits.at("depth").slope == doctest::Approx(0.05).epsilon(1e-9));
  CHECK(res.fits.at("depth").r2 == doctest::Approx(1.0).epsilon(1e-12));

  // Two groups with slopes 0.059 and 0.050: ratio 1.18.
  std::vector<ScalingPoint> two;
  for (int i = 0; i < 4; ++i) {
    two.push_back({"depth", std::pow(2.0, 10 + i), 0.3 + 0.059 * i});
    two.push_back({"width", std::pow(2.0, 10 + i), 0.3 + 0.050 * i});
  }
  const ScalingResult r2 = scaling_regression(two);
  REQUIRE(r2.has_ratio);
  CHECK(r2.slope_ratio == doctest::Approx(1.18).epsilon(1e-9));

  // Degenerate x-range.
  std::vector<ScalingPoint> flat = {{"g", 1024, 0.5}, {"g", 1024, 0.6}};
  CHECK_THROWS_AS(scaling_regression(flat), UsageError);
  std::vector<ScalingPoint> single = {{"g", 1024, 0.5}};
  CHECK_THROWS_AS(scaling_regression(single), UsageError);
}

TEST_CASE("csv renderings are deterministic") {
  Checkpoint ck = tiny_checkpoint(17);
  const GammaBetaStats stats = gamma_distribution(ck);
  CHECK(gamma_stats_csv(stats) == gamma_stats_csv(stats));
  CHECK(histogram_csv(stats.gamma.bin_edges, stats.gamma.bin_counts).substr(0, 14) ==
        "bin_left,count");
}
