#pragma once

#include <map>
#include <string>
#include <vector>

#include "bnlab/checkpoint.hpp"
#include "bnlab/datasets.hpp"
#include "bnlab/training.hpp"

namespace bnlab {

// Distribution summary of one affine parameter vector (gamma or beta)
// concatenated across every normalization layer, shortcut layers included.
struct AffineStats {
  size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population (divisor n)
  double fraction_negative = 0.0;
  std::vector<double> thresholds;       // ascending
  std::vector<double> fraction_below;   // |v| < threshold, strict
  // Histogram: 64 uniform bins over the observed range.
  std::vector<double> bin_edges;        // size bins+1
  std::vector<long> bin_counts;
};

struct GammaBetaStats {
  AffineStats gamma;
  AffineStats beta;
};

inline const std::vector<double>& default_gamma_thresholds() {
  static const std::vector<double> t = {0.01, 0.05, 0.1, 0.2};
  return t;
}

GammaBetaStats gamma_distribution(const Checkpoint& ckpt,
                                  const std::vector<double>& thresholds =
                                      default_gamma_thresholds());

// Returns a copy with every |gamma| < theta set exactly to 0, plus the clamp
// count. theta = 0 clamps nothing; the input checkpoint is never modified.
std::pair<Checkpoint, long long> clamp_gamma(const Checkpoint& ckpt, double theta);

struct ClampRow {
  double theta = 0.0;
  long long clamped = 0;
  double fraction_clamped = 0.0;
  double top1 = 0.0;
  double delta_top1 = 0.0;  // relative to theta = 0
};

std::vector<ClampRow> clamp_sweep(const Checkpoint& ckpt, const std::vector<double>& thresholds,
                                  const Dataset& data);

// One unit = one (ReLU layer, channel); its zero-probability is the fraction
// of exact floating-point zeros over examples x spatial positions.
struct ActivationStats {
  size_t units = 0;
  double disabled_fraction = 0.0;  // units with Pr[output = 0] > 0.99
  std::vector<std::string> unit_layer;
  std::vector<int> unit_channel;
  std::vector<double> zero_prob;
  std::vector<double> bin_edges;
  std::vector<long> bin_counts;
};

ActivationStats activation_zero_frequency(const Checkpoint& ckpt, const Dataset& data,
                                          int batch_size = 256);

struct RegressionFit {
  double slope = 0.0;      // accuracy per doubling of the x variable
  double intercept = 0.0;
  double r2 = 0.0;
  int n = 0;
};

struct ScalingPoint {
  std::string group;       // e.g. "depth" or "width"
  double param_count = 0;  // batchnorm parameter count
  double accuracy = 0;
};

struct ScalingResult {
  std::map<std::string, RegressionFit> fits;
  // slope(first group) / slope(second group) when exactly two groups exist.
  double slope_ratio = 0.0;
  bool has_ratio = false;
};

// Least squares of accuracy against log2(param_count), one fit per group.
ScalingResult scaling_regression(const std::vector<ScalingPoint>& points);

// CSV renderings (deterministic, 6 significant digits).
std::string gamma_stats_csv(const GammaBetaStats& stats);
std::string histogram_csv(const std::vector<double>& edges, const std::vector<long>& counts);
std::string clamp_sweep_csv(const std::vector<ClampRow>& rows);
std::string activation_summary_csv(const ActivationStats& stats);
std::string activation_units_csv(const ActivationStats& stats);
std::string scaling_csv(const ScalingResult& result);

}  // namespace bnlab
