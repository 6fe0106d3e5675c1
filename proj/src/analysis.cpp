#include "bnlab/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "bnlab/csv.hpp"

namespace bnlab {

namespace {

constexpr int kHistBins = 64;

void fill_histogram(const std::vector<double>& values, AffineStats& st) {
  st.bin_edges.clear();
  st.bin_counts.assign(kHistBins, 0);
  if (values.empty()) return;
  double lo = values[0], hi = values[0];
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi <= lo) hi = lo + 1e-12;
  st.bin_edges.resize(kHistBins + 1);
  for (int i = 0; i <= kHistBins; ++i)
    st.bin_edges[static_cast<size_t>(i)] = lo + (hi - lo) * i / kHistBins;
  for (double v : values) {
    int bin = static_cast<int>((v - lo) / (hi - lo) * kHistBins);
    bin = std::clamp(bin, 0, kHistBins - 1);
    st.bin_counts[static_cast<size_t>(bin)] += 1;
  }
}

AffineStats affine_stats(const std::vector<double>& values,
                         const std::vector<double>& thresholds) {
  AffineStats st;
  st.count = values.size();
  st.thresholds = thresholds;
  st.fraction_below.assign(thresholds.size(), 0.0);
  if (values.empty()) return st;

  double sum = 0.0;
  long neg = 0;
  for (double v : values) {
    sum += v;
    if (v < 0) ++neg;
  }
  st.mean = sum / static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - st.mean) * (v - st.mean);
  st.stddev = std::sqrt(var / static_cast<double>(values.size()));
  st.fraction_negative = static_cast<double>(neg) / static_cast<double>(values.size());

  for (size_t t = 0; t < thresholds.size(); ++t) {
    long below = 0;
    for (double v : values)
      if (std::fabs(v) < thresholds[t]) ++below;
    st.fraction_below[t] = static_cast<double>(below) / static_cast<double>(values.size());
  }
  fill_histogram(values, st);
  return st;
}

bool is_gamma(const NamedTensor& t) {
  return !t.is_buffer && t.group == ParamGroup::batchnorm &&
         t.name.size() >= 6 && t.name.compare(t.name.size() - 6, 6, "/gamma") == 0;
}

bool is_beta(const NamedTensor& t) {
  return !t.is_buffer && t.group == ParamGroup::batchnorm &&
         t.name.size() >= 5 && t.name.compare(t.name.size() - 5, 5, "/beta") == 0;
}

}  // namespace

GammaBetaStats gamma_distribution(const Checkpoint& ckpt, const std::vector<double>& thresholds) {
  std::vector<double> gammas, betas;
  for (const auto& t : ckpt.tensors) {
    if (is_gamma(t))
      for (size_t i = 0; i < t.tensor.numel(); ++i) gammas.push_back(t.tensor.value_at(i));
    else if (is_beta(t))
      for (size_t i = 0; i < t.tensor.numel(); ++i) betas.push_back(t.tensor.value_at(i));
  }
  if (gammas.empty())
    throw UsageError("gamma_distribution: checkpoint has no normalization layers");
  std::vector<double> sorted_thresholds = thresholds;
  std::sort(sorted_thresholds.begin(), sorted_thresholds.end());
  GammaBetaStats out;
  out.gamma = affine_stats(gammas, sorted_thresholds);
  out.beta = affine_stats(betas, sorted_thresholds);
  return out;
}

std::pair<Checkpoint, long long> clamp_gamma(const Checkpoint& ckpt, double theta) {
  if (theta < 0) throw UsageError("clamp_gamma: threshold must be >= 0");
  Checkpoint out;
  out.meta = ckpt.meta;
  long long clamped = 0;
  for (const auto& t : ckpt.tensors) {
    NamedTensor copy{t.name, t.group, t.is_buffer, t.tensor.clone()};
    if (is_gamma(copy)) {
      for (size_t i = 0; i < copy.tensor.numel(); ++i)
        if (std::fabs(copy.tensor.value_at(i)) < theta) {
          copy.tensor.set_value(i, 0.0);
          ++clamped;
        }
    }
    out.tensors.push_back(std::move(copy));
  }
  return {std::move(out), clamped};
}

std::vector<ClampRow> clamp_sweep(const Checkpoint& ckpt, const std::vector<double>& thresholds,
                                  const Dataset& data) {
  long long total_gamma = 0;
  for (const auto& t : ckpt.tensors)
    if (is_gamma(t)) total_gamma += static_cast<long long>(t.tensor.numel());

  std::vector<ClampRow> rows;
  double baseline = 0.0;
  bool have_baseline = false;
  for (double theta : thresholds) {
    auto [clamped_ckpt, count] = clamp_gamma(ckpt, theta);
    Network net = network_from(clamped_ckpt, Dtype::f32);
    net.set_mode(BnMode::eval);
    const EvalResult ev = evaluate(net, data);
    ClampRow row;
    row.theta = theta;
    row.clamped = count;
    row.fraction_clamped =
        total_gamma > 0 ? static_cast<double>(count) / static_cast<double>(total_gamma) : 0.0;
    row.top1 = ev.top1;
    if (!have_baseline && theta == 0.0) {
      baseline = ev.top1;
      have_baseline = true;
    }
    rows.push_back(row);
  }
  if (!have_baseline && !rows.empty()) baseline = rows.front().top1;
  for (auto& row : rows) row.delta_top1 = row.top1 - baseline;
  return rows;
}

ActivationStats activation_zero_frequency(const Checkpoint& ckpt, const Dataset& data,
                                          int batch_size) {
  if (data.size() == 0) throw UsageError("activation_zero_frequency: empty dataset");
  Network net = network_from(ckpt, Dtype::f32);
  net.set_mode(BnMode::eval);

  // zero_counts[layer][channel], positions[layer] = examples * H * W seen.
  std::map<int, std::vector<long long>> zero_counts;
  std::map<int, long long> positions;
  std::map<int, std::string> names;

  std::vector<int> indices;
  for (int start = 0; start < data.size(); start += batch_size) {
    const int end = std::min(data.size(), start + batch_size);
    indices.resize(static_cast<size_t>(end - start));
    for (int i = start; i < end; ++i) indices[static_cast<size_t>(i - start)] = i;
    Tensor batch = prepare_batch(data, indices, net.dtype(), false, nullptr, nullptr);

    net.forward(batch, nullptr, [&](int layer, const LayerDesc& d, const Tensor& out) {
      if (d.kind != LayerKind::relu || out.rank() != 4) return;
      const int B = out.dim(0), C = out.dim(1), HW = out.dim(2) * out.dim(3);
      auto& counts = zero_counts[layer];
      if (counts.empty()) {
        counts.assign(static_cast<size_t>(C), 0);
        names[layer] = d.name;
      }
      const float* v = out.data<float>();
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < C; ++c) {
          const float* base = v + (static_cast<size_t>(b) * C + c) * HW;
          long long z = 0;
          for (int i = 0; i < HW; ++i)
            if (base[i] == 0.0f) ++z;
          counts[static_cast<size_t>(c)] += z;
        }
      positions[layer] += static_cast<long long>(B) * HW;
    });
  }

  ActivationStats st;
  for (const auto& [layer, counts] : zero_counts) {
    // Every channel of a layer sees the same example x position count.
    const double denom = static_cast<double>(positions[layer]);
    for (size_t c = 0; c < counts.size(); ++c) {
      st.unit_layer.push_back(names[layer]);
      st.unit_channel.push_back(static_cast<int>(c));
      st.zero_prob.push_back(static_cast<double>(counts[c]) / denom);
    }
  }
  st.units = st.zero_prob.size();
  long disabled = 0;
  for (double p : st.zero_prob)
    if (p > 0.99) ++disabled;
  st.disabled_fraction = st.units ? static_cast<double>(disabled) / static_cast<double>(st.units)
                                  : 0.0;

  // Histogram over the observed range of per-unit probabilities.
  AffineStats tmp;
  fill_histogram(st.zero_prob, tmp);
  st.bin_edges = tmp.bin_edges;
  st.bin_counts = tmp.bin_counts;
  return st;
}

ScalingResult scaling_regression(const std::vector<ScalingPoint>& points) {
  std::map<std::string, std::vector<std::pair<double, double>>> grouped;
  for (const auto& p : points) {
    if (p.param_count <= 0)
      throw UsageError("scaling_regression: parameter counts must be positive");
    grouped[p.group].emplace_back(std::log2(p.param_count), p.accuracy);
  }

  ScalingResult res;
  for (const auto& [name, pts] : grouped) {
    if (pts.size() < 2)
      throw UsageError("scaling_regression: group '" + name + "' has fewer than 2 points");
    double sx = 0, sy = 0;
    for (const auto& [x, y] : pts) {
      sx += x;
      sy += y;
    }
    const double n = static_cast<double>(pts.size());
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [x, y] : pts) {
      sxx += (x - mx) * (x - mx);
      sxy += (x - mx) * (y - my);
      syy += (y - my) * (y - my);
    }
    if (sxx <= 0)
      throw UsageError("scaling_regression: group '" + name +
                       "' has a degenerate x-range (all parameter counts equal)");
    RegressionFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    fit.n = static_cast<int>(pts.size());
    res.fits[name] = fit;
  }
  if (res.fits.size() == 2) {
    auto it = res.fits.begin();
    const double a = it->second.slope;
    const double b = std::next(it)->second.slope;
    if (b != 0) {
      res.slope_ratio = a / b;
      res.has_ratio = true;
    }
  }
  return res;
}

std::string gamma_stats_csv(const GammaBetaStats& stats) {
  std::vector<std::string> header = {"param", "count", "mean", "std", "fraction_negative"};
  for (double t : stats.gamma.thresholds) header.push_back("fraction_below_" + fmt_g6(t));
  CsvTable table(header);
  for (const auto* st : {&stats.gamma, &stats.beta}) {
    std::vector<std::string> row = {st == &stats.gamma ? "gamma" : "beta",
                                    std::to_string(st->count), fmt_g6(st->mean),
                                    fmt_g6(st->stddev), fmt_g6(st->fraction_negative)};
    for (double f : st->fraction_below) row.push_back(fmt_g6(f));
    table.add_row(std::move(row));
  }
  return table.to_string();
}

std::string histogram_csv(const std::vector<double>& edges, const std::vector<long>& counts) {
  CsvTable table({"bin_left", "count"});
  for (size_t i = 0; i < counts.size(); ++i)
    table.add_row({fmt_g6(edges[i]), std::to_string(counts[i])});
  return table.to_string();
}

std::string clamp_sweep_csv(const std::vector<ClampRow>& rows) {
  CsvTable table({"theta", "clamped", "fraction_clamped", "top1", "delta_top1"});
  for (const auto& r : rows)
    table.add_row({fmt_g6(r.theta), std::to_string(r.clamped), fmt_g6(r.fraction_clamped),
                   fmt_g6(r.top1), fmt_g6(r.delta_top1)});
  return table.to_string();
}

std::string activation_summary_csv(const ActivationStats& stats) {
  CsvTable table({"units", "disabled_fraction"});
  table.add_row({std::to_string(stats.units), fmt_g6(stats.disabled_fraction)});
  return table.to_string();
}

std::string activation_units_csv(const ActivationStats& stats) {
  CsvTable table({"layer", "channel", "zero_probability"});
  for (size_t i = 0; i < stats.zero_prob.size(); ++i)
    table.add_row({stats.unit_layer[i], std::to_string(stats.unit_channel[i]),
                   fmt_g6(stats.zero_prob[i])});
  return table.to_string();
}

std::string scaling_csv(const ScalingResult& result) {
  CsvTable table({"group", "slope_per_doubling", "intercept", "r2", "n"});
  for (const auto& [name, fit] : result.fits)
    table.add_row({name, fmt_g6(fit.slope), fmt_g6(fit.intercept), fmt_g6(fit.r2),
                   std::to_string(fit.n)});
  return table.to_string();
}

}  // namespace bnlab
