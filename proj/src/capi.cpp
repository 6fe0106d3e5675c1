#include "bnlab.h"

#include <cstdlib>
#include <cstring>
#include <sstream>

#include "bnlab/analysis.hpp"
#include "bnlab/csv.hpp"
#include "bnlab/runner.hpp"

using namespace bnlab;

// Opaque handle definitions. Each wraps the corresponding core object.
struct bnlab_config {
  RunConfig cfg;
};

struct bnlab_checkpoint {
  Checkpoint ckpt;
};

struct bnlab_dataset {
  Dataset data;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

bnlab_status fail(bnlab_status code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Runs `fn`, translating the core error taxonomy onto status codes.
template <typename Fn>
bnlab_status guarded(Fn&& fn) {
  try {
    fn();
    return BNLAB_OK;
  } catch (const ConfigError& e) {
    return fail(BNLAB_ERR_CONFIG, e.what());
  } catch (const DivergenceError& e) {
    return fail(BNLAB_ERR_DIVERGED, e.what());
  } catch (const FormatError& e) {
    return fail(BNLAB_ERR_FORMAT, e.what());
  } catch (const IoError& e) {
    return fail(BNLAB_ERR_IO, e.what());
  } catch (const UsageError& e) {
    return fail(BNLAB_ERR_INVALID_ARG, e.what());
  } catch (const ShapeError& e) {
    return fail(BNLAB_ERR_INVALID_ARG, e.what());
  } catch (const std::exception& e) {
    return fail(BNLAB_ERR_INTERNAL, e.what());
  }
}

}  // namespace

extern "C" {

const char* bnlab_status_name(bnlab_status status) {
  switch (status) {
    case BNLAB_OK: return "ok";
    case BNLAB_ERR_INVALID_ARG: return "invalid_argument";
    case BNLAB_ERR_CONFIG: return "config_error";
    case BNLAB_ERR_IO: return "io_error";
    case BNLAB_ERR_FORMAT: return "format_error";
    case BNLAB_ERR_DIVERGED: return "diverged";
    case BNLAB_ERR_VERIFY: return "verify_failed";
    case BNLAB_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* bnlab_last_error(void) { return g_last_error.c_str(); }

void bnlab_free_string(char* s) { std::free(s); }

bnlab_status bnlab_count_params(const char* family, int depth, const char* width,
                                bnlab_param_counts* out) {
  if (!family || !out) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    ArchSpec spec;
    spec.family = family_parse(family);
    spec.depth = depth;
    spec.width = width && *width ? WidthScale::parse(width) : WidthScale{};
    const LayerPlan plan = make_plan(spec);
    const ParamCounts c = count_params(plan);
    out->total = c.total;
    out->batchnorm = c.batchnorm;
    out->output = c.output;
    out->shortcut = c.shortcut;
    out->body = c.body;
    out->weight_layer_depth = weight_layer_depth(plan);
  });
}

bnlab_status bnlab_param_table_csv(const char* which, char** out_csv) {
  if (!which || !out_csv) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] { *out_csv = dup_string(param_table_csv(which)); });
}

bnlab_status bnlab_config_create(bnlab_config** out) {
  if (!out) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] { *out = new bnlab_config{config_defaults()}; });
}

bnlab_status bnlab_config_load(const char* path, bnlab_config** out) {
  if (!path || !out) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] { *out = new bnlab_config{config_load(path)}; });
}

bnlab_status bnlab_config_set(bnlab_config* cfg, const char* key, const char* value) {
  if (!cfg || !key || !value) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] { config_set(cfg->cfg, key, value); });
}

bnlab_status bnlab_config_validate(const bnlab_config* cfg) {
  if (!cfg) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] { config_validate(cfg->cfg); });
}

bnlab_status bnlab_config_dump(const bnlab_config* cfg, char** out_json) {
  if (!cfg || !out_json) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] { *out_json = dup_string(config_to_json(cfg->cfg)); });
}

void bnlab_config_destroy(bnlab_config* cfg) { delete cfg; }

bnlab_status bnlab_train(const bnlab_config* cfg, int verbose, bnlab_train_summary* out) {
  if (!cfg) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    const RunSummary s = run_replicates(cfg->cfg, verbose != 0);
    if (out) {
      out->replicates = s.replicates;
      out->trainable = s.trainable;
      out->total_params = s.total_params;
      out->mean_top1 = s.stats.mean_top1;
      out->std_top1 = s.stats.std_top1;
      out->mean_top5 = s.stats.mean_top5;
      out->std_top5 = s.stats.std_top5;
    }
  });
}

bnlab_status bnlab_checkpoint_load(const char* path, bnlab_checkpoint** out) {
  if (!path || !out) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] { *out = new bnlab_checkpoint{load_checkpoint(path)}; });
}

void bnlab_checkpoint_destroy(bnlab_checkpoint* ckpt) { delete ckpt; }

bnlab_status bnlab_dataset_open(const bnlab_config* cfg, int split, bnlab_dataset** out) {
  if (!cfg || !out) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    DataPair pair = open_dataset(cfg->cfg);
    *out = new bnlab_dataset{split == 0 ? std::move(pair.train) : std::move(pair.test)};
  });
}

void bnlab_dataset_destroy(bnlab_dataset* ds) { delete ds; }

bnlab_status bnlab_evaluate(const bnlab_checkpoint* ckpt, const bnlab_dataset* ds,
                            bnlab_eval_result* out) {
  if (!ckpt || !ds || !out) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    Network net = network_from(ckpt->ckpt, Dtype::f32);
    net.set_mode(BnMode::eval);
    const EvalResult r = evaluate(net, ds->data);
    out->top1 = r.top1;
    out->top5 = r.top5;
    out->n_examples = r.n_examples;
  });
}

bnlab_status bnlab_analyze_gamma(const bnlab_checkpoint* ckpt, char** out_stats_csv,
                                 char** out_gamma_hist_csv, char** out_beta_hist_csv) {
  if (!ckpt) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    const GammaBetaStats stats = gamma_distribution(ckpt->ckpt);
    if (out_stats_csv) *out_stats_csv = dup_string(gamma_stats_csv(stats));
    if (out_gamma_hist_csv)
      *out_gamma_hist_csv = dup_string(histogram_csv(stats.gamma.bin_edges, stats.gamma.bin_counts));
    if (out_beta_hist_csv)
      *out_beta_hist_csv = dup_string(histogram_csv(stats.beta.bin_edges, stats.beta.bin_counts));
  });
}

bnlab_status bnlab_analyze_clamp(const bnlab_checkpoint* ckpt, const bnlab_dataset* ds,
                                 const double* thresholds, size_t n, char** out_csv) {
  if (!ckpt || !ds || !thresholds || n == 0 || !out_csv)
    return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    const std::vector<double> thetas(thresholds, thresholds + n);
    *out_csv = dup_string(clamp_sweep_csv(clamp_sweep(ckpt->ckpt, thetas, ds->data)));
  });
}

bnlab_status bnlab_analyze_activations(const bnlab_checkpoint* ckpt, const bnlab_dataset* ds,
                                       char** out_summary_csv, char** out_units_csv,
                                       char** out_hist_csv) {
  if (!ckpt || !ds) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    const ActivationStats stats = activation_zero_frequency(ckpt->ckpt, ds->data);
    if (out_summary_csv) *out_summary_csv = dup_string(activation_summary_csv(stats));
    if (out_units_csv) *out_units_csv = dup_string(activation_units_csv(stats));
    if (out_hist_csv) *out_hist_csv = dup_string(histogram_csv(stats.bin_edges, stats.bin_counts));
  });
}

bnlab_status bnlab_analyze_scaling(const char* points_csv_path, const char* group_by,
                                   char** out_csv) {
  if (!points_csv_path || !out_csv) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  return guarded([&] {
    const std::string text = read_file(points_csv_path);
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw FormatError("scaling points file is empty");
    std::vector<ScalingPoint> points;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      std::istringstream row(line);
      ScalingPoint p;
      std::string count_text, acc_text;
      if (!std::getline(row, p.group, ',') || !std::getline(row, count_text, ',') ||
          !std::getline(row, acc_text, ','))
        throw FormatError("scaling points rows need group,bn_params,accuracy: '" + line + "'");
      try {
        p.param_count = std::stod(count_text);
        p.accuracy = std::stod(acc_text);
      } catch (const std::logic_error&) {
        throw FormatError("bad number in scaling points row: '" + line + "'");
      }
      if (group_by && *group_by && p.group != group_by) continue;
      points.push_back(std::move(p));
    }
    if (points.empty())
      throw UsageError(group_by && *group_by
                           ? "no scaling points in group '" + std::string(group_by) + "'"
                           : "no scaling points in file");
    const ScalingResult result = scaling_regression(points);
    std::string csv = scaling_csv(result);
    if (result.has_ratio) csv += "# slope_ratio," + fmt_g6(result.slope_ratio) + "\n";
    *out_csv = dup_string(csv);
  });
}

bnlab_status bnlab_verify(const char* before_path, const char* after_path, const char* selector,
                          char** out_report) {
  if (!before_path || !after_path) return fail(BNLAB_ERR_INVALID_ARG, "null argument");
  VerifyOutcome outcome;
  const bnlab_status st = guarded([&] {
    outcome = verify_checkpoints(before_path, after_path, selector ? selector : "");
  });
  if (st != BNLAB_OK) return st;
  if (out_report) *out_report = dup_string(outcome.report);
  if (!outcome.check.ok())
    return fail(BNLAB_ERR_VERIFY, "frozen parameters changed: " +
                                      std::to_string(outcome.check.violations.size()) +
                                      " tensors");
  return BNLAB_OK;
}

}  // extern "C"
