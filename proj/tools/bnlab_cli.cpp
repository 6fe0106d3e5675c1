// Command-line front end. Talks to the core exclusively through the C API.
//
// Exit codes: 0 success, 1 invariant violation, 2 usage/config error,
// 3 divergence.

#include <cstdio>
#include <cstdlib>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bnlab.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

int exit_code_for(bnlab_status status) {
  switch (status) {
    case BNLAB_OK: return kExitOk;
    case BNLAB_ERR_VERIFY: return kExitViolation;
    case BNLAB_ERR_DIVERGED: return kExitDiverged;
    default: return kExitUsage;
  }
}

int report_failure(bnlab_status status) {
  std::fprintf(stderr, "error (%s): %s\n", bnlab_status_name(status), bnlab_last_error());
  return exit_code_for(status);
}

struct StringOut {
  char* value = nullptr;
  ~StringOut() { bnlab_free_string(value); }
};

struct ConfigHandle {
  bnlab_config* cfg = nullptr;
  ~ConfigHandle() { bnlab_config_destroy(cfg); }
};

struct CheckpointHandle {
  bnlab_checkpoint* ckpt = nullptr;
  ~CheckpointHandle() { bnlab_checkpoint_destroy(ckpt); }
};

struct DatasetHandle {
  bnlab_dataset* ds = nullptr;
  ~DatasetHandle() { bnlab_dataset_destroy(ds); }
};

void write_or_print(const std::string& path, const char* content) {
  if (path.empty() || path == "-") {
    std::fputs(content, stdout);
    return;
  }
  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw CLI::RuntimeError("cannot write " + path, kExitUsage);
  std::fputs(content, f);
  std::fclose(f);
  std::printf("wrote %s\n", path.c_str());
}

// Builds a config from an optional file plus flag overrides.
struct ConfigFlags {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  void add_option(CLI::App* cmd) {
    cmd->add_option("-c,--config", config_path, "Run configuration file (JSON)");
    auto add = [this, cmd](const std::string& flag, const std::string& key,
                           const std::string& help) {
      cmd->add_option_function<std::string>(
          flag, [this, key](const std::string& v) { overrides.emplace_back(key, v); }, help);
    };
    add("--family", "arch.family", "Architecture family: cifar_resnet|imagenet_resnet|vgg");
    add("--depth", "arch.depth", "Network depth (cifar: 6N+2)");
    add("--width", "arch.width", "Width scale, e.g. 1, 4, 1/4");
    add("--feature-init", "arch.feature_init",
        "Feature init: he_normal|uniform|binarized|orthogonal [he_normal]");
    add("--bn-init", "arch.bn_init",
        "Affine init: uniform01_zero|one_zero|uniform_sym_zero|one_one [uniform01_zero]");
    add("--selector", "selector",
        "Trainable parameters: all|batchnorm|output|shortcut|body|random_per_channel(k), "
        "joined with '+' [all]");
    add("--epochs", "hp.epochs", "Training epochs [160]");
    add("--batch-size", "hp.batch_size", "Batch size [128]");
    add("--lr", "hp.base_lr", "Base learning rate [0.1]");
    add("--momentum", "hp.momentum", "SGD momentum [0.9]");
    add("--weight-decay", "hp.weight_decay", "Weight decay [0.0001]");
    add("--schedule", "hp.schedule", "LR drops as epoch:mult,... [80:0.1,120:0.1]");
    add("--warmup-epochs", "hp.warmup_epochs", "Linear warmup epochs [0]");
    add("--dataset", "dataset", "Dataset: cifar10|synthetic [cifar10]");
    add("--data-dir", "data_dir", "CIFAR-10 batch directory (or $BNLAB_DATA_DIR)");
    add("--replicates", "replicates", "Independent replicate runs [5]");
    add("--seed", "base_seed", "Base seed for all streams [1]");
    add("--augment", "augment", "Flip/translate augmentation: true|false [true]");
    add("--precision", "precision", "f32|f64 [f32]");
    add("--out", "out_dir", "Output directory [runs/out]");
    add("--synthetic-n", "synthetic.n", "Synthetic train examples [2000]");
    add("--synthetic-image-size", "synthetic.image_size", "Synthetic image size [16]");
    add("--synthetic-separation", "synthetic.separation", "Synthetic class separation [1.0]");
  }

  bnlab_status build(ConfigHandle& out) const {
    bnlab_status st = config_path.empty() ? bnlab_config_create(&out.cfg)
                                          : bnlab_config_load(config_path.c_str(), &out.cfg);
    if (st != BNLAB_OK) return st;
    for (const auto& [key, value] : overrides) {
      st = bnlab_config_set(out.cfg, key.c_str(), value.c_str());
      if (st != BNLAB_OK) return st;
    }
    return bnlab_config_validate(out.cfg);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Training laboratory for convolutional networks where only the "
               "normalization affine parameters (or other selected groups) learn"};
  app.require_subcommand(1);

  // ---- count-params ----
  auto* count_cmd = app.add_subcommand("count-params", "Exact per-group parameter accounting");
  std::string count_family = "cifar_resnet";
  int count_depth = 14;
  std::string count_width = "1";
  bool all_table1 = false, all_vgg = false;
  std::string count_out;
  count_cmd->add_option("--family", count_family,
                        "cifar_resnet|imagenet_resnet|vgg [cifar_resnet]");
  count_cmd->add_option("--depth", count_depth, "Network depth [14]");
  count_cmd->add_option("--width", count_width, "Width scale [1]");
  count_cmd->add_flag("--all-table1", all_table1,
                      "Emit all 18 reference ResNet configurations");
  count_cmd->add_flag("--all-vgg", all_vgg, "Emit the 4 VGG configurations");
  count_cmd->add_option("-o,--out", count_out, "Write CSV here instead of stdout");

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Run replicated training per configuration");
  ConfigFlags train_flags;
  train_flags.add_option(train_cmd);
  bool train_quiet = false;
  train_cmd->add_flag("--quiet", train_quiet, "Suppress per-epoch progress");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the configured test set");
  ConfigFlags eval_flags;
  eval_flags.add_option(eval_cmd);
  std::string eval_ckpt;
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();

  // ---- analyze ----
  auto* analyze_cmd = app.add_subcommand("analyze", "Representation analysis reports");
  analyze_cmd->require_subcommand(1);

  auto* gamma_cmd = analyze_cmd->add_subcommand("gamma", "gamma/beta distribution statistics");
  std::string gamma_ckpt, gamma_out_dir = ".";
  gamma_cmd->add_option("--checkpoint", gamma_ckpt, "Checkpoint file")->required();
  gamma_cmd->add_option("--out-dir", gamma_out_dir, "Directory for CSV reports [.]");

  auto* clamp_cmd = analyze_cmd->add_subcommand("clamp", "Accuracy under |gamma| clamping");
  ConfigFlags clamp_flags;
  clamp_flags.add_option(clamp_cmd);
  std::string clamp_ckpt, clamp_thresholds = "0,0.01,0.05,0.1,0.2", clamp_out;
  clamp_cmd->add_option("--checkpoint", clamp_ckpt, "Checkpoint file")->required();
  clamp_cmd->add_option("--thresholds", clamp_thresholds,
                        "Comma-separated thresholds [0,0.01,0.05,0.1,0.2]");
  clamp_cmd->add_option("-o,--out-csv", clamp_out, "Write CSV here instead of stdout");

  auto* act_cmd = analyze_cmd->add_subcommand("activations", "Per-ReLU zero frequencies");
  ConfigFlags act_flags;
  act_flags.add_option(act_cmd);
  std::string act_ckpt, act_out_dir = ".";
  act_cmd->add_option("--checkpoint", act_ckpt, "Checkpoint file")->required();
  act_cmd->add_option("--out-dir", act_out_dir, "Directory for CSV reports [.]");

  auto* scaling_cmd =
      analyze_cmd->add_subcommand("scaling", "Accuracy vs parameter-count regression");
  std::string scaling_points, scaling_out, scaling_group;
  scaling_cmd->add_option("--points", scaling_points, "CSV of group,bn_params,accuracy")
      ->required();
  scaling_cmd->add_option("--group-by", scaling_group, "Fit only this group's points");
  scaling_cmd->add_option("-o,--out", scaling_out, "Write CSV here instead of stdout");

  // ---- verify ----
  auto* verify_cmd =
      app.add_subcommand("verify", "Check that frozen parameters never moved");
  std::string verify_before, verify_after, verify_selector;
  verify_cmd->add_option("--before", verify_before, "Checkpoint at initialization")->required();
  verify_cmd->add_option("--after", verify_after, "Checkpoint after training")->required();
  verify_cmd->add_option("--selector", verify_selector,
                         "Override the selector recorded in the checkpoint");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (count_cmd->parsed()) {
      std::string csv;
      if (all_table1 || all_vgg) {
        if (all_table1) {
          StringOut out;
          const bnlab_status st = bnlab_param_table_csv("table1", &out.value);
          if (st != BNLAB_OK) return report_failure(st);
          csv += out.value;
        }
        if (all_vgg) {
          StringOut out;
          const bnlab_status st = bnlab_param_table_csv("vgg", &out.value);
          if (st != BNLAB_OK) return report_failure(st);
          if (!csv.empty()) {
            // Drop the duplicate header when both tables are requested.
            const std::string text = out.value;
            csv += text.substr(text.find('\n') + 1);
          } else {
            csv += out.value;
          }
        }
      } else {
        StringOut out;
        const std::string which = count_family + ":" + std::to_string(count_depth) + ":" +
                                  count_width;
        const bnlab_status st = bnlab_param_table_csv(which.c_str(), &out.value);
        if (st != BNLAB_OK) return report_failure(st);
        csv = out.value;
      }
      write_or_print(count_out, csv.c_str());
      return kExitOk;
    }

    if (train_cmd->parsed()) {
      ConfigHandle cfg;
      bnlab_status st = train_flags.build(cfg);
      if (st != BNLAB_OK) return report_failure(st);
      bnlab_train_summary summary{};
      st = bnlab_train(cfg.cfg, train_quiet ? 0 : 1, &summary);
      if (st != BNLAB_OK) return report_failure(st);
      std::printf("trainable: %lld / %lld (%.4f%%); replicates: %d; top1 %.4f +- %.4f, "
                  "top5 %.4f +- %.4f\n",
                  summary.trainable, summary.total_params,
                  100.0 * static_cast<double>(summary.trainable) /
                      static_cast<double>(summary.total_params),
                  summary.replicates, summary.mean_top1, summary.std_top1, summary.mean_top5,
                  summary.std_top5);
      return kExitOk;
    }

    if (eval_cmd->parsed()) {
      ConfigHandle cfg;
      bnlab_status st = eval_flags.build(cfg);
      if (st != BNLAB_OK) return report_failure(st);
      CheckpointHandle ckpt;
      st = bnlab_checkpoint_load(eval_ckpt.c_str(), &ckpt.ckpt);
      if (st != BNLAB_OK) return report_failure(st);
      DatasetHandle test;
      st = bnlab_dataset_open(cfg.cfg, 1, &test.ds);
      if (st != BNLAB_OK) return report_failure(st);
      bnlab_eval_result result{};
      st = bnlab_evaluate(ckpt.ckpt, test.ds, &result);
      if (st != BNLAB_OK) return report_failure(st);
      std::printf("top1 %.4f top5 %.4f over %ld examples\n", result.top1, result.top5,
                  result.n_examples);
      return kExitOk;
    }

    if (gamma_cmd->parsed()) {
      CheckpointHandle ckpt;
      bnlab_status st = bnlab_checkpoint_load(gamma_ckpt.c_str(), &ckpt.ckpt);
      if (st != BNLAB_OK) return report_failure(st);
      StringOut stats, ghist, bhist;
      st = bnlab_analyze_gamma(ckpt.ckpt, &stats.value, &ghist.value, &bhist.value);
      if (st != BNLAB_OK) return report_failure(st);
      write_or_print(gamma_out_dir + "/gamma_stats.csv", stats.value);
      write_or_print(gamma_out_dir + "/gamma_hist.csv", ghist.value);
      write_or_print(gamma_out_dir + "/beta_hist.csv", bhist.value);
      return kExitOk;
    }

    if (clamp_cmd->parsed()) {
      ConfigHandle cfg;
      bnlab_status st = clamp_flags.build(cfg);
      if (st != BNLAB_OK) return report_failure(st);
      CheckpointHandle ckpt;
      st = bnlab_checkpoint_load(clamp_ckpt.c_str(), &ckpt.ckpt);
      if (st != BNLAB_OK) return report_failure(st);
      DatasetHandle test;
      st = bnlab_dataset_open(cfg.cfg, 1, &test.ds);
      if (st != BNLAB_OK) return report_failure(st);

      std::vector<double> thetas;
      std::string item;
      std::istringstream parse(clamp_thresholds);
      while (std::getline(parse, item, ',')) {
        try {
          thetas.push_back(item == "inf" ? 1e30 : std::stod(item));
        } catch (const std::logic_error&) {
          std::fprintf(stderr, "error: bad threshold '%s'\n", item.c_str());
          return kExitUsage;
        }
      }
      StringOut csv;
      st = bnlab_analyze_clamp(ckpt.ckpt, test.ds, thetas.data(), thetas.size(), &csv.value);
      if (st != BNLAB_OK) return report_failure(st);
      write_or_print(clamp_out, csv.value);
      return kExitOk;
    }

    if (act_cmd->parsed()) {
      ConfigHandle cfg;
      bnlab_status st = act_flags.build(cfg);
      if (st != BNLAB_OK) return report_failure(st);
      CheckpointHandle ckpt;
      st = bnlab_checkpoint_load(act_ckpt.c_str(), &ckpt.ckpt);
      if (st != BNLAB_OK) return report_failure(st);
      DatasetHandle test;
      st = bnlab_dataset_open(cfg.cfg, 1, &test.ds);
      if (st != BNLAB_OK) return report_failure(st);
      StringOut summary, units, hist;
      st = bnlab_analyze_activations(ckpt.ckpt, test.ds, &summary.value, &units.value,
                                     &hist.value);
      if (st != BNLAB_OK) return report_failure(st);
      write_or_print(act_out_dir + "/activation_summary.csv", summary.value);
      write_or_print(act_out_dir + "/activation_units.csv", units.value);
      write_or_print(act_out_dir + "/activation_hist.csv", hist.value);
      return kExitOk;
    }

    if (scaling_cmd->parsed()) {
      StringOut csv;
      const bnlab_status st = bnlab_analyze_scaling(
          scaling_points.c_str(), scaling_group.empty() ? nullptr : scaling_group.c_str(),
          &csv.value);
      if (st != BNLAB_OK) return report_failure(st);
      write_or_print(scaling_out, csv.value);
      return kExitOk;
    }

    if (verify_cmd->parsed()) {
      StringOut report;
      const bnlab_status st =
          bnlab_verify(verify_before.c_str(), verify_after.c_str(),
                       verify_selector.empty() ? nullptr : verify_selector.c_str(),
                       &report.value);
      if (report.value) std::fputs(report.value, stdout);
      if (st == BNLAB_ERR_VERIFY) return kExitViolation;
      if (st != BNLAB_OK) return report_failure(st);
      return kExitOk;
    }
  } catch (const CLI::RuntimeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return e.get_exit_code();
  }
  return kExitUsage;
}
