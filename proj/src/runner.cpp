#include "bnlab/runner.hpp"

#include <filesystem>

#include "bnlab/csv.hpp"

namespace bnlab {

namespace fs = std::filesystem;

Hyperparams replicate_hyperparams(const RunConfig& cfg, int replicate) {
  Hyperparams hp = cfg.hp;
  const uint64_t r = static_cast<uint64_t>(replicate);
  hp.seed_init = mix_seed(mix_seed(cfg.base_seed, static_cast<uint64_t>(RngStream::weights)), r);
  hp.seed_data = mix_seed(mix_seed(cfg.base_seed, static_cast<uint64_t>(RngStream::data_order)), r);
  hp.seed_augment =
      mix_seed(mix_seed(cfg.base_seed, static_cast<uint64_t>(RngStream::augmentation)), r);
  return hp;
}

namespace {

CheckpointMeta meta_for(const RunConfig& cfg, const TrainabilityMask& mask,
                        const Hyperparams& hp, const Network& net, int epoch) {
  CheckpointMeta meta;
  meta.arch = cfg.arch;
  meta.selector = mask.selector;
  meta.mask_seed = mask.seed;
  meta.trainable_count = mask.trainable;
  meta.total_params = mask.total;
  meta.hp = hp;
  meta.epoch = epoch;
  const auto states = const_cast<Network&>(net).bn_states();
  if (!states.empty()) {
    meta.bn_eps = states.front()->eps;
    meta.bn_momentum = states.front()->momentum;
    meta.bn_stats_ready = states.front()->stats_ready;
  }
  return meta;
}

}  // namespace

RunSummary run_replicates(const RunConfig& cfg, bool log_to_stderr) {
  config_validate(cfg);
  const LayerPlan plan = make_plan(cfg.arch);
  const GroupSelector selector = GroupSelector::parse(cfg.selector);
  const uint64_t mask_seed = mix_seed(cfg.base_seed, static_cast<uint64_t>(RngStream::mask_selection));
  const TrainabilityMask mask = build_mask(plan, selector, mask_seed);

  const DataPair data = open_dataset(cfg);

  fs::create_directories(cfg.out_dir);
  config_save(cfg.out_dir + "/config.json", cfg);

  RunSummary summary;
  summary.replicates = cfg.replicates;
  summary.trainable = mask.trainable;
  summary.total_params = mask.total;

  std::vector<EvalResult> finals;
  for (int r = 0; r < cfg.replicates; ++r) {
    const Hyperparams hp = replicate_hyperparams(cfg, r);
    Network net = Network::build(plan, hp.seed_init, cfg.dtype());

    const std::string rep_dir = cfg.out_dir + "/replicate_" + std::to_string(r);
    fs::create_directories(rep_dir);
    save_checkpoint(rep_dir + "/init.bnck", checkpoint_from(net, meta_for(cfg, mask, hp, net, 0)));

    TrainOptions opts;
    opts.augment = cfg.augment;
    opts.log_to_stderr = log_to_stderr;
    const TrainResult result = train(net, mask, data.train, data.test, hp, opts);

    const std::string final_path = rep_dir + "/final.bnck";
    save_checkpoint(final_path,
                    checkpoint_from(net, meta_for(cfg, mask, hp, net, hp.epochs)));
    write_file_atomic(rep_dir + "/metrics.csv", metrics_csv(result.log));
    summary.checkpoint_paths.push_back(final_path);
    finals.push_back(result.final_eval);
  }

  summary.stats = aggregate_replicates(finals);
  CsvTable table({"replicate", "top1", "top5"});
  for (size_t r = 0; r < finals.size(); ++r)
    table.add_row({std::to_string(r), fmt_g6(finals[r].top1), fmt_g6(finals[r].top5)});
  table.add_row({"mean", fmt_g6(summary.stats.mean_top1), fmt_g6(summary.stats.mean_top5)});
  table.add_row({"std", fmt_g6(summary.stats.std_top1), fmt_g6(summary.stats.std_top5)});
  table.write(cfg.out_dir + "/summary.csv");
  return summary;
}

namespace {

void add_table_row(CsvTable& table, Family family, int depth, WidthScale width) {
  ArchSpec spec;
  spec.family = family;
  spec.depth = depth;
  spec.width = width;
  const LayerPlan plan = make_plan(spec);
  const ParamCounts c = count_params(plan);
  auto pct = [&](long long part) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", 100.0 * static_cast<double>(part) /
                                               static_cast<double>(c.total));
    return std::string(buf);
  };
  table.add_row({family_name(family), std::to_string(depth), width.str(),
                 std::to_string(c.total), std::to_string(c.batchnorm), std::to_string(c.output),
                 std::to_string(c.shortcut), pct(c.batchnorm), pct(c.output), pct(c.shortcut)});
}

}  // namespace

std::string param_table_csv(const std::string& which) {
  CsvTable table({"family", "depth", "width", "total", "batchnorm", "output", "shortcut",
                  "batchnorm_pct", "output_pct", "shortcut_pct"});
  const WidthScale one;
  if (which == "table1") {
    for (int depth : {14, 32, 56, 110, 218, 434, 866})
      add_table_row(table, Family::cifar_resnet, depth, one);
    for (int w : {1, 2, 4, 8, 16, 32})
      add_table_row(table, Family::cifar_resnet, 14, WidthScale{w, 1});
    for (int depth : {18, 34, 50, 101, 200})
      add_table_row(table, Family::imagenet_resnet, depth, one);
  } else if (which == "vgg") {
    for (int depth : {11, 13, 16, 19}) add_table_row(table, Family::vgg, depth, one);
  } else {
    // family:depth[:width]
    const auto c1 = which.find(':');
    if (c1 == std::string::npos)
      throw ConfigError("expected 'table1', 'vgg' or family:depth[:width], got '" + which + "'");
    const auto c2 = which.find(':', c1 + 1);
    const std::string fam = which.substr(0, c1);
    const std::string depth_text =
        c2 == std::string::npos ? which.substr(c1 + 1) : which.substr(c1 + 1, c2 - c1 - 1);
    int depth = 0;
    try {
      depth = std::stoi(depth_text);
    } catch (const std::logic_error&) {
      throw ConfigError("bad depth in '" + which + "'");
    }
    const WidthScale w =
        c2 == std::string::npos ? one : WidthScale::parse(which.substr(c2 + 1));
    add_table_row(table, family_parse(fam), depth, w);
  }
  return table.to_string();
}

EvalResult evaluate_checkpoint(const std::string& ckpt_path, const RunConfig& dataset_cfg) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  Network net = network_from(ckpt, Dtype::f32);
  net.set_mode(BnMode::eval);
  const DataPair data = open_dataset(dataset_cfg);
  return evaluate(net, data.test);
}

VerifyOutcome verify_checkpoints(const std::string& before_path, const std::string& after_path,
                                 const std::string& selector_override, bool has_seed_override,
                                 uint64_t seed_override) {
  const Checkpoint before = load_checkpoint(before_path);
  const Checkpoint after = load_checkpoint(after_path);
  if (!(before.meta.arch.family == after.meta.arch.family) ||
      before.meta.arch.depth != after.meta.arch.depth ||
      !(before.meta.arch.width == after.meta.arch.width))
    throw UsageError("verify: checkpoints describe different architectures (" +
                     before.meta.arch.name() + " vs " + after.meta.arch.name() + ")");

  const std::string selector_text =
      !selector_override.empty() ? selector_override : after.meta.selector;
  if (selector_text.empty())
    throw UsageError("verify: no selector recorded in the checkpoint; pass one explicitly");
  const uint64_t seed = has_seed_override ? seed_override : after.meta.mask_seed;

  const LayerPlan plan = make_plan(after.meta.arch);
  const TrainabilityMask mask = build_mask(plan, GroupSelector::parse(selector_text), seed);
  const FrozenCheck check = verify_frozen(before.param_refs(), after.param_refs(), mask);

  std::string report;
  report += "selector: " + mask.selector + "\n";
  report += "trainable: " + std::to_string(mask.trainable) + " / " + std::to_string(mask.total) +
            "\n";
  report += "changed trainable tensors: " + std::to_string(check.changed.size()) + "\n";
  if (!check.changed.empty()) {
    report += "changed:";
    for (const auto& name : check.changed) report += " " + name;
    report += "\n";
  }
  if (check.ok()) {
    report += "frozen parameters: all bit-identical\n";
  } else {
    report += "VIOLATIONS (frozen parameters changed):";
    for (const auto& name : check.violations) report += " " + name;
    report += "\n";
  }
  return {check, report};
}

}  // namespace bnlab
