#include "bnlab/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bnlab/csv.hpp"
#include "bnlab/trainability.hpp"

namespace bnlab {

using nlohmann::json;

Dtype RunConfig::dtype() const {
  if (precision == "f32") return Dtype::f32;
  if (precision == "f64") return Dtype::f64;
  throw ConfigError("precision must be f32 or f64, got '" + precision + "'");
}

RunConfig config_defaults() { return RunConfig{}; }

namespace {

json schedule_to_json(const Hyperparams& hp) {
  json arr = json::array();
  for (auto& [e, m] : hp.schedule) arr.push_back(json{{"epoch", e}, {"multiplier", m}});
  return arr;
}

std::vector<std::pair<int, double>> schedule_from_string(const std::string& text) {
  // "80:0.1,120:0.1"
  std::vector<std::pair<int, double>> out;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("schedule entries are epoch:multiplier, got '" + item + "'");
    out.emplace_back(std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
  }
  return out;
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) {
  json j;
  j["arch"] = json{{"family", family_name(cfg.arch.family)},
                   {"depth", cfg.arch.depth},
                   {"width", cfg.arch.width.str()},
                   {"feature_init", feature_init_name(cfg.arch.feature_init)},
                   {"bn_init", bn_init_name(cfg.arch.bn_init)}};
  j["selector"] = cfg.selector;
  j["hp"] = json{{"epochs", cfg.hp.epochs},
                 {"batch_size", cfg.hp.batch_size},
                 {"base_lr", cfg.hp.base_lr},
                 {"momentum", cfg.hp.momentum},
                 {"weight_decay", cfg.hp.weight_decay},
                 {"schedule", schedule_to_json(cfg.hp)},
                 {"warmup_epochs", cfg.hp.warmup_epochs}};
  j["dataset"] = cfg.dataset;
  j["data_dir"] = cfg.data_dir;
  j["synthetic"] = json{{"classes", cfg.synth.classes},
                        {"n", cfg.synth.n},
                        {"image_size", cfg.synth.image_size},
                        {"clusters_per_class", cfg.synth.clusters_per_class},
                        {"separation", cfg.synth.separation},
                        {"noise", cfg.synth.noise},
                        {"test_n", cfg.synth_test_n}};
  j["replicates"] = cfg.replicates;
  j["base_seed"] = cfg.base_seed;
  j["augment"] = cfg.augment;
  j["precision"] = cfg.precision;
  j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

RunConfig config_load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + " is not valid JSON: " + e.what());
  }

  RunConfig cfg;
  try {
    if (j.contains("arch")) {
      const auto& a = j["arch"];
      if (a.contains("family")) cfg.arch.family = family_parse(a["family"].get<std::string>());
      if (a.contains("depth")) cfg.arch.depth = a["depth"].get<int>();
      if (a.contains("width")) {
        if (a["width"].is_string())
          cfg.arch.width = WidthScale::parse(a["width"].get<std::string>());
        else
          cfg.arch.width = WidthScale::parse(std::to_string(a["width"].get<int>()));
      }
      if (a.contains("feature_init"))
        cfg.arch.feature_init = feature_init_parse(a["feature_init"].get<std::string>());
      if (a.contains("bn_init")) cfg.arch.bn_init = bn_init_parse(a["bn_init"].get<std::string>());
    }
    if (j.contains("selector")) cfg.selector = j["selector"].get<std::string>();
    if (j.contains("hp")) {
      const auto& h = j["hp"];
      if (h.contains("epochs")) cfg.hp.epochs = h["epochs"].get<int>();
      if (h.contains("batch_size")) cfg.hp.batch_size = h["batch_size"].get<int>();
      if (h.contains("base_lr")) cfg.hp.base_lr = h["base_lr"].get<double>();
      if (h.contains("momentum")) cfg.hp.momentum = h["momentum"].get<double>();
      if (h.contains("weight_decay")) cfg.hp.weight_decay = h["weight_decay"].get<double>();
      if (h.contains("warmup_epochs")) cfg.hp.warmup_epochs = h["warmup_epochs"].get<double>();
      if (h.contains("schedule")) {
        cfg.hp.schedule.clear();
        for (const auto& s : h["schedule"])
          cfg.hp.schedule.emplace_back(s.at("epoch").get<int>(),
                                       s.at("multiplier").get<double>());
      }
    }
    if (j.contains("dataset")) cfg.dataset = j["dataset"].get<std::string>();
    if (j.contains("data_dir")) cfg.data_dir = j["data_dir"].get<std::string>();
    if (j.contains("synthetic")) {
      const auto& s = j["synthetic"];
      if (s.contains("classes")) cfg.synth.classes = s["classes"].get<int>();
      if (s.contains("n")) cfg.synth.n = s["n"].get<int>();
      if (s.contains("image_size")) cfg.synth.image_size = s["image_size"].get<int>();
      if (s.contains("clusters_per_class"))
        cfg.synth.clusters_per_class = s["clusters_per_class"].get<int>();
      if (s.contains("separation")) cfg.synth.separation = s["separation"].get<double>();
      if (s.contains("noise")) cfg.synth.noise = s["noise"].get<double>();
      if (s.contains("test_n")) cfg.synth_test_n = s["test_n"].get<int>();
    }
    if (j.contains("replicates")) cfg.replicates = j["replicates"].get<int>();
    if (j.contains("base_seed")) cfg.base_seed = j["base_seed"].get<uint64_t>();
    if (j.contains("augment")) cfg.augment = j["augment"].get<bool>();
    if (j.contains("precision")) cfg.precision = j["precision"].get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  return cfg;
}

void config_save(const std::string& path, const RunConfig& cfg) {
  write_file_atomic(path, config_to_json(cfg));
}

void config_set(RunConfig& cfg, const std::string& key, const std::string& value) {
  try {
    if (key == "arch.family") cfg.arch.family = family_parse(value);
    else if (key == "arch.depth") cfg.arch.depth = std::stoi(value);
    else if (key == "arch.width") cfg.arch.width = WidthScale::parse(value);
    else if (key == "arch.feature_init") cfg.arch.feature_init = feature_init_parse(value);
    else if (key == "arch.bn_init") cfg.arch.bn_init = bn_init_parse(value);
    else if (key == "selector") cfg.selector = value;
    else if (key == "hp.epochs") cfg.hp.epochs = std::stoi(value);
    else if (key == "hp.batch_size") cfg.hp.batch_size = std::stoi(value);
    else if (key == "hp.base_lr") cfg.hp.base_lr = std::stod(value);
    else if (key == "hp.momentum") cfg.hp.momentum = std::stod(value);
    else if (key == "hp.weight_decay") cfg.hp.weight_decay = std::stod(value);
    else if (key == "hp.warmup_epochs") cfg.hp.warmup_epochs = std::stod(value);
    else if (key == "hp.schedule") cfg.hp.schedule = schedule_from_string(value);
    else if (key == "dataset") cfg.dataset = value;
    else if (key == "data_dir") cfg.data_dir = value;
    else if (key == "synthetic.classes") cfg.synth.classes = std::stoi(value);
    else if (key == "synthetic.n") cfg.synth.n = std::stoi(value);
    else if (key == "synthetic.image_size") cfg.synth.image_size = std::stoi(value);
    else if (key == "synthetic.clusters_per_class")
      cfg.synth.clusters_per_class = std::stoi(value);
    else if (key == "synthetic.separation") cfg.synth.separation = std::stod(value);
    else if (key == "synthetic.noise") cfg.synth.noise = std::stod(value);
    else if (key == "synthetic.test_n") cfg.synth_test_n = std::stoi(value);
    else if (key == "replicates") cfg.replicates = std::stoi(value);
    else if (key == "base_seed") cfg.base_seed = std::stoull(value);
    else if (key == "augment") cfg.augment = (value == "true" || value == "1");
    else if (key == "precision") cfg.precision = value;
    else if (key == "out_dir") cfg.out_dir = value;
    else throw ConfigError("unknown config key: " + key);
  } catch (const std::logic_error&) {
    throw ConfigError("cannot parse value '" + value + "' for key " + key);
  }
}

void config_validate(const RunConfig& cfg) {
  make_plan(cfg.arch);                  // validates family/depth/width
  GroupSelector::parse(cfg.selector);   // validates grammar and non-emptiness
  cfg.dtype();
  if (cfg.dataset != "cifar10" && cfg.dataset != "synthetic")
    throw ConfigError("dataset must be cifar10 or synthetic, got '" + cfg.dataset + "'");
  if (cfg.hp.epochs < 0) throw ConfigError("epochs must be >= 0");
  if (cfg.hp.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (cfg.hp.base_lr <= 0) throw ConfigError("base_lr must be positive");
  if (cfg.hp.momentum < 0 || cfg.hp.momentum >= 1)
    throw ConfigError("momentum must be in [0, 1)");
  if (cfg.hp.weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (cfg.hp.warmup_epochs < 0) throw ConfigError("warmup_epochs must be >= 0");
  int prev = -1;
  for (const auto& [epoch, mult] : cfg.hp.schedule) {
    if (epoch <= prev) throw ConfigError("schedule epochs must be strictly increasing");
    if (mult <= 0) throw ConfigError("schedule multipliers must be positive");
    prev = epoch;
  }
  if (cfg.replicates < 1) throw ConfigError("replicates must be >= 1");
  if (cfg.dataset == "synthetic") {
    if (cfg.synth.image_size < 8)
      throw ConfigError("synthetic image_size must be >= 8 for the downsampling stages");
    if (cfg.synth_test_n % cfg.synth.classes != 0)
      throw ConfigError("synthetic test_n must be divisible by the class count");
  }
}

DataPair open_dataset(const RunConfig& cfg) {
  if (cfg.dataset == "synthetic")
    return synthetic_pair(cfg.synth, cfg.synth_test_n, mix_seed(cfg.base_seed, 0xDA7A));
  std::string dir = cfg.data_dir;
  if (dir.empty()) {
    const char* env = std::getenv("BNLAB_DATA_DIR");
    if (env && *env) dir = env;
  }
  if (dir.empty())
    throw ConfigError("cifar10 dataset needs data_dir (or the BNLAB_DATA_DIR environment "
                      "variable)");
  return load_cifar10(dir);
}

}  // namespace bnlab
