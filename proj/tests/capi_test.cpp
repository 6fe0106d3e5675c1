// Exercises the extern-C surface the way an external client would.

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "bnlab.h"

namespace {

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("bnlab_capi_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

struct Str {
  char* v = nullptr;
  ~Str() { bnlab_free_string(v); }
};

}  // namespace

TEST_CASE("count params through the C API") {
  bnlab_param_counts counts{};
  REQUIRE(bnlab_count_params("cifar_resnet", 110, "1", &counts) == BNLAB_OK);
  CHECK(counts.batchnorm == 8288);
  CHECK(counts.output == 650);
  CHECK(counts.shortcut == 2560);
  CHECK(counts.weight_layer_depth == 110);

  CHECK(bnlab_count_params("cifar_resnet", 15, "1", &counts) == BNLAB_ERR_CONFIG);
  CHECK(std::strlen(bnlab_last_error()) > 0);
  CHECK(bnlab_count_params(nullptr, 14, "1", &counts) == BNLAB_ERR_INVALID_ARG);

  Str csv;
  REQUIRE(bnlab_param_table_csv("table1", &csv.v) == BNLAB_OK);
  int rows = 0;
  for (const char* p = csv.v; *p; ++p) rows += *p == '\n';
  CHECK(rows == 19);  // header + 18 configurations

  Str vgg;
  REQUIRE(bnlab_param_table_csv("vgg", &vgg.v) == BNLAB_OK);
  rows = 0;
  for (const char* p = vgg.v; *p; ++p) rows += *p == '\n';
  CHECK(rows == 5);
}

TEST_CASE("config lifecycle and validation errors") {
  bnlab_config* cfg = nullptr;
  REQUIRE(bnlab_config_create(&cfg) == BNLAB_OK);
  CHECK(bnlab_config_set(cfg, "arch.depth", "20") == BNLAB_OK);
  CHECK(bnlab_config_set(cfg, "selector", "batchnorm") == BNLAB_OK);
  CHECK(bnlab_config_set(cfg, "bogus.key", "1") == BNLAB_ERR_CONFIG);
  CHECK(bnlab_config_validate(cfg) == BNLAB_OK);

  CHECK(bnlab_config_set(cfg, "arch.depth", "17") == BNLAB_OK);
  CHECK(bnlab_config_validate(cfg) == BNLAB_ERR_CONFIG);

  Str json;
  CHECK(bnlab_config_set(cfg, "arch.depth", "20") == BNLAB_OK);
  REQUIRE(bnlab_config_dump(cfg, &json.v) == BNLAB_OK);
  CHECK(std::string(json.v).find("\"depth\": 20") != std::string::npos);
  bnlab_config_destroy(cfg);
}

TEST_CASE("train, evaluate, analyze and verify through the C API") {
  const std::string dir = scratch("roundtrip");

  bnlab_config* cfg = nullptr;
  REQUIRE(bnlab_config_create(&cfg) == BNLAB_OK);
  bnlab_config_set(cfg, "arch.depth", "8");
  bnlab_config_set(cfg, "arch.width", "1/4");
  bnlab_config_set(cfg, "selector", "batchnorm");
  bnlab_config_set(cfg, "dataset", "synthetic");
  bnlab_config_set(cfg, "synthetic.n", "200");
  bnlab_config_set(cfg, "synthetic.image_size", "8");
  bnlab_config_set(cfg, "synthetic.test_n", "100");
  bnlab_config_set(cfg, "hp.epochs", "1");
  bnlab_config_set(cfg, "hp.batch_size", "50");
  bnlab_config_set(cfg, "replicates", "1");
  bnlab_config_set(cfg, "augment", "false");
  bnlab_config_set(cfg, "out_dir", (dir + "/run").c_str());

  bnlab_train_summary summary{};
  REQUIRE(bnlab_train(cfg, 0, &summary) == BNLAB_OK);
  CHECK(summary.replicates == 1);
  CHECK(summary.trainable == 168);  // 2 * 84 gammas+betas at quarter width
  CHECK(summary.total_params > summary.trainable);

  const std::string init_path = dir + "/run/replicate_0/init.bnck";
  const std::string final_path = dir + "/run/replicate_0/final.bnck";
  CHECK(std::filesystem::exists(init_path));
  CHECK(std::filesystem::exists(final_path));
  CHECK(std::filesystem::exists(dir + "/run/replicate_0/metrics.csv"));
  CHECK(std::filesystem::exists(dir + "/run/summary.csv"));

  // Evaluate the final checkpoint on the test split.
  bnlab_checkpoint* ckpt = nullptr;
  REQUIRE(bnlab_checkpoint_load(final_path.c_str(), &ckpt) == BNLAB_OK);
  bnlab_dataset* test = nullptr;
  REQUIRE(bnlab_dataset_open(cfg, 1, &test) == BNLAB_OK);
  bnlab_eval_result ev{};
  REQUIRE(bnlab_evaluate(ckpt, test, &ev) == BNLAB_OK);
  CHECK(ev.n_examples == 100);
  CHECK(ev.top1 >= 0.0);
  CHECK(ev.top5 >= ev.top1);

  // Gamma analysis.
  Str stats, ghist, bhist;
  REQUIRE(bnlab_analyze_gamma(ckpt, &stats.v, &ghist.v, &bhist.v) == BNLAB_OK);
  CHECK(std::string(stats.v).find("gamma") != std::string::npos);

  // Clamp sweep.
  const double thetas[3] = {0.0, 0.01, 0.05};
  Str clamp_csv;
  REQUIRE(bnlab_analyze_clamp(ckpt, test, thetas, 3, &clamp_csv.v) == BNLAB_OK);
  CHECK(std::string(clamp_csv.v).find("theta") != std::string::npos);

  // Activations.
  Str act_summary, act_units, act_hist;
  REQUIRE(bnlab_analyze_activations(ckpt, test, &act_summary.v, &act_units.v, &act_hist.v) ==
          BNLAB_OK);
  CHECK(std::string(act_summary.v).find("disabled_fraction") != std::string::npos);

  // Verify: batchnorm-only training leaves everything else frozen.
  Str report;
  CHECK(bnlab_verify(init_path.c_str(), final_path.c_str(), nullptr, &report.v) == BNLAB_OK);
  CHECK(std::string(report.v).find("all bit-identical") != std::string::npos);

  // Self-comparison also passes.
  Str self_report;
  CHECK(bnlab_verify(init_path.c_str(), init_path.c_str(), nullptr, &self_report.v) == BNLAB_OK);

  bnlab_dataset_destroy(test);
  bnlab_checkpoint_destroy(ckpt);
  bnlab_config_destroy(cfg);
}

TEST_CASE("scaling regression from a points file") {
  const std::string dir = scratch("scaling");
  const std::string path = dir + "/points.csv";
  {
    std::ofstream os(path);
    os << "group,bn_params,accuracy\n";
    for (int i = 0; i < 4; ++i)
      os << "depth," << (1024 << i) << "," << 0.3 + 0.059 * i << "\n";
    for (int i = 0; i < 4; ++i)
      os << "width," << (1024 << i) << "," << 0.3 + 0.05 * i << "\n";
  }
  Str csv;
  REQUIRE(bnlab_analyze_scaling(path.c_str(), nullptr, &csv.v) == BNLAB_OK);
  const std::string text = csv.v;
  CHECK(text.find("depth,0.059") != std::string::npos);
  CHECK(text.find("width,0.05") != std::string::npos);
  CHECK(text.find("slope_ratio,1.18") != std::string::npos);

  // Restricting to one group fits that group alone.
  Str depth_only;
  REQUIRE(bnlab_analyze_scaling(path.c_str(), "depth", &depth_only.v) == BNLAB_OK);
  const std::string dtext = depth_only.v;
  CHECK(dtext.find("depth,0.059") != std::string::npos);
  CHECK(dtext.find("width") == std::string::npos);

  CHECK(bnlab_analyze_scaling(path.c_str(), "no_such_group", &depth_only.v) ==
        BNLAB_ERR_INVALID_ARG);
  CHECK(bnlab_analyze_scaling((dir + "/missing.csv").c_str(), nullptr, &csv.v) == BNLAB_ERR_IO);
}

TEST_CASE("checkpoint loader status codes") {
  const std::string dir = scratch("badfiles");
  bnlab_checkpoint* ckpt = nullptr;
  CHECK(bnlab_checkpoint_load((dir + "/nope.bnck").c_str(), &ckpt) == BNLAB_ERR_IO);

  const std::string junk = dir + "/junk.bnck";
  {
    std::ofstream os(junk, std::ios::binary);
    os << "not a checkpoint at all";
  }
  CHECK(bnlab_checkpoint_load(junk.c_str(), &ckpt) == BNLAB_ERR_FORMAT);
}
