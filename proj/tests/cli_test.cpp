// Exit-code and output contract of the command-line tool.
// 0 success, 1 invariant violation, 2 usage/config, 3 divergence.

#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <sys/wait.h>

namespace {

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("bnlab_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string run_cli(const std::string& args, int* exit_code) {
  const std::string cmd = std::string(BNLAB_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  *exit_code = WEXITSTATUS(pclose(pipe));
  return out;
}

}  // namespace

TEST_CASE("count-params: valid, tables, and the depth-formula error") {
  int code = 0;
  const std::string row = run_cli("count-params --family cifar_resnet --depth 110", &code);
  CHECK(code == 0);
  CHECK(row.find("8288") != std::string::npos);

  const std::string bad = run_cli("count-params --family cifar_resnet --depth 15", &code);
  CHECK(code == 2);
  CHECK(bad.find("6N+2") != std::string::npos);

  run_cli("count-params --all-table1", &code);
  CHECK(code == 0);
}

TEST_CASE("train: malformed selector exits 2; smoke run writes artifacts") {
  const std::string dir = scratch("train");
  int code = 0;
  run_cli("train --selector no_such_group --dataset synthetic --epochs 0 --replicates 1 --out " +
              dir + "/bad",
          &code);
  CHECK(code == 2);

  const std::string out = run_cli(
      "train --family cifar_resnet --depth 8 --width 1/4 --dataset synthetic "
      "--synthetic-n 100 --synthetic-image-size 8 --selector batchnorm --epochs 1 "
      "--batch-size 50 --replicates 2 --augment false --quiet --out " +
          dir + "/ok",
      &code);
  CHECK(code == 0);
  CHECK(out.find("trainable: 168 /") != std::string::npos);
  CHECK(std::filesystem::exists(dir + "/ok/replicate_0/final.bnck"));
  CHECK(std::filesystem::exists(dir + "/ok/replicate_1/metrics.csv"));
  CHECK(std::filesystem::exists(dir + "/ok/summary.csv"));
  CHECK(std::filesystem::exists(dir + "/ok/config.json"));
}

TEST_CASE("verify: clean pair exits 0, corrupted checkpoint exits 1") {
  const std::string dir = scratch("verify");
  int code = 0;
  run_cli("train --family cifar_resnet --depth 8 --width 1/4 --dataset synthetic "
          "--synthetic-n 100 --synthetic-image-size 8 --selector batchnorm --epochs 1 "
          "--batch-size 50 --replicates 1 --augment false --quiet --out " +
              dir + "/run",
          &code);
  REQUIRE(code == 0);
  const std::string init = dir + "/run/replicate_0/init.bnck";
  const std::string final_ = dir + "/run/replicate_0/final.bnck";

  const std::string report = run_cli("verify --before " + init + " --after " + final_, &code);
  CHECK(code == 0);
  CHECK(report.find("all bit-identical") != std::string::npos);

  // Self-comparison: nothing changed anywhere.
  run_cli("verify --before " + init + " --after " + init, &code);
  CHECK(code == 0);

  // Flip one byte in a frozen conv kernel payload: the tool must name the
  // tensor and exit 1. The record header for init/conv/kernel is the last
  // occurrence of its name (the manifest mentions it first).
  std::string bytes;
  {
    std::ifstream is(final_, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    bytes = os.str();
  }
  const std::string needle = "init/conv/kernel";
  const size_t pos = bytes.rfind(needle);
  REQUIRE(pos != std::string::npos);
  const size_t payload = pos + needle.size() + 4 + 4 + 4 * 8;  // dtype+rank+extents
  bytes[payload + 2] = static_cast<char>(bytes[payload + 2] ^ 0x40);
  const std::string corrupted = dir + "/corrupted.bnck";
  {
    std::ofstream os(corrupted, std::ios::binary);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  const std::string bad = run_cli("verify --before " + init + " --after " + corrupted, &code);
  CHECK(code == 1);
  CHECK(bad.find("init/conv/kernel") != std::string::npos);
}

TEST_CASE("eval command reports accuracy from a checkpoint") {
  const std::string dir = scratch("eval");
  int code = 0;
  run_cli("train --family cifar_resnet --depth 8 --width 1/4 --dataset synthetic "
          "--synthetic-n 100 --synthetic-image-size 8 --selector all --epochs 1 "
          "--batch-size 50 --replicates 1 --augment false --quiet --out " +
              dir + "/run",
          &code);
  REQUIRE(code == 0);
  const std::string out =
      run_cli("eval --checkpoint " + dir + "/run/replicate_0/final.bnck --dataset synthetic "
              "--synthetic-n 100 --synthetic-image-size 8",
              &code);
  CHECK(code == 0);
  CHECK(out.find("top1") != std::string::npos);
  CHECK(out.find("top5") != std::string::npos);
}

TEST_CASE("thread count does not change results") {
  const std::string dir = scratch("threads");
  const std::string flags =
      "train --family cifar_resnet --depth 8 --width 1/4 --dataset synthetic "
      "--synthetic-n 100 --synthetic-image-size 8 --selector all --epochs 2 "
      "--batch-size 50 --replicates 1 --seed 77 --augment false --quiet --out ";
  int c1 = 0, c2 = 0;
  run_cli(flags + dir + "/t1", &c1);
  // Same run with the kernels partitioned across two workers.
  {
    const std::string cmd = std::string("BNLAB_THREADS=2 ") + BNLAB_CLI_PATH + " " + flags +
                            dir + "/t2 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    while (fread(buf, 1, sizeof buf, pipe) > 0) {
    }
    c2 = WEXITSTATUS(pclose(pipe));
  }
  REQUIRE(c1 == 0);
  REQUIRE(c2 == 0);
  auto slurp = [](const std::string& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  const std::string a = slurp(dir + "/t1/replicate_0/final.bnck");
  const std::string b = slurp(dir + "/t2/replicate_0/final.bnck");
  REQUIRE(!a.empty());
  CHECK(a == b);
}

TEST_CASE("divergence exits 3 with a located report") {
  const std::string dir = scratch("diverge");
  int code = 0;
  const std::string out = run_cli(
      "train --family cifar_resnet --depth 8 --width 1/4 --dataset synthetic "
      "--synthetic-n 100 --synthetic-image-size 8 --selector all --epochs 5 "
      "--batch-size 50 --lr 1e18 --replicates 1 --augment false --quiet --out " +
          dir + "/run",
      &code);
  CHECK(code == 3);
  CHECK(out.find("epoch") != std::string::npos);
  CHECK(out.find("iteration") != std::string::npos);
}

TEST_CASE("help enumerates recipe defaults") {
  int code = 0;
  const std::string help = run_cli("train --help", &code);
  CHECK(code == 0);
  CHECK(help.find("[160]") != std::string::npos);    // epochs
  CHECK(help.find("[128]") != std::string::npos);    // batch size
  CHECK(help.find("[0.1]") != std::string::npos);    // lr
  CHECK(help.find("[0.9]") != std::string::npos);    // momentum
  CHECK(help.find("[0.0001]") != std::string::npos); // weight decay
  CHECK(help.find("80:0.1,120:0.1") != std::string::npos);
}
