#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

const fs::path root = fs::temp_directory_path() / "depthbnn_test_cli";
const std::string tiny = " --set n_train=64 --set n_val=64 --set n_test=64 --set batch_size=32 --set hidden_width=4";

int cli(const std::string& args) {
  const std::string cmd = "\"" DEPTHBNN_CLI_PATH "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

int count_lines(const fs::path& p) {
  std::ifstream is(p);
  int n = 0;
  for (std::string line; std::getline(is, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("usage errors exit with 2") {
  CHECK(cli("") == 2);
  CHECK(cli("no-such-command") == 2);
  CHECK(cli("train --config /no/such/file.cfg --output " + (root / "x").string()) == 2);
  CHECK(cli("train --set not_a_key=1 --output " + (root / "x").string()) == 2);
  CHECK(cli("train --set epochs=-1 --output " + (root / "x").string()) == 2);
}

TEST_CASE("train writes one history row per epoch") {
  const fs::path cfg = root / "one.cfg";
  fs::create_directories(root);
  std::ofstream(cfg) << "# single epoch\nepochs = 1\nomega = 1\n";
  REQUIRE(cli("train --config " + cfg.string() + tiny + " --output " + (root / "one").string()) == 0);
  CHECK(count_lines(root / "one" / "history.csv") == 2);

  // --set wins over the file.
  REQUIRE(cli("train --config " + cfg.string() + tiny + " --set epochs=5 --output " + (root / "five").string()) == 0);
  CHECK(count_lines(root / "five" / "history.csv") == 6);
  for (const char* f : {"config.txt", "checkpoint.bin", "summary.json"}) CHECK(fs::exists(root / "five" / f));

  const auto summary = nlohmann::json::parse(std::ifstream(root / "five" / "summary.json"));
  CHECK(summary.contains("test_accuracy"));

  CHECK(cli("eval --checkpoint " + (root / "five" / "checkpoint.bin").string() + " --set epochs=5 --set omega=1" + tiny +
            " --output " + (root / "eval").string()) == 0);
  CHECK(fs::exists(root / "eval" / "eval.json"));
}

TEST_CASE("suite aggregates and failure status") {
  REQUIRE(cli("suite --set omegas=0 --set runs=1 --set epochs=2" + tiny + " --output " + (root / "suite").string()) == 0);
  for (const char* f : {"accuracy_vs_omega.csv", "depth_vs_omega.csv"}) {
    CHECK(count_lines(root / "suite" / f) == 3);
  }
  CHECK(cli("suite --set omegas=0 --set runs=1 --set epochs=2 --set post_mu=80 --set post_rate=80" + tiny +
            " --output " + (root / "bad").string()) == 1);
}

TEST_CASE("depth-pmf table") {
  REQUIRE(cli("depth-pmf --output " + (root / "pmf").string()) == 0);
  CHECK(count_lines(root / "pmf" / "depth_pmf.csv") == 12);
}

TEST_CASE("gradcheck and gen-data") {
  CHECK(cli("gradcheck --set hidden_width=3 --output " + (root / "gc").string()) == 0);
  REQUIRE(cli("gen-data --set omega=2" + tiny + " --output " + (root / "data").string()) == 0);
  CHECK(count_lines(root / "data" / "train.csv") == 65);
  CHECK(fs::exists(root / "data" / "checksums.json"));
}
