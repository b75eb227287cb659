#include "testing.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "saltseg/checkpoint.hpp"
#include "saltseg/commands.hpp"
#include "saltseg/config.hpp"
#include "saltseg/csv.hpp"
#include "saltseg/dataset.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/lock.hpp"
#include "saltseg/png_io.hpp"
#include "saltseg/selector.hpp"
#include "saltseg/synthetic.hpp"
#include "temp_dir.hpp"

using namespace saltseg;
using nlohmann::json;

namespace {

/// Manifest-only checkpoints laid out as rounds/<r>/checkpoints/<arch>-f<f>-s<s>.ckpt.
void write_stub_layout(const std::filesystem::path& root, int rounds) {
  ModelParameters stub;
  stub.tensors.push_back({"w", torch::zeros({1})});
  stub.spec = tiny_test_spec(64).to_json();
  stub.spec_hash = tiny_test_spec(64).hash();
  for (int r = 1; r <= rounds; ++r)
    for (const std::string arch : {"alpha", "beta"})
      for (int f = 0; f < 5; ++f)
        for (int s = 0; s < 4; ++s) {
          stub.round_tag = r;
          stub.fold_tag = f;
          stub.snapshot_tag = s;
          stub.extra["arch"] = arch;
          const auto dir = root / "rounds" / std::to_string(r) / "checkpoints";
          std::filesystem::create_directories(dir);
          save_checkpoint(dir / (arch + "-f" + std::to_string(f) + "-s" + std::to_string(s) + ".ckpt"), stub);
        }
}

std::size_t count(const std::vector<MemberRef>& inventory, const std::string& text) {
  return select_members(inventory, parse_selector(text)).size();
}

int run_cli(const std::string& args) {
  const std::string command = std::string(SALTSEG_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(command.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("selector over a stub layout") {
  TempDir tmp;
  write_stub_layout(tmp.path(), 2);
  const auto inventory = scan_inventory(tmp.path());
  REQUIRE(inventory.size() == 80);
  CHECK(count(inventory, "round=2") == 40);
  CHECK(count(inventory, "round = 2, folds=*, snapshots in {*}") == 40);
  CHECK(count(inventory, "rounds in {1,2}") == 80);
  CHECK(count(inventory, "round=2, fold in {0, 1}") == 16);
  CHECK(count(inventory, "round=1, arch=beta, snapshot=3") == 5);
  CHECK(count(inventory, "round=02, fold=004") == 8);
  CHECK_THROWS_AS(count(inventory, "round=3"), ConfigError);

  // Inventory order is (round, arch, fold, snapshot).
  CHECK(inventory.front().round == 1);
  CHECK(inventory.front().arch == "alpha");
  CHECK(inventory[1].snapshot == 1);
  CHECK(inventory.back().round == 2);
  CHECK(inventory.back().arch == "beta");
}

TEST_CASE("selector syntax errors carry a position") {
  for (const std::string bad : {"", "round", "round=", "round=x", "epoch=1", "round=1 fold=2", "fold in {1,", "fold in 1"}) {
    CAPTURE(bad);
    CHECK_THROWS_AS(parse_selector(bad), FormatError);
  }
  try {
    parse_selector("round=1, colour=red");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("position 10") != std::string::npos);
  }
}

TEST_CASE("experiment configuration") {
  TempDir tmp;
  const auto base = desk_scale_config(tmp / "data", tmp / "run", 4);
  CHECK(base.self_training.training.batch_size >= 2);
  const auto reparsed = ExperimentConfig::from_json(base.to_json());
  CHECK(reparsed.hash() == base.hash());

  auto j = base.to_json();
  j["colour"] = "red";
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);
  j = base.to_json();
  j["data"]["extra_dir"] = "x";
  CHECK_THROWS_AS(ExperimentConfig::from_json(j), ConfigError);

  j = base.to_json();
  j["data"]["labeled_dir"] = "relative/images";
  std::filesystem::create_directories(tmp / "conf");
  write_text_file(tmp / "conf" / "c.json", j.dump());
  const auto loaded = load_experiment_config(tmp / "conf" / "c.json");
  CHECK(loaded.data.labeled_dir == tmp / "conf" / "relative/images");

  write_text_file(tmp / "broken.json", "{ not json");
  CHECK_THROWS_AS(load_experiment_config(tmp / "broken.json"), ConfigError);
  CHECK_THROWS_AS(load_experiment_config(tmp / "absent.json"), IoError);
}

TEST_CASE("directory lock is exclusive") {
  TempDir tmp;
  {
    DirectoryLock lock(tmp.path());
    CHECK(std::filesystem::exists(tmp / ".lock"));
    CHECK_THROWS_AS(DirectoryLock(tmp.path()), OrchestrationError);
  }
  CHECK_FALSE(std::filesystem::exists(tmp / ".lock"));
  CHECK_NOTHROW(DirectoryLock(tmp.path()));
}

TEST_CASE("exit codes by failure class") {
  CHECK(exit_code_for(ValidationError("x")) == 1);
  CHECK(exit_code_for(ConfigError("x")) == 1);
  CHECK(exit_code_for(IoError("x")) == 2);
  CHECK(exit_code_for(NumericalError("x")) == 3);
  CHECK(exit_code_for(std::filesystem::filesystem_error("x", std::error_code())) == 2);
  CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("prepare writes folds and a dataset manifest") {
  TempDir tmp;
  const auto data = generate_synthetic(10, 101, 3);
  save_dataset(data, tmp / "train", tmp / "train" / "labels.csv");
  std::ostringstream out;
  const auto manifest = cmd_prepare({tmp / "train", tmp / "train" / "labels.csv", tmp / "prep", 5, 101}, {}, out);
  CHECK(manifest["labeled"] == 10);
  const auto folds = read_fold_csv(tmp / "prep" / "folds.csv");
  for (auto size : folds.fold_sizes()) CHECK(size == 2);
  CHECK(std::filesystem::exists(tmp / "prep" / "dataset_manifest.json"));
  CHECK_THROWS_AS(cmd_prepare({tmp / "absent", std::nullopt, tmp / "prep2", 5, 101}, {}, out), IoError);
}

TEST_CASE("evaluate needs overlapping ids") {
  TempDir tmp;
  write_submission(tmp / "pred.csv", {{"a", Mask(101, 101)}});
  write_label_csv(tmp / "labels.csv", {{"b", Mask(101, 101)}});
  std::ostringstream out;
  EvaluateOptions opts;
  opts.predictions = tmp / "pred.csv";
  opts.labels = tmp / "labels.csv";
  CHECK_THROWS_AS(cmd_evaluate(opts, {}, out), DomainError);

  write_label_csv(tmp / "labels.csv", {{"a", Mask(101, 101)}, {"b", Mask(101, 101, 1)}});
  const auto report = cmd_evaluate(opts, {}, out);
  CHECK(report.map_score == 1.0);
  CHECK(report.per_image_ap.size() == 1);
}

TEST_CASE("mosaic command") {
  TempDir tmp;
  const auto data = generate_synthetic(4, 101, 6);
  save_dataset(data, tmp / "d", tmp / "d" / "labels.csv");
  const auto ids = data.ids();
  write_text_file(tmp / "layout.txt", ids[0] + "," + ids[1] + "\n" + ids[2] + ",-\n");
  std::ostringstream out;
  cmd_mosaic({tmp / "layout.txt", tmp / "d", tmp / "d" / "labels.csv", tmp / "m.png", 101}, {}, out);
  const auto image = read_png_rgb(tmp / "m.png");
  CHECK(image.height() == 202);
  CHECK(image.width() == 202);
}

TEST_CASE("command line exit status") {
  TempDir tmp;
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("prepare --data " + (tmp / "absent").string() + " --out " + (tmp / "o").string()) == 2);
  CHECK(run_cli("selftrain --config " + (tmp / "absent.json").string()) == 2);
  CHECK(run_cli("evaluate --predictions a.csv --labels b.csv --select round=1") == 1);
}

}  // TEST_SUITE
