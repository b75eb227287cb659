#include "testing.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "saltseg/checkpoint.hpp"
#include "saltseg/csv.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/self_training.hpp"
#include "saltseg/synthetic.hpp"
#include "temp_dir.hpp"

using namespace saltseg;
using nlohmann::json;

namespace {

const Geometry kDesk{64, 64, 64};

/// A member whose output is the constant probability `p` everywhere.
MemberRef constant_member(double logit, std::uint64_t seed = 0) {
  auto params = fresh_parameters(tiny_test_spec(64), seed);
  for (auto& t : params.tensors)
    if (t.name.find("head.conv1") != std::string::npos) {
      if (t.value.dim() == 4) t.value.zero_();
      else t.value.fill_(logit);
    }
  MemberRef m;
  m.params = std::make_shared<const ModelParameters>(params);
  return m;
}

double logit_of(double p) { return std::log(p / (1 - p)); }

SelfTrainingConfig small_config(int rounds) {
  SelfTrainingConfig c;
  c.geometry = kDesk;
  c.architectures = {{"tiny", tiny_test_spec(64)}};
  c.n_folds = 2;
  auto& t = c.training;
  t.epochs = 2;
  t.cycle_len = 1;
  t.warmup_epochs = 1;
  t.rounds = rounds;
  t.batch_size = 4;
  t.optimizer = "adam";
  t.lr_max = 3e-3;
  t.lr_min = 1e-4;
  t.seed = 5;
  return c;
}

SelfTrainingInputs small_inputs(int pool = 6) {
  SyntheticOptions lab, un, hold;
  lab.id_prefix = "lab";
  un.id_prefix = "pool";
  un.with_masks = false;
  un.split = SplitTag::unlabeled;
  hold.id_prefix = "hold";
  hold.split = SplitTag::holdout;
  SelfTrainingInputs in;
  in.labeled = generate_synthetic(12, 64, 1, lab);
  in.folds = make_folds(in.labeled.ids(), 2, 0);
  in.pool = pool > 0 ? generate_synthetic(pool, 64, 2, un) : Dataset(std::vector<SeismicSample>{}, DatasetKind::mixed);
  in.holdout = generate_synthetic(4, 64, 3, hold);
  return in;
}

json read_json_file(const std::filesystem::path& p) { return json::parse(read_text_file(p)); }

std::vector<std::string> member_hashes(const std::filesystem::path& manifest) {
  std::vector<std::string> out;
  for (const auto& m : read_json_file(manifest).at("members")) out.push_back(m.at("content_hash"));
  return out;
}

}  // namespace

TEST_SUITE("self_training") {

TEST_CASE("pseudo-label threshold") {
  const auto pool = generate_synthetic(5, 64, 4, {0.4, "pool", SplitTag::unlabeled, false});
  // exp(-200) underflows in single precision, so this member is exactly binary.
  const Ensemble saturated({{constant_member(-200.0)}}, kDesk);
  const Ensemble noisy({{constant_member(logit_of(0.3))}}, kDesk);

  const auto all = generate_pseudo_labels(noisy, pool, -std::numeric_limits<double>::infinity(), 1);
  CHECK(all.entries.size() == 5);
  CHECK(generate_pseudo_labels(noisy, pool, 0.0, 1).entries.empty());

  const auto binary = generate_pseudo_labels(saturated, pool, 0.0, 1);
  CHECK(binary.entries.size() == 5);
  for (const auto& [id, label] : binary.entries) {
    CHECK(label.confidence == 0.0);
    CHECK(count_ones(label.mask) == 0);
  }
}

TEST_CASE("pseudo labels average member probabilities") {
  const auto pool = generate_synthetic(3, 64, 4, {0.4, "pool", SplitTag::unlabeled, false});
  const Ensemble pair({{constant_member(logit_of(0.4), 1), constant_member(logit_of(0.8), 2)}}, kDesk);
  const auto probs = pair.predict(pool);
  for (const auto& p : probs)
    for (float v : p.values()) REQUIRE(std::abs(v - 0.6f) < 1e-5f);
  const auto labels = generate_pseudo_labels(pair, pool, -std::numeric_limits<double>::infinity(), 2);
  const double expected = 0.6 * std::log(0.6) + 0.4 * std::log(0.4);
  for (const auto& [id, label] : labels.entries) {
    CHECK(count_ones(label.mask) == label.mask.size());
    CHECK(std::abs(label.confidence - expected) < 1e-5);
  }
  CHECK(labels.round == 2);

  const auto kept = generate_pseudo_labels(pair, pool, -std::numeric_limits<double>::infinity(), 2, true);
  for (const auto& [id, label] : kept.entries) CHECK(count_ones(label.mask) == 0);
}

TEST_CASE("pseudo label csv round trip") {
  TempDir tmp;
  PseudoLabelSet set;
  set.round = 3;
  Mask m(64, 64);
  m(3, 4) = 1;
  set.entries["a"] = {m, -0.125};
  set.entries["b"] = {Mask(64, 64), 0.0};
  write_pseudo_labels(tmp / "p.csv", set);
  const auto back = read_pseudo_labels(tmp / "p.csv", 3, 64, 64);
  CHECK(back.entries.size() == 2);
  CHECK(back.entries.at("a").mask == m);
  CHECK(back.entries.at("a").confidence == -0.125);

  const auto pool = generate_synthetic(2, 64, 1, {0.4, "x", SplitTag::unlabeled, false});
  PseudoLabelSet one;
  one.entries[pool.ids()[0]] = {m, 0.0};
  const auto d = one.as_dataset(pool);
  CHECK(d.kind() == DatasetKind::pseudo);
  REQUIRE(d.size() == 1);
  CHECK(*d.samples()[0].mask == m);
}

TEST_CASE("self-training config validation") {
  auto c = small_config(2);
  CHECK_NOTHROW(c.validate());
  CHECK(SelfTrainingConfig::from_json(c.to_json()).hash() == c.hash());
  auto j = c.to_json();
  j["schedule"] = 1;
  CHECK_THROWS_AS(SelfTrainingConfig::from_json(j), ConfigError);
  c.architectures[0].spec = tiny_test_spec(128);
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = small_config(2);
  c.architectures.push_back(c.architectures[0]);
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("a single round trains, scores and pseudo-labels") {
  TempDir tmp;
  const auto inputs = small_inputs();
  std::vector<std::string> messages;
  const auto result =
      run_self_training(inputs, small_config(1), tmp.path(), false, [&](const std::string& m) { messages.push_back(m); });
  REQUIRE(result.rounds.size() == 1);
  const auto& r = result.rounds[0];
  CHECK(r.members.size() == 4);  // 2 folds x 2 snapshots
  REQUIRE(r.holdout_map.has_value());
  CHECK(*r.holdout_map >= 0.0);
  CHECK(r.pseudo_labels.entries.size() == inputs.pool.size());
  CHECK(std::filesystem::exists(tmp / "rounds/1/pseudo_labels.csv"));
  CHECK(std::filesystem::exists(tmp / "rounds/1/holdout_report.csv"));
  CHECK(std::filesystem::exists(tmp / "rounds/1/logs/tiny-f0-gt.csv"));
  const auto manifest = read_json_file(tmp / "rounds/1/manifest.json");
  CHECK(manifest["status"] == "complete");
  CHECK(manifest["pseudo_source_round"].is_null());
  CHECK(!messages.empty());
}

TEST_CASE("rounds restart from fresh weights and relabel the whole pool") {
  TempDir tmp;
  const auto inputs = small_inputs();
  const auto config = small_config(2);
  const auto result = run_self_training(inputs, config, tmp.path());
  REQUIRE(result.rounds.size() == 2);

  std::set<std::string> round1_weights;
  for (const auto& h : member_hashes(tmp / "rounds/1/manifest.json")) round1_weights.insert(h);

  std::set<std::uint64_t> seeds;
  for (int k = 1; k <= 2; ++k) {
    const auto manifest = read_json_file(tmp / ("rounds/" + std::to_string(k) + "/manifest.json"));
    CHECK(manifest["pseudo_labels_produced"] == inputs.pool.size());
    for (const auto& entry : manifest["lineage"]) {
      CHECK(entry["init_source"] == "random");
      const auto seed = entry["init_seed"].get<std::uint64_t>();
      seeds.insert(seed);
      // The recorded initial weights are a fresh draw, never a previous round's snapshot.
      const auto fresh = fresh_parameters(tiny_test_spec(64), seed).content_hash();
      CHECK(entry["init_hash"] == fresh);
      CHECK(round1_weights.count(fresh) == 0);
    }
    const auto labels = read_pseudo_labels(tmp / ("rounds/" + std::to_string(k) + "/pseudo_labels.csv"), k, 64, 64);
    CHECK(labels.entries.size() == inputs.pool.size());
    for (const auto& id : inputs.pool.ids()) CHECK(labels.entries.count(id) == 1);
  }
  CHECK(seeds.size() == 4);

  const auto r2 = read_json_file(tmp / "rounds/2/manifest.json");
  CHECK(r2["pseudo_source_round"] == 1);
  CHECK(r2["pseudo_labels_consumed"] == inputs.pool.size());
  const auto phases = r2["lineage"][0]["phases"];
  REQUIRE(phases.size() == 2);
  CHECK(phases[0]["phase"] == "pseudo");
  CHECK(phases[1]["phase"] == "finetune");

  SUBCASE("starting over an existing layout requires resume") {
    CHECK_THROWS_AS(run_self_training(inputs, config, tmp.path()), OrchestrationError);
  }
  SUBCASE("resume reuses complete rounds") {
    const auto again = run_self_training(inputs, config, tmp.path(), true);
    CHECK(again.rounds[0].resumed);
    CHECK(again.rounds[1].resumed);
    CHECK(again.rounds[1].holdout_map == result.rounds[1].holdout_map);
  }
  SUBCASE("an interrupted round is redone identically") {
    const auto before = member_hashes(tmp / "rounds/2/manifest.json");
    std::filesystem::remove(tmp / "rounds/2/manifest.json");
    const auto again = run_self_training(inputs, config, tmp.path(), true);
    CHECK(again.rounds[0].resumed);
    CHECK_FALSE(again.rounds[1].resumed);
    CHECK(member_hashes(tmp / "rounds/2/manifest.json") == before);
  }
  SUBCASE("a changed configuration refuses to resume") {
    auto other = config;
    other.training.seed = 6;
    CHECK_THROWS_AS(run_self_training(inputs, other, tmp.path(), true), OrchestrationError);
  }
}

TEST_CASE("an empty pool skips the pseudo phase") {
  TempDir tmp;
  const auto result = run_self_training(small_inputs(0), small_config(2), tmp.path());
  CHECK(result.rounds[1].pseudo_labels.entries.empty());
  const auto r2 = read_json_file(tmp / "rounds/2/manifest.json");
  CHECK(r2["lineage"][0]["phases"][0]["skipped"] == true);
}

TEST_CASE("joint mode trains once per fold on the merged set") {
  TempDir tmp;
  auto config = small_config(2);
  config.mode = RoundMode::joint;
  const auto inputs = small_inputs();
  run_self_training(inputs, config, tmp.path());
  const auto r2 = read_json_file(tmp / "rounds/2/manifest.json");
  const auto phases = r2["lineage"][0]["phases"];
  REQUIRE(phases.size() == 1);
  CHECK(phases[0]["phase"] == "joint");
  CHECK(phases[0]["samples"] == inputs.folds.train_ids(0).size() + inputs.pool.size());
}

TEST_CASE("leakage between splits is rejected") {
  TempDir tmp;
  auto inputs = small_inputs();
  inputs.holdout = inputs.labeled.subset({inputs.labeled.ids()[0]});
  CHECK_THROWS_AS(run_self_training(inputs, small_config(1), tmp.path()), ValidationError);
  inputs = small_inputs();
  inputs.pool = inputs.labeled.subset({inputs.labeled.ids()[1]});
  CHECK_THROWS_AS(run_self_training(inputs, small_config(1), tmp.path()), ValidationError);
  inputs = small_inputs();
  inputs.folds = make_folds(inputs.labeled.ids(), 3, 0);
  CHECK_THROWS_AS(run_self_training(inputs, small_config(1), tmp.path()), ConfigError);
}

}  // TEST_SUITE
