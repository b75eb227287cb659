#include "testing.hpp"

#include <cmath>
#include <numbers>

#include "saltseg/errors.hpp"
#include "saltseg/synthetic.hpp"
#include "saltseg/trainer.hpp"
#include "temp_dir.hpp"

using namespace saltseg;

namespace {

const Geometry kDesk{64, 64, 64};

TrainingConfig small_config() {
  TrainingConfig c;
  c.epochs = 2;
  c.cycle_len = 1;
  c.warmup_epochs = 1;
  c.batch_size = 4;
  c.optimizer = "adam";
  c.lr_max = 3e-3;
  c.lr_min = 1e-4;
  c.seed = 3;
  return c;
}

struct Split {
  Dataset train, validation;
};

Split small_split() {
  const auto data = generate_synthetic(14, 64, 77);
  const auto ids = data.ids();
  return {data.subset({ids.begin(), ids.begin() + 10}), data.subset({ids.begin() + 10, ids.end()})};
}

RunContext desk_context() {
  RunContext ctx;
  ctx.geometry = kDesk;
  return ctx;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("cyclic cosine learning rate") {
  const TrainingConfig c;
  CHECK(lr_at(0, c) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at(50, c) == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(lr_at(150, c) == doctest::Approx(1e-3).epsilon(1e-12));
  const double closed = 1e-4 + 0.9e-3 * (1 + std::cos(std::numbers::pi * 49 / 50)) / 2;
  CHECK(std::abs(lr_at(49, c) - closed) < 1e-12);
  CHECK(std::abs(lr_at(49, c) - 1.0099e-4) < 1e-6);
  CHECK(lr_at(25, c) == doctest::Approx(5.5e-4));
  for (int e = 0; e < 200; ++e) {
    CHECK(lr_at(e, c) <= c.lr_max + 1e-15);
    CHECK(lr_at(e, c) >= c.lr_min - 1e-15);
    if (e % 50 != 0) CHECK(lr_at(e, c) < lr_at(e - 1, c));
  }
  CHECK_THROWS_AS(lr_at(200, c), DomainError);
  CHECK_THROWS_AS(lr_at(-1, c), DomainError);
}

TEST_CASE("loss schedule and snapshots under defaults") {
  const TrainingConfig c;
  CHECK(loss_for_epoch(0, c) == LossKind::bce);
  CHECK(loss_for_epoch(49, c) == LossKind::bce);
  CHECK(loss_for_epoch(50, c) == LossKind::lovasz);
  CHECK(loss_for_epoch(199, c) == LossKind::lovasz);
  CHECK((snapshot_epochs(c) == std::vector<int>{49, 99, 149, 199}));
}

TEST_CASE("configuration validation") {
  auto check_bad = [](auto mutate) {
    TrainingConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), ConfigError);
  };
  check_bad([](TrainingConfig& c) { c.epochs = 210; });
  check_bad([](TrainingConfig& c) { c.warmup_epochs = 201; });
  check_bad([](TrainingConfig& c) { c.lr_min = 1e-2; });
  check_bad([](TrainingConfig& c) { c.batch_size = 1; });
  check_bad([](TrainingConfig& c) { c.rounds = 0; });
  check_bad([](TrainingConfig& c) { c.thresh = std::nan(""); });
  check_bad([](TrainingConfig& c) { c.optimizer = "rmsprop"; });
  check_bad([](TrainingConfig& c) { c.momentum = 1.0; });
  TrainingConfig ok;
  CHECK_NOTHROW(ok.validate());
}

TEST_CASE("training config json") {
  TrainingConfig c = small_config();
  c.augment.intensity = true;
  const auto j = c.to_json();
  CHECK(j["thresh"] == "-inf");
  const auto back = TrainingConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(std::isinf(back.thresh));
  auto bad = j;
  bad["learning_rate"] = 1;
  CHECK_THROWS_AS(TrainingConfig::from_json(bad), ConfigError);
  bad = j;
  bad["augment"]["rotate"] = true;
  CHECK_THROWS_AS(TrainingConfig::from_json(bad), ConfigError);
}

TEST_CASE("zero-epoch fine-tune leaves weights unchanged") {
  const auto split = small_split();
  const auto spec = tiny_test_spec(64);
  const auto prior = fresh_parameters(spec, 1);
  TrainingConfig c = small_config();
  c.epochs = 0;
  c.warmup_epochs = 0;
  const auto result = finetune_run(spec, split.train, split.validation, c, desk_context(), prior);
  CHECK(result.final_params.content_hash() == prior.content_hash());
  CHECK(result.snapshots.empty());

  CHECK_THROWS_AS(finetune_run(tiny_test_spec(128), split.train, split.validation, c, desk_context(), prior),
                  CompatibilityError);
}

TEST_CASE("a short run yields one snapshot per cycle") {
  const auto split = small_split();
  const auto init = fresh_parameters(tiny_test_spec(64), 2);
  std::vector<int> seen;
  auto ctx = desk_context();
  ctx.on_epoch = [&](const EpochLog& log) { seen.push_back(log.epoch); };
  const auto result = train_run(split.train, split.validation, small_config(), ctx, init);
  REQUIRE(result.snapshots.size() == 2);
  CHECK(result.snapshots[0].epoch == 0);
  CHECK(result.snapshots[1].epoch == 1);
  CHECK(result.snapshots[1].params.snapshot_tag == 1);
  CHECK(result.final_params.content_hash() == result.snapshots[1].params.content_hash());
  CHECK(result.final_params.content_hash() != init.content_hash());
  CHECK((seen == std::vector<int>{0, 1}));
  REQUIRE(result.log.size() == 2);
  CHECK(result.log[0].phase == LossKind::bce);
  CHECK(result.log[1].phase == LossKind::lovasz);
  for (const auto& row : result.log) {
    CHECK(std::isfinite(row.train_loss));
    CHECK(row.val_map >= 0.0);
    CHECK(row.val_map <= 1.0);
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const auto split = small_split();
  const auto init = fresh_parameters(tiny_test_spec(64), 2);
  const auto a = train_run(split.train, split.validation, small_config(), desk_context(), init);
  const auto b = train_run(split.train, split.validation, small_config(), desk_context(), init);
  CHECK(a.final_params.content_hash() == b.final_params.content_hash());
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    CHECK(a.log[i].train_loss == b.log[i].train_loss);
    CHECK(a.log[i].val_map == b.log[i].val_map);
  }
}

TEST_CASE("training log round trip") {
  TempDir tmp;
  std::vector<EpochLog> log{{0, LossKind::bce, 1e-3, 0.7, 0.6, 0.25}, {1, LossKind::lovasz, 1.0 / 3.0, 0.1, 0.2, 0.9}};
  write_training_log(tmp / "log.csv", log);
  const auto back = read_training_log(tmp / "log.csv");
  REQUIRE(back.size() == 2);
  CHECK(back[1].phase == LossKind::lovasz);
  CHECK(back[1].lr == log[1].lr);
  CHECK(back[0].val_map == log[0].val_map);
}

TEST_CASE("split errors") {
  const auto split = small_split();
  const auto init = fresh_parameters(tiny_test_spec(64), 0);
  const auto leaky = split.train.subset({split.train.ids()[0]});
  CHECK_THROWS_AS(train_run(split.train, leaky, small_config(), desk_context(), init), ConfigError);
  CHECK_THROWS_AS(train_run(leaky, split.validation, small_config(), desk_context(), init), ConfigError);
  CHECK_THROWS_AS(train_run(split.train, Dataset{}, small_config(), desk_context(), init), ConfigError);

  RunContext wrong;
  wrong.geometry = Geometry{};
  CHECK_THROWS_AS(train_run(split.train, split.validation, small_config(), wrong, init), ConfigError);
}

TEST_CASE("non-finite loss raises a numerical error") {
  const auto split = small_split();
  auto init = fresh_parameters(tiny_test_spec(64), 0);
  for (auto& t : init.tensors)
    if (t.name.find("head") != std::string::npos && t.value.dim() == 4) {
      t.value.fill_(std::numeric_limits<float>::quiet_NaN());
      break;
    }
  CHECK_THROWS_AS(train_run(split.train, split.validation, small_config(), desk_context(), init), NumericalError);
}

TEST_CASE("fold overload trains on the complement") {
  const auto data = generate_synthetic(12, 64, 5);
  const auto folds = make_folds(data.ids(), 3, 1);
  const auto init = fresh_parameters(tiny_test_spec(64), 0);
  TrainingConfig c = small_config();
  c.epochs = 1;
  c.warmup_epochs = 1;
  const auto r = train_run(data, folds, 2, c, desk_context(), init);
  CHECK(r.snapshots.size() == 1);
  CHECK_THROWS_AS(train_run(data, folds, 3, c, desk_context(), init), ConfigError);
}

TEST_CASE("fresh parameters record their origin") {
  const auto p = fresh_parameters(tiny_test_spec(64), 9);
  CHECK(p.extra["init_source"] == "random");
  CHECK(p.extra["init_seed"] == 9);
  CHECK(p.content_hash() == fresh_parameters(tiny_test_spec(64), 9).content_hash());
}

TEST_CASE("batch tensors") {
  const auto t = images_to_tensor({Image(4, 4, 0.5f), Image(4, 4, 0.25f)});
  CHECK((t.sizes() == torch::IntArrayRef{2, 1, 4, 4}));
  CHECK(t[1][0][3][3].item<float>() == 0.25f);
  CHECK_THROWS_AS(images_to_tensor({Image(4, 4), Image(5, 4)}), ShapeError);
  CHECK(masks_to_tensor({Mask(3, 3, 1)}).sum().item<float>() == 9.0f);
}

}  // TEST_SUITE
