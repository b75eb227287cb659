#include "testing.hpp"

#include "oracles.hpp"
#include "saltseg/checkpoint.hpp"
#include "saltseg/errors.hpp"
#include "saltseg/model.hpp"
#include "temp_dir.hpp"

using namespace saltseg;

TEST_SUITE("model") {

TEST_CASE("parameter counts match layer arithmetic") {
  const auto r34 = residual34_spec();
  auto net34 = build_model(r34, 1);
  CHECK(parameter_count(*net34) == oracle::residual34_params(r34));
  const double ratio = static_cast<double>(parameter_count(*net34)) / 24e6;
  CHECK(ratio > 0.9);
  CHECK(ratio < 1.1);

  const auto g50 = residual_grouped50_spec();
  auto net50 = build_model(g50, 1);
  CHECK(parameter_count(*net50) == oracle::grouped50_params(g50));

  const auto tiny = tiny_test_spec(64);
  auto small = build_model(tiny, 1);
  CHECK(parameter_count(*small) == oracle::tiny_params(tiny));
  CHECK(parameter_count(*small) < 100000);
}

TEST_CASE("forward preserves spatial size") {
  torch::NoGradGuard guard;
  for (const auto& spec : {residual34_spec(), residual_grouped50_spec(), tiny_test_spec(256)}) {
    auto net = build_model(spec, 3);
    net->eval();
    const auto y = net->forward(torch::rand({1, 1, 256, 256}));
    CHECK((y.sizes() == torch::IntArrayRef{1, 1, 256, 256}));
    CHECK(torch::isfinite(y).all().item<bool>());
  }
  auto tiny = build_model(tiny_test_spec(64), 0);
  CHECK_THROWS_AS(tiny->forward(torch::rand({1, 1, 32, 32})), ShapeError);
  CHECK_THROWS_AS(tiny->forward(torch::rand({1, 3, 64, 64})), ShapeError);
}

TEST_CASE("scSE gates") {
  torch::manual_seed(0);
  ScSE gate(16, 4);
  for (int i = 0; i < 10; ++i) {
    const auto x = torch::randn({2, 16, 9, 7});
    const auto y = gate->forward(x);
    CHECK(y.sizes() == x.sizes());
    CHECK((y.abs() <= 2 * x.abs() + 1e-6).all().item<bool>());
    const auto c = gate->channel_gate(x);
    const auto s = gate->spatial_gate(x);
    CHECK((c > 0).all().item<bool>());
    CHECK((c < 1).all().item<bool>());
    CHECK((s > 0).all().item<bool>());
    CHECK((s < 1).all().item<bool>());
  }
  CHECK(gate->forward(torch::zeros({1, 16, 4, 4})).abs().max().item<float>() == 0.0f);
  CHECK_THROWS_AS(ScSE(10, 4), ConfigError);
}

TEST_CASE("pyramid attention block") {
  torch::NoGradGuard guard;
  torch::manual_seed(1);
  for (int pyr : {1, 12}) {
    Fpa fpa(12, 12, pyr);
    fpa->eval();
    for (int side : {8, 16, 10}) {
      const auto y = fpa->forward(torch::randn({2, 12, side, side}));
      CHECK((y.sizes() == torch::IntArrayRef{2, 12, side, side}));
    }
  }
  Fpa wide(6, 20);
  wide->eval();
  CHECK((wide->forward(torch::randn({1, 6, 8, 8})).sizes() == torch::IntArrayRef{1, 20, 8, 8}));
  CHECK_THROWS_AS(wide->forward(torch::randn({1, 6, 7, 7})), ConfigError);
}

TEST_CASE("spec validation") {
  auto s = tiny_test_spec(64);
  s.input_size = 32;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = tiny_test_spec(64);
  s.decoder_channels = {24, 16};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = tiny_test_spec(64);
  s.decoder_channels = {24, 16, 6};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = residual34_spec();
  s.backbone_id = "vgg";
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = residual34_spec();
  s.pretrained = true;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(SegmentationModelSpec::from_json({{"backbone", "tiny-test"}, {"dropout", 0.5}}), ConfigError);

  const auto round = SegmentationModelSpec::from_json(tiny_test_spec(64).to_json());
  CHECK(round.hash() == tiny_test_spec(64).hash());
  CHECK(tiny_test_spec(64).hash() != tiny_test_spec(128).hash());
  auto pre = tiny_test_spec(64);
  pre.pretrained = true;
  pre.pretrained_path = "x.ckpt";
  CHECK(pre.hash() == tiny_test_spec(64).hash());
}

TEST_CASE("hypercolumn head rejects a wrong decoder layout") {
  HypercolumnHead head(std::vector<int>{8, 4}, 4);
  CHECK_THROWS_AS(head->forward({torch::zeros({1, 8, 4, 4})}), ConfigError);
  CHECK_THROWS_AS(head->forward({torch::zeros({1, 8, 4, 4}), torch::zeros({1, 5, 8, 8})}), ConfigError);
  const auto y = head->forward({torch::zeros({1, 8, 4, 4}), torch::zeros({1, 4, 8, 8})});
  CHECK((y.sizes() == torch::IntArrayRef{1, 1, 8, 8}));
  CHECK(head->hypercolumns({torch::zeros({1, 8, 4, 4}), torch::zeros({1, 4, 8, 8})}).size(1) == 12);
}

TEST_CASE("samples in a batch do not interact in eval mode") {
  torch::NoGradGuard guard;
  auto net = build_model(tiny_test_spec(64), 9);
  net->eval();
  const auto batch = torch::rand({4, 1, 64, 64});
  const auto together = net->forward(batch);
  for (int i = 0; i < 4; ++i) {
    const auto alone = net->forward(batch.narrow(0, i, 1));
    CHECK((alone - together.narrow(0, i, 1)).abs().max().item<float>() < 1e-6f);
  }
}

TEST_CASE("input gradient matches finite differences") {
  auto net = build_model(tiny_test_spec(64), 4);
  net->eval();
  net->to(torch::kDouble);
  torch::manual_seed(2);
  const auto x0 = torch::rand({1, 1, 64, 64}, torch::kDouble);
  const auto weights = torch::randn({1, 1, 64, 64}, torch::kDouble);
  auto objective = [&](const torch::Tensor& x) { return (net->forward(x) * weights).sum(); };

  auto x = x0.clone().requires_grad_(true);
  objective(x).backward();
  const auto analytic = x.grad();

  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> pix(0, 63);
  for (int k = 0; k < 8; ++k) {
    const int r = pix(rng), c = pix(rng);
    const double h = 1e-6;
    torch::NoGradGuard guard;
    auto plus = x0.clone(), minus = x0.clone();
    plus[0][0][r][c] += h;
    minus[0][0][r][c] -= h;
    const double numeric = (objective(plus).item<double>() - objective(minus).item<double>()) / (2 * h);
    const double exact = analytic[0][0][r][c].item<double>();
    CHECK(std::abs(numeric - exact) <= 1e-4 * std::max({std::abs(numeric), std::abs(exact), 1e-3}));
  }
}

TEST_CASE("seeded construction is reproducible") {
  auto a = build_model(tiny_test_spec(64), 42);
  auto b = build_model(tiny_test_spec(64), 42);
  auto c = build_model(tiny_test_spec(64), 43);
  CHECK(capture_parameters(*a).content_hash() == capture_parameters(*b).content_hash());
  CHECK(capture_parameters(*a).content_hash() != capture_parameters(*c).content_hash());
}

TEST_CASE("checkpoint round trip is bit exact") {
  TempDir tmp;
  auto net = build_model(tiny_test_spec(64), 5);
  auto params = capture_parameters(*net);
  params.round_tag = 2;
  params.fold_tag = 1;
  params.snapshot_tag = 3;
  params.epoch = 7;
  params.extra["arch"] = "tiny";
  save_checkpoint(tmp / "m.ckpt", params);
  const auto back = load_checkpoint(tmp / "m.ckpt");
  CHECK(back.content_hash() == params.content_hash());
  CHECK(back.round_tag == 2);
  CHECK(back.snapshot_tag == 3);
  CHECK(back.extra["arch"] == "tiny");
  CHECK(read_checkpoint_manifest(tmp / "m.ckpt")["epoch"] == 7);

  auto other = build_model(tiny_test_spec(128), 0);
  CHECK_THROWS_AS(apply_parameters(*other, params), CompatibilityError);
  CHECK_THROWS_AS(load_checkpoint(tmp / "none.ckpt"), IoError);

  torch::NoGradGuard guard;
  auto restored = instantiate(back);
  restored->eval();
  net->eval();
  const auto x = torch::rand({1, 1, 64, 64});
  CHECK(torch::equal(restored->forward(x), net->forward(x)));
}

TEST_CASE("pretrained encoder plug-in") {
  TempDir tmp;
  auto donor = build_model(tiny_test_spec(64), 11);
  save_checkpoint(tmp / "enc.ckpt", capture_parameters(*donor));
  auto spec = tiny_test_spec(64);
  spec.pretrained = true;
  spec.pretrained_path = (tmp / "enc.ckpt").string();
  auto net = build_model(spec, 12);
  const auto a = capture_parameters(*net);
  const auto d = capture_parameters(*donor);
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    const bool encoder = a.tensors[i].name.rfind("encoder.", 0) == 0;
    if (encoder) CHECK(torch::equal(a.tensors[i].value, d.tensors[i].value));
  }
  spec.pretrained_path = (tmp / "missing.ckpt").string();
  CHECK_THROWS_AS(build_model(spec, 0), IoError);
}

}  // TEST_SUITE
