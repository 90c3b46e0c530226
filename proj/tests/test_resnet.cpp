#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "seqdream/common.hpp"
#include "seqdream/dataset.hpp"
#include "seqdream/resnet.hpp"

using namespace seqdream;
namespace fs = std::filesystem;

namespace {

ResNetConfig tiny_config(int m = 32) {
  ResNetConfig cfg;
  cfg.blocks = 2;
  cfg.convs_per_block = 2;
  cfg.channels = {4, 4};
  cfg.kernels = {3, 3};
  cfg.num_classes = 2;
  cfg.input_length = m;
  return cfg;
}

std::vector<double> random_series(int m, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(m);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("build_resnet is deterministic per seed and validates config") {
  ModelWeights a = build_resnet(tiny_config(), 5);
  ModelWeights b = build_resnet(tiny_config(), 5);
  ModelWeights c = build_resnet(tiny_config(), 6);
  CHECK(a.blocks[0].convs[0].w.data == b.blocks[0].convs[0].w.data);
  CHECK(a.fc_w.data == b.fc_w.data);
  CHECK(a.blocks[0].convs[0].w.data != c.blocks[0].convs[0].w.data);
  CHECK(a.blocks[0].proj.has_value());   // 1 -> 4 channels
  CHECK(!a.blocks[1].proj.has_value());  // 4 -> 4 identity skip

  ResNetConfig bad = tiny_config();
  bad.kernels = {4, 3};
  CHECK_THROWS_AS(build_resnet(bad, 0), Error);
}

TEST_CASE("logits have num_classes entries and a normalized softmax") {
  ModelWeights model = build_resnet(tiny_config(), 1);
  const auto series = random_series(32, 9);
  const auto lg = logits(model, series);
  REQUIRE(lg.size() == 2);
  const double mx = std::max(lg[0], lg[1]);
  const double p = std::exp(lg[0] - mx) + std::exp(lg[1] - mx);
  const double sum = std::exp(lg[0] - mx) / p + std::exp(lg[1] - mx) / p;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(logits(model, random_series(31, 9)), Error);
}

TEST_CASE("batch-of-one equals the single-series path bit for bit") {
  ModelWeights model = build_resnet(tiny_config(), 2);
  const auto s1 = random_series(32, 11);
  const auto s2 = random_series(32, 12);
  const auto single_1 = logits(model, s1);
  const auto single_2 = logits(model, s2);
  const auto batched = logits_batch(model, {s1, s2});
  CHECK(batched[0] == single_1);
  CHECK(batched[1] == single_2);
}

TEST_CASE("zeroed conv weights reduce a block to relu(input)") {
  ModelWeights model = build_resnet(tiny_config(), 3);
  for (ConvParams& conv : model.blocks[1].convs) {
    conv.w.data.assign(conv.w.data.size(), 0.0);
    conv.b.data.assign(conv.b.data.size(), 0.0);
  }
  const auto series = random_series(32, 13);
  const auto out0 = activations(model, series, LayerSelector::parse("block0"));
  const auto out1 = activations(model, series, LayerSelector::parse("block1"));
  REQUIRE(out0.size() == out1.size());
  // block0's output is already non-negative, so relu(input) == input here.
  for (size_t i = 0; i < out0.size(); ++i) CHECK(out1[i] == out0[i]);
}

TEST_CASE("activation selectors") {
  ModelWeights model = build_resnet(tiny_config(), 4);
  const auto series = random_series(32, 14);
  CHECK(activations(model, series, LayerSelector::parse("logits")) == logits(model, series));
  CHECK(activations(model, series, LayerSelector::parse("penultimate")).size() == 4);
  CHECK(activations(model, series, LayerSelector::parse("block0")).size() == 4 * 32);
  CHECK_THROWS_AS(activations(model, series, LayerSelector::parse("block7")), Error);
  CHECK_THROWS_AS(LayerSelector::parse("blocks"), Error);
  CHECK(LayerSelector::parse("block1").str() == "block1");
}

TEST_CASE("training reduces loss, reaches high train accuracy, and reproduces bitwise") {
  auto [data, test_unused] = synth_binary(48, 8, 32, 21);
  TrainConfig tc;
  tc.epochs = 8;
  tc.lr = 5e-3;
  tc.batch_size = 16;
  tc.seed = 77;

  ModelWeights m1 = build_resnet(tiny_config(), 42);
  auto h1 = train(m1, data, tc);
  REQUIRE(h1.size() == 8);
  CHECK(h1.back().loss < h1.front().loss);
  CHECK(h1.back().accuracy > 0.7);

  ModelWeights m2 = build_resnet(tiny_config(), 42);
  auto h2 = train(m2, data, tc);
  for (size_t i = 0; i < h1.size(); ++i) {
    CHECK(h1[i].loss == h2[i].loss);
    CHECK(h1[i].accuracy == h2[i].accuracy);
  }
  CHECK(m1.fc_w.data == m2.fc_w.data);
  CHECK(m1.blocks[1].bns[1].state.running_mean == m2.blocks[1].bns[1].state.running_mean);
}

TEST_CASE("zero-epoch training is a no-op with empty history") {
  auto [data, test_unused] = synth_binary(8, 4, 32, 22);
  ModelWeights model = build_resnet(tiny_config(), 50);
  const auto before = model.fc_w.data;
  TrainConfig tc;
  tc.epochs = 0;
  const auto history = train(model, data, tc);
  CHECK(history.empty());
  CHECK(model.fc_w.data == before);
}

TEST_CASE("weights save/load round trip preserves logits bit for bit") {
  auto [data, test_unused] = synth_binary(16, 4, 32, 23);
  ModelWeights model = build_resnet(tiny_config(), 51);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  train(model, data, tc);  // make running stats non-trivial

  const fs::path p = fs::temp_directory_path() / "seqdream_weights_roundtrip.txt";
  save_weights(model, p);
  ModelWeights back = load_weights(p);
  CHECK(back.config == model.config);
  const auto series = random_series(32, 15);
  CHECK(logits(back, series) == logits(model, series));

  SUBCASE("truncated file is a corrupt-file error") {
    std::ifstream in(p);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const fs::path t = fs::temp_directory_path() / "seqdream_weights_truncated.txt";
    std::ofstream out(t);
    out << content.substr(0, content.size() / 2);
    out.close();
    try {
      load_weights(t);
      FAIL("expected corrupt-file error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::weights_corrupt);
    }
  }

  SUBCASE("bumped version tag is a version error") {
    std::ifstream in(p);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    content.replace(content.find("SEQDREAM-W1"), 11, "SEQDREAM-W2");
    const fs::path t = fs::temp_directory_path() / "seqdream_weights_version.txt";
    std::ofstream out(t);
    out << content;
    out.close();
    try {
      load_weights(t);
      FAIL("expected version error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::weights_version);
    }
  }

  SUBCASE("missing file is its own error kind") {
    try {
      load_weights("/nonexistent/weights.txt");
      FAIL("expected missing-weights error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::weights_missing);
    }
  }
}
