/*
 * Copyright 2026 The lungseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "lungseg/error.hpp"
#include "lungseg/train.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace lungseg {
namespace {

using testing::TempDir;

BinaryMask striped(std::size_t h, std::size_t w, std::size_t lung_cols) {
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < lung_cols; ++j) m.set(i, j, true);
  }
  return m;
}

TEST(ClassWeights, MedianFrequencyExample) {
  const std::vector<BinaryMask> masks{striped(4, 4, 1), striped(4, 4, 1)};
  const ClassWeights w = compute_class_weights(masks, ClassWeightMode::kMedianFrequency);
  EXPECT_NEAR(w[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(w[1], 2.0, 1e-12);
}

TEST(ClassWeights, BalancedAndUniform) {
  const std::vector<BinaryMask> masks{striped(4, 4, 2)};
  const ClassWeights w = compute_class_weights(masks, ClassWeightMode::kMedianFrequency);
  EXPECT_DOUBLE_EQ(w[0], 1.0);
  EXPECT_DOUBLE_EQ(w[1], 1.0);
  const std::vector<BinaryMask> skewed{striped(4, 4, 1)};
  const ClassWeights u = compute_class_weights(skewed, ClassWeightMode::kUniform);
  EXPECT_EQ(u, (ClassWeights{1.0, 1.0}));
}

TEST(ClassWeights, AbsentClassIsNamed) {
  const std::vector<BinaryMask> empty{BinaryMask(4, 4)};
  try {
    compute_class_weights(empty, ClassWeightMode::kMedianFrequency);
    FAIL();
  } catch (const TrainError& e) {
    EXPECT_NE(std::string(e.what()).find("lung"), std::string::npos);
  }
  const std::vector<BinaryMask> full{striped(4, 4, 4)};
  try {
    compute_class_weights(full, ClassWeightMode::kMedianFrequency);
    FAIL();
  } catch (const TrainError& e) {
    EXPECT_NE(std::string(e.what()).find("background"), std::string::npos);
  }
}

TEST(CrossEntropy, UniformLogitsGiveLogTwo) {
  const Tensor<double> logits({2, 2, 3, 3}, 0.0);
  Rng rng(61);
  std::vector<std::uint8_t> labels(18);
  for (auto& y : labels) y = static_cast<std::uint8_t>(rng.below(2));
  const std::vector<double> weights{0.7, 3.0};
  EXPECT_NEAR(weighted_cross_entropy(logits, labels, weights).loss, std::log(2.0), 1e-12);
}

TEST(CrossEntropy, ConfidentCorrectLogitsGiveZero) {
  Tensor<double> logits({1, 2, 1, 2});
  logits.at(0, 0, 0, 0) = 50.0;
  logits.at(0, 1, 0, 1) = 50.0;
  const std::vector<std::uint8_t> labels{0, 1};
  const std::vector<double> weights{1.0, 1.0};
  const auto r = weighted_cross_entropy(logits, labels, weights);
  EXPECT_LT(r.loss, 1e-20);
  for (double g : r.grad.values()) EXPECT_LT(std::abs(g), 1e-20);
  logits.at(0, 0, 0, 0) = 1000.0;
  EXPECT_TRUE(std::isfinite(weighted_cross_entropy(logits, labels, weights).loss));
}

TEST(CrossEntropy, TwoPixelOracle) {
  // channel planes: background [1, -1], lung [0, 2]
  const Tensor<double> logits({1, 2, 1, 2}, {1.0, -1.0, 0.0, 2.0});
  const std::vector<std::uint8_t> labels{0, 1};
  const std::vector<double> weights{2.0, 0.5};
  const auto r = weighted_cross_entropy(logits, labels, weights);
  const double want = (2.0 * std::log1p(std::exp(-1.0)) + 0.5 * std::log1p(std::exp(-3.0))) / 2.5;
  EXPECT_NEAR(r.loss, want, 1e-14);
  const double p0 = 1.0 / (1.0 + std::exp(-1.0));   // background prob at pixel 0
  const double p1 = 1.0 / (1.0 + std::exp(-3.0));   // lung prob at pixel 1
  EXPECT_NEAR(r.grad.at(0, 0, 0, 0), 2.0 * (p0 - 1.0) / 2.5, 1e-14);
  EXPECT_NEAR(r.grad.at(0, 1, 0, 0), 2.0 * (1.0 - p0) / 2.5, 1e-14);
  EXPECT_NEAR(r.grad.at(0, 0, 0, 1), 0.5 * (1.0 - p1) / 2.5, 1e-14);
  EXPECT_NEAR(r.grad.at(0, 1, 0, 1), 0.5 * (p1 - 1.0) / 2.5, 1e-14);
}

TEST(CrossEntropy, WeightScaleInvariance) {
  Rng rng(62);
  const auto logits = testing::random_tensor<double>({2, 2, 4, 4}, rng, 3.0);
  std::vector<std::uint8_t> labels(32);
  for (auto& y : labels) y = static_cast<std::uint8_t>(rng.below(2));
  const std::vector<double> w{0.6, 2.0};
  const std::vector<double> w10{6.0, 20.0};
  EXPECT_NEAR(weighted_cross_entropy(logits, labels, w).loss,
              weighted_cross_entropy(logits, labels, w10).loss, 1e-12);
}

TEST(CrossEntropy, MaskOverloadMatchesLabels) {
  Rng rng(63);
  const auto logits = testing::random_tensor<float>({2, 2, 5, 6}, rng, 2.0);
  const std::vector<BinaryMask> masks{testing::random_mask(5, 6, 0.4, rng),
                                      testing::random_mask(5, 6, 0.4, rng)};
  std::vector<std::uint8_t> labels;
  for (const auto& m : masks) labels.insert(labels.end(), m.values().begin(), m.values().end());
  const std::vector<double> w{0.8, 1.5};
  const auto a = weighted_cross_entropy(logits, masks, ClassWeights{0.8, 1.5});
  const auto b = weighted_cross_entropy(logits, labels, w);
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.grad, b.grad);
}

TEST(CrossEntropy, RejectsBadInputs) {
  const Tensor<double> logits({1, 2, 1, 2});
  const std::vector<double> weights{1.0, 1.0};
  const std::vector<std::uint8_t> bad_label{0, 2};
  EXPECT_THROW(weighted_cross_entropy(logits, bad_label, weights), Error);
  const std::vector<std::uint8_t> short_labels{0};
  EXPECT_THROW(weighted_cross_entropy(logits, short_labels, weights), ShapeError);
  const std::vector<std::uint8_t> labels{0, 1};
  const std::vector<double> negative{1.0, -1.0};
  EXPECT_THROW(weighted_cross_entropy(logits, labels, negative), ConfigError);
}

Parameter<double> scalar_param(const std::string& name, double value, double grad) {
  return {name, {1}, Tensor<double>({1, 1, 1, 1}, value), Tensor<double>({1, 1, 1, 1}, grad)};
}

TEST(Sgd, MomentumExample) {
  Parameter<double> p = scalar_param("p", 1.0, 0.5);
  std::vector<Parameter<double>*> params{&p};
  auto state = OptimizerState<double>::zeros_like(params);
  sgd_momentum_step<double>(params, state, 0.01, 0.9);
  EXPECT_DOUBLE_EQ(state.velocity.at("p").values()[0], 0.5);
  EXPECT_DOUBLE_EQ(p.value.values()[0], 0.995);
  sgd_momentum_step<double>(params, state, 0.01, 0.9);
  EXPECT_DOUBLE_EQ(state.velocity.at("p").values()[0], 0.95);
  EXPECT_DOUBLE_EQ(p.value.values()[0], 0.995 - 0.0095);
}

TEST(Sgd, ZeroGradientAndPlainSgd) {
  Parameter<double> p = scalar_param("p", 2.0, 0.0);
  std::vector<Parameter<double>*> params{&p};
  auto state = OptimizerState<double>::zeros_like(params);
  sgd_momentum_step<double>(params, state, 0.1, 0.9);
  EXPECT_EQ(p.value.values()[0], 2.0);
  p.grad.fill(1.0);
  for (int i = 0; i < 3; ++i) sgd_momentum_step<double>(params, state, 0.1, 0.0);
  EXPECT_NEAR(p.value.values()[0], 1.7, 1e-15);
}

TEST(Sgd, RejectsMismatchedState) {
  Parameter<double> p = scalar_param("p", 1.0, 1.0);
  Parameter<double> q = scalar_param("q", 1.0, 1.0);
  std::vector<Parameter<double>*> one{&p};
  std::vector<Parameter<double>*> other{&q};
  auto state = OptimizerState<double>::zeros_like(one);
  EXPECT_THROW(sgd_momentum_step<double>(other, state, 0.1, 0.9), ConfigError);
  state.velocity.at("p") = Tensor<double>({1, 2, 1, 1});
  EXPECT_THROW(sgd_momentum_step<double>(one, state, 0.1, 0.9), ShapeError);
}

TEST(Augment, IdentityIsExact) {
  Rng rng(64);
  GrayImage img(20, 24);
  for (float& v : img.values) v = static_cast<float>(rng.uniform());
  const BinaryMask mask = testing::random_mask(20, 24, 0.5, rng);
  const auto [ai, am] = augment_sample(img, mask, AugmentPolicy{}, AugmentDraw{});
  EXPECT_EQ(ai.values, img.values);
  EXPECT_EQ(am, mask);
}

TEST(Augment, DrawsStayInRange) {
  AugmentPolicy policy;
  Rng rng(65);
  for (int i = 0; i < 2000; ++i) {
    const AugmentDraw d = draw_augmentation(policy, rng);
    EXPECT_GE(d.scale, 0.8);
    EXPECT_LE(d.scale, 1.2);
    EXPECT_LE(std::abs(d.shift_x), 0.10);
    EXPECT_LE(std::abs(d.shift_y), 0.10);
    EXPECT_LE(std::abs(d.rotation_deg), 10.0);
  }
  policy.enabled = false;
  EXPECT_TRUE(draw_augmentation(policy, rng).is_identity());
}

TEST(Augment, MaskStaysBinaryAndDiscAreaIsKept) {
  const std::size_t n = 128;
  BinaryMask disc(n, n);
  GrayImage img(n, n);
  const double c = (n - 1) / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool in = std::hypot(i - c, j - c) <= 30.0;
      disc.set(i, j, in);
      img.at(i, j) = in ? 1.0f : 0.0f;
    }
  }
  AugmentDraw d;
  d.rotation_deg = 10.0;
  const auto [ai, am] = augment_sample(img, disc, AugmentPolicy{}, d);
  for (std::uint8_t v : am.values()) EXPECT_LE(v, 1);
  const double ratio = static_cast<double>(am.foreground()) / static_cast<double>(disc.foreground());
  EXPECT_NEAR(ratio, 1.0, 0.02);
  Rng rng(66);
  for (int t = 0; t < 10; ++t) {
    const auto [bi, bm] = augment_sample(img, disc, AugmentPolicy{}, draw_augmentation(AugmentPolicy{}, rng));
    for (std::uint8_t v : bm.values()) ASSERT_LE(v, 1);
    for (float v : bi.values) ASSERT_TRUE(v >= 0.0f && v <= 1.0f);
  }
}

TEST(Augment, ShiftExposesFill) {
  GrayImage img(10, 10, 0.5f);
  BinaryMask mask(10, 10);
  for (std::size_t i = 0; i < 10; ++i) mask.set(i, 0, true);
  AugmentPolicy policy;
  policy.fill_value = 0.25f;
  AugmentDraw d;
  d.shift_x = 0.3;
  const auto [ai, am] = augment_sample(img, mask, policy, d);
  EXPECT_EQ(ai.at(5, 0), 0.25f);
  EXPECT_EQ(ai.at(5, 9), 0.5f);
  EXPECT_FALSE(am.at(5, 0));
  EXPECT_TRUE(am.at(5, 3));
}

TEST(Augment, PolicyValidation) {
  AugmentPolicy p;
  p.scale_range = {1.2, 0.8};
  EXPECT_THROW(p.validate(), ConfigError);
  p = AugmentPolicy{};
  p.rotation_deg = -1.0;
  EXPECT_THROW(p.validate(), ConfigError);
}

DatasetManifest numbered(std::size_t n) {
  DatasetManifest m;
  for (std::size_t i = 0; i < n; ++i) m.samples.push_back({"s" + std::to_string(i), "x.pgm", {}, {}});
  return m;
}

TEST(Split, SizesAndDisjointness) {
  const auto [train, test] = split_dataset(numbered(10), 0.7, 3);
  EXPECT_EQ(train.samples.size(), 7u);
  EXPECT_EQ(test.samples.size(), 3u);
  std::set<std::string> ids;
  for (const auto& s : train.samples) {
    ids.insert(s.id);
    EXPECT_EQ(s.split, Split::kTrain);
  }
  for (const auto& s : test.samples) {
    ids.insert(s.id);
    EXPECT_EQ(s.split, Split::kTest);
  }
  EXPECT_EQ(ids.size(), 10u);
  const auto [big_train, big_test] = split_dataset(numbered(688), 0.7, 0);
  EXPECT_EQ(big_train.samples.size(), 482u);
  EXPECT_EQ(big_test.samples.size(), 206u);
}

TEST(Split, DeterministicPerSeed) {
  auto ids = [](const DatasetManifest& m) {
    std::vector<std::string> out;
    for (const auto& s : m.samples) out.push_back(s.id);
    return out;
  };
  const auto a = split_dataset(numbered(50), 0.7, 11);
  const auto b = split_dataset(numbered(50), 0.7, 11);
  const auto c = split_dataset(numbered(50), 0.7, 12);
  EXPECT_EQ(ids(a.first), ids(b.first));
  EXPECT_NE(ids(a.first), ids(c.first));
  EXPECT_THROW(split_dataset(DatasetManifest{}, 0.7, 0), ConfigError);
}

TrainingSet synthetic_set(std::size_t count, std::size_t size, std::uint64_t seed) {
  TrainingSet set;
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    BinaryMask m = testing::random_blob_mask(size, size, rng);
    m.set(0, 0, false);
    m.set(size / 2, size / 2, true);
    GrayImage img(size, size);
    for (std::size_t p = 0; p < img.values.size(); ++p) {
      img.values[p] = (m.values()[p] ? 0.7f : 0.2f) + 0.05f * static_cast<float>(rng.normal());
    }
    set.ids.push_back("s" + std::to_string(i));
    set.images.push_back(std::move(img));
    set.masks.push_back(std::move(m));
  }
  return set;
}

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.batch_size = 2;
  c.epochs = 2;
  c.input_size = 32;
  c.seed = 5;
  return c;
}

std::vector<std::vector<float>> snapshot(Network<float>& net) {
  std::vector<std::vector<float>> out;
  for (const auto* p : net.parameters()) out.emplace_back(p->value.values().begin(), p->value.values().end());
  return out;
}

TEST(Fit, ZeroEpochsLeavesParametersUnchanged) {
  Network<float> net = Network<float>::build(testing::tiny_network_config(), 1);
  const auto before = snapshot(net);
  TrainConfig c = tiny_train_config();
  c.epochs = 0;
  const TrainSummary s = fit(net, synthetic_set(4, 32, 1), c);
  EXPECT_EQ(s.iterations, 0u);
  EXPECT_EQ(snapshot(net), before);
}

TEST(Fit, DeterministicAndCountsIterations) {
  const TrainingSet data = synthetic_set(5, 32, 2);
  Network<float> a = Network<float>::build(testing::tiny_network_config(), 3);
  Network<float> b = Network<float>::build(testing::tiny_network_config(), 3);
  std::vector<TrainEvent> events;
  const TrainSummary sa = fit(a, data, tiny_train_config(), [&](const TrainEvent& e) {
    events.push_back(e);
    return true;
  });
  const TrainSummary sb = fit(b, data, tiny_train_config());
  EXPECT_EQ(snapshot(a), snapshot(b));
  EXPECT_EQ(sa.final_mean_loss, sb.final_mean_loss);
  // 5 samples in batches of 2: the odd one out is dropped each epoch.
  EXPECT_EQ(sa.iterations, 4u);
  EXPECT_EQ(sa.epochs_completed, 2u);
  ASSERT_EQ(events.size(), 6u);
  EXPECT_EQ(events[2].kind, TrainEvent::Kind::kEpoch);
  EXPECT_EQ(events[5].epoch, 2u);
  EXPECT_NEAR(events[2].loss, (events[0].loss + events[1].loss) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(events[0].learning_rate, 0.01);
  EXPECT_FALSE(sa.stopped_by_sink);
}

TEST(Fit, SinkCanStopTraining) {
  Network<float> net = Network<float>::build(testing::tiny_network_config(), 4);
  const TrainSummary s = fit(net, synthetic_set(4, 32, 3), tiny_train_config(),
                             [](const TrainEvent&) { return false; });
  EXPECT_EQ(s.iterations, 1u);
  EXPECT_TRUE(s.stopped_by_sink);
}

TEST(Fit, NonFiniteLossIsReported) {
  Network<float> net = Network<float>::build(testing::tiny_network_config(), 5);
  net.classifier_bias().value.fill(std::numeric_limits<float>::quiet_NaN());
  try {
    fit(net, synthetic_set(4, 32, 4), tiny_train_config());
    FAIL();
  } catch (const TrainError& e) {
    EXPECT_NE(std::string(e.what()).find("iteration 1"), std::string::npos) << e.what();
  }
}

TEST(Fit, RejectsWrongSizedSamples) {
  Network<float> net = Network<float>::build(testing::tiny_network_config(), 6);
  TrainConfig c = tiny_train_config();
  c.input_size = 64;
  EXPECT_THROW(fit(net, synthetic_set(4, 32, 5), c), TrainError);
  EXPECT_THROW(fit(net, TrainingSet{}, tiny_train_config()), TrainError);
}

TEST(Fit, LossDecreasesOnEasyData) {
  Network<float> net = Network<float>::build(testing::tiny_network_config(), 7);
  TrainConfig c = tiny_train_config();
  c.epochs = 40;
  c.batch_size = 4;
  c.learning_rate = 0.1;
  c.augment.enabled = false;
  std::vector<double> epoch_losses;
  fit(net, synthetic_set(4, 32, 6), c, [&](const TrainEvent& e) {
    if (e.kind == TrainEvent::Kind::kEpoch) epoch_losses.push_back(e.loss);
    return true;
  });
  ASSERT_EQ(epoch_losses.size(), 40u);
  EXPECT_LT(epoch_losses.back(), 0.7 * epoch_losses.front());
}

TEST(TrainLogFile, WritesOneJsonObjectPerLine) {
  TempDir dir("trainlog");
  {
    TrainLog log(dir / "log.jsonl");
    auto sink = log.sink();
    EXPECT_TRUE(sink({TrainEvent::Kind::kIteration, 1, 1, 0.5, 0.01}));
    log.record({TrainEvent::Kind::kEpoch, 1, 1, 0.5, 0.01});
    TrainSummary s;
    s.epochs_completed = 1;
    s.iterations = 1;
    s.final_mean_loss = 0.5;
    s.class_weights = {0.75, 1.5};
    log.finish(s);
  }
  std::ifstream in(dir / "log.jsonl");
  std::vector<nlohmann::json> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0]["type"], "iteration");
  EXPECT_EQ(lines[0]["iteration"], 1);
  EXPECT_DOUBLE_EQ(lines[0]["loss"].get<double>(), 0.5);
  EXPECT_TRUE(lines[0]["timestamp"].get<std::string>().ends_with("Z"));
  EXPECT_EQ(lines[1]["type"], "epoch");
  EXPECT_EQ(lines[2]["type"], "summary");
  EXPECT_EQ(lines[2]["class_weights"][1], 1.5);
}

TEST(TrainConfigValidation, RejectsBadValues) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.split_ratio = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_NO_THROW(TrainConfig{}.validate());
}

}  // namespace
}  // namespace lungseg
