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
// Acceptance runner: one PASS/FAIL line per criterion.
//
//   lungseg_acceptance            run all criteria
//   lungseg_acceptance --only 7   run one

#include <sys/wait.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "lungseg/checkpoint.hpp"
#include "lungseg/data.hpp"
#include "lungseg/inference.hpp"
#include "lungseg/metrics.hpp"
#include "lungseg/ops.hpp"
#include "lungseg/postproc.hpp"
#include "lungseg/train.hpp"
#include "oracles.hpp"
#include "temp_dir.hpp"

namespace lungseg {
namespace {

namespace fs = std::filesystem;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string format(const char* fmt, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// 1. Gradient fidelity

Verdict gradient_fidelity() {
  struct Op {
    const char* name;
    std::function<GradientCheckResult(Rng&)> trial;
    double tolerance;
  };
  const std::vector<Op> ops{
      {"conv2d d=1", [](Rng& r) { return testing::conv_gradient_trial(r, 1); }, 1e-5},
      {"conv2d d=2", [](Rng& r) { return testing::conv_gradient_trial(r, 2); }, 1e-5},
      {"conv2d d=6", [](Rng& r) { return testing::conv_gradient_trial(r, 6); }, 1e-5},
      {"batch_norm", testing::batch_norm_gradient_trial, 1e-5},
      {"bilinear_resize", testing::resize_gradient_trial, 1e-5},
      {"global_avg_pool", testing::pool_gradient_trial, 1e-5},
      {"weighted_cross_entropy", testing::cross_entropy_gradient_trial, 1e-5},
      {"tiny network", [](Rng& r) { return testing::network_gradient_trial(r); }, 1e-4},
  };
  constexpr int kTrials = 50;
  Verdict v{true, ""};
  Rng rng(1001);
  for (const Op& op : ops) {
    double worst = 0.0;
    bool finite = true;
    for (int t = 0; t < kTrials; ++t) {
      const GradientCheckResult r = op.trial(rng);
      worst = std::max(worst, r.max_relative_error);
      finite = finite && r.finite;
    }
    const bool ok = finite && worst <= op.tolerance;
    v.pass = v.pass && ok;
    v.detail += format("%s%s %.2e", v.detail.empty() ? "" : ", ", op.name, worst);
    if (!ok) v.detail += format(" (> %.0e)", op.tolerance);
  }
  v.detail += format("; %d trials each", kTrials);
  return v;
}

// ---------------------------------------------------------------------------
// 2. Dilation-1 degeneracy

template <typename T>
bool dilation_one_matches(Rng& rng) {
  ConvSpec spec;
  spec.in_channels = 1 + rng.below(4);
  spec.out_channels = 1 + rng.below(5);
  spec.kernel_h = 1 + rng.below(5);
  spec.kernel_w = 1 + rng.below(5);
  spec.stride = 1 + rng.below(2);
  spec.padding = rng.below(3);
  spec.dilation = 1;
  const std::size_t h = spec.kernel_h + rng.below(14);
  const std::size_t w = spec.kernel_w + rng.below(14);
  const auto input = testing::random_tensor<T>({1 + rng.below(2), spec.in_channels, h, w}, rng);
  const auto weight = testing::random_tensor<T>(spec.weight_shape(), rng);
  std::vector<T> bias(spec.out_channels);
  for (T& b : bias) b = static_cast<T>(rng.normal());
  const Tensor<T> got = conv2d(input, spec, weight, std::span<const T>(bias));
  return got == testing::reference_conv(input, spec, weight, bias);
}

Verdict dilation_one_degeneracy() {
  Rng rng(2002);
  int mismatches = 0;
  for (int i = 0; i < 100; ++i) {
    if (!dilation_one_matches<double>(rng)) ++mismatches;
    if (!dilation_one_matches<float>(rng)) ++mismatches;
  }
  return {mismatches == 0,
          format("%d of 200 shapes (100 double, 100 float) differ bitwise", mismatches)};
}

// ---------------------------------------------------------------------------
// 3. Post-processing oracle

BinaryMask oracle_keep_largest(const BinaryMask& mask, std::size_t k, Connectivity conn) {
  const ComponentLabeling lab = testing::flood_fill_labels(mask, conn);
  std::vector<std::size_t> order(lab.count());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lab.areas[a] > lab.areas[b]; });
  order.resize(std::min(k, order.size()));
  BinaryMask out(mask.height(), mask.width());
  for (std::size_t p = 0; p < mask.size(); ++p) {
    const std::uint32_t l = lab.labels[p];
    if (l != 0 && std::find(order.begin(), order.end(), l - 1) != order.end()) {
      out.set(p / mask.width(), p % mask.width(), true);
    }
  }
  return out;
}

Verdict postprocessing_oracle() {
  Rng rng(3003);
  int label_mismatch = 0;
  int keep_mismatch = 0;
  int too_many = 0;
  int not_idempotent = 0;
  for (int i = 0; i < 1000; ++i) {
    const double density = 0.05 + 0.9 * rng.uniform();
    const BinaryMask m = i % 2 ? testing::random_mask(32, 32, density, rng)
                               : testing::random_blob_mask(32, 32, rng);
    const Connectivity conn = i % 3 == 0 ? Connectivity::kFour : Connectivity::kEight;
    const ComponentLabeling got = label_components(m, conn);
    const ComponentLabeling want = testing::flood_fill_labels(m, conn);
    if (got.labels != want.labels || got.areas != want.areas) ++label_mismatch;
    const BinaryMask kept = keep_largest_k(m, 2, conn);
    if (kept != oracle_keep_largest(m, 2, conn)) ++keep_mismatch;
    if (label_components(kept, conn).count() > 2) ++too_many;
    if (keep_largest_k(kept, 2, conn) != kept) ++not_idempotent;
  }
  return {label_mismatch + keep_mismatch + too_many + not_idempotent == 0,
          format("1000 masks: %d labeling mismatches, %d keep-largest mismatches, "
                 "%d with >2 components, %d not idempotent",
                 label_mismatch, keep_mismatch, too_many, not_idempotent)};
}

// ---------------------------------------------------------------------------
// 4. Metric identities

Verdict metric_identities() {
  Rng rng(4004);
  double worst_identity = 0.0;
  int out_of_range = 0;
  for (int i = 0; i < 1000; ++i) {
    ConfusionCounts c;
    auto draw = [&] { return rng.below(5) == 0 ? 0 : rng.below(100000); };
    do {
      c = {draw(), draw(), draw(), draw()};
    } while (c.total() == 0);
    const RegionMetrics r = region_metrics(c);
    worst_identity =
        std::max(worst_identity, std::abs(r.dice_region - 2.0 * r.jaccard / (1.0 + r.jaccard)));
    for (double x : {r.accuracy, r.sensitivity, r.specificity, r.jaccard, r.dice_region}) {
      if (!(x >= 0.0 && x <= 1.0)) ++out_of_range;
    }
  }
  int identical_not_one = 0;
  int not_monotone = 0;
  const std::vector<double> tolerances{0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0, 10.0};
  for (int i = 0; i < 100; ++i) {
    const BinaryMask a = testing::random_blob_mask(48, 48, rng);
    const BinaryMask b = testing::random_blob_mask(48, 48, rng);
    if (boundary_f1(a, a, 0.0) != 1.0 || boundary_f1(a, a, 3.0) != 1.0) ++identical_not_one;
    double previous = -1.0;
    for (double t : tolerances) {
      const double f = boundary_f1(a, b, t);
      if (f < previous || f < 0.0 || f > 1.0) {
        ++not_monotone;
        break;
      }
      previous = f;
    }
  }
  const bool pass =
      worst_identity <= 1e-12 && out_of_range == 0 && identical_not_one == 0 && not_monotone == 0;
  return {pass, format("max |dice - 2J/(1+J)| %.1e, %d out of [0,1]; boundary F1: %d identical "
                       "pairs != 1, %d pairs not monotone",
                       worst_identity, out_of_range, identical_not_one, not_monotone)};
}

// ---------------------------------------------------------------------------
// 5. Determinism

int run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd =
      "\"" + std::string(LUNGSEG_EXE) + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Verdict determinism() {
  testing::TempDir dir("acceptance5");
  std::ofstream(dir / "run.json") << R"({
    "train": {"epochs": 2, "input_size": 64, "seed": 17, "batch_size": 8},
    "data": {"phantoms": {"count": 24, "image_size": 64}},
    "output_dir": "out"})";
  const std::string d = dir.path().string();
  for (const char* name : {"a", "b"}) {
    const int status = run_cli("--threads 1 train --config " + d + "/run.json --out " + d + "/" +
                                   name + ".ckpt",
                               dir / (std::string(name) + ".log"));
    if (status != 0) {
      return {false, "train run '" + std::string(name) + "' failed: " +
                         slurp(dir / (std::string(name) + ".log"))};
    }
  }
  const std::string a = slurp(dir / "a.ckpt");
  const bool same_files = !a.empty() && a == slurp(dir / "b.ckpt");

  // Eval-mode logits survive save/load.
  const Checkpoint loaded = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(loaded.network, dir / "c.ckpt", loaded.metadata);
  const Checkpoint reloaded = load_checkpoint(dir / "c.ckpt");
  const DatasetManifest phantoms = load_manifest(dir / "out/phantoms/manifest.json");
  bool same_logits = true;
  for (std::size_t i = 0; i < 4; ++i) {
    const GrayImage img = load_image(phantoms.samples[i].image);
    Tensor<float> x({1, 1, img.height, img.width}, img.values);
    same_logits = same_logits && loaded.network.predict(x) == reloaded.network.predict(x);
  }
  const bool same_resave = slurp(dir / "c.ckpt") == a;
  return {same_files && same_logits && same_resave,
          format("checkpoints %s (%zu bytes); reloaded logits %s; re-saved file %s",
                 same_files ? "identical" : "DIFFER", a.size(),
                 same_logits ? "bitwise equal" : "DIFFER", same_resave ? "identical" : "DIFFERS")};
}

// ---------------------------------------------------------------------------
// 6. Single-batch overfit

Verdict single_batch_overfit() {
  PhantomParams params;
  params.count = 8;
  TrainingSet data;
  for (std::size_t i = 0; i < params.count; ++i) {
    auto [img, mask] = generate_phantom(params, i);
    data.ids.push_back("phantom_" + std::to_string(i));
    data.images.push_back(std::move(img));
    data.masks.push_back(std::move(mask));
  }
  TrainConfig config;
  config.batch_size = 8;
  config.learning_rate = 0.01;
  config.momentum = 0.9;
  config.augment.enabled = false;
  config.input_size = params.image_size;
  config.epochs = 500;  // one iteration per epoch
  constexpr double kTarget = 0.05;
  Network<float> net = Network<float>::build(NetworkConfig{}, config.seed);
  double last = 0.0;
  double first = 0.0;
  const TrainSummary s = fit(net, data, config, [&](const TrainEvent& e) {
    if (e.kind != TrainEvent::Kind::kIteration) return true;
    if (e.iteration == 1) first = e.loss;
    last = e.loss;
    return e.loss >= kTarget;
  });
  const bool pass = s.iterations <= 500 && last < kTarget;
  return {pass, format("loss %.4f -> %.4f after %zu iterations (target < %.2f within 500)", first,
                       last, s.iterations, kTarget)};
}

// ---------------------------------------------------------------------------
// 7. End-to-end phantom benchmark

Verdict phantom_benchmark() {
  testing::TempDir dir("acceptance7");
  PhantomParams params;
  params.count = 300;
  params.image_size = 128;
  const DatasetManifest all = generate_phantoms(params, dir / "phantoms");
  TrainConfig config;
  config.seed = 1;
  config.epochs = 40;
  config.input_size = 128;
  const auto [train_set, test_set] = split_dataset(all, config.split_ratio, config.seed);
  Network<float> net = Network<float>::build(NetworkConfig{}, config.seed);
  const TrainSummary summary = fit(net, train_set, config);

  const TrainingSet test = load_training_set(test_set, config.input_size);
  double raw_dice = 0.0;
  double post_dice = 0.0;
  double post_jaccard = 0.0;
  std::size_t max_components = 0;
  for (std::size_t i = 0; i < test.images.size(); ++i) {
    const BinaryMask raw = predict_mask(net, test.images[i]);
    const BinaryMask post = keep_largest_k(raw, 2);
    const RegionMetrics r0 = region_metrics(confusion_counts(raw, test.masks[i]));
    const RegionMetrics r1 = region_metrics(confusion_counts(post, test.masks[i]));
    raw_dice += r0.dice_region;
    post_dice += r1.dice_region;
    post_jaccard += r1.jaccard;
    max_components = std::max(max_components, label_components(post).count());
  }
  const double n = static_cast<double>(test.images.size());
  raw_dice /= n;
  post_dice /= n;
  post_jaccard /= n;
  const double delta = post_dice - raw_dice;
  const bool pass =
      post_dice >= 0.90 && post_jaccard >= 0.82 && max_components <= 2 && delta >= -0.005;
  return {pass, format("%zu train / %zu test, %zu iterations in %.0f s; post-processed dice %.4f "
                       "(>= 0.90), jaccard %.4f (>= 0.82), max components %zu, dice change %+.4f "
                       "(raw %.4f)",
                       train_set.samples.size(), test_set.samples.size(), summary.iterations,
                       summary.wall_seconds, post_dice, post_jaccard, max_components, delta,
                       raw_dice)};
}

// ---------------------------------------------------------------------------
// 8. Protocol conformance

Verdict protocol_conformance() {
  DatasetManifest m;
  for (int i = 0; i < 688; ++i) m.samples.push_back({"img" + std::to_string(i), "x.png", {}, {}});
  const auto [train_set, test_set] = split_dataset(m, TrainConfig{}.split_ratio, 0);
  const bool split_ok = train_set.samples.size() == 482 && test_set.samples.size() == 206;

  const AugmentPolicy policy = TrainConfig{}.augment;
  Rng rng(8008);
  int out_of_range = 0;
  double min_scale = 2.0;
  double max_scale = 0.0;
  double max_shift = 0.0;
  double max_rotation = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const AugmentDraw d = draw_augmentation(policy, rng);
    min_scale = std::min(min_scale, d.scale);
    max_scale = std::max(max_scale, d.scale);
    max_shift = std::max({max_shift, std::abs(d.shift_x), std::abs(d.shift_y)});
    max_rotation = std::max(max_rotation, std::abs(d.rotation_deg));
    if (d.scale < 0.8 || d.scale > 1.2 || std::abs(d.shift_x) > 0.1 ||
        std::abs(d.shift_y) > 0.1 || std::abs(d.rotation_deg) > 10.0) {
      ++out_of_range;
    }
  }

  bool identity_exact = true;
  for (int i = 0; i < 20; ++i) {
    GrayImage img(40 + rng.below(30), 40 + rng.below(30));
    for (float& v : img.values) v = static_cast<float>(rng.uniform());
    const BinaryMask mask = testing::random_mask(img.height, img.width, 0.4, rng);
    const auto [ai, am] = augment_sample(img, mask, policy, AugmentDraw{});
    identity_exact = identity_exact && ai == img && am == mask;
  }
  return {split_ok && out_of_range == 0 && identity_exact,
          format("split 688 -> %zu/%zu; 100000 draws: scale [%.4f, %.4f], |shift| <= %.4f, "
                 "|rotation| <= %.3f deg, %d out of range; identity draw %s",
                 train_set.samples.size(), test_set.samples.size(), min_scale, max_scale,
                 max_shift, max_rotation, out_of_range, identity_exact ? "exact" : "NOT exact")};
}

struct Criterion {
  int number;
  const char* name;
  Verdict (*run)();
};

constexpr Criterion kCriteria[] = {
    {1, "gradient fidelity", gradient_fidelity},
    {2, "dilation-1 degeneracy", dilation_one_degeneracy},
    {3, "post-processing oracle", postprocessing_oracle},
    {4, "metric identities", metric_identities},
    {5, "determinism", determinism},
    {6, "single-batch overfit", single_batch_overfit},
    {7, "phantom benchmark", phantom_benchmark},
    {8, "protocol conformance", protocol_conformance},
};

}  // namespace
}  // namespace lungseg

int main(int argc, char** argv) {
  CLI::App app{"lungseg acceptance criteria"};
  int only = 0;
  app.add_option("--only", only, "Run a single criterion")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);

  int failures = 0;
  for (const auto& c : lungseg::kCriteria) {
    if (only != 0 && c.number != only) continue;
    const auto start = std::chrono::steady_clock::now();
    lungseg::Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("[%s] %d %s: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", c.number, c.name,
                v.detail.c_str(), seconds);
    std::fflush(stdout);
    if (!v.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
