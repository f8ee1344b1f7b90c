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
#include "cli.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "lungseg/checkpoint.hpp"
#include "lungseg/data.hpp"
#include "lungseg/error.hpp"
#include "lungseg/inference.hpp"
#include "lungseg/json_io.hpp"
#include "lungseg/metrics.hpp"
#include "lungseg/postproc.hpp"
#include "lungseg/run_config.hpp"
#include "lungseg/train.hpp"

namespace fs = std::filesystem;

namespace lungseg::cli {
namespace {

constexpr const char* kSeedVariable = "DEEP_LF_SEED";

struct GlobalOptions {
  std::size_t threads = 1;
  std::optional<std::uint64_t> seed;
};

/// Flag beats environment beats file.
std::optional<std::uint64_t> seed_override(const GlobalOptions& global) {
  if (global.seed) return global.seed;
  const char* env = std::getenv(kSeedVariable);
  if (env == nullptr || *env == '\0') return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const unsigned long long value = std::strtoull(env, &end, 10);
  if (errno != 0 || *end != '\0' || *env == '-') {
    throw ConfigError(std::string(kSeedVariable) + " must be an unsigned integer, got '" + env +
                      "'");
  }
  return value;
}

/// Runs fn(i) for i in [0, n) across `threads` workers. Rethrows the
/// failure with the lowest index so errors do not depend on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto worker = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::max<std::size_t>(1, std::min(threads, n));
  if (count == 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker, t, count);
    for (std::thread& th : pool) th.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void ensure_directory(const fs::path& dir) {
  if (dir.empty()) return;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

DatasetManifest select_split(const DatasetManifest& manifest, const std::string& split) {
  if (split.empty() || split == "all") return manifest;
  if (!manifest.has_split_tags()) {
    throw ConfigError("--split " + split + " requested but the manifest has no split tags");
  }
  if (split == "train") return manifest.subset(Split::kTrain);
  if (split == "test") return manifest.subset(Split::kTest);
  throw ConfigError("--split must be train, test or all");
}

fs::path prediction_path(const fs::path& dir, const std::string& id) {
  const fs::path pgm = dir / (id + ".pgm");
  if (fs::exists(pgm)) return pgm;
  const fs::path png = dir / (id + ".png");
  if (fs::exists(png)) return png;
  throw IoError("no prediction for sample '" + id + "' in '" + dir.string() + "'");
}

// ---------------------------------------------------------------------------

struct SynthOptions {
  std::string params;
  std::string out;
};

void run_synth(const SynthOptions& o, const GlobalOptions& global) {
  PhantomParams params;
  if (!o.params.empty()) params = read_json_file(o.params).get<PhantomParams>();
  if (auto seed = seed_override(global)) params.seed = *seed;
  params.validate();
  const DatasetManifest manifest = generate_phantoms(params, o.out);
  std::cout << "wrote " << manifest.samples.size() << " phantoms to " << o.out << "\n";
}

struct TrainOptions {
  std::string config;
  std::string out;
};

void run_train(const TrainOptions& o, const GlobalOptions& global) {
  RunConfig rc = load_run_config(o.config);
  if (auto seed = seed_override(global)) rc.train.seed = *seed;
  rc.validate();

  DatasetManifest manifest;
  if (rc.phantoms) {
    manifest = generate_phantoms(*rc.phantoms, rc.output_dir / "phantoms");
  } else {
    manifest = load_manifest(*rc.manifest);
  }
  DatasetManifest train_set;
  DatasetManifest test_set;
  if (manifest.has_split_tags()) {
    train_set = manifest.subset(Split::kTrain);
    test_set = manifest.subset(Split::kTest);
  } else {
    std::tie(train_set, test_set) = split_dataset(manifest, rc.train.split_ratio, rc.train.seed);
  }
  if (train_set.samples.empty()) throw ConfigError("the training split is empty");

  const fs::path ckpt(o.out);
  ensure_directory(ckpt.parent_path());
  DatasetManifest tagged = train_set;
  tagged.samples.insert(tagged.samples.end(), test_set.samples.begin(), test_set.samples.end());
  save_manifest(tagged, fs::path(o.out + ".split.json"));
  save_manifest(test_set, fs::path(o.out + ".test.json"));

  Network<float> net = Network<float>::build(rc.network, rc.train.seed);
  TrainLog log(fs::path(o.out + ".log.jsonl"));
  const TrainSummary summary = fit(net, train_set, rc.train, log.sink());
  log.finish(summary);
  save_checkpoint(net, ckpt, {summary.epochs_completed, rc.train.seed, rc.train.input_size});
  std::cout << "trained " << summary.epochs_completed << " epochs (" << summary.iterations
            << " iterations), final mean loss " << summary.final_mean_loss << "; wrote " << o.out
            << "\n";
}

struct InferOptions {
  std::string ckpt;
  std::string manifest;
  std::string out;
  std::string split;
  bool no_postprocess = false;
  int k = 2;
  int connectivity = 8;
};

void run_infer(const InferOptions& o, const GlobalOptions& global) {
  const Connectivity conn = connectivity_from_int(o.connectivity);
  if (o.k < 1) throw ConfigError("--k must be >= 1");
  const Checkpoint ckpt = load_checkpoint(o.ckpt);
  const DatasetManifest manifest = select_split(load_manifest(o.manifest), o.split);
  const std::size_t size = ckpt.metadata.input_size;
  ensure_directory(o.out);
  parallel_for(manifest.samples.size(), global.threads, [&](std::size_t i) {
    const Sample& s = manifest.samples[i];
    try {
      const GrayImage image = resize_image(load_image(s.image), size, size);
      BinaryMask mask = predict_mask(ckpt.network, image);
      if (!o.no_postprocess) mask = keep_largest_k(mask, o.k, conn);
      save_mask(mask, fs::path(o.out) / (s.id + ".pgm"));
    } catch (const Error& e) {
      throw Error("sample '" + s.id + "': " + e.what());
    }
  });
  std::cout << "wrote " << manifest.samples.size() << " masks to " << o.out << "\n";
}

struct EvalOptions {
  std::string pred;
  std::string manifest;
  std::string out;
  std::string split;
  std::optional<double> tolerance;
};

void run_eval(const EvalOptions& o, const GlobalOptions& global) {
  if (o.tolerance && !(*o.tolerance >= 0.0)) throw ConfigError("--tolerance must be >= 0");
  const DatasetManifest manifest = select_split(load_manifest(o.manifest), o.split);
  if (manifest.samples.empty()) throw ConfigError("manifest selects no samples");
  std::vector<fs::path> preds;
  for (const Sample& s : manifest.samples) {
    if (!s.mask) throw ConfigError("sample '" + s.id + "' has no ground-truth mask");
    preds.push_back(prediction_path(o.pred, s.id));
  }
  std::vector<ImageMetrics> records(manifest.samples.size());
  std::vector<double> tolerances(manifest.samples.size());
  parallel_for(manifest.samples.size(), global.threads, [&](std::size_t i) {
    const Sample& s = manifest.samples[i];
    try {
      const BinaryMask pred = load_mask(preds[i]);
      const BinaryMask gt = resize_mask(load_mask(*s.mask), pred.height(), pred.width());
      tolerances[i] = o.tolerance ? *o.tolerance
                                  : default_boundary_tolerance(pred.height(), pred.width());
      records[i] = evaluate_image(s.id, pred, gt, tolerances[i]);
    } catch (const Error& e) {
      throw Error("sample '" + s.id + "': " + e.what());
    }
  });
  const MetricsReport report = aggregate(std::move(records), tolerances.front());
  const fs::path out(o.out);
  ensure_directory(out.parent_path());
  std::ofstream file(out, std::ios::trunc);
  if (!file) throw IoError("cannot write '" + o.out + "'");
  file << report_to_json(report).dump(2) << "\n";
  if (!file) throw IoError("failed writing '" + o.out + "'");
  const MetricValues& m = report.mean;
  std::cout << "evaluated " << report.per_image.size() << " images: dice " << m.dice_region
            << ", jaccard " << m.jaccard << ", accuracy " << m.accuracy << ", boundary F1 "
            << m.boundary_f1 << "\n";
}

struct PostprocessOptions {
  std::string in;
  std::string out;
  int k = 2;
  int connectivity = 8;
};

void run_postprocess(const PostprocessOptions& o, const GlobalOptions& global) {
  const Connectivity conn = connectivity_from_int(o.connectivity);
  if (o.k < 1) throw ConfigError("--k must be >= 1");
  if (!fs::is_directory(o.in)) throw IoError("'" + o.in + "' is not a directory");
  std::vector<fs::path> inputs;
  for (const fs::directory_entry& entry : fs::directory_iterator(o.in)) {
    const std::string ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".png")) inputs.push_back(entry.path());
  }
  std::sort(inputs.begin(), inputs.end());
  ensure_directory(o.out);
  parallel_for(inputs.size(), global.threads, [&](std::size_t i) {
    const BinaryMask mask = keep_largest_k(load_mask(inputs[i]), o.k, conn);
    save_mask(mask, fs::path(o.out) / (inputs[i].stem().string() + ".pgm"));
  });
  std::cout << "wrote " << inputs.size() << " masks to " << o.out << "\n";
}

struct OverlayOptions {
  std::string manifest;
  std::string pred;
  std::string out;
  std::string split;
};

void run_overlay(const OverlayOptions& o, const GlobalOptions& global) {
  const DatasetManifest manifest = select_split(load_manifest(o.manifest), o.split);
  std::vector<fs::path> preds;
  for (const Sample& s : manifest.samples) preds.push_back(prediction_path(o.pred, s.id));
  ensure_directory(o.out);
  parallel_for(manifest.samples.size(), global.threads, [&](std::size_t i) {
    const Sample& s = manifest.samples[i];
    try {
      const BinaryMask pred = load_mask(preds[i]);
      const std::size_t h = pred.height();
      const std::size_t w = pred.width();
      const GrayImage image = resize_image(load_image(s.image), h, w);
      const BinaryMask gt = s.mask ? resize_mask(load_mask(*s.mask), h, w) : BinaryMask(h, w);
      save_png(render_overlay(image, gt, pred), fs::path(o.out) / (s.id + ".png"));
    } catch (const Error& e) {
      throw Error("sample '" + s.id + "': " + e.what());
    }
  });
  std::cout << "wrote " << manifest.samples.size() << " overlays to " << o.out << "\n";
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Lung field segmentation: phantoms, training, inference, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.failure_message(CLI::FailureMessage::help);
  GlobalOptions global;
  app.add_option("--threads", global.threads, "Worker threads for per-sample stages")
      ->check(CLI::Range(std::size_t{1}, std::size_t{256}));
  app.add_option("--seed", global.seed, "Seed override (beats DEEP_LF_SEED and config files)");

  SynthOptions synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "Generate a phantom dataset");
  synth_cmd->add_option("--params", synth.params, "Phantom parameter JSON")->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();

  TrainOptions train;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a network from a run config");
  train_cmd->add_option("--config", train.config, "Run config JSON")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train.out, "Checkpoint path")->required();

  InferOptions infer;
  CLI::App* infer_cmd = app.add_subcommand("infer", "Predict masks for a manifest");
  infer_cmd->add_option("--ckpt", infer.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--manifest", infer.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  infer_cmd->add_option("--out", infer.out, "Output directory")->required();
  infer_cmd->add_option("--split", infer.split, "train, test or all");
  infer_cmd->add_flag("--no-postprocess", infer.no_postprocess, "Keep raw argmax masks");
  infer_cmd->add_option("--k", infer.k, "Components kept by post-processing");
  infer_cmd->add_option("--connectivity", infer.connectivity, "4 or 8");

  EvalOptions eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score predicted masks");
  eval_cmd->add_option("--pred", eval.pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  eval_cmd->add_option("--manifest", eval.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval.out, "Report JSON path")->required();
  eval_cmd->add_option("--split", eval.split, "train, test or all");
  eval_cmd->add_option("--tolerance", eval.tolerance, "Boundary tolerance in pixels");

  PostprocessOptions post;
  CLI::App* post_cmd = app.add_subcommand("postprocess", "Keep the largest components of masks");
  post_cmd->add_option("--in", post.in, "Input directory")->required();
  post_cmd->add_option("--out", post.out, "Output directory")->required();
  post_cmd->add_option("--k", post.k, "Components to keep");
  post_cmd->add_option("--connectivity", post.connectivity, "4 or 8");

  OverlayOptions overlay;
  CLI::App* overlay_cmd = app.add_subcommand("overlay", "Render boundary overlays as PNG");
  overlay_cmd->add_option("--manifest", overlay.manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  overlay_cmd->add_option("--pred", overlay.pred, "Prediction directory")->required()->check(CLI::ExistingDirectory);
  overlay_cmd->add_option("--out", overlay.out, "Output directory")->required();
  overlay_cmd->add_option("--split", overlay.split, "train, test or all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const CLI::App* chosen = app.get_subcommands().front();
  const std::string stage = chosen->get_name();
  try {
    if (chosen == synth_cmd) run_synth(synth, global);
    if (chosen == train_cmd) run_train(train, global);
    if (chosen == infer_cmd) run_infer(infer, global);
    if (chosen == eval_cmd) run_eval(eval, global);
    if (chosen == post_cmd) run_postprocess(post, global);
    if (chosen == overlay_cmd) run_overlay(overlay, global);
  } catch (const std::exception& e) {
    std::cerr << "lungseg " << stage << ": error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace lungseg::cli
