// Copyright (c) the prefilter Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "prefilter/cli.h"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "prefilter/eval.h"
#include "prefilter/image_io.h"
#include "prefilter/trainer.h"

namespace prefilter {

namespace {

namespace fs = std::filesystem;

struct CommonOpts {
  std::string config_path;
  std::string out_dir;
  std::string adapters_dir;
  std::string preset;
  uint64_t seed = 0;
  bool seed_set = false;
};

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open config file: " + path);
  return nlohmann::json::parse(f);
}

CodecRegistry make_registry(const CommonOpts& c) {
  CodecRegistry reg;
  if (!c.adapters_dir.empty()) reg.load_adapter_dir(c.adapters_dir);
  return reg;
}

// Every run leaves a snapshot sufficient to reproduce it.
void write_run_snapshot(const std::string& out_dir, const std::string& subcommand,
                        const CommonOpts& c, nlohmann::json extra) {
  fs::create_directories(out_dir);
  nlohmann::json j;
  j["subcommand"] = subcommand;
  j["config_file"] = c.config_path;
  j["out"] = out_dir;
  j["adapters"] = c.adapters_dir;
  j["preset"] = c.preset;
  j["seed"] = c.seed;
  j["params"] = std::move(extra);
  std::ofstream f(out_dir + "/cli_config.json");
  f << j.dump(2) << "\n";
}

TrainConfig resolve_train_config(const nlohmann::json& cfg, const CommonOpts& c) {
  TrainConfig tc;
  if (!c.preset.empty()) tc.apply_preset(c.preset);
  if (cfg.contains("train")) {
    nlohmann::json merged = cfg["train"];
    if (!c.preset.empty()) merged["preset"] = c.preset;
    else if (!merged.contains("preset")) merged["preset"] = tc.preset;
    tc = TrainConfig::from_json(merged);
  }
  if (c.seed_set) tc.seed = c.seed;
  return tc;
}

SurrogateConfig resolve_surrogate_config(const nlohmann::json& cfg,
                                         const CommonOpts& c, uint64_t seed) {
  SurrogateConfig sc =
      surrogate_preset(c.preset.empty() ? "desk_scale" : c.preset);
  if (cfg.contains("surrogate")) {
    const auto& j = cfg["surrogate"];
    if (j.contains("latent_channels")) sc.latent_channels = j["latent_channels"];
    if (j.contains("hidden_channels")) sc.hidden_channels = j["hidden_channels"];
    if (j.contains("lambda_s")) sc.lambda_s = j["lambda_s"];
    if (j.contains("distortion"))
      sc.distortion = distortion_from_string(j["distortion"]);
  }
  sc.seed = seed;
  return sc;
}

FilterConfig resolve_filter_config(const nlohmann::json& cfg,
                                   const CommonOpts& c, uint64_t seed) {
  FilterConfig fc = filter_preset(c.preset.empty() ? "desk_scale" : c.preset);
  if (cfg.contains("filter")) {
    const auto& j = cfg["filter"];
    if (j.contains("up_channels"))
      fc.up_channels = j["up_channels"].get<std::vector<int>>();
    if (j.contains("trunk_channels")) fc.trunk_channels = j["trunk_channels"];
    if (j.contains("trunk_blocks")) fc.trunk_blocks = j["trunk_blocks"];
    if (j.contains("init_mode"))
      fc.init_mode = init_mode_from_string(j["init_mode"]);
    if (j.contains("zero_output_conv"))
      fc.zero_output_conv = j["zero_output_conv"];
  }
  fc.seed = seed;
  return fc;
}

int cmd_train_surrogate(const CommonOpts& c, const std::string& corpus_dir) {
  nlohmann::json cfg = load_config(c.config_path);
  TrainConfig tc = resolve_train_config(cfg, c);
  SurrogateConfig sc = resolve_surrogate_config(cfg, c, tc.seed);
  Corpus corpus = Corpus::load_dir(corpus_dir);
  write_run_snapshot(c.out_dir, "train-surrogate", c,
                     {{"corpus", corpus_dir}, {"train", tc.to_json()}});
  auto out = train_surrogate(sc, tc, corpus, c.out_dir);
  std::cout << "surrogate checkpoint: " << out.result.final_checkpoint << "\n";
  if (out.result.diverged) {
    std::cerr << "error[internal]: training diverged; last valid checkpoint "
                 "kept at "
              << out.result.final_checkpoint << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

int cmd_train_filter(const CommonOpts& c, const std::string& corpus_dir,
                     const std::string& surrogate_ckpt,
                     const std::string& classifier_ckpt,
                     const std::string& mode_flag, const std::string& codec_name) {
  nlohmann::json cfg = load_config(c.config_path);
  TrainConfig tc = resolve_train_config(cfg, c);
  if (!mode_flag.empty()) tc.mode = filter_mode_from_string(mode_flag);
  if (!codec_name.empty()) tc.codec = codec_name;
  FilterConfig fc = resolve_filter_config(cfg, c, tc.seed);
  if (tc.mode == FilterMode::kTask) fc.init_mode = InitMode::kLowVariance;

  auto surrogate =
      std::make_shared<SurrogateModel>(SurrogateModel::load(surrogate_ckpt));
  tc.weights.lambda_t =
      resolve_lambda_t(tc.weights.lambda_t, surrogate->config().lambda_s);
  const bool labeled = tc.mode == FilterMode::kTask;
  Corpus corpus = Corpus::load_dir(corpus_dir, labeled);
  write_run_snapshot(c.out_dir, "train-filter", c,
                     {{"corpus", corpus_dir},
                      {"surrogate_checkpoint", surrogate_ckpt},
                      {"train", tc.to_json()}});

  FilterTrainOutput out;
  switch (tc.mode) {
    case FilterMode::kMsssimRetarget:
      out = train_filter(surrogate, fc, tc, corpus, c.out_dir);
      break;
    case FilterMode::kGan:
      out = train_filter_gan(surrogate, fc, tc, corpus, c.out_dir);
      break;
    case FilterMode::kTask: {
      if (classifier_ckpt.empty())
        throw std::invalid_argument(
            "task mode requires --classifier-checkpoint");
      CodecRegistry reg = make_registry(c);
      Classifier clf = Classifier::load(classifier_ckpt);
      out = train_filter_task(surrogate, fc, tc, corpus, clf,
                              reg.get(tc.codec), c.out_dir);
      break;
    }
  }
  std::cout << "filter checkpoint: " << out.result.final_checkpoint << "\n";
  if (out.result.diverged) {
    std::cerr << "error[internal]: training diverged; halted at last "
                 "checkpoint\n";
    return kExitInternal;
  }
  return kExitOk;
}

int cmd_filter_images(const CommonOpts& c, const std::string& corpus_dir,
                      const std::string& filter_ckpt,
                      const std::string& surrogate_ckpt) {
  FilterBundle bundle = load_filter_bundle(filter_ckpt, surrogate_ckpt);
  Corpus corpus = Corpus::load_dir(corpus_dir);
  write_run_snapshot(c.out_dir, "filter-images", c,
                     {{"corpus", corpus_dir},
                      {"filter_checkpoint", filter_ckpt},
                      {"surrogate_checkpoint", surrogate_ckpt}});
  for (size_t i = 0; i < corpus.size(); ++i) {
    Tensor filtered = bundle.filter->apply(u8_to_tensor(corpus.image(i)));
    const std::string stem = fs::path(corpus.path(i)).stem().string();
    save_image(tensor_to_u8(filtered), c.out_dir + "/" + stem + ".png");
  }
  std::cout << "filtered " << corpus.size() << " images into " << c.out_dir
            << "\n";
  return kExitOk;
}

int cmd_eval_rd(const CommonOpts& c, const std::string& corpus_dir,
                const std::string& codec_name, std::vector<int> qualities,
                const std::string& metric_name, const std::string& filter_ckpt,
                const std::string& surrogate_ckpt) {
  CodecRegistry reg = make_registry(c);
  const Codec& codec = reg.get(codec_name);
  if (!codec.available()) {
    std::cerr << "error[adapter]: codec '" << codec_name
              << "' binary not found; skipping is not possible for an "
                 "explicit request\n";
    return kExitAdapter;
  }
  const Metric metric = metric_from_string(metric_name);
  Corpus corpus = Corpus::load_dir(corpus_dir);
  write_run_snapshot(c.out_dir, "eval-rd", c,
                     {{"corpus", corpus_dir},
                      {"codec", codec_name},
                      {"qualities", qualities},
                      {"metric", metric_name},
                      {"filter_checkpoint", filter_ckpt}});

  const std::string tag = fs::path(corpus_dir).filename().string();
  std::vector<RDCurve> curves;
  curves.push_back(build_rd_curve(corpus, codec, qualities, metric, nullptr, 0, tag));
  std::vector<SavingsCurve> savings;
  std::vector<std::string> labels;
  if (!filter_ckpt.empty()) {
    if (surrogate_ckpt.empty())
      throw std::invalid_argument(
          "--filter-checkpoint requires --surrogate-checkpoint");
    FilterBundle bundle = load_filter_bundle(filter_ckpt, surrogate_ckpt);
    curves.push_back(build_rd_curve(corpus, codec, qualities, metric,
                                    bundle.filter.get(), 0, tag));
    savings.push_back(rate_savings(curves[1], curves[0]));
    labels.push_back(tag + "_" + codec_name);
    std::cout << "bd_rate: " << savings.back().bd_rate * 100.0 << "%\n";
  }
  for (const std::string& f : emit_report(curves, savings, labels, c.out_dir))
    std::cout << "wrote " << f << "\n";
  return kExitOk;
}

int cmd_eval_task(const CommonOpts& c, const std::string& corpus_dir,
                  const std::string& codec_name, std::vector<int> qualities,
                  const std::string& classifier_ckpt,
                  const std::string& filter_ckpt,
                  const std::string& surrogate_ckpt) {
  CodecRegistry reg = make_registry(c);
  const Codec& codec = reg.get(codec_name);
  Classifier clf = Classifier::load(classifier_ckpt);
  Corpus corpus = Corpus::load_dir(corpus_dir, /*labeled=*/true);
  write_run_snapshot(c.out_dir, "eval-task", c,
                     {{"corpus", corpus_dir},
                      {"codec", codec_name},
                      {"qualities", qualities},
                      {"classifier_checkpoint", classifier_ckpt},
                      {"filter_checkpoint", filter_ckpt}});
  const std::string tag = fs::path(corpus_dir).filename().string();

  std::unique_ptr<FilterBundle> bundle;
  if (!filter_ckpt.empty()) {
    if (surrogate_ckpt.empty())
      throw std::invalid_argument(
          "--filter-checkpoint requires --surrogate-checkpoint");
    bundle = std::make_unique<FilterBundle>(
        load_filter_bundle(filter_ckpt, surrogate_ckpt));
  }
  TaskCurve base = task_accuracy_curve(corpus, clf, codec, qualities, nullptr, 0, tag);
  std::optional<TaskCurve> filt;
  if (bundle)
    filt = task_accuracy_curve(corpus, clf, codec, qualities,
                               bundle->filter.get(), 0, tag);
  fs::create_directories(c.out_dir);
  const std::string path = c.out_dir + "/task_accuracy.csv";
  std::ofstream f(path);
  f << "dataset,codec,filtered,quality,bpp,accuracy\n";
  auto dump = [&](const TaskCurve& tc) {
    for (const TaskPoint& p : tc.points) {
      char row[160];
      std::snprintf(row, sizeof(row), "%s,%s,%d,%d,%.10g,%.10g\n",
                    tag.c_str(), tc.codec.c_str(), tc.filtered ? 1 : 0,
                    p.quality, p.bpp, p.accuracy);
      f << row;
    }
  };
  dump(base);
  if (filt) dump(*filt);
  std::cout << "wrote " << path << "\n";
  return kExitOk;
}

int cmd_report(const CommonOpts& c, const std::vector<std::string>& inputs) {
  std::vector<RDCurve> curves;
  for (const std::string& path : inputs) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot open " + path);
    nlohmann::json j = nlohmann::json::parse(f);
    for (const auto& jc : j.at("curves")) {
      RDCurve curve;
      curve.dataset = jc.value("dataset", "");
      curve.codec = jc.value("codec", "");
      curve.filtered = jc.value("filtered", false);
      curve.metric = metric_from_string(jc.value("metric", "ms_ssim"));
      for (const auto& p : jc.at("points"))
        curve.points.push_back(
            {p.at("bpp").get<double>(), p.at("value").get<double>(),
             p.value("quality", 0)});
      curves.push_back(std::move(curve));
    }
  }
  if (curves.empty()) throw std::invalid_argument("report: no curves in inputs");
  write_run_snapshot(c.out_dir, "report", c, {{"inputs", inputs}});
  // Pair filtered/baseline curves by (dataset, codec) for savings plots.
  std::vector<SavingsCurve> savings;
  std::vector<std::string> labels;
  for (const RDCurve& a : curves) {
    if (!a.filtered) continue;
    for (const RDCurve& b : curves) {
      if (b.filtered || b.codec != a.codec || b.dataset != a.dataset) continue;
      savings.push_back(rate_savings(a, b));
      labels.push_back(a.dataset + "_" + a.codec);
    }
  }
  for (const std::string& f : emit_report(curves, savings, labels, c.out_dir))
    std::cout << "wrote " << f << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"surrogate-guided pre-filtering for conventional codecs",
               "prefilter"};
  app.require_subcommand(1);

  CommonOpts copts;
  std::string corpus_dir, surrogate_ckpt, filter_ckpt, classifier_ckpt;
  std::string codec_name = "jpeg", metric_name = "ms_ssim", mode_flag;
  std::vector<int> qualities;
  std::vector<std::string> report_inputs;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", copts.config_path, "JSON config file");
    auto* out = sub->add_option("--out", copts.out_dir, "output/run directory");
    if (needs_out) out->required();
    sub->add_option("--adapters", copts.adapters_dir,
                    "directory of codec adapter *.json specs");
    sub->add_option("--preset", copts.preset,
                    "desk_scale or paper_scale");
    sub->add_option("--seed", copts.seed, "master RNG seed")
        ->each([&](const std::string&) { copts.seed_set = true; });
  };

  CLI::App* ts = app.add_subcommand("train-surrogate",
                                    "train the differentiable surrogate codec");
  add_common(ts, true);
  ts->add_option("--corpus", corpus_dir, "training image directory")->required();

  CLI::App* tf = app.add_subcommand("train-filter", "train the pre-filter");
  add_common(tf, true);
  tf->add_option("--corpus", corpus_dir, "training image directory")->required();
  tf->add_option("--surrogate-checkpoint", surrogate_ckpt)->required();
  tf->add_option("--classifier-checkpoint", classifier_ckpt,
                 "frozen classifier (task mode)");
  tf->add_option("--mode", mode_flag, "msssim_retarget | gan | task");
  tf->add_option("--codec", codec_name, "target codec (task mode)");

  CLI::App* fi = app.add_subcommand("filter-images",
                                    "apply a trained filter to a directory");
  add_common(fi, true);
  fi->add_option("--corpus", corpus_dir)->required();
  fi->add_option("--filter-checkpoint", filter_ckpt)->required();
  fi->add_option("--surrogate-checkpoint", surrogate_ckpt)->required();

  CLI::App* er = app.add_subcommand("eval-rd", "rate-distortion evaluation");
  add_common(er, true);
  er->add_option("--corpus", corpus_dir)->required();
  er->add_option("--codec", codec_name);
  er->add_option("--qualities", qualities, "quality sweep")->required();
  er->add_option("--metric", metric_name, "ms_ssim | mse | psnr");
  er->add_option("--filter-checkpoint", filter_ckpt);
  er->add_option("--surrogate-checkpoint", surrogate_ckpt);

  CLI::App* et = app.add_subcommand("eval-task",
                                    "classification accuracy vs rate");
  add_common(et, true);
  et->add_option("--corpus", corpus_dir)->required();
  et->add_option("--codec", codec_name);
  et->add_option("--qualities", qualities)->required();
  et->add_option("--classifier-checkpoint", classifier_ckpt)->required();
  et->add_option("--filter-checkpoint", filter_ckpt);
  et->add_option("--surrogate-checkpoint", surrogate_ckpt);

  CLI::App* rp = app.add_subcommand("report", "combine curves.json files");
  add_common(rp, true);
  rp->add_option("inputs", report_inputs, "curves.json files")->required();

  std::vector<std::string> argv_vec = args;
  try {
    std::vector<const char*> argv;
    argv.push_back("prefilter");
    for (const auto& a : argv_vec) argv.push_back(a.c_str());
    app.parse(int(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error[usage]: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (ts->parsed()) return cmd_train_surrogate(copts, corpus_dir);
    if (tf->parsed())
      return cmd_train_filter(copts, corpus_dir, surrogate_ckpt,
                              classifier_ckpt, mode_flag, codec_name);
    if (fi->parsed())
      return cmd_filter_images(copts, corpus_dir, filter_ckpt, surrogate_ckpt);
    if (er->parsed())
      return cmd_eval_rd(copts, corpus_dir, codec_name, qualities, metric_name,
                         filter_ckpt, surrogate_ckpt);
    if (et->parsed())
      return cmd_eval_task(copts, corpus_dir, codec_name, qualities,
                           classifier_ckpt, filter_ckpt, surrogate_ckpt);
    if (rp->parsed()) return cmd_report(copts, report_inputs);
    std::cerr << "error[usage]: no subcommand\n";
    return kExitUsage;
  } catch (const AdapterError& e) {
    std::cerr << "error[adapter]: " << e.what() << "\n";
    return kExitAdapter;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error[config]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "error[config]: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return kExitInternal;
  }
}

}  // namespace prefilter
