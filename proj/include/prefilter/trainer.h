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

#ifndef PREFILTER_TRAINER_H_
#define PREFILTER_TRAINER_H_

#include <memory>

#include "prefilter/adversary.h"
#include "prefilter/classifier.h"
#include "prefilter/codec.h"
#include "prefilter/data.h"
#include "prefilter/filter.h"
#include "prefilter/surrogate.h"

namespace prefilter {

struct TrainConfig {
  std::string preset = "desk_scale";
  int batch_size = 8;
  double lr = 1e-4;
  double lr2 = 1e-5;
  int64_t iterations = 5000;
  int64_t lr_drop_iteration = 4000;  // lr2 applies from this step on
  int crop = 96;
  uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  int64_t checkpoint_every = 1000;

  FilterMode mode = FilterMode::kMsssimRetarget;
  LossWeights weights;
  int disc_width = 64;

  std::string codec = "jpeg";  // task mode target codec
  int task_quality = 30;

  // Presets follow the experimental schedules: paper_scale is batch 8 with
  // lr 1e-4 for 400k iterations then 1e-5 for 100k more on 256px crops.
  void apply_preset(const std::string& name);

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

SurrogateConfig surrogate_preset(const std::string& name);
FilterConfig filter_preset(const std::string& name);

struct UpdateRecord {
  int64_t step = 0;
  std::string target;  // "filter" or "discriminator"
  std::vector<size_t> batch;
};

struct TrainResult {
  std::vector<double> loss_trace;  // one entry per step
  std::string final_checkpoint;
  std::string surrogate_snapshot;  // filter runs: the bound surrogate copy
  int64_t steps_completed = 0;
  bool diverged = false;
  std::vector<UpdateRecord> updates;  // GAN alternation log
};

// Run directory layout, shared by all trainers:
//   config.json   resolved config + seed
//   trace.csv     one row per step
//   ckpt_*.pfck   periodic checkpoints
//   final.pfck    last state (also written when halting on divergence)

struct SurrogateTrainOutput {
  std::shared_ptr<SurrogateModel> model;
  TrainResult result;
};
SurrogateTrainOutput train_surrogate(const SurrogateConfig& scfg,
                                     const TrainConfig& cfg, const Corpus& corpus,
                                     const std::string& run_dir);

struct FilterTrainOutput {
  std::unique_ptr<Filter> filter;
  std::unique_ptr<Discriminator> discriminator;  // GAN mode only
  TrainResult result;
};

// MS-SSIM retargeting (Fig. 1 with the surrogate-reconstruction switch).
FilterTrainOutput train_filter(std::shared_ptr<SurrogateModel> surrogate,
                               const FilterConfig& fcfg, const TrainConfig& cfg,
                               const Corpus& corpus, const std::string& run_dir);

// Adversarial training; filter and discriminator alternate strictly on
// disjoint batches (filter on even steps, discriminator on odd steps).
FilterTrainOutput train_filter_gan(std::shared_ptr<SurrogateModel> surrogate,
                                   const FilterConfig& fcfg,
                                   const TrainConfig& cfg, const Corpus& corpus,
                                   const std::string& run_dir);

// Task-aware training: the forward pass routes the filtered image through
// the target codec (straight-through backward) before the frozen
// classifier. Requires low-variance init and a labeled corpus.
FilterTrainOutput train_filter_task(std::shared_ptr<SurrogateModel> surrogate,
                                    const FilterConfig& fcfg,
                                    const TrainConfig& cfg, const Corpus& corpus,
                                    Classifier& classifier, const Codec& codec,
                                    const std::string& run_dir);

// Fits the fixture/task classifier on a labeled corpus (with mild JPEG
// augmentation so it tolerates compression at evaluation time).
struct ClassifierTrainOutput {
  std::unique_ptr<Classifier> classifier;
  std::string final_checkpoint;
  double train_accuracy = 0;
};
ClassifierTrainOutput train_classifier(const Corpus& corpus, int crop,
                                       int64_t iterations, uint64_t seed,
                                       const std::string& run_dir,
                                       int threads = 0);

}  // namespace prefilter

#endif  // PREFILTER_TRAINER_H_
