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

#include "prefilter/trainer.h"

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "prefilter/image_io.h"
#include "prefilter/parallel.h"

namespace prefilter {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct StepStats {
  double loss = 0, bpp = 0, dist = 0;
};

class TraceWriter {
 public:
  TraceWriter(const std::string& run_dir) : f_(run_dir + "/trace.csv") {
    f_ << "step,target,lr,loss,bpp,distortion\n";
  }
  void row(int64_t step, const std::string& target, double lr,
           const StepStats& s) {
    f_ << step << "," << target << "," << fmt_double(lr) << ","
       << fmt_double(s.loss) << "," << fmt_double(s.bpp) << ","
       << fmt_double(s.dist) << "\n";
    f_.flush();
  }

 private:
  std::ofstream f_;
};

struct Batch {
  std::vector<Tensor> crops;
  std::vector<size_t> indices;
  std::vector<int> labels;
};

Batch draw_batch(const Corpus& corpus, Rng& rng, int crop, int batch_size) {
  Batch b;
  int attempts = 0;
  while (int(b.crops.size()) < batch_size) {
    if (++attempts > batch_size * 200)
      throw std::runtime_error(
          "training: corpus has no images large enough for crop size " +
          std::to_string(crop));
    const size_t idx = size_t(rng.next() % corpus.size());
    auto c = sample_training_crop(corpus.image(idx), rng, crop);
    if (!c) {
      std::fprintf(stderr, "[trainer] skipping %s: shorter side < %d\n",
                   corpus.path(idx).c_str(), crop);
      continue;
    }
    b.crops.push_back(std::move(*c));
    b.indices.push_back(idx);
    b.labels.push_back(corpus.label(idx));
  }
  return b;
}

// Per-sample losses run in parallel; gradients reduce in sample order so
// results are independent of the thread count.
std::vector<Tensor> batch_gradients(
    const ParamList& params, int batch, int threads,
    const std::function<std::pair<Var, StepStats>(Tape&, int)>& build,
    StepStats* mean_stats) {
  const size_t n_samples = size_t(batch);
  std::vector<std::vector<Tensor>> per_sample(n_samples);
  std::vector<StepStats> stats(n_samples);
  parallel_for(batch, threads, [&](int i) {
    Tape tape;
    auto [loss, st] = build(tape, i);
    tape.backward(loss);
    stats[size_t(i)] = st;
    per_sample[size_t(i)].resize(params.size());
    for (size_t j = 0; j < params.size(); ++j) {
      Var node = tape.param(*params[j]);
      per_sample[size_t(i)][j] = node->grad;  // may be empty
    }
  });
  std::vector<Tensor> grads(params.size());
  const double inv_b = 1.0 / double(batch);
  for (size_t j = 0; j < params.size(); ++j) {
    Tensor acc;
    for (int i = 0; i < batch; ++i) {
      const Tensor& g = per_sample[size_t(i)][j];
      if (g.empty()) continue;
      if (acc.empty()) acc = Tensor::zeros(g.shape());
      for (int64_t k = 0; k < g.size(); ++k) acc[k] += g[k];
    }
    if (!acc.empty())
      for (int64_t k = 0; k < acc.size(); ++k) acc[k] *= inv_b;
    grads[j] = acc;
  }
  StepStats m;
  for (int i = 0; i < batch; ++i) {
    m.loss += stats[size_t(i)].loss / batch;
    m.bpp += stats[size_t(i)].bpp / batch;
    m.dist += stats[size_t(i)].dist / batch;
  }
  *mean_stats = m;
  return grads;
}

double lr_at(const TrainConfig& cfg, int64_t step) {
  return step < cfg.lr_drop_iteration ? cfg.lr : cfg.lr2;
}

std::string ckpt_name(const std::string& run_dir, int64_t step) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "ckpt_%08" PRId64 ".pfck", step);
  return run_dir + "/" + buf;
}

void write_config_snapshot(const std::string& run_dir, nlohmann::json j) {
  std::ofstream f(run_dir + "/config.json");
  f << j.dump(2) << "\n";
}

// Temporarily marks a parameter set non-trainable (GAN alternation).
class ScopedFreeze {
 public:
  explicit ScopedFreeze(const ParamList& params) : params_(params) {
    for (Parameter* p : params_) {
      prev_.push_back(p->trainable);
      p->trainable = false;
    }
  }
  ~ScopedFreeze() {
    for (size_t i = 0; i < params_.size(); ++i)
      params_[i]->trainable = prev_[i];
  }

 private:
  ParamList params_;
  std::vector<bool> prev_;
};

Var surrogate_distortion_term(Tape& t, const SurrogateModel& model, Var rec,
                              Var img, double lambda_s, DistortionKind kind,
                              double* dist_out) {
  (void)model;
  if (kind == DistortionKind::kMse) {
    Var m = mse_graph(t, rec, img);
    *dist_out = m->value.item();
    return ops::affine(t, {{lambda_s * kMseTrainScale, m}});
  }
  Var ms = ms_ssim_graph(t, rec, img);
  *dist_out = 1.0 - ms->value.item();
  return ops::affine(t, {{-lambda_s * kMsssimTrainScale, ms}},
                     lambda_s * kMsssimTrainScale);
}

}  // namespace

void TrainConfig::apply_preset(const std::string& name) {
  preset = name;
  if (name == "paper_scale") {
    batch_size = 8;
    lr = 1e-4;
    lr2 = 1e-5;
    iterations = 500000;
    lr_drop_iteration = 400000;
    crop = 256;
    checkpoint_every = 10000;
  } else if (name == "desk_scale") {
    batch_size = 8;
    lr = 1e-4;
    lr2 = 1e-5;
    iterations = 5000;
    lr_drop_iteration = 4000;
    crop = 96;
    checkpoint_every = 1000;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
}

nlohmann::json TrainConfig::to_json() const {
  return nlohmann::json{{"preset", preset},
                        {"batch_size", batch_size},
                        {"lr", lr},
                        {"lr2", lr2},
                        {"iterations", iterations},
                        {"lr_drop_iteration", lr_drop_iteration},
                        {"crop", crop},
                        {"seed", seed},
                        {"threads", threads},
                        {"checkpoint_every", checkpoint_every},
                        {"mode", to_string(mode)},
                        {"gamma_gan", weights.gamma_gan},
                        {"gamma_vgg", weights.gamma_vgg},
                        {"gamma_mse", weights.gamma_mse},
                        {"lambda_t", weights.lambda_t},
                        {"lambda_task", weights.lambda_task},
                        {"disc_width", disc_width},
                        {"codec", codec},
                        {"task_quality", task_quality}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (j.contains("preset")) c.apply_preset(j["preset"].get<std::string>());
  auto opt = [&](const char* k, auto& field) {
    if (j.contains(k)) field = j[k].get<std::decay_t<decltype(field)>>();
  };
  opt("batch_size", c.batch_size);
  opt("lr", c.lr);
  opt("lr2", c.lr2);
  opt("iterations", c.iterations);
  opt("lr_drop_iteration", c.lr_drop_iteration);
  opt("crop", c.crop);
  opt("seed", c.seed);
  opt("threads", c.threads);
  opt("checkpoint_every", c.checkpoint_every);
  if (j.contains("mode")) c.mode = filter_mode_from_string(j["mode"]);
  opt("gamma_gan", c.weights.gamma_gan);
  opt("gamma_vgg", c.weights.gamma_vgg);
  opt("gamma_mse", c.weights.gamma_mse);
  opt("lambda_t", c.weights.lambda_t);
  opt("lambda_task", c.weights.lambda_task);
  opt("disc_width", c.disc_width);
  opt("codec", c.codec);
  opt("task_quality", c.task_quality);
  return c;
}

SurrogateConfig surrogate_preset(const std::string& name) {
  SurrogateConfig cfg;
  if (name == "paper_scale") {
    cfg.latent_channels = 320;
    cfg.hidden_channels = 192;
  } else if (name == "desk_scale") {
    cfg.latent_channels = 32;
    cfg.hidden_channels = 32;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return cfg;
}

FilterConfig filter_preset(const std::string& name) {
  FilterConfig cfg;
  if (name == "paper_scale") {
    cfg.up_channels = {128, 64, 32, 16};
    cfg.trunk_channels = 64;
    cfg.trunk_blocks = 4;
  } else if (name == "desk_scale") {
    cfg.up_channels = {32, 32, 16, 16};
    cfg.trunk_channels = 24;
    cfg.trunk_blocks = 4;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
  return cfg;
}

SurrogateTrainOutput train_surrogate(const SurrogateConfig& scfg,
                                     const TrainConfig& cfg, const Corpus& corpus,
                                     const std::string& run_dir) {
  fs::create_directories(run_dir);
  auto model = std::make_shared<SurrogateModel>(scfg);
  {
    nlohmann::json j = cfg.to_json();
    j["surrogate"] = {{"latent_channels", scfg.latent_channels},
                      {"hidden_channels", scfg.hidden_channels},
                      {"lambda_s", scfg.lambda_s},
                      {"distortion", to_string(scfg.distortion)},
                      {"seed", scfg.seed}};
    write_config_snapshot(run_dir, j);
  }
  TraceWriter trace(run_dir);
  ParamList params = model->params();
  Adam adam(params);
  Rng rng_batch(derive_seed(cfg.seed, "batch"));
  TrainResult result;

  for (int64_t step = 0; step < cfg.iterations; ++step) {
    Batch batch = draw_batch(corpus, rng_batch, cfg.crop, cfg.batch_size);
    StepStats stats;
    std::vector<Tensor> grads = batch_gradients(
        params, cfg.batch_size, cfg.threads,
        [&](Tape& t, int i) -> std::pair<Var, StepStats> {
          Var img = t.leaf(batch.crops[size_t(i)], false);
          auto g = model->build_rate_graph(
              t, img, QuantMode::kNoise,
              derive_seed(cfg.seed, "noise", uint64_t(step), uint64_t(i)));
          Var rec = model->build_decode(t, g, /*clamp=*/false);
          double dist = 0;
          Var dterm = surrogate_distortion_term(t, *model, rec, img,
                                                scfg.lambda_s, scfg.distortion,
                                                &dist);
          Var loss = ops::add(t, g.total_bpp, dterm);
          return {loss, {loss->value.item(), g.total_bpp->value.item(), dist}};
        },
        &stats);
    trace.row(step, "surrogate", lr_at(cfg, step), stats);
    result.loss_trace.push_back(stats.loss);
    if (!std::isfinite(stats.loss)) {
      result.diverged = true;
      result.steps_completed = step;
      result.final_checkpoint = run_dir + "/final.pfck";
      model->save(result.final_checkpoint, step, {{"halted", "non-finite loss"}});
      return {model, result};
    }
    adam.step(lr_at(cfg, step), grads);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.iterations)
      model->save(ckpt_name(run_dir, step + 1), step + 1);
  }
  result.steps_completed = cfg.iterations;
  result.final_checkpoint = run_dir + "/final.pfck";
  model->save(result.final_checkpoint, cfg.iterations);
  return {model, result};
}

namespace {

// Shared scaffolding for the three filter training modes.
struct FilterRun {
  std::string run_dir;
  std::string surrogate_snapshot;
  uint64_t surrogate_hash = 0;
  uint64_t encoder_hash_before = 0;
};

FilterRun begin_filter_run(SurrogateModel& surrogate, const FilterConfig& fcfg,
                           const TrainConfig& cfg, const std::string& run_dir) {
  fs::create_directories(run_dir);
  FilterRun r;
  r.run_dir = run_dir;
  // Snapshot the surrogate so the run directory is self-contained and the
  // filter checkpoints can be hash-bound to the exact weights used.
  r.surrogate_snapshot = run_dir + "/surrogate.pfck";
  surrogate.save(r.surrogate_snapshot, 0);
  r.surrogate_hash = file_content_hash(r.surrogate_snapshot);
  r.encoder_hash_before = params_hash(surrogate.encoder_params());

  nlohmann::json j = cfg.to_json();
  j["filter"] = {{"up_channels", fcfg.up_channels},
                 {"trunk_channels", fcfg.trunk_channels},
                 {"trunk_blocks", fcfg.trunk_blocks},
                 {"init_mode", to_string(fcfg.init_mode)},
                 {"zero_output_conv", fcfg.zero_output_conv},
                 {"seed", fcfg.seed}};
  j["surrogate_snapshot"] = r.surrogate_snapshot;
  write_config_snapshot(run_dir, j);
  return r;
}

void save_filter_ckpt(const Filter& filter, const Discriminator* disc,
                      const FilterRun& run, const std::string& path,
                      int64_t step, const TrainConfig& cfg) {
  nlohmann::json extra{{"mode", to_string(cfg.mode)},
                       {"lambda_t", cfg.weights.lambda_t},
                       {"train_seed", cfg.seed}};
  if (!disc) {
    filter.save(path, run.surrogate_hash, step, extra);
    return;
  }
  // GAN runs keep the discriminator weights inside the same checkpoint.
  nlohmann::json meta = extra;
  meta["type"] = "filter";
  meta["surrogate_hash"] = run.surrogate_hash;
  const FilterConfig& fc = filter.config();
  meta["up_channels"] = fc.up_channels;
  meta["trunk_channels"] = fc.trunk_channels;
  meta["trunk_blocks"] = fc.trunk_blocks;
  meta["init_mode"] = to_string(fc.init_mode);
  meta["zero_output_conv"] = fc.zero_output_conv;
  meta["seed"] = fc.seed;
  meta["iterations"] = step;
  meta["disc_width"] = disc->width();
  ParamList all = const_cast<Filter&>(filter).params();
  ParamList dp = const_cast<Discriminator*>(disc)->params();
  all.insert(all.end(), dp.begin(), dp.end());
  save_checkpoint(path, meta, all);
}

}  // namespace

FilterTrainOutput train_filter(std::shared_ptr<SurrogateModel> surrogate,
                               const FilterConfig& fcfg, const TrainConfig& cfg,
                               const Corpus& corpus, const std::string& run_dir) {
  if (surrogate->config().distortion == DistortionKind::kMsSsim)
    std::fprintf(stderr,
                 "[trainer] note: surrogate was trained on MS-SSIM; the "
                 "negative-control configuration is expected to show no gain\n");
  FilterRun run = begin_filter_run(*surrogate, fcfg, cfg, run_dir);
  auto filter = std::make_unique<Filter>(surrogate, fcfg);
  TrainConfig rcfg = cfg;
  rcfg.weights.lambda_t =
      resolve_lambda_t(cfg.weights.lambda_t, surrogate->config().lambda_s);

  // The surrogate never updates during filter training.
  ScopedFreeze freeze_surrogate(surrogate->params());

  TraceWriter trace(run_dir);
  ParamList params = filter->params();
  Adam adam(params);
  Rng rng_batch(derive_seed(cfg.seed, "batch"));
  TrainResult result;

  for (int64_t step = 0; step < rcfg.iterations; ++step) {
    Batch batch = draw_batch(corpus, rng_batch, rcfg.crop, rcfg.batch_size);
    StepStats stats;
    std::vector<Tensor> grads = batch_gradients(
        params, rcfg.batch_size, rcfg.threads,
        [&](Tape& t, int i) -> std::pair<Var, StepStats> {
          Var img = t.leaf(batch.crops[size_t(i)], false);
          Var filtered = filter->apply_graph(t, img);
          auto g = surrogate->build_rate_graph(
              t, filtered, QuantMode::kNoise,
              derive_seed(rcfg.seed, "noise", uint64_t(step), uint64_t(i)));
          Var rec = surrogate->build_decode(t, g, /*clamp=*/false);
          Var ms = ms_ssim_graph(t, rec, img);
          FilterLossTerms terms;
          terms.rate_bpp = g.total_bpp;
          terms.msssim = ms;
          Var loss = filter_loss(t, FilterMode::kMsssimRetarget, terms,
                                 rcfg.weights);
          return {loss,
                  {loss->value.item(), g.total_bpp->value.item(),
                   1.0 - ms->value.item()}};
        },
        &stats);
    trace.row(step, "filter", lr_at(rcfg, step), stats);
    result.loss_trace.push_back(stats.loss);
    if (!std::isfinite(stats.loss)) {
      result.diverged = true;
      result.steps_completed = step;
      break;
    }
    adam.step(lr_at(rcfg, step), grads);
    if (rcfg.checkpoint_every > 0 && (step + 1) % rcfg.checkpoint_every == 0 &&
        step + 1 < rcfg.iterations)
      save_filter_ckpt(*filter, nullptr, run, ckpt_name(run_dir, step + 1),
                       step + 1, rcfg);
  }
  if (!result.diverged) result.steps_completed = rcfg.iterations;
  result.final_checkpoint = run_dir + "/final.pfck";
  result.surrogate_snapshot = run.surrogate_snapshot;
  save_filter_ckpt(*filter, nullptr, run, result.final_checkpoint,
                   result.steps_completed, rcfg);
  if (params_hash(surrogate->encoder_params()) != run.encoder_hash_before)
    throw std::logic_error("surrogate encoder changed during filter training");
  return {std::move(filter), nullptr, std::move(result)};
}

FilterTrainOutput train_filter_gan(std::shared_ptr<SurrogateModel> surrogate,
                                   const FilterConfig& fcfg,
                                   const TrainConfig& cfg, const Corpus& corpus,
                                   const std::string& run_dir) {
  FilterRun run = begin_filter_run(*surrogate, fcfg, cfg, run_dir);
  auto filter = std::make_unique<Filter>(surrogate, fcfg);
  auto disc = std::make_unique<Discriminator>(cfg.disc_width,
                                              derive_seed(cfg.seed, "disc"));
  FeatureExtractor fx(derive_seed(cfg.seed, "fx"));
  ScopedFreeze freeze_surrogate(surrogate->params());

  TraceWriter trace(run_dir);
  ParamList fparams = filter->params();
  ParamList dparams = disc->params();
  Adam adam_f(fparams), adam_d(dparams);
  Rng rng_batch(derive_seed(cfg.seed, "batch"));
  TrainResult result;

  for (int64_t step = 0; step < cfg.iterations; ++step) {
    Batch batch = draw_batch(corpus, rng_batch, cfg.crop, cfg.batch_size);
    const bool filter_turn = (step % 2 == 0);
    StepStats stats;
    if (filter_turn) {
      ScopedFreeze fd(dparams);
      std::vector<Tensor> grads = batch_gradients(
          fparams, cfg.batch_size, cfg.threads,
          [&](Tape& t, int i) -> std::pair<Var, StepStats> {
            Var img = t.leaf(batch.crops[size_t(i)], false);
            Var filtered = filter->apply_graph(t, img);
            auto g = surrogate->build_rate_graph(
                t, filtered, QuantMode::kNoise,
                derive_seed(cfg.seed, "noise", uint64_t(step), uint64_t(i)));
            FilterLossTerms terms;
            terms.rate_bpp = g.total_bpp;
            terms.gan_loss =
                gan_loss_filter_graph(t, disc->score_graph(t, filtered));
            terms.vgg_loss = perceptual_loss_graph(t, filtered, img, fx);
            terms.mse_loss = mse_graph(t, filtered, img);
            Var loss = filter_loss(t, FilterMode::kGan, terms, cfg.weights);
            return {loss,
                    {loss->value.item(), g.total_bpp->value.item(),
                     terms.mse_loss->value.item()}};
          },
          &stats);
      if (!std::isfinite(stats.loss)) {
        result.diverged = true;
        result.steps_completed = step;
        break;
      }
      adam_f.step(lr_at(cfg, step), grads);
      result.updates.push_back({step, "filter", batch.indices});
      trace.row(step, "filter", lr_at(cfg, step), stats);
    } else {
      ScopedFreeze ff(fparams);
      std::vector<Tensor> grads = batch_gradients(
          dparams, cfg.batch_size, cfg.threads,
          [&](Tape& t, int i) -> std::pair<Var, StepStats> {
            Var img = t.leaf(batch.crops[size_t(i)], false);
            Var filtered = filter->apply_graph(t, img);
            Var real = disc->score_graph(t, img);
            Var fake = disc->score_graph(t, filtered);
            Var loss = gan_loss_discriminator_graph(t, real, fake);
            return {loss, {loss->value.item(), 0.0, 0.0}};
          },
          &stats);
      if (!std::isfinite(stats.loss)) {
        result.diverged = true;
        result.steps_completed = step;
        break;
      }
      adam_d.step(lr_at(cfg, step), grads);
      result.updates.push_back({step, "discriminator", batch.indices});
      trace.row(step, "discriminator", lr_at(cfg, step), stats);
    }
    result.loss_trace.push_back(stats.loss);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.iterations)
      save_filter_ckpt(*filter, disc.get(), run, ckpt_name(run_dir, step + 1),
                       step + 1, cfg);
  }
  if (!result.diverged) result.steps_completed = cfg.iterations;
  result.final_checkpoint = run_dir + "/final.pfck";
  result.surrogate_snapshot = run.surrogate_snapshot;
  save_filter_ckpt(*filter, disc.get(), run, result.final_checkpoint,
                   result.steps_completed, cfg);
  if (params_hash(surrogate->encoder_params()) != run.encoder_hash_before)
    throw std::logic_error("surrogate encoder changed during filter training");
  return {std::move(filter), std::move(disc), std::move(result)};
}

FilterTrainOutput train_filter_task(std::shared_ptr<SurrogateModel> surrogate,
                                    const FilterConfig& fcfg,
                                    const TrainConfig& cfg, const Corpus& corpus,
                                    Classifier& classifier, const Codec& codec,
                                    const std::string& run_dir) {
  if (fcfg.init_mode != InitMode::kLowVariance)
    throw std::invalid_argument(
        "task-aware training requires init_mode=low_variance");
  if (corpus.class_names().empty())
    throw std::invalid_argument("task-aware training requires a labeled corpus");
  FilterRun run = begin_filter_run(*surrogate, fcfg, cfg, run_dir);
  auto filter = std::make_unique<Filter>(surrogate, fcfg);
  ScopedFreeze freeze_surrogate(surrogate->params());
  classifier.freeze();

  TraceWriter trace(run_dir);
  ParamList params = filter->params();
  Adam adam(params);
  Rng rng_batch(derive_seed(cfg.seed, "batch"));
  TrainResult result;

  for (int64_t step = 0; step < cfg.iterations; ++step) {
    Batch batch = draw_batch(corpus, rng_batch, cfg.crop, cfg.batch_size);
    StepStats stats;
    std::vector<Tensor> grads = batch_gradients(
        params, cfg.batch_size, cfg.threads,
        [&](Tape& t, int i) -> std::pair<Var, StepStats> {
          Var img = t.leaf(batch.crops[size_t(i)], false);
          Var filtered = filter->apply_graph(t, img);
          auto g = surrogate->build_rate_graph(
              t, filtered, QuantMode::kNoise,
              derive_seed(cfg.seed, "noise", uint64_t(step), uint64_t(i)));
          // Target codec in the forward pass, straight-through backward.
          Var decoded;
          try {
            decoded = straight_through_decode(t, filtered, codec,
                                              cfg.task_quality);
          } catch (const AdapterError&) {
            decoded = straight_through_decode(t, filtered, codec,
                                              cfg.task_quality);  // one retry
          }
          Var logits = classifier.logits_graph(t, decoded);
          FilterLossTerms terms;
          terms.rate_bpp = g.total_bpp;
          terms.task_ce =
              ops::cross_entropy_logits(t, logits, batch.labels[size_t(i)]);
          terms.mse_loss = mse_graph(t, filtered, img);
          Var loss = filter_loss(t, FilterMode::kTask, terms, cfg.weights);
          return {loss,
                  {loss->value.item(), g.total_bpp->value.item(),
                   terms.task_ce->value.item()}};
        },
        &stats);
    trace.row(step, "filter", lr_at(cfg, step), stats);
    result.loss_trace.push_back(stats.loss);
    if (!std::isfinite(stats.loss)) {
      result.diverged = true;
      result.steps_completed = step;
      break;
    }
    adam.step(lr_at(cfg, step), grads);
    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        step + 1 < cfg.iterations)
      save_filter_ckpt(*filter, nullptr, run, ckpt_name(run_dir, step + 1),
                       step + 1, cfg);
  }
  if (!result.diverged) result.steps_completed = cfg.iterations;
  result.final_checkpoint = run_dir + "/final.pfck";
  result.surrogate_snapshot = run.surrogate_snapshot;
  save_filter_ckpt(*filter, nullptr, run, result.final_checkpoint,
                   result.steps_completed, cfg);
  return {std::move(filter), nullptr, std::move(result)};
}

ClassifierTrainOutput train_classifier(const Corpus& corpus, int crop,
                                       int64_t iterations, uint64_t seed,
                                       const std::string& run_dir, int threads) {
  if (corpus.class_names().empty())
    throw std::invalid_argument("train_classifier requires a labeled corpus");
  fs::create_directories(run_dir);
  auto clf = std::make_unique<Classifier>(int(corpus.class_names().size()),
                                          derive_seed(seed, "clf"));
  ParamList params = clf->params();
  Adam adam(params);
  Rng rng_batch(derive_seed(seed, "clf_batch"));
  const int batch = 8;

  for (int64_t step = 0; step < iterations; ++step) {
    Batch b = draw_batch(corpus, rng_batch, crop, batch);
    // Mild JPEG augmentation so compressed eval inputs stay in
    // distribution.
    std::vector<int> aug_q(size_t(batch), 0);
    for (int i = 0; i < batch; ++i)
      if (rng_batch.uniform() < 0.5) aug_q[size_t(i)] = rng_batch.uniform_int(40, 95);
    StepStats stats;
    std::vector<Tensor> grads = batch_gradients(
        params, batch, threads,
        [&](Tape& t, int i) -> std::pair<Var, StepStats> {
          Tensor x = b.crops[size_t(i)];
          if (aug_q[size_t(i)] > 0)
            x = u8_to_tensor(
                jpeg_decode(jpeg_encode(tensor_to_u8(x), aug_q[size_t(i)])));
          Var img = t.leaf(x, false);
          Var logits = clf->logits_graph(t, img);
          Var loss =
              ops::cross_entropy_logits(t, logits, b.labels[size_t(i)]);
          return {loss, {loss->value.item(), 0, 0}};
        },
        &stats);
    if (!std::isfinite(stats.loss))
      throw std::runtime_error("classifier training diverged");
    adam.step(step < iterations * 4 / 5 ? 1e-3 : 2e-4, grads);
  }
  // Training-set accuracy on center crops, for the record.
  int correct = 0, total = 0;
  Rng rng_eval(derive_seed(seed, "clf_eval"));
  for (size_t i = 0; i < corpus.size(); ++i) {
    auto c = sample_training_crop(corpus.image(i), rng_eval, crop);
    if (!c) continue;
    correct += (clf->predict(*c) == corpus.label(i)) ? 1 : 0;
    ++total;
  }
  ClassifierTrainOutput out;
  out.final_checkpoint = run_dir + "/classifier.pfck";
  clf->save(out.final_checkpoint, iterations);
  out.train_accuracy = total ? double(correct) / total : 0.0;
  out.classifier = std::move(clf);
  return out;
}

}  // namespace prefilter
