// SPDX-License-Identifier: Apache-2.0

#include "dcasenet/training.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <iostream>
#include <thread>

#include "dcasenet/resample.hpp"

namespace dcasenet {

namespace fs = std::filesystem;

Index default_batch_size(Task t) {
  switch (t) {
    case Task::ASC: return 32;
    case Task::TAG: return 24;
    case Task::SED: return 32;
  }
  return 32;
}

double default_crop_s(Task t) { return t == Task::SED ? 30.0 : 5.0; }

double EvalScores::headline(Task t) const {
  switch (t) {
    case Task::ASC: return asc_accuracy;
    case Task::TAG: return tag_lwlrap;
    case Task::SED: return 1.0 - sed.error_rate;
  }
  return 0.0;
}

namespace {

int effective_threads(const TrainerOptions& opt) {
  return opt.deterministic ? 1 : std::max(1, opt.threads);
}

/// Featurizes crops in parallel; results are identical for any thread
/// count because every crop is processed independently into its own slot.
std::vector<MatX<float>> featurize_many(const std::vector<audio::Waveform>& crops,
                                        const features::FeatureConfig& fc, int threads) {
  std::vector<MatX<float>> out(crops.size());
  auto worker = [&](std::size_t first, std::size_t stride) {
    features::MelExtractor<double> extract(fc);
    for (std::size_t i = first; i < crops.size(); i += stride) {
      out[i] = extract(crops[i]).values.cast<float>();
    }
  };
  const auto n = static_cast<std::size_t>(
      std::min<std::size_t>(crops.size(), static_cast<std::size_t>(std::max(1, threads))));
  if (n <= 1) {
    worker(0, 1);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (std::size_t k = 0; k < n; ++k) pool.emplace_back(worker, k, n);
    for (auto& th : pool) th.join();
  }
  return out;
}

std::vector<ManifestEntry> load_task_manifest(const std::string& path, Task task) {
  std::vector<ManifestEntry> entries = load_manifest(path);
  require(!entries.empty(), Errc::invalid_manifest, "empty manifest: " + path);
  for (const auto& e : entries) {
    require(e.task == task, Errc::invalid_manifest,
            path + ": entry for " + std::string(task_name(e.task)) + " in a " +
                std::string(task_name(task)) + " manifest");
  }
  return entries;
}

MatX<float> multi_hot(const std::vector<int>& tags, Index n_classes) {
  MatX<float> row = MatX<float>::Zero(1, n_classes);
  for (int t : tags) {
    require(t >= 0 && t < n_classes, Errc::invalid_manifest,
            "tag index out of range: " + std::to_string(t));
    row(0, t) = 1.0f;
  }
  return row;
}

std::vector<Event> shift_events(const std::vector<Event>& events, double by_s) {
  std::vector<Event> out;
  out.reserve(events.size());
  for (const Event& e : events) out.push_back({e.onset - by_s, e.offset - by_s, e.cls});
  return out;
}

}  // namespace

Trainer::Trainer(DcaseNet<float>& model, std::vector<TaskSpec> tasks, Schedule schedule,
                 TrainerOptions options)
    : model_(model), sched_(std::move(schedule)), opt_(std::move(options)),
      rng_(sub_seed(opt_.seed, 0x7261)) {
  require(!tasks.empty(), Errc::invalid_argument, "trainer needs at least one task");
  require(sched_.iterations_per_epoch > 0 && sched_.epochs > 0, Errc::invalid_config,
          "schedule must have positive iterations and epochs");
  opt_.feature_config.validate();
  require(opt_.feature_config.n_mels == model_.config().n_mels, Errc::invalid_config,
          "feature bands and model input bands differ");
  for (auto& spec : tasks) {
    ActiveTask at;
    at.spec = spec;
    at.batch = spec.effective_batch();
    require(at.batch > 0, Errc::invalid_config, "batch size must be positive");
    at.crop_samples = static_cast<Index>(
        std::llround(spec.effective_crop() * opt_.feature_config.sample_rate));
    at.train_entries = load_task_manifest(spec.train_manifest, spec.task);
    if (!spec.eval_manifest.empty())
      at.eval_entries = load_task_manifest(spec.eval_manifest, spec.task);
    const Index frames = features::frame_count(at.crop_samples, opt_.feature_config.win_samples(),
                                               opt_.feature_config.hop_samples());
    require(frames >= 1 && model_.config().pooled_frames(frames) >= 1, Errc::segment_too_short,
            "crop of " + std::to_string(spec.effective_crop()) + " s yields no pooled frames");
    tasks_.push_back(std::move(at));
  }
  optimizer_ = std::make_unique<nn::AdamOptimizer<float>>(model_.parameters(), sched_.adam);
  if (!opt_.out_dir.empty()) fs::create_directories(opt_.out_dir);
  if (!opt_.log_path.empty()) {
    log_ = std::make_unique<std::ofstream>(opt_.log_path, std::ios::trunc);
    require(bool(*log_), Errc::io_error, "cannot open log: " + opt_.log_path);
  }
}

const audio::Waveform& Trainer::cached_waveform(const std::string& path) {
  auto it = wave_cache_.find(path);
  if (it == wave_cache_.end()) {
    audio::Waveform w =
        audio::resample(audio::load_wav(path), opt_.feature_config.sample_rate);
    it = wave_cache_.emplace(path, std::move(w)).first;
  }
  return it->second;
}

void Trainer::build_batch(const ActiveTask& at, Rng& rng, nn::Tensor<float>& x,
                          LabelBatch<float>& labels) {
  const auto& fc = opt_.feature_config;
  const Index n = at.batch;
  std::uniform_int_distribution<std::size_t> pick(0, at.train_entries.size() - 1);

  // All random draws happen serially here so thread count cannot change
  // the stream; featurization below is pure.
  std::vector<const ManifestEntry*> chosen(static_cast<std::size_t>(n));
  std::vector<audio::Waveform> crops(static_cast<std::size_t>(n));
  std::vector<double> offsets_s(static_cast<std::size_t>(n), 0.0);
  const double crop_s = static_cast<double>(at.crop_samples) / fc.sample_rate;
  for (Index b = 0; b < n; ++b) {
    const ManifestEntry& e = at.train_entries[pick(rng)];
    chosen[static_cast<std::size_t>(b)] = &e;
    Index off = 0;
    crops[static_cast<std::size_t>(b)] =
        features::random_crop_waveform(cached_waveform(e.path), crop_s, rng, &off);
    offsets_s[static_cast<std::size_t>(b)] = static_cast<double>(off) / fc.sample_rate;
  }
  std::vector<MatX<float>> feats = featurize_many(crops, fc, effective_threads(opt_));

  const Index t = feats.front().rows();
  x = nn::Tensor<float>({n, 1, t, fc.n_mels});
  for (Index b = 0; b < n; ++b) x.rows_block(b, 1, t * fc.n_mels) =
      ConstMapMat<float>(feats[static_cast<std::size_t>(b)].data(), 1, t * fc.n_mels);

  labels = {};
  const auto& mc = model_.config();
  switch (at.spec.task) {
    case Task::ASC: {
      std::vector<int> scenes;
      scenes.reserve(static_cast<std::size_t>(n));
      for (auto* e : chosen) scenes.push_back(e->scene_id.value());
      labels.asc = one_hot<float>(scenes, mc.asc_classes);
      break;
    }
    case Task::TAG: {
      labels.tag.resize(n, mc.tag_classes);
      for (Index b = 0; b < n; ++b)
        labels.tag.row(b) = multi_hot(chosen[static_cast<std::size_t>(b)]->tags.value(),
                                      mc.tag_classes);
      break;
    }
    case Task::SED: {
      const Index tp = mc.pooled_frames(t);
      const double frame_s = (fc.hop_ms / 1000.0) * static_cast<double>(mc.time_pool_total());
      labels.sed.resize(n * tp, mc.sed_classes);
      for (Index b = 0; b < n; ++b) {
        const auto roll = events_to_roll(
            shift_events(chosen[static_cast<std::size_t>(b)]->events.value(),
                         offsets_s[static_cast<std::size_t>(b)]),
            tp, frame_s, mc.sed_classes);
        labels.sed.middleRows(b * tp, tp) = roll.cast<float>();
      }
      break;
    }
  }
}

void Trainer::log_iteration(Index epoch, Index iteration, const std::map<Task, double>& losses) {
  if (!log_) return;
  nlohmann::json j;
  j["epoch"] = epoch;
  j["iteration"] = iteration;
  double total = 0.0;
  nlohmann::json by_task;
  for (const auto& [task, loss] : losses) {
    by_task[task_name(task)] = loss;
    total += loss;
  }
  j["losses"] = by_task;
  j["total"] = total;
  *log_ << j.dump() << '\n';
}

void Trainer::end_of_epoch(Index epoch) {
  std::vector<Task> all_tasks;
  for (const auto& at : tasks_) all_tasks.push_back(at.spec.task);
  for (auto& at : tasks_) {
    if (at.eval_entries.empty()) continue;
    EvalScores scores = evaluate_task(model_, at.spec.task, at.eval_entries,
                                      opt_.feature_config, effective_threads(opt_));
    last_eval_[at.spec.task] = scores;
    const double headline = scores.headline(at.spec.task);
    auto it = best_.find(at.spec.task);
    if (it == best_.end() || headline > it->second) {
      best_[at.spec.task] = headline;
      if (!opt_.out_dir.empty()) {
        std::string tag = task_name(at.spec.task);
        for (char& ch : tag) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        save_checkpoint((fs::path(opt_.out_dir) / ("ckpt_best_" + tag + ".dcn")).string(),
                        model_.config(), static_cast<int>(epoch), all_tasks, model_.parameters(),
                        optimizer_.get());
      }
    }
    if (!opt_.quiet) {
      std::cerr << "epoch " << epoch << " " << task_name(at.spec.task) << " headline "
                << headline << "\n";
    }
  }
  if (!opt_.out_dir.empty()) {
    save_checkpoint((fs::path(opt_.out_dir) / "ckpt_last.dcn").string(), model_.config(),
                    static_cast<int>(epoch), all_tasks, model_.parameters(), optimizer_.get());
  }
}

void Trainer::run() {
  std::vector<Task> all_tasks;
  for (const auto& at : tasks_) all_tasks.push_back(at.spec.task);
  for (Index epoch = 1; epoch <= sched_.epochs; ++epoch) {
    std::map<Task, double> epoch_loss;
    for (Index it = 0; it < sched_.iterations_per_epoch; ++it) {
      std::map<Task, double> iter_losses;
      for (auto& at : tasks_) {
        nn::Tensor<float> x;
        LabelBatch<float> labels;
        build_batch(at, rng_, x, labels);
        if (sched_.mixup) mixup_batch(x, labels, sched_.mixup_alpha, rng_);
        ModelOutputs<float> out = model_.forward(x, {at.spec.task}, Mode::Train, &rng_);
        LossResult<float> loss = multi_task_loss(out, labels);
        model_.backward(loss.grads);
        iter_losses[at.spec.task] = loss.total;
        counters_.samples_consumed[at.spec.task] += at.batch;
        if (sched_.alternating) {
          optimizer_->step();
          ++counters_.optimizer_steps;
        }
      }
      if (!sched_.alternating) {
        optimizer_->step();
        ++counters_.optimizer_steps;
      }
      ++counters_.iterations;
      log_iteration(epoch, counters_.iterations, iter_losses);
      for (const auto& [task, l] : iter_losses) epoch_loss[task] += l;
    }
    if (!opt_.quiet) {
      // progress goes to stderr; stdout stays machine readable
      std::cerr << "epoch " << epoch << "/" << sched_.epochs;
      for (const auto& [task, l] : epoch_loss) {
        std::cerr << " " << task_name(task) << "_loss "
                  << l / static_cast<double>(sched_.iterations_per_epoch);
      }
      std::cerr << "\n";
    }
    end_of_epoch(epoch);
  }
  if (!opt_.out_dir.empty()) {
    save_checkpoint((fs::path(opt_.out_dir) / "ckpt_final.dcn").string(), model_.config(),
                    static_cast<int>(sched_.epochs), all_tasks, model_.parameters(),
                    optimizer_.get());
  }
  if (log_) log_->flush();
}

EvalScores evaluate_task(DcaseNet<float>& model, Task task,
                         const std::vector<ManifestEntry>& entries,
                         const features::FeatureConfig& fc, int threads,
                         TaskPredictions* predictions) {
  require(!entries.empty(), Errc::invalid_argument, "nothing to evaluate");
  fc.validate();
  require(fc.n_mels == model.config().n_mels, Errc::invalid_config,
          "feature bands and model input bands differ");
  std::vector<audio::Waveform> waves;
  waves.reserve(entries.size());
  for (const auto& e : entries) {
    require(e.task == task, Errc::invalid_manifest, "entry task mismatch in evaluation set");
    waves.push_back(audio::resample(audio::load_wav(e.path), fc.sample_rate));
  }
  std::vector<MatX<float>> feats = featurize_many(waves, fc, threads);

  const auto& mc = model.config();
  EvalScores scores;
  MatX<double> score_rows;
  BinRoll truth_rows;
  std::vector<int> labels;
  if (task == Task::ASC) {
    score_rows.resize(static_cast<Index>(entries.size()), mc.asc_classes);
  } else if (task == Task::TAG) {
    score_rows.resize(static_cast<Index>(entries.size()), mc.tag_classes);
    truth_rows.resize(static_cast<Index>(entries.size()), mc.tag_classes);
  }

  const Index up = mc.time_pool_total();
  const double hop_s = fc.hop_ms / 1000.0;
  const auto frames_per_segment = static_cast<Index>(std::llround(1.0 / hop_s));
  if (predictions != nullptr) {
    predictions->per_entry.clear();
    predictions->frame_s = hop_s * static_cast<double>(up);
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const MatX<float>& f = feats[i];
    nn::Tensor<float> x({1, 1, f.rows(), f.cols()});
    x.flat() = Eigen::Map<const VecX<float>>(f.data(), f.size());
    ModelOutputs<float> out = model.forward(x, {task}, Mode::Eval);
    const auto row = static_cast<Index>(i);
    switch (task) {
      case Task::ASC:
        score_rows.row(row) = out.asc_logits.row(0).cast<double>();
        labels.push_back(entries[i].scene_id.value());
        if (predictions != nullptr) predictions->per_entry.push_back(score_rows.row(row));
        break;
      case Task::TAG: {
        score_rows.row(row) = out.tag_probs.row(0).cast<double>();
        for (Index c = 0; c < mc.tag_classes; ++c) truth_rows(row, c) = 0;
        for (int t : entries[i].tags.value()) {
          require(t >= 0 && t < mc.tag_classes, Errc::invalid_manifest,
                  "tag index out of range: " + std::to_string(t));
          truth_rows(row, t) = 1;
        }
        if (predictions != nullptr) predictions->per_entry.push_back(score_rows.row(row));
        break;
      }
      case Task::SED: {
        MatX<double> probs = out.sed_probs.cast<double>();
        if (predictions != nullptr) predictions->per_entry.push_back(probs);
        BinRoll pred = upsample_roll(binarize_roll(probs), up);
        BinRoll ref =
            events_to_roll(entries[i].events.value(), pred.rows(), hop_s, mc.sed_classes);
        accumulate_sed_scores(scores.sed,
                              sed_segment_metrics(ref, pred, frames_per_segment));
        scores.n_segments +=
            (pred.rows() + frames_per_segment - 1) / frames_per_segment;
        break;
      }
    }
  }
  if (task == Task::ASC) scores.asc_accuracy = accuracy(score_rows, labels);
  if (task == Task::TAG) scores.tag_lwlrap = lwlrap(score_rows, truth_rows);
  if (task == Task::SED) finalize_sed_scores(scores.sed);
  return scores;
}

std::unique_ptr<DcaseNet<float>> model_from_checkpoint(const std::string& path,
                                                       CheckpointMeta* meta_out) {
  CheckpointMeta meta = peek_checkpoint(path);
  auto model = std::make_unique<DcaseNet<float>>(meta.config, 0);
  load_checkpoint(path, model->parameters());
  if (meta_out != nullptr) *meta_out = meta;
  return model;
}

void fine_tune(const std::string& checkpoint_path, const TaskSpec& task, Schedule schedule,
               TrainerOptions options) {
  auto model = model_from_checkpoint(checkpoint_path);
  Trainer trainer(*model, {task}, std::move(schedule), std::move(options));
  trainer.run();
}

}  // namespace dcasenet
