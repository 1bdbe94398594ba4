// SPDX-License-Identifier: Apache-2.0
//
// Joint multi-dataset training, single-task fine-tuning, and evaluation.
//
// One iteration visits every configured task in order: it samples that
// task's batch (uniform with replacement), crops, featurizes, optionally
// applies mixup, and accumulates gradients of the task loss. By default the
// optimizer steps once per iteration on the summed gradients; alternating
// mode steps after each task instead. An epoch is a fixed number of
// iterations, and checkpoints are written per epoch: the latest state, the
// best state per task (scored on that task's eval manifest), and the final
// state when training completes.

#pragma once

#include <fstream>
#include <map>
#include <memory>

#include "dcasenet/checkpoint.hpp"
#include "dcasenet/features.hpp"
#include "dcasenet/loss.hpp"
#include "dcasenet/metrics.hpp"

namespace dcasenet {

Index default_batch_size(Task t);
double default_crop_s(Task t);

struct TaskSpec {
  Task task = Task::ASC;
  std::string train_manifest;
  std::string eval_manifest;  // empty: skip per-epoch scoring for this task
  Index batch_size = 0;       // 0: task default (32 scene / 24 tag / 32 event)
  double crop_s = 0.0;        // 0: task default (5 s / 5 s / 30 s)

  Index effective_batch() const { return batch_size > 0 ? batch_size : default_batch_size(task); }
  double effective_crop() const { return crop_s > 0.0 ? crop_s : default_crop_s(task); }
};

struct Schedule {
  Index iterations_per_epoch = 500;
  Index epochs = 160;
  nn::AdamConfig adam{};
  bool mixup = true;
  double mixup_alpha = 0.4;
  bool alternating = false;
};

struct TrainerOptions {
  std::uint64_t seed = 1234;
  int threads = 1;
  bool deterministic = false;  // forces single-threaded featurization
  std::string out_dir;         // empty: do not write checkpoints
  std::string log_path;        // empty: no JSONL iteration log
  bool quiet = false;
  features::FeatureConfig feature_config{};
};

/// Scores for one task; which fields are meaningful depends on the task.
struct EvalScores {
  double asc_accuracy = 0.0;
  double tag_lwlrap = 0.0;
  SedSegmentScores sed{};
  Index n_segments = 0;

  /// Higher-is-better summary used for best-checkpoint selection.
  double headline(Task t) const;
};

struct TrainCounters {
  long long iterations = 0;
  std::map<Task, long long> samples_consumed;
  long long optimizer_steps = 0;
};

class Trainer {
 public:
  Trainer(DcaseNet<float>& model, std::vector<TaskSpec> tasks, Schedule schedule,
          TrainerOptions options);

  void run();

  const TrainCounters& counters() const { return counters_; }
  const std::map<Task, double>& best_scores() const { return best_; }
  const std::map<Task, EvalScores>& last_eval() const { return last_eval_; }

 private:
  struct ActiveTask {
    TaskSpec spec;
    Index batch = 0;
    Index crop_samples = 0;
    std::vector<ManifestEntry> train_entries;
    std::vector<ManifestEntry> eval_entries;
  };

  const audio::Waveform& cached_waveform(const std::string& path);
  void build_batch(const ActiveTask& at, Rng& rng, nn::Tensor<float>& x,
                   LabelBatch<float>& labels);
  void log_iteration(Index epoch, Index iteration, const std::map<Task, double>& losses);
  void end_of_epoch(Index epoch);

  DcaseNet<float>& model_;
  std::vector<ActiveTask> tasks_;
  Schedule sched_;
  TrainerOptions opt_;
  std::unique_ptr<nn::AdamOptimizer<float>> optimizer_;
  std::map<std::string, audio::Waveform> wave_cache_;
  TrainCounters counters_;
  std::map<Task, double> best_;
  std::map<Task, EvalScores> last_eval_;
  Rng rng_;
  std::unique_ptr<std::ofstream> log_;
};

/// Raw per-entry model outputs captured during evaluation, usable to dump
/// a prediction file that scores identically to the in-process path.
struct TaskPredictions {
  std::vector<MatX<double>> per_entry;  // scene: logits; tag: probs; event: roll probs
  double frame_s = 0.0;                 // event roll frame duration (pooled rate)
};

/// Crop-free scoring of `entries` (all must belong to `task`). Event rolls
/// are binarized at 0.5, upsampled back to the feature frame rate, and
/// compared against event lists rasterized on that grid in 1 s segments.
EvalScores evaluate_task(DcaseNet<float>& model, Task task,
                         const std::vector<ManifestEntry>& entries,
                         const features::FeatureConfig& fc, int threads = 1,
                         TaskPredictions* predictions = nullptr);

/// Rebuilds a model from a checkpoint (architecture from the header,
/// weights bitwise from the payload).
std::unique_ptr<DcaseNet<float>> model_from_checkpoint(const std::string& path,
                                                       CheckpointMeta* meta_out = nullptr);

/// Loads a checkpoint and continues training on a single task with a fresh
/// optimizer. Parameters untouched by the task's loss stay bitwise equal to
/// the checkpoint.
void fine_tune(const std::string& checkpoint_path, const TaskSpec& task, Schedule schedule,
               TrainerOptions options);

}  // namespace dcasenet
