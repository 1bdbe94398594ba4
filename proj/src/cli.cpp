// SPDX-License-Identifier: Apache-2.0
//
// Subcommands: synth (toy corpus), features (log-mel extraction), train
// (joint multi-task), finetune (single task from a checkpoint), evaluate
// (score a checkpoint or a prediction file), gradcheck (finite-difference
// verification). Machine-readable results go to stdout as JSON.

#include "dcasenet/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cctype>
#include <iostream>

#include "dcasenet/resample.hpp"
#include "dcasenet/toy_dataset.hpp"
#include "dcasenet/training.hpp"
#include "dcasenet/verify.hpp"

namespace dcasenet {
namespace {

using nlohmann::json;

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  require(bool(in), Errc::file_not_found, "cannot open: " + path);
  json j = json::parse(in, nullptr, /*allow_exceptions=*/false);
  require(!j.is_discarded(), Errc::invalid_config, "invalid JSON in " + path);
  return j;
}

/// Partial override: absent keys keep their defaults.
void apply_feature_config(const json& j, features::FeatureConfig& fc) {
  fc.n_fft = j.value("n_fft", fc.n_fft);
  fc.win_ms = j.value("win_ms", fc.win_ms);
  fc.hop_ms = j.value("hop_ms", fc.hop_ms);
  fc.n_mels = j.value("n_mels", fc.n_mels);
  fc.sample_rate = j.value("sample_rate", fc.sample_rate);
  fc.log_floor = j.value("log_floor", fc.log_floor);
  fc.validate();
}

void apply_model_config(const json& j, ArchitectureConfig& cfg) {
  cfg.variant = j.value("variant", cfg.variant);
  cfg.n_mels = j.value("n_mels", cfg.n_mels);
  cfg.channels = j.value("channels", cfg.channels);
  cfg.time_pool = j.value("time_pool", cfg.time_pool);
  cfg.freq_pool = j.value("freq_pool", cfg.freq_pool);
  cfg.gru_hidden = j.value("gru_hidden", cfg.gru_hidden);
  cfg.head_hidden = j.value("head_hidden", cfg.head_hidden);
  cfg.asc_classes = j.value("asc_classes", cfg.asc_classes);
  cfg.tag_classes = j.value("tag_classes", cfg.tag_classes);
  cfg.sed_classes = j.value("sed_classes", cfg.sed_classes);
  cfg.dropout = j.value("dropout", cfg.dropout);
  cfg.v1_res_channels = j.value("v1_res_channels", cfg.v1_res_channels);
  cfg.v3_branch_channels = j.value("v3_branch_channels", cfg.v3_branch_channels);
  cfg.input_shift = j.value("input_shift", cfg.input_shift);
  cfg.input_scale = j.value("input_scale", cfg.input_scale);
  cfg.validate();
}

json scores_to_json(Task task, const EvalScores& s) {
  json out;
  out["task"] = task_name(task);
  switch (task) {
    case Task::ASC: out["accuracy"] = s.asc_accuracy; break;
    case Task::TAG: out["lwlrap"] = s.tag_lwlrap; break;
    case Task::SED:
      out["f1"] = s.sed.f1;
      out["error_rate"] = s.sed.error_rate;
      out["tp"] = s.sed.tp;
      out["fp"] = s.sed.fp;
      out["fn"] = s.sed.fn;
      break;
  }
  return out;
}

// --------------------------------------------------------------------------
// synth

int cmd_synth(const std::string& out_dir, std::uint64_t seed) {
  ToyDatasetSpec spec;
  spec.seed = seed;
  ToyDataset ds = synthesize_toy_dataset(spec, out_dir);
  json j{{"dir", ds.dir},
         {"asc_train", ds.asc_train_manifest},
         {"asc_eval", ds.asc_eval_manifest},
         {"tag_train", ds.tag_train_manifest},
         {"tag_eval", ds.tag_eval_manifest},
         {"sed_train", ds.sed_train_manifest},
         {"sed_eval", ds.sed_eval_manifest},
         {"entries", ds.entries.size()}};
  std::cout << j.dump() << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// features

int cmd_features(const std::string& input, const std::string& output,
                 const features::FeatureConfig& fc) {
  audio::Waveform w = audio::resample(audio::load_wav(input), fc.sample_rate);
  features::MelSpectrogram<double> mel = features::log_mel_spectrogram<double>(w, fc);
  if (!output.empty()) features::write_feature_cache(output, mel);
  json j{{"input", input},
         {"frames", mel.frames()},
         {"bands", mel.bands()},
         {"frame_hop_s", mel.frame_hop_s},
         {"min", mel.values.minCoeff()},
         {"max", mel.values.maxCoeff()}};
  if (!output.empty()) j["output"] = output;
  std::cout << j.dump() << "\n";
  return 0;
}

// --------------------------------------------------------------------------
// predictions file round trip

void dump_predictions(const std::string& path, Task task,
                      const std::vector<ManifestEntry>& entries, const TaskPredictions& preds) {
  std::ofstream out(path, std::ios::trunc);
  require(bool(out), Errc::io_error, "cannot open for write: " + path);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    json j;
    j["path"] = entries[i].path;
    j["task"] = task_name(task);
    const MatX<double>& m = preds.per_entry[i];
    if (task == Task::SED) {
      json rows = json::array();
      for (Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
      }
      j["probs"] = std::move(rows);
      j["frame_s"] = preds.frame_s;
    } else {
      json row = json::array();
      for (Index c = 0; c < m.cols(); ++c) row.push_back(m(0, c));
      j["scores"] = std::move(row);
    }
    out << j.dump() << "\n";
  }
  require(bool(out), Errc::io_error, "short write: " + path);
}

EvalScores score_predictions(const std::string& path, Task task,
                             const std::vector<ManifestEntry>& entries,
                             const features::FeatureConfig& fc) {
  std::ifstream in(path);
  require(bool(in), Errc::file_not_found, "cannot open: " + path);
  std::map<std::string, json> by_path;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    require(!j.is_discarded(), Errc::invalid_config, "invalid JSON line in " + path);
    require(j.value("task", "") == task_name(task), Errc::invalid_config,
            "prediction task mismatch in " + path);
    // key pulled out first: the json move-assignment takes its argument by
    // value and would hollow out j before at("path") runs
    std::string key = j.at("path").get<std::string>();
    by_path[key] = std::move(j);
  }

  const double hop_s = fc.hop_ms / 1000.0;
  const auto frames_per_segment = static_cast<Index>(std::llround(1.0 / hop_s));
  EvalScores scores;
  MatX<double> score_rows;
  BinRoll truth_rows;
  std::vector<int> labels;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto it = by_path.find(entries[i].path);
    require(it != by_path.end(), Errc::invalid_config,
            "no prediction for " + entries[i].path);
    const json& j = it->second;
    const auto row = static_cast<Index>(i);
    if (task == Task::SED) {
      const auto& rows = j.at("probs");
      require(!rows.empty(), Errc::invalid_config, "empty event prediction");
      MatX<double> probs(static_cast<Index>(rows.size()),
                         static_cast<Index>(rows.front().size()));
      for (Index r = 0; r < probs.rows(); ++r)
        for (Index c = 0; c < probs.cols(); ++c)
          probs(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
      const double frame_s = j.at("frame_s").get<double>();
      const auto up = static_cast<Index>(std::llround(frame_s / hop_s));
      require(up >= 1, Errc::invalid_config, "prediction frame rate finer than features");
      BinRoll pred = upsample_roll(binarize_roll(probs), up);
      BinRoll ref =
          events_to_roll(entries[i].events.value(), pred.rows(), hop_s, probs.cols());
      accumulate_sed_scores(scores.sed, sed_segment_metrics(ref, pred, frames_per_segment));
      continue;
    }
    const auto& vals = j.at("scores");
    if (score_rows.size() == 0) {
      score_rows.resize(static_cast<Index>(entries.size()), static_cast<Index>(vals.size()));
      if (task == Task::TAG)
        truth_rows = BinRoll::Zero(static_cast<Index>(entries.size()),
                                   static_cast<Index>(vals.size()));
    }
    require(static_cast<Index>(vals.size()) == score_rows.cols(), Errc::invalid_config,
            "inconsistent score widths in " + path);
    for (Index c = 0; c < score_rows.cols(); ++c)
      score_rows(row, c) = vals[static_cast<std::size_t>(c)].get<double>();
    if (task == Task::ASC) labels.push_back(entries[i].scene_id.value());
    if (task == Task::TAG)
      for (int t : entries[i].tags.value()) truth_rows(row, t) = 1;
  }
  if (task == Task::ASC) scores.asc_accuracy = accuracy(score_rows, labels);
  if (task == Task::TAG) scores.tag_lwlrap = lwlrap(score_rows, truth_rows);
  if (task == Task::SED) finalize_sed_scores(scores.sed);
  return scores;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"integrated scene / tagging / event-detection CRNN toolkit"};
  app.require_subcommand(1);

  // shared knobs
  std::uint64_t seed = 1234;
  int threads = 1;
  bool deterministic = false;
  std::string feature_config_path;
  features::FeatureConfig fc;

  auto add_feature_opts = [&](CLI::App* sub) {
    sub->add_option("--feature-config", feature_config_path,
                    "JSON file overriding feature extraction settings");
  };

  // ---- synth
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate the deterministic toy corpus");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--seed", seed, "master seed");

  // ---- features
  std::string feat_in, feat_out;
  auto* feat = app.add_subcommand("features", "extract a log-mel spectrogram");
  feat->add_option("--input", feat_in, "input WAV")->required();
  feat->add_option("--output", feat_out, "binary spectrogram cache to write");
  add_feature_opts(feat);

  // ---- train
  std::map<Task, std::pair<std::string, std::string>> manifests;
  std::string train_out, train_log, model_config_path;
  Schedule sched;
  bool no_mixup = false;
  std::map<Task, Index> batch_override;
  std::map<Task, double> crop_override;
  auto* train = app.add_subcommand("train", "joint multi-task training");
  for (Task t : {Task::ASC, Task::TAG, Task::SED}) {
    std::string n = task_name(t);
    for (char& ch : n) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    train->add_option("--" + n + "-train", manifests[t].first, n + " training manifest");
    train->add_option("--" + n + "-eval", manifests[t].second, n + " evaluation manifest");
    train->add_option("--" + n + "-batch", batch_override[t], n + " batch size");
    train->add_option("--" + n + "-crop", crop_override[t], n + " crop seconds");
  }
  train->add_option("--out", train_out, "checkpoint directory")->required();
  train->add_option("--log", train_log, "JSONL iteration log");
  train->add_option("--model-config", model_config_path, "JSON architecture overrides");
  train->add_option("--epochs", sched.epochs, "epochs");
  train->add_option("--iterations", sched.iterations_per_epoch, "iterations per epoch");
  train->add_option("--lr", sched.adam.lr, "learning rate");
  train->add_option("--mixup-alpha", sched.mixup_alpha, "mixup beta parameter");
  train->add_flag("--no-mixup", no_mixup, "disable mixup");
  train->add_flag("--alternating", sched.alternating, "optimizer step per task batch");
  train->add_option("--seed", seed, "master seed");
  train->add_option("--threads", threads, "featurization threads");
  train->add_flag("--deterministic", deterministic, "force single-threaded featurization");
  add_feature_opts(train);

  // ---- finetune
  std::string ft_ckpt, ft_task_name, ft_train, ft_eval, ft_out, ft_log;
  Schedule ft_sched;
  ft_sched.epochs = 1;
  bool ft_no_mixup = false;
  Index ft_batch = 0;
  double ft_crop = 0.0;
  auto* ft = app.add_subcommand("finetune", "single-task training from a checkpoint");
  ft->add_option("--checkpoint", ft_ckpt, "starting checkpoint")->required();
  ft->add_option("--task", ft_task_name, "asc, tag, or sed")->required();
  ft->add_option("--train", ft_train, "training manifest")->required();
  ft->add_option("--eval", ft_eval, "evaluation manifest");
  ft->add_option("--out", ft_out, "checkpoint directory")->required();
  ft->add_option("--log", ft_log, "JSONL iteration log");
  ft->add_option("--epochs", ft_sched.epochs, "epochs");
  ft->add_option("--iterations", ft_sched.iterations_per_epoch, "iterations per epoch");
  ft->add_option("--lr", ft_sched.adam.lr, "learning rate");
  ft->add_option("--batch", ft_batch, "batch size");
  ft->add_option("--crop", ft_crop, "crop seconds");
  ft->add_option("--mixup-alpha", ft_sched.mixup_alpha, "mixup beta parameter");
  ft->add_flag("--no-mixup", ft_no_mixup, "disable mixup");
  ft->add_option("--seed", seed, "master seed");
  ft->add_option("--threads", threads, "featurization threads");
  ft->add_flag("--deterministic", deterministic, "force single-threaded featurization");
  add_feature_opts(ft);

  // ---- evaluate
  std::string ev_ckpt, ev_task_name, ev_manifest, ev_predictions, ev_dump;
  auto* ev = app.add_subcommand("evaluate", "score a checkpoint or a prediction file");
  ev->add_option("--checkpoint", ev_ckpt, "checkpoint to score");
  ev->add_option("--predictions", ev_predictions, "prediction JSONL to score instead");
  ev->add_option("--task", ev_task_name, "asc, tag, or sed")->required();
  ev->add_option("--manifest", ev_manifest, "evaluation manifest")->required();
  ev->add_option("--dump-predictions", ev_dump, "write per-entry predictions (checkpoint mode)");
  ev->add_option("--threads", threads, "featurization threads");
  add_feature_opts(ev);

  // ---- gradcheck
  std::string gc_scope = "all";
  Index gc_max_per_param = 24;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  gc->add_option("--scope", gc_scope,
                 "all, linear, conv, residual, batchnorm, dense, bigru, model1, model2, model3");
  gc->add_option("--seed", seed, "scenario seed");
  gc->add_option("--max-per-param", gc_max_per_param,
                 "sampled elements per tensor for the full-model checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (!feature_config_path.empty()) apply_feature_config(load_json_file(feature_config_path), fc);

    if (synth->parsed()) return cmd_synth(synth_out, seed);
    if (feat->parsed()) return cmd_features(feat_in, feat_out, fc);

    if (train->parsed()) {
      ArchitectureConfig cfg;
      cfg.n_mels = fc.n_mels;
      if (!model_config_path.empty()) apply_model_config(load_json_file(model_config_path), cfg);
      sched.mixup = !no_mixup;
      std::vector<TaskSpec> specs;
      for (Task t : {Task::ASC, Task::TAG, Task::SED}) {
        if (manifests[t].first.empty()) continue;
        TaskSpec spec;
        spec.task = t;
        spec.train_manifest = manifests[t].first;
        spec.eval_manifest = manifests[t].second;
        spec.batch_size = batch_override.count(t) ? batch_override[t] : 0;
        spec.crop_s = crop_override.count(t) ? crop_override[t] : 0.0;
        specs.push_back(std::move(spec));
      }
      require(!specs.empty(), Errc::invalid_argument, "no training manifests given");
      TrainerOptions opt;
      opt.seed = seed;
      opt.threads = threads;
      opt.deterministic = deterministic;
      opt.out_dir = train_out;
      opt.log_path = train_log;
      opt.feature_config = fc;
      DcaseNet<float> model(cfg, seed);
      Trainer trainer(model, specs, sched, opt);
      trainer.run();
      json summary{{"iterations", trainer.counters().iterations},
                   {"optimizer_steps", trainer.counters().optimizer_steps}};
      for (const auto& [t, n] : trainer.counters().samples_consumed)
        summary["samples"][task_name(t)] = n;
      for (const auto& [t, s] : trainer.last_eval())
        summary["eval"][task_name(t)] = scores_to_json(t, s);
      std::cout << summary.dump() << "\n";
      return 0;
    }

    if (ft->parsed()) {
      TaskSpec spec;
      spec.task = task_from_name(ft_task_name);
      spec.train_manifest = ft_train;
      spec.eval_manifest = ft_eval;
      spec.batch_size = ft_batch;
      spec.crop_s = ft_crop;
      ft_sched.mixup = !ft_no_mixup;
      TrainerOptions opt;
      opt.seed = seed;
      opt.threads = threads;
      opt.deterministic = deterministic;
      opt.out_dir = ft_out;
      opt.log_path = ft_log;
      opt.feature_config = fc;
      fine_tune(ft_ckpt, spec, ft_sched, opt);
      json summary{{"checkpoint", ft_ckpt}, {"task", ft_task_name}, {"out", ft_out}};
      std::cout << summary.dump() << "\n";
      return 0;
    }

    if (ev->parsed()) {
      const Task task = task_from_name(ev_task_name);
      std::vector<ManifestEntry> entries = load_manifest(ev_manifest);
      require(ev_ckpt.empty() != ev_predictions.empty(), Errc::invalid_argument,
              "give exactly one of --checkpoint and --predictions");
      EvalScores scores;
      if (!ev_ckpt.empty()) {
        auto model = model_from_checkpoint(ev_ckpt);
        require(model->config().n_mels == fc.n_mels, Errc::invalid_config,
                "feature bands and checkpoint input bands differ");
        TaskPredictions preds;
        scores = evaluate_task(*model, task, entries, fc, threads,
                               ev_dump.empty() ? nullptr : &preds);
        if (!ev_dump.empty()) dump_predictions(ev_dump, task, entries, preds);
      } else {
        require(ev_dump.empty(), Errc::invalid_argument,
                "--dump-predictions needs --checkpoint");
        scores = score_predictions(ev_predictions, task, entries, fc);
      }
      std::cout << scores_to_json(task, scores).dump() << "\n";
      return 0;
    }

    if (gc->parsed()) {
      std::vector<verify::CheckResult> results;
      if (gc_scope == "all") {
        results = verify::run_all_checks(seed, gc_max_per_param);
      } else if (gc_scope == "linear") {
        results.push_back(verify::check_linear(seed));
      } else if (gc_scope == "conv") {
        results.push_back(verify::check_conv_block(seed));
      } else if (gc_scope == "residual") {
        results.push_back(verify::check_residual_block(seed));
      } else if (gc_scope == "batchnorm") {
        results.push_back(verify::check_batchnorm(seed));
      } else if (gc_scope == "dense") {
        results.push_back(verify::check_dense_block(seed));
      } else if (gc_scope == "bigru") {
        results.push_back(verify::check_bigru(seed));
      } else if (gc_scope == "model1" || gc_scope == "model2" || gc_scope == "model3") {
        results.push_back(
            verify::check_full_model(gc_scope.back() - '0', seed, gc_max_per_param));
      } else {
        fail(Errc::invalid_argument, "unknown gradcheck scope: " + gc_scope);
      }
      bool all_pass = true;
      for (const auto& r : results) {
        json j{{"name", r.name},
               {"max_rel_err", r.max_rel_err},
               {"tolerance", r.tolerance},
               {"elements", r.elements_checked},
               {"pass", r.pass()}};
        if (!r.pass()) j["worst_param"] = r.worst_param;
        std::cout << j.dump() << "\n";
        all_pass = all_pass && r.pass();
      }
      return all_pass ? 0 : 1;
    }
  } catch (const Error& e) {
    std::cerr << json{{"error", errc_name(e.code())}, {"message", e.what()}}.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "unexpected"}, {"message", e.what()}}.dump() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace dcasenet
