#pragma once

#include "healthygan/checkpoint.hpp"
#include "healthygan/evaluation.hpp"
#include "healthygan/selection.hpp"

#include <ostream>
#include <string>
#include <vector>

namespace healthygan {

// Disk-level orchestration: each pipeline owns one run directory and leaves
// behind the artifacts (loss log, checkpoints, reports) that the CLI and the
// tests consume. All pipelines train and score in float32.

struct TrainPipelineOptions {
  TrainConfig cfg;
  std::string data_root;
  long long checkpoint_every = 10000;
  /// Checkpoint to resume from; empty starts fresh. The checkpoint's
  /// architecture must match cfg.
  std::string resume;
  /// Stop after this many total iterations when >= 0, simulating an
  /// interrupted run. The halt point is always checkpointed.
  long long halt_at = -1;
  /// Progress line cadence in iterations; 0 disables progress output.
  long long progress_every = 0;
};

struct TrainPipelineResult {
  std::vector<std::string> checkpoints;
  long long final_iteration = 0;
  std::string loss_log_path;
};

/// Runs (or resumes) training, appending one CSV row per iteration to
/// run_dir/loss_log.csv and writing checkpoints under run_dir/checkpoints
/// every checkpoint_every iterations plus the final state. Only the trainA
/// and trainB splits are ever opened. A non-finite loss aborts after saving a
/// diagnostic snapshot.
TrainPipelineResult run_training(const TrainPipelineOptions& opt, const std::string& run_dir,
                                 std::ostream* progress = nullptr);

struct SelectPipelineOptions {
  std::string data_root;
  /// Directory scanned for *.hgc checkpoints, in sorted path order.
  std::string checkpoints_dir;
  Index batch = 16;
  std::uint64_t embedder_seed = 17;
};

struct SelectPipelineResult {
  SelectionResult selection;
  std::string best_checkpoint;
  std::string report_path;
};

/// Scores every checkpoint by FID of translated validation inputs against the
/// healthy training set and writes run_dir/selection_report.csv. Labels are
/// stripped from the records before use.
SelectPipelineResult run_selection(const SelectPipelineOptions& opt, const std::string& run_dir,
                                   std::ostream* warnings = nullptr);

struct EvalPipelineOptions {
  std::string data_root;
  std::string checkpoint;
  Index batch = 16;
  ThresholdRule rule = ThresholdRule::max_f1;
  /// Pixel threshold for localization; negative means choose it on the
  /// validation split by maximizing mean Dice over a fixed grid.
  double pixel_threshold = -1.0;
  bool write_diff_maps = false;
};

struct EvalPipelineResult {
  EvalReport report;
  double pixel_threshold = 0.0;
  /// Mean Dice over test samples that are true positives and carry a ground
  /// truth mask; -1 when no such sample exists.
  double mean_tp_dice = -1.0;
  long long n_tp_masked = 0;
  std::string report_path;
  std::string scores_csv_path;
};

/// Chooses the score threshold on the validation split, evaluates the test
/// split, and writes run_dir/eval_report.json plus run_dir/test_scores.csv
/// and optional difference-map PNGs. This is the only pipeline that reads
/// labels.
EvalPipelineResult run_evaluation(const EvalPipelineOptions& opt, const std::string& run_dir);

struct ScorePipelineOptions {
  std::string checkpoint;
  std::string image_path;
  /// Heatmap PNG output path; empty skips the heatmap.
  std::string heatmap_path;
};

/// Scores a single image through a checkpointed generator and returns the
/// anomaly score; optionally renders the difference map as a grayscale PNG.
double run_score(const ScorePipelineOptions& opt);

}  // namespace healthygan
