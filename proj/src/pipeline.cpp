#include "healthygan/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace healthygan {

namespace {

std::string checkpoint_name(const char* stem, long long iteration) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%s_%07lld.hgc", stem, iteration);
  return buf;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

TrainPipelineResult run_training(const TrainPipelineOptions& opt, const std::string& run_dir,
                                 std::ostream* progress) {
  const fs::path ckpt_dir = fs::path(run_dir) / "checkpoints";
  fs::create_directories(ckpt_dir);

  TrainState<float> state = opt.resume.empty() ? make_train_state<float>(opt.cfg)
                                               : load_checkpoint<float>(opt.resume, opt.cfg);

  CachedSet<float> set_a(opt.data_root, load_split(opt.data_root, Split::trainA),
                         opt.cfg.channels, opt.cfg.image_size);
  CachedSet<float> set_b(opt.data_root, load_split(opt.data_root, Split::trainB),
                         opt.cfg.channels, opt.cfg.image_size);
  const BatchSource<float> source{
      [&](Rng& r) { return set_a.sample_batch(opt.cfg.batch_size, r); },
      [&](Rng& r) { return set_b.sample_batch(opt.cfg.batch_size, r); }};

  TrainPipelineResult result;
  result.loss_log_path = (fs::path(run_dir) / "loss_log.csv").string();
  const bool fresh =
      !fs::exists(result.loss_log_path) || fs::file_size(result.loss_log_path) == 0;
  std::ofstream log(result.loss_log_path, std::ios::app);
  if (!log) throw std::runtime_error("training: cannot open loss log " + result.loss_log_path);
  if (fresh) log << log_header() << "\n";

  auto save_at = [&](long long iteration) {
    const std::string path = (ckpt_dir / checkpoint_name("ckpt", iteration)).string();
    save_checkpoint(path, state);
    result.checkpoints.push_back(path);
  };

  const long long stop = opt.halt_at >= 0 ? std::min(opt.halt_at, opt.cfg.total_iterations)
                                          : opt.cfg.total_iterations;
  long long last_saved = -1;
  try {
    while (state.iteration < stop) {
      const IterationLog il = train_iteration(state, source);
      log << format_log_row(il) << "\n";
      if (!log) throw std::runtime_error("training: loss log write failed");
      if (opt.checkpoint_every > 0 && state.iteration % opt.checkpoint_every == 0) {
        save_at(state.iteration);
        last_saved = state.iteration;
      }
      if (progress && opt.progress_every > 0 && state.iteration % opt.progress_every == 0) {
        *progress << "iteration " << state.iteration << "/" << opt.cfg.total_iterations
                  << " adv_d " << il.adv_d;
        if (il.gen_updated) *progress << " rec " << il.rec << " focus " << il.focus;
        *progress << " lr " << il.lr << std::endl;
      }
    }
  } catch (const TrainingDiverged& e) {
    log.flush();
    const std::string snap = (ckpt_dir / checkpoint_name("diverged", state.iteration)).string();
    save_checkpoint(snap, state);
    throw std::runtime_error(std::string(e.what()) + "; state snapshot written to " + snap);
  }

  if (state.iteration != last_saved) save_at(state.iteration);
  result.final_iteration = state.iteration;
  return result;
}

SelectPipelineResult run_selection(const SelectPipelineOptions& opt, const std::string& run_dir,
                                   std::ostream* warnings) {
  fs::create_directories(run_dir);
  if (!fs::is_directory(opt.checkpoints_dir))
    throw std::runtime_error("selection: missing checkpoint directory " + opt.checkpoints_dir);
  std::vector<std::string> paths;
  for (const auto& e : fs::directory_iterator(opt.checkpoints_dir))
    if (e.is_regular_file() && e.path().extension() == ".hgc")
      paths.push_back(e.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty())
    throw std::runtime_error("selection: no .hgc checkpoints in " + opt.checkpoints_dir);

  Index channels = -1, image_size = -1;
  std::string header_error = "none found";
  for (const auto& p : paths) {
    try {
      const auto header = read_checkpoint_header(p);
      channels = header.at("config").at("channels").get<Index>();
      image_size = header.at("config").at("image_size").get<Index>();
      break;
    } catch (const std::exception& e) {
      header_error = e.what();
    }
  }
  if (channels < 0)
    throw std::runtime_error("selection: no readable checkpoint header: " + header_error);

  // Selection never sees labels or masks, only pixels.
  auto stripped = [](std::vector<SampleRecord> records) {
    for (auto& r : records) {
      r.label.reset();
      r.gt_mask_path.clear();
    }
    return records;
  };
  CachedSet<float> healthy(opt.data_root, stripped(load_split(opt.data_root, Split::trainB)),
                           channels, image_size);
  CachedSet<float> mixed(opt.data_root, stripped(load_split(opt.data_root, Split::val)),
                         channels, image_size);

  RandomConvEmbedder<float> embedder(channels, opt.embedder_seed);
  const FeatureExtractor<float> extractor = embedder;

  SelectPipelineResult result;
  result.selection =
      select_best_checkpoint<float>(paths, healthy, mixed, extractor, opt.batch, warnings);
  result.best_checkpoint = result.selection.best().path;
  result.report_path = (fs::path(run_dir) / "selection_report.csv").string();
  write_selection_report(result.report_path, result.selection);
  return result;
}

namespace {

struct SampleScore {
  SampleRecord record;
  double score = 0;
  Tensor<float> diff;
};

std::vector<SampleScore> score_records(TrainState<float>& state, const std::string& root,
                                       const std::vector<SampleRecord>& records, Index batch) {
  NoGradGuard guard;
  const Index channels = state.cfg.channels, size = state.cfg.image_size;
  const Index n = static_cast<Index>(records.size());
  std::vector<SampleScore> out;
  out.reserve(static_cast<size_t>(n));
  for (Index start = 0; start < n; start += batch) {
    const Index count = std::min(batch, n - start);
    Tensor<float> x({count, channels, size, size});
    const Index per = channels * size * size;
    for (Index i = 0; i < count; ++i)
      x.data.segment(i * per, per) =
          load_normalized_image<float>(root, records[static_cast<size_t>(start + i)].path,
                                       channels, size)
              .data;
    const auto gen_out = state.gen.forward(Var<float>::constant(x));
    const Tensor<float> healthy =
        compose_healthy(gen_out.intermediate.value(), gen_out.mask.value(), x);
    const Tensor<float> diff = difference_map(x, healthy);
    const Index hw = size * size;
    for (Index i = 0; i < count; ++i) {
      SampleScore s;
      s.record = records[static_cast<size_t>(start + i)];
      s.diff = Tensor<float>({1, 1, size, size});
      s.diff.data = diff.data.segment(i * hw, hw);
      s.score = s.diff.data.cast<double>().mean();
      out.push_back(std::move(s));
    }
  }
  return out;
}

int required_label(const SampleScore& s, const char* split) {
  if (!s.record.label)
    throw std::runtime_error(std::string("evaluation: ") + split + " record " + s.record.path +
                             " has no label; evaluation requires labeled manifests");
  return *s.record.label == Label::anomalous ? 1 : 0;
}

/// Mean Dice across the masked samples at one threshold.
double mean_dice(const std::vector<const SampleScore*>& masked,
                 const std::vector<Tensor<float>>& masks, double threshold) {
  double total = 0;
  for (size_t i = 0; i < masked.size(); ++i)
    total += localization_dice(masked[i]->diff, masks[i], threshold);
  return total / static_cast<double>(masked.size());
}

}  // namespace

EvalPipelineResult run_evaluation(const EvalPipelineOptions& opt, const std::string& run_dir) {
  fs::create_directories(run_dir);
  TrainState<float> state = load_checkpoint<float>(opt.checkpoint);

  const auto val_scores = score_records(state, opt.data_root,
                                        load_split(opt.data_root, Split::val), opt.batch);
  std::vector<double> v_scores;
  std::vector<int> v_labels;
  for (const auto& s : val_scores) {
    v_scores.push_back(s.score);
    v_labels.push_back(required_label(s, "val"));
  }
  const ThresholdChoice choice = select_threshold(v_scores, v_labels, opt.rule);

  EvalPipelineResult result;

  // Pixel threshold for localization: fixed when the caller supplies one,
  // otherwise the argmax of mean validation Dice over a fixed grid on [0, 2],
  // the range of absolute differences between [-1, 1] images.
  if (opt.pixel_threshold >= 0) {
    result.pixel_threshold = opt.pixel_threshold;
  } else {
    std::vector<const SampleScore*> masked;
    std::vector<Tensor<float>> masks;
    for (const auto& s : val_scores)
      if (s.record.label && *s.record.label == Label::anomalous && !s.record.gt_mask_path.empty()) {
        masked.push_back(&s);
        masks.push_back(load_mask<float>(opt.data_root, s.record.gt_mask_path,
                                         state.cfg.image_size));
      }
    if (masked.empty()) {
      result.pixel_threshold = 1.0;
    } else {
      double best = -1.0;
      for (int k = 0; k < 256; ++k) {
        const double t = 2.0 * k / 255.0;
        const double d = mean_dice(masked, masks, t);
        if (d > best) {
          best = d;
          result.pixel_threshold = t;
        }
      }
    }
  }

  const auto test_scores = score_records(state, opt.data_root,
                                         load_split(opt.data_root, Split::test), opt.batch);
  std::vector<double> t_scores;
  std::vector<int> t_labels;
  for (const auto& s : test_scores) {
    t_scores.push_back(s.score);
    t_labels.push_back(required_label(s, "test"));
  }

  const Metrics m = classification_metrics(t_scores, t_labels, choice.threshold);
  result.report.auc = roc_auc(t_scores, t_labels);
  result.report.precision = m.precision;
  result.report.recall = m.recall;
  result.report.specificity = m.specificity;
  result.report.f1 = m.f1;
  result.report.threshold = choice.threshold;
  result.report.n_pos = m.tp + m.fn;
  result.report.n_neg = m.tn + m.fp;
  result.report.threshold_degenerate = choice.degenerate;
  result.report.metrics_degenerate = m.degenerate;

  double dice_total = 0;
  const fs::path diff_dir = fs::path(run_dir) / "diff_maps";
  if (opt.write_diff_maps) fs::create_directories(diff_dir);

  result.scores_csv_path = (fs::path(run_dir) / "test_scores.csv").string();
  std::ofstream csv(result.scores_csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("evaluation: cannot write " + result.scores_csv_path);
  csv << "path,label,score,predicted,dice\n";

  for (size_t i = 0; i < test_scores.size(); ++i) {
    const auto& s = test_scores[i];
    const bool predicted = s.score >= choice.threshold;
    std::string dice_text;
    if (!s.record.gt_mask_path.empty()) {
      const auto mask =
          load_mask<float>(opt.data_root, s.record.gt_mask_path, state.cfg.image_size);
      const double dice = localization_dice(s.diff, mask, result.pixel_threshold);
      dice_text = format_real(dice);
      if (t_labels[i] == 1 && predicted) {
        dice_total += dice;
        result.n_tp_masked += 1;
      }
    }
    csv << s.record.path << ',' << (t_labels[i] ? "anomalous" : "healthy") << ','
        << format_real(s.score) << ',' << (predicted ? 1 : 0) << ',' << dice_text << '\n';

    if (opt.write_diff_maps) {
      std::vector<double> values(static_cast<size_t>(s.diff.numel()));
      for (Index j = 0; j < s.diff.numel(); ++j) values[static_cast<size_t>(j)] = s.diff.data[j];
      write_png((diff_dir / fs::path(s.record.path).filename()).string(),
                heatmap_image(values, state.cfg.image_size, state.cfg.image_size, 0.0, 2.0));
    }
  }
  if (result.n_tp_masked > 0) result.mean_tp_dice = dice_total / result.n_tp_masked;

  nlohmann::json report;
  report["auc"] = result.report.auc;
  report["precision"] = result.report.precision;
  report["recall"] = result.report.recall;
  report["specificity"] = result.report.specificity;
  report["f1"] = result.report.f1;
  report["threshold"] = result.report.threshold;
  report["threshold_rule"] = opt.rule == ThresholdRule::max_f1 ? "max_f1" : "youden_j";
  report["threshold_degenerate"] = result.report.threshold_degenerate;
  report["metrics_degenerate"] = result.report.metrics_degenerate;
  report["n_pos"] = result.report.n_pos;
  report["n_neg"] = result.report.n_neg;
  report["pixel_threshold"] = result.pixel_threshold;
  report["mean_tp_dice"] = result.mean_tp_dice;
  report["n_tp_masked"] = result.n_tp_masked;
  report["checkpoint"] = opt.checkpoint;

  result.report_path = (fs::path(run_dir) / "eval_report.json").string();
  std::ofstream out(result.report_path, std::ios::trunc);
  if (!out) throw std::runtime_error("evaluation: cannot write " + result.report_path);
  out << report.dump(2) << "\n";
  return result;
}

double run_score(const ScorePipelineOptions& opt) {
  TrainState<float> state = load_checkpoint<float>(opt.checkpoint);
  const Tensor<float> x =
      normalize_image<float>(read_png(opt.image_path), state.cfg.channels, state.cfg.image_size);

  NoGradGuard guard;
  const auto gen_out = state.gen.forward(Var<float>::constant(x));
  const Tensor<float> healthy =
      compose_healthy(gen_out.intermediate.value(), gen_out.mask.value(), x);
  const Tensor<float> diff = difference_map(x, healthy);

  if (!opt.heatmap_path.empty()) {
    std::vector<double> values(static_cast<size_t>(diff.numel()));
    for (Index j = 0; j < diff.numel(); ++j) values[static_cast<size_t>(j)] = diff.data[j];
    write_png(opt.heatmap_path,
              heatmap_image(values, state.cfg.image_size, state.cfg.image_size, 0.0, 2.0));
  }
  return static_cast<double>(diff.data.cast<double>().mean());
}

}  // namespace healthygan
