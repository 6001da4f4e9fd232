#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "healthygan/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace healthygan;
namespace fs = std::filesystem;

namespace {

struct PipelineFixture {
  fs::path base{"pipe_scratch"};
  std::string data_root;

  PipelineFixture() {
    fs::remove_all(base);
    fs::create_directories(base);
    data_root = (base / "data").string();
    DatasetSpec spec;
    spec.image_size = 64;
    spec.n_healthy_B = 6;
    spec.n_mixed_healthy_A = 5;
    spec.n_mixed_anomalous_A = 3;
    spec.n_val = 2;
    spec.n_test = 3;
    spec.seed = 11;
    generate_synthetic_benchmark(spec, data_root);
  }
  ~PipelineFixture() { fs::remove_all(base); }

  TrainConfig tiny_cfg() const {
    TrainConfig cfg;
    cfg.channels = 1;
    cfg.image_size = 64;
    cfg.batch_size = 2;
    cfg.total_iterations = 6;
    cfg.decay_iterations = 2;
    cfg.width_scale = 1.0 / 16.0;
    cfg.critic_depth = 3;
    cfg.seed = 13;
    return cfg;
  }

  TrainPipelineOptions train_opts(long long every = 2) const {
    TrainPipelineOptions opt;
    opt.cfg = tiny_cfg();
    opt.data_root = data_root;
    opt.checkpoint_every = every;
    return opt;
  }
};

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

TEST_CASE("training pipeline writes logs and periodic plus final checkpoints") {
  PipelineFixture fix;
  const std::string run_dir = (fix.base / "run_a").string();
  const auto result = run_training(fix.train_opts(2), run_dir);

  CHECK(result.final_iteration == 6);
  REQUIRE(result.checkpoints.size() == 3);
  CHECK(result.checkpoints[0].find("ckpt_0000002.hgc") != std::string::npos);
  CHECK(result.checkpoints[1].find("ckpt_0000004.hgc") != std::string::npos);
  CHECK(result.checkpoints[2].find("ckpt_0000006.hgc") != std::string::npos);
  for (const auto& p : result.checkpoints) CHECK(fs::exists(p));

  const auto lines = read_lines(result.loss_log_path);
  REQUIRE(lines.size() == 7);
  CHECK(lines[0] == log_header());
  CHECK(lines[1].substr(0, 2) == "0,");
  CHECK(lines[6].substr(0, 2) == "5,");

  // A non-divisible final iteration still gets its own checkpoint.
  const std::string run_b = (fix.base / "run_b").string();
  auto opt = fix.train_opts(4);
  const auto partial = run_training(opt, run_b);
  REQUIRE(partial.checkpoints.size() == 2);
  CHECK(partial.checkpoints[0].find("ckpt_0000004.hgc") != std::string::npos);
  CHECK(partial.checkpoints[1].find("ckpt_0000006.hgc") != std::string::npos);
}

TEST_CASE("interrupted training resumes into an identical loss log") {
  PipelineFixture fix;
  const std::string full_dir = (fix.base / "full").string();
  const auto full = run_training(fix.train_opts(10), full_dir);

  const std::string parts_dir = (fix.base / "parts").string();
  auto first = fix.train_opts(10);
  first.halt_at = 3;
  const auto halted = run_training(first, parts_dir);
  CHECK(halted.final_iteration == 3);
  REQUIRE(!halted.checkpoints.empty());

  auto second = fix.train_opts(10);
  second.resume = halted.checkpoints.back();
  const auto resumed = run_training(second, parts_dir);
  CHECK(resumed.final_iteration == 6);

  const auto expect = read_lines(full.loss_log_path);
  const auto got = read_lines(resumed.loss_log_path);
  REQUIRE(expect.size() == got.size());
  for (size_t i = 0; i < expect.size(); ++i) CHECK(expect[i] == got[i]);
}

TEST_CASE("resume rejects a mismatched architecture") {
  PipelineFixture fix;
  const std::string run_dir = (fix.base / "mismatch").string();
  auto opt = fix.train_opts(10);
  opt.halt_at = 2;
  const auto halted = run_training(opt, run_dir);

  auto wrong = fix.train_opts(10);
  wrong.cfg.width_scale = 0.25;
  wrong.resume = halted.checkpoints.back();
  CHECK_THROWS_WITH_AS((void)run_training(wrong, run_dir), doctest::Contains("width_scale"),
                       std::runtime_error);
}

TEST_CASE("training never opens validation or test data") {
  PipelineFixture fix;
  fs::remove(fs::path(fix.data_root) / "val.csv");
  fs::remove(fs::path(fix.data_root) / "test.csv");
  fs::remove_all(fs::path(fix.data_root) / "val");
  fs::remove_all(fs::path(fix.data_root) / "test");
  const auto result = run_training(fix.train_opts(3), (fix.base / "noval").string());
  CHECK(result.final_iteration == 6);
}

TEST_CASE("selection pipeline ranks checkpoints and writes the report") {
  PipelineFixture fix;
  const std::string train_dir = (fix.base / "train").string();
  const auto trained = run_training(fix.train_opts(3), train_dir);

  SelectPipelineOptions opt;
  opt.data_root = fix.data_root;
  opt.checkpoints_dir = (fs::path(train_dir) / "checkpoints").string();
  opt.batch = 4;

  const std::string sel_dir = (fix.base / "sel").string();
  std::ostringstream warn;
  const auto result = run_selection(opt, sel_dir, &warn);
  CHECK(result.selection.scores.size() == trained.checkpoints.size());
  CHECK(fs::exists(result.report_path));
  CHECK(!result.best_checkpoint.empty());
  CHECK(warn.str().empty());

  const auto lines = read_lines(result.report_path);
  CHECK(lines[0] == "checkpoint_path,iteration,fid,selected");
  CHECK(lines.size() == trained.checkpoints.size() + 1);

  SelectPipelineOptions missing = opt;
  missing.checkpoints_dir = (fix.base / "nowhere").string();
  CHECK_THROWS_AS((void)run_selection(missing, sel_dir), std::runtime_error);
}

TEST_CASE("selection succeeds on label-stripped manifests") {
  PipelineFixture fix;
  const std::string train_dir = (fix.base / "train2").string();
  const auto trained = run_training(fix.train_opts(6), train_dir);

  for (const char* name : {"trainA.csv", "trainB.csv", "val.csv"}) {
    const fs::path manifest = fs::path(fix.data_root) / name;
    const auto lines = read_lines(manifest.string());
    std::ofstream out(manifest, std::ios::trunc);
    out << "path\n";
    for (size_t i = 1; i < lines.size(); ++i)
      out << lines[i].substr(0, lines[i].find(',')) << "\n";
  }

  const auto retrain = run_training(fix.train_opts(6), (fix.base / "train3").string());
  CHECK(retrain.final_iteration == 6);

  SelectPipelineOptions opt;
  opt.data_root = fix.data_root;
  opt.checkpoints_dir = (fs::path(train_dir) / "checkpoints").string();
  opt.batch = 4;
  const auto result = run_selection(opt, (fix.base / "sel2").string());
  CHECK(fs::exists(result.report_path));
}

TEST_CASE("evaluation pipeline emits report, scores, and difference maps") {
  PipelineFixture fix;
  const std::string train_dir = (fix.base / "train4").string();
  const auto trained = run_training(fix.train_opts(6), train_dir);

  EvalPipelineOptions opt;
  opt.data_root = fix.data_root;
  opt.checkpoint = trained.checkpoints.back();
  opt.batch = 4;
  opt.write_diff_maps = true;

  const std::string eval_dir = (fix.base / "eval").string();
  const auto result = run_evaluation(opt, eval_dir);

  CHECK(result.report.auc >= 0.0);
  CHECK(result.report.auc <= 1.0);
  CHECK(result.report.n_pos == 3);
  CHECK(result.report.n_neg == 3);
  CHECK(result.pixel_threshold >= 0.0);
  CHECK(result.pixel_threshold <= 2.0);
  CHECK(fs::exists(result.report_path));

  const auto scores = read_lines(result.scores_csv_path);
  CHECK(scores[0] == "path,label,score,predicted,dice");
  CHECK(scores.size() == 7);

  size_t maps = 0;
  for (const auto& e : fs::directory_iterator(fs::path(eval_dir) / "diff_maps"))
    maps += e.is_regular_file();
  CHECK(maps == 6);

  std::ifstream in(result.report_path);
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string report = ss.str();
  for (const char* key : {"\"auc\"", "\"precision\"", "\"recall\"", "\"specificity\"", "\"f1\"",
                          "\"threshold\"", "\"pixel_threshold\"", "\"mean_tp_dice\""})
    CHECK(report.find(key) != std::string::npos);

  // A fixed pixel threshold is honored verbatim.
  EvalPipelineOptions fixed = opt;
  fixed.write_diff_maps = false;
  fixed.pixel_threshold = 0.75;
  const auto fixed_result = run_evaluation(fixed, (fix.base / "eval2").string());
  CHECK(fixed_result.pixel_threshold == 0.75);
}

TEST_CASE("evaluation demands labeled manifests") {
  PipelineFixture fix;
  const std::string train_dir = (fix.base / "train5").string();
  const auto trained = run_training(fix.train_opts(6), train_dir);

  const fs::path manifest = fs::path(fix.data_root) / "val.csv";
  const auto lines = read_lines(manifest.string());
  std::ofstream out(manifest, std::ios::trunc);
  out << "path\n";
  for (size_t i = 1; i < lines.size(); ++i)
    out << lines[i].substr(0, lines[i].find(',')) << "\n";
  out.close();

  EvalPipelineOptions opt;
  opt.data_root = fix.data_root;
  opt.checkpoint = trained.checkpoints.back();
  CHECK_THROWS_WITH_AS((void)run_evaluation(opt, (fix.base / "eval3").string()),
                       doctest::Contains("label"), std::runtime_error);
}

TEST_CASE("single image scoring is deterministic and writes heatmaps") {
  PipelineFixture fix;
  const std::string train_dir = (fix.base / "train6").string();
  const auto trained = run_training(fix.train_opts(6), train_dir);

  ScorePipelineOptions opt;
  opt.checkpoint = trained.checkpoints.back();
  opt.image_path = fix.data_root + "/trainB/sample_00000.png";
  opt.heatmap_path = (fix.base / "heat.png").string();

  const double first = run_score(opt);
  const double second = run_score(opt);
  CHECK(first == second);
  CHECK(first >= 0.0);
  CHECK(fs::exists(opt.heatmap_path));
  const ImageU8 heat = read_png(opt.heatmap_path);
  CHECK(heat.channels == 1);
  CHECK(heat.height == 64);

  opt.image_path = fix.data_root + "/missing.png";
  CHECK_THROWS_AS((void)run_score(opt), std::runtime_error);
}
