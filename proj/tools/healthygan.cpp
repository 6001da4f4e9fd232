#include <CLI11.hpp>

#include "healthygan/config.hpp"
#include "healthygan/pipeline.hpp"

#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace healthygan;

namespace {

std::string timestamp_utc() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
  return buf;
}

/// Creates the per-run artifact directory and drops the resolved-config
/// snapshot into it, so the run can be replayed from that file alone.
std::string make_run_dir(const Config& cfg, const std::string& command) {
  const fs::path dir =
      fs::path(cfg.get_string("run.dir")) / (command + "-" + timestamp_utc() + "-" + cfg.digest());
  fs::create_directories(dir);
  cfg.write_snapshot((dir / "resolved_config.cfg").string());
  return dir.string();
}

Config load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
  Config cfg;
  if (!config_path.empty()) cfg.load_file(config_path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

void check_device() {
  const char* dev = std::getenv("HEALTHYGAN_DEVICE");
  if (dev && *dev && std::string(dev) != "cpu")
    throw ConfigError(std::string("HEALTHYGAN_DEVICE: unsupported device '") + dev +
                      "', only cpu is available");
}

const std::string& require_key(const Config& cfg, const std::string& key) {
  const std::string& v = cfg.get_string(key);
  if (v.empty()) throw ConfigError("config: key '" + key + "' is required for this command");
  return v;
}

int cmd_synth_data(const Config& cfg) {
  const std::string root = cfg.get_string("data.root");
  generate_synthetic_benchmark(cfg.dataset_spec(), root);
  cfg.write_snapshot((fs::path(root) / "resolved_config.cfg").string());
  std::cout << "dataset written to " << root << "\n";
  return 0;
}

int cmd_train(const Config& cfg) {
  TrainPipelineOptions opt;
  opt.cfg = cfg.train_config();
  opt.data_root = cfg.get_string("data.root");
  opt.checkpoint_every = cfg.get_int("train.checkpoint_every");
  opt.resume = cfg.get_string("train.resume");
  opt.progress_every = 500;
  const std::string run_dir = make_run_dir(cfg, "train");
  const auto result = run_training(opt, run_dir, &std::cerr);
  std::cout << "run directory " << run_dir << "\n"
            << "loss log " << result.loss_log_path << "\n"
            << "final checkpoint " << result.checkpoints.back() << "\n";
  return 0;
}

int cmd_select(const Config& cfg) {
  SelectPipelineOptions opt;
  opt.data_root = cfg.get_string("data.root");
  opt.checkpoints_dir = require_key(cfg, "select.checkpoints");
  opt.batch = cfg.get_int("select.batch");
  opt.embedder_seed = cfg.get_uint("select.embedder_seed");
  const std::string run_dir = make_run_dir(cfg, "select");
  const auto result = run_selection(opt, run_dir, &std::cerr);
  std::cout << "report " << result.report_path << "\n"
            << "selected " << result.best_checkpoint << "\n";
  return 0;
}

int cmd_evaluate(const Config& cfg) {
  EvalPipelineOptions opt;
  opt.data_root = cfg.get_string("data.root");
  opt.checkpoint = require_key(cfg, "evaluate.checkpoint");
  opt.batch = cfg.get_int("evaluate.batch");
  opt.pixel_threshold = cfg.get_real("evaluate.pixel_threshold");
  opt.write_diff_maps = cfg.get_bool("evaluate.diff_maps");
  const std::string& rule = cfg.get_string("evaluate.threshold_rule");
  if (rule == "max_f1")
    opt.rule = ThresholdRule::max_f1;
  else if (rule == "youden_j")
    opt.rule = ThresholdRule::youden_j;
  else
    throw ConfigError("config: evaluate.threshold_rule must be max_f1 or youden_j, got '" +
                      rule + "'");

  const std::string run_dir = make_run_dir(cfg, "evaluate");
  const auto result = run_evaluation(opt, run_dir);
  std::printf("auc %.6f\nprecision %.6f\nrecall %.6f\nspecificity %.6f\nf1 %.6f\n",
              result.report.auc, result.report.precision, result.report.recall,
              result.report.specificity, result.report.f1);
  std::printf("threshold %.9g\npixel_threshold %.9g\nmean_tp_dice %.6f\n",
              result.report.threshold, result.pixel_threshold, result.mean_tp_dice);
  std::cout << "report " << result.report_path << "\n";
  return 0;
}

int cmd_score(const Config& cfg) {
  ScorePipelineOptions opt;
  opt.checkpoint = require_key(cfg, "score.checkpoint");
  opt.image_path = require_key(cfg, "score.image");
  opt.heatmap_path = cfg.get_string("score.heatmap");
  const double score = run_score(opt);
  std::printf("%.17g\n", score);
  if (!opt.heatmap_path.empty()) {
    cfg.write_snapshot(opt.heatmap_path + ".cfg");
    std::cerr << "heatmap " << opt.heatmap_path << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One-directional unpaired image translation for anomaly screening"};
  app.require_subcommand(1);

  struct SubArgs {
    std::string config;
    std::vector<std::string> overrides;
  };
  std::map<std::string, SubArgs> sub_args;
  const std::pair<const char*, const char*> commands[] = {
      {"synth-data", "Generate the ground-truthed synthetic benchmark"},
      {"train", "Train a model on trainA/trainB"},
      {"select", "Rank checkpoints by FID and pick the best"},
      {"evaluate", "Compute screening metrics on the test split"},
      {"score", "Score a single image through a checkpoint"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    SubArgs& a = sub_args[name];
    sub->add_option("--config", a.config, "configuration file");
    sub->add_option("overrides", a.overrides, "key=value overrides");
  }

  if (argc >= 2) {
    const std::string first = argv[1];
    if (first != "--help" && first != "-h" && sub_args.find(first) == sub_args.end()) {
      std::cerr << "usage error: unknown command '" << first
                << "', expected one of synth-data train select evaluate score\n";
      return 1;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    check_device();
    const SubArgs& a = sub_args.at(command);
    Config cfg = load_config(a.config, a.overrides);
    if (command == "synth-data") return cmd_synth_data(cfg);
    if (command == "train") return cmd_train(cfg);
    if (command == "select") return cmd_select(cfg);
    if (command == "evaluate") return cmd_evaluate(cfg);
    return cmd_score(cfg);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
