#include "healthygan/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace healthygan {

namespace {

enum class Kind { integer, unsigned_integer, real, boolean, string };

struct SchemaEntry {
  const char* key;
  Kind kind;
  const char* default_value;
};

const std::vector<SchemaEntry>& schema() {
  static const std::vector<SchemaEntry> entries = {
      {"data.root", Kind::string, "data"},
      {"data.image_size", Kind::integer, "64"},
      {"data.channels", Kind::integer, "1"},
      {"data.n_healthy_B", Kind::integer, "400"},
      {"data.n_mixed_healthy_A", Kind::integer, "140"},
      {"data.n_mixed_anomalous_A", Kind::integer, "60"},
      {"data.n_val", Kind::integer, "40"},
      {"data.n_test", Kind::integer, "60"},
      {"data.lesion_min", Kind::integer, "8"},
      {"data.lesion_max", Kind::integer, "16"},
      {"data.lesion_contrast", Kind::real, "0.35"},
      {"data.seed", Kind::unsigned_integer, "7"},

      {"train.channels", Kind::integer, "3"},
      {"train.image_size", Kind::integer, "256"},
      {"train.batch_size", Kind::integer, "16"},
      {"train.total_iterations", Kind::integer, "400000"},
      {"train.decay_iterations", Kind::integer, "100000"},
      {"train.base_lr", Kind::real, "1e-4"},
      {"train.critic_steps_per_gen", Kind::integer, "2"},
      {"train.width_scale", Kind::real, "1.0"},
      {"train.critic_depth", Kind::integer, "6"},
      {"train.seed", Kind::unsigned_integer, "0"},
      {"train.adv_healthy_path", Kind::boolean, "true"},
      {"train.adam_beta1", Kind::real, "0.5"},
      {"train.adam_beta2", Kind::real, "0.999"},
      {"train.lambda_gp", Kind::real, "10"},
      {"train.lambda_rec", Kind::real, "1"},
      {"train.lambda_id", Kind::real, "1"},
      {"train.lambda_f", Kind::real, "0.1"},
      {"train.lambda_fs", Kind::real, "1"},
      {"train.lambda_fz", Kind::real, "1"},
      {"train.focus_eps", Kind::real, "1e-6"},
      {"train.checkpoint_every", Kind::integer, "10000"},
      {"train.resume", Kind::string, ""},

      {"run.dir", Kind::string, "runs"},

      {"select.checkpoints", Kind::string, ""},
      {"select.batch", Kind::integer, "16"},
      {"select.embedder_seed", Kind::unsigned_integer, "17"},

      {"evaluate.checkpoint", Kind::string, ""},
      {"evaluate.batch", Kind::integer, "16"},
      {"evaluate.threshold_rule", Kind::string, "max_f1"},
      {"evaluate.diff_maps", Kind::boolean, "false"},
      {"evaluate.pixel_threshold", Kind::real, "-1"},

      {"score.checkpoint", Kind::string, ""},
      {"score.image", Kind::string, ""},
      {"score.heatmap", Kind::string, ""},
  };
  return entries;
}

const SchemaEntry* find_entry(const std::string& key) {
  for (const auto& e : schema())
    if (key == e.key) return &e;
  return nullptr;
}

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

void check_value(const std::string& key, Kind kind, const std::string& value) {
  size_t used = 0;
  try {
    switch (kind) {
      case Kind::integer:
        (void)std::stoll(value, &used);
        break;
      case Kind::unsigned_integer:
        if (!value.empty() && value[0] == '-') throw std::invalid_argument("negative");
        (void)std::stoull(value, &used);
        break;
      case Kind::real:
        (void)std::stod(value, &used);
        break;
      case Kind::boolean:
        if (value != "true" && value != "false" && value != "1" && value != "0")
          throw std::invalid_argument("not a boolean");
        used = value.size();
        break;
      case Kind::string:
        used = value.size();
        break;
    }
  } catch (const std::exception&) {
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
  }
  if (used != value.size())
    throw ConfigError("config: bad value '" + value + "' for key '" + key + "'");
}

}  // namespace

Config::Config() {
  for (const auto& e : schema()) values_[e.key] = e.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
  const SchemaEntry* e = find_entry(key);
  if (!e) throw ConfigError("config: unknown key '" + key + "'");
  check_value(key, e->kind, value);
  values_[key] = value;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: missing '=' at " + path + ":" + std::to_string(line_no));
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::apply_override(const std::string& token) {
  const size_t eq = token.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("config: override '" + token + "' is not key=value");
  set(token.substr(0, eq), token.substr(eq + 1));
}

const std::string& Config::get_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("config: unknown key '" + key + "'");
  return it->second;
}

long long Config::get_int(const std::string& key) const {
  return std::stoll(get_string(key));
}

std::uint64_t Config::get_uint(const std::string& key) const {
  return std::stoull(get_string(key));
}

double Config::get_real(const std::string& key) const {
  return std::stod(get_string(key));
}

bool Config::get_bool(const std::string& key) const {
  const std::string& v = get_string(key);
  return v == "true" || v == "1";
}

std::string Config::resolved_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

std::string Config::digest() const {
  // FNV-1a, 64-bit.
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : resolved_text()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%012llx", static_cast<unsigned long long>(h & 0xffffffffffffULL));
  return buf;
}

void Config::write_snapshot(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("config: cannot write snapshot " + path);
  out << resolved_text();
  if (!out) throw std::runtime_error("config: snapshot write failed for " + path);
}

DatasetSpec Config::dataset_spec() const {
  DatasetSpec s;
  s.image_size = get_int("data.image_size");
  s.channels = get_int("data.channels");
  s.n_healthy_B = get_int("data.n_healthy_B");
  s.n_mixed_healthy_A = get_int("data.n_mixed_healthy_A");
  s.n_mixed_anomalous_A = get_int("data.n_mixed_anomalous_A");
  s.n_val = get_int("data.n_val");
  s.n_test = get_int("data.n_test");
  s.lesion_min = get_int("data.lesion_min");
  s.lesion_max = get_int("data.lesion_max");
  s.lesion_contrast = get_real("data.lesion_contrast");
  s.seed = get_uint("data.seed");
  return s;
}

TrainConfig Config::train_config() const {
  TrainConfig c;
  c.channels = get_int("train.channels");
  c.image_size = get_int("train.image_size");
  c.batch_size = get_int("train.batch_size");
  c.total_iterations = get_int("train.total_iterations");
  c.decay_iterations = get_int("train.decay_iterations");
  c.base_lr = get_real("train.base_lr");
  c.critic_steps_per_gen = static_cast<int>(get_int("train.critic_steps_per_gen"));
  c.width_scale = get_real("train.width_scale");
  c.critic_depth = static_cast<int>(get_int("train.critic_depth"));
  c.seed = get_uint("train.seed");
  c.adv_healthy_path = get_bool("train.adv_healthy_path");
  c.adam_beta1 = get_real("train.adam_beta1");
  c.adam_beta2 = get_real("train.adam_beta2");
  c.lambda_gp = get_real("train.lambda_gp");
  c.lambda_rec = get_real("train.lambda_rec");
  c.lambda_id = get_real("train.lambda_id");
  c.lambda_f = get_real("train.lambda_f");
  c.lambda_fs = get_real("train.lambda_fs");
  c.lambda_fz = get_real("train.lambda_fz");
  c.focus_eps = get_real("train.focus_eps");
  return c;
}

}  // namespace healthygan
