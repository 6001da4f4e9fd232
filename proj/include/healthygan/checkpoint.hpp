#pragma once

#include "healthygan/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace healthygan {

// Single-file checkpoint: a magic line, a JSON header (config, counters, RNG
// states, array directory), then the raw little-endian array payload in
// directory order. Captures everything a resumed run needs to reproduce the
// uninterrupted run bit for bit.

inline constexpr const char* kCheckpointMagic = "HGCKPT1";

namespace detail {

template <typename S>
const char* dtype_tag() {
  static_assert(sizeof(S) == 4 || sizeof(S) == 8, "unsupported scalar");
  return sizeof(S) == 4 ? "f32" : "f64";
}

inline nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"channels", c.channels},
          {"image_size", c.image_size},
          {"batch_size", c.batch_size},
          {"total_iterations", c.total_iterations},
          {"decay_iterations", c.decay_iterations},
          {"base_lr", c.base_lr},
          {"critic_steps_per_gen", c.critic_steps_per_gen},
          {"width_scale", c.width_scale},
          {"critic_depth", c.critic_depth},
          {"seed", c.seed},
          {"adv_healthy_path", c.adv_healthy_path},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"lambda_gp", c.lambda_gp},
          {"lambda_rec", c.lambda_rec},
          {"lambda_id", c.lambda_id},
          {"lambda_f", c.lambda_f},
          {"lambda_fs", c.lambda_fs},
          {"lambda_fz", c.lambda_fz},
          {"focus_eps", c.focus_eps}};
}

inline TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.channels = j.at("channels").get<Index>();
  c.image_size = j.at("image_size").get<Index>();
  c.batch_size = j.at("batch_size").get<Index>();
  c.total_iterations = j.at("total_iterations").get<long long>();
  c.decay_iterations = j.at("decay_iterations").get<long long>();
  c.base_lr = j.at("base_lr").get<double>();
  c.critic_steps_per_gen = j.at("critic_steps_per_gen").get<int>();
  c.width_scale = j.at("width_scale").get<double>();
  c.critic_depth = j.at("critic_depth").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.adv_healthy_path = j.at("adv_healthy_path").get<bool>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.lambda_gp = j.at("lambda_gp").get<double>();
  c.lambda_rec = j.at("lambda_rec").get<double>();
  c.lambda_id = j.at("lambda_id").get<double>();
  c.lambda_f = j.at("lambda_f").get<double>();
  c.lambda_fs = j.at("lambda_fs").get<double>();
  c.lambda_fz = j.at("lambda_fz").get<double>();
  c.focus_eps = j.at("focus_eps").get<double>();
  return c;
}

template <typename S>
struct ArrayRef {
  std::string name;
  Tensor<S>* tensor;
};

/// Every serialized array of the state, in a fixed deterministic order.
template <typename S>
std::vector<ArrayRef<S>> state_arrays(TrainState<S>& st) {
  std::vector<ArrayRef<S>> refs;
  auto add_group = [&](ParamList<S>& params, Adam<S>& opt) {
    for (size_t i = 0; i < params.size(); ++i) {
      refs.push_back({"param." + params[i].name, &params[i].var.value()});
      refs.push_back({"m." + params[i].name, &opt.moment1(i)});
      refs.push_back({"v." + params[i].name, &opt.moment2(i)});
    }
  };
  add_group(st.gen.params(), st.gen_opt);
  add_group(st.critic.params(), st.critic_opt);
  return refs;
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::string& path, TrainState<S>& state) {
  auto refs = detail::state_arrays(state);

  nlohmann::json header;
  header["version"] = 1;
  header["dtype"] = detail::dtype_tag<S>();
  header["iteration"] = state.iteration;
  header["gen_adam_t"] = state.gen_opt.step_count();
  header["critic_adam_t"] = state.critic_opt.step_count();
  header["rng_data"] = state.data_rng.serialize();
  header["rng_gp"] = state.gp_rng.serialize();
  header["config"] = detail::config_to_json(state.cfg);
  nlohmann::json arrays = nlohmann::json::array();
  for (const auto& r : refs) {
    nlohmann::json a;
    a["name"] = r.name;
    a["shape"] = r.tensor->shape;
    arrays.push_back(a);
  }
  header["arrays"] = arrays;
  const std::string header_str = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp + " for writing");
    out << kCheckpointMagic << '\n' << header_str.size() << '\n' << header_str;
    for (const auto& r : refs)
      out.write(reinterpret_cast<const char*>(r.tensor->ptr()),
                static_cast<std::streamsize>(sizeof(S) * r.tensor->numel()));
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename S>
TrainState<S> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::string len_line;
  std::getline(in, len_line);
  const size_t header_len = std::stoull(len_line);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
  const nlohmann::json header = nlohmann::json::parse(header_str);

  if (header.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  if (header.at("dtype").get<std::string>() != detail::dtype_tag<S>())
    throw std::runtime_error("checkpoint: dtype is " + header.at("dtype").get<std::string>() +
                             ", expected " + detail::dtype_tag<S>());

  TrainConfig cfg = detail::config_from_json(header.at("config"));
  TrainState<S> st = make_train_state<S>(cfg);
  st.iteration = header.at("iteration").get<long long>();
  st.gen_opt.set_step_count(header.at("gen_adam_t").get<long long>());
  st.critic_opt.set_step_count(header.at("critic_adam_t").get<long long>());
  st.data_rng.deserialize(header.at("rng_data").get<std::string>());
  st.gp_rng.deserialize(header.at("rng_gp").get<std::string>());

  auto refs = detail::state_arrays(st);
  const auto& arrays = header.at("arrays");
  if (arrays.size() != refs.size())
    throw std::runtime_error("checkpoint: array count mismatch in " + path);
  for (size_t i = 0; i < refs.size(); ++i) {
    const auto& a = arrays.at(i);
    if (a.at("name").get<std::string>() != refs[i].name)
      throw std::runtime_error("checkpoint: array order mismatch at " +
                               a.at("name").get<std::string>());
    const Shape sh = a.at("shape").get<Shape>();
    if (!same_shape(sh, refs[i].tensor->shape))
      throw std::runtime_error("checkpoint: shape mismatch for " + refs[i].name);
    in.read(reinterpret_cast<char*>(refs[i].tensor->ptr()),
            static_cast<std::streamsize>(sizeof(S) * refs[i].tensor->numel()));
  }
  if (!in) throw std::runtime_error("checkpoint: truncated payload in " + path);
  return st;
}

/// Loads and cross-checks the architecture fields against what the caller
/// expects, so a checkpoint trained at another size or width fails loudly
/// instead of producing a silently different model.
template <typename S>
TrainState<S> load_checkpoint(const std::string& path, const TrainConfig& expected) {
  TrainState<S> st = load_checkpoint<S>(path);
  auto mismatch = [&](const char* field, auto stored, auto wanted) {
    std::ostringstream os;
    os << "checkpoint: " << field << " mismatch in " << path << " (checkpoint has " << stored
       << ", run expects " << wanted << ")";
    throw std::runtime_error(os.str());
  };
  if (st.cfg.image_size != expected.image_size)
    mismatch("image_size", st.cfg.image_size, expected.image_size);
  if (st.cfg.channels != expected.channels) mismatch("channels", st.cfg.channels, expected.channels);
  if (st.cfg.width_scale != expected.width_scale)
    mismatch("width_scale", st.cfg.width_scale, expected.width_scale);
  if (st.cfg.critic_depth != expected.critic_depth)
    mismatch("critic_depth", st.cfg.critic_depth, expected.critic_depth);
  return st;
}

/// Architecture metadata without the payload, for cheap inspection.
inline nlohmann::json read_checkpoint_header(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  std::string magic, len_line;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
  std::getline(in, len_line);
  const size_t header_len = std::stoull(len_line);
  std::string header_str(header_len, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);
  return nlohmann::json::parse(header_str);
}

}  // namespace healthygan
