#pragma once

// Flat key = value configuration with [sections]. Unknown keys are an
// error; every field has a documented default and the effective config is
// serialized into each run's output directory.

#include "gsav/pipeline/avatar.hpp"
#include "gsav/train/trainer.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace gsav {

struct Config {
  // [run]
  std::string dataset;      // dataset directory
  std::string out;          // output directory
  std::uint64_t seed = 0;

  // [template]
  double beta0 = 0, beta1 = 0, beta2 = 0, beta3 = 0;  // puppet shape params

  // [maps]
  int body_map_res = 48;
  int face_map_res = 24;
  int densify_factor = 2;

  // [decoder]
  int n_mlp = 2;
  int cm = 1;
  int pe_bands = 4;
  int pose_embed_dim = 16;

  // [schedule]
  int pretrain_steps = 500;
  int joint_steps = 5000;
  int face_steps = 500;
  double lr_decoders = 5e-4;
  double lr_attrs = 5e-3;
  int crop_size = 64;

  // [loss]
  double w_l1 = 1.0;
  double w_perceptual = 0.1;
  double w_offset = 5e-3;
  double w_adversarial = 5e-3;
  double w_face_crop = 0.02;

  // [synth]
  int synth_views = 8;
  int synth_frames = 30;
  int synth_image_size = 128;

  Eigen::VectorXd beta() const {
    Eigen::VectorXd b(4);
    b << beta0, beta1, beta2, beta3;
    return b;
  }

  AvatarConfig avatar_config() const {
    AvatarConfig a;
    a.body_map_res = body_map_res;
    a.face_map_res = face_map_res;
    a.densify_factor = densify_factor;
    a.n_mlp = n_mlp;
    a.cm = cm;
    a.pe_bands = pe_bands;
    a.pose_embed_dim = pose_embed_dim;
    return a;
  }

  TrainSchedule schedule() const {
    TrainSchedule s;
    s.pretrain_steps = pretrain_steps;
    s.joint_steps = joint_steps;
    s.face_steps = face_steps;
    s.lr_decoders = lr_decoders;
    s.lr_attrs = lr_attrs;
    s.seed = seed;
    s.crop_size = crop_size;
    return s;
  }

  LossWeights loss_weights() const { return {w_l1, w_perceptual, w_offset, w_adversarial, w_face_crop}; }
};

namespace detail {

struct ConfigField {
  std::function<void(Config&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

inline std::map<std::string, ConfigField> config_fields() {
  std::map<std::string, ConfigField> f;
  auto str = [&](const std::string& key, std::string Config::*mem) {
    f[key] = {[mem](Config& c, const std::string& v) { c.*mem = v; },
              [mem](const Config& c) { return c.*mem; }};
  };
  auto num = [&](const std::string& key, auto Config::*mem) {
    f[key] = {[mem](Config& c, const std::string& v) {
                std::istringstream is(v);
                if (!(is >> c.*mem)) throw std::runtime_error("config: bad value for " + std::string());
              },
              [mem](const Config& c) {
                std::ostringstream os;
                os << std::setprecision(17) << c.*mem;
                return os.str();
              }};
  };
  str("run.dataset", &Config::dataset);
  str("run.out", &Config::out);
  num("run.seed", &Config::seed);
  num("template.beta0", &Config::beta0);
  num("template.beta1", &Config::beta1);
  num("template.beta2", &Config::beta2);
  num("template.beta3", &Config::beta3);
  num("maps.body_map_res", &Config::body_map_res);
  num("maps.face_map_res", &Config::face_map_res);
  num("maps.densify_factor", &Config::densify_factor);
  num("decoder.n_mlp", &Config::n_mlp);
  num("decoder.cm", &Config::cm);
  num("decoder.pe_bands", &Config::pe_bands);
  num("decoder.pose_embed_dim", &Config::pose_embed_dim);
  num("schedule.pretrain_steps", &Config::pretrain_steps);
  num("schedule.joint_steps", &Config::joint_steps);
  num("schedule.face_steps", &Config::face_steps);
  num("schedule.lr_decoders", &Config::lr_decoders);
  num("schedule.lr_attrs", &Config::lr_attrs);
  num("schedule.crop_size", &Config::crop_size);
  num("loss.l1", &Config::w_l1);
  num("loss.perceptual", &Config::w_perceptual);
  num("loss.offset", &Config::w_offset);
  num("loss.adversarial", &Config::w_adversarial);
  num("loss.face_crop", &Config::w_face_crop);
  num("synth.views", &Config::synth_views);
  num("synth.frames", &Config::synth_frames);
  num("synth.image_size", &Config::synth_image_size);
  return f;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline Config parse_config(std::istream& is) {
  const auto fields = detail::config_fields();
  Config c;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key =
        (section.empty() ? "" : section + ".") + detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    const auto it = fields.find(key);
    if (it == fields.end())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": unknown key '" + key +
                               "'");
    try {
      it->second.set(c, value);
    } catch (const std::exception&) {
      throw std::runtime_error("config line " + std::to_string(lineno) + ": bad value for '" +
                               key + "'");
    }
  }
  return c;
}

inline Config load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("config: cannot open " + path.string());
  return parse_config(is);
}

inline void save_config(const Config& c, std::ostream& os) {
  const auto fields = detail::config_fields();
  std::string section;
  for (const auto& [key, field] : fields) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      section = sec;
      os << "[" << section << "]\n";
    }
    os << key.substr(dot + 1) << " = " << field.get(c) << "\n";
  }
}

inline void save_config(const Config& c, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("config: cannot open " + path.string());
  save_config(c, os);
}

}  // namespace gsav
