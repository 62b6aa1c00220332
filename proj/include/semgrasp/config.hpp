// Run configuration: a flat `key = value` text format with typed values.
// Unknown keys are hard errors so mistyped ablation switches cannot silently
// fall back to defaults.
#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "semgrasp/network.hpp"

namespace semgrasp {

struct RunConfig {
  std::string train_dir;
  std::string eval_dir;
  std::string out_dir = "out";

  std::string input_mode = "rgb";    // rgb | rgd
  std::string grasp_feature = "C3";  // F3 | C2 | C3 | C4
  bool use_feature_filtering = true;
  bool use_feature_fusion = true;
  std::array<int, 5> channels{16, 32, 64, 64, 64};
  int seg_hidden = 16;
  int grasp_hidden = 24;
  int min_component_area = 64;

  double alpha = 0.5;
  double lambda_neg = 0.1;
  int epochs = 100;
  int batch_size = 1;
  double learning_rate = 1e-4;
  double lr_decay_per_epoch = 8e-5;

  std::uint64_t seed = 0;
  bool deterministic = true;
  int image_size = 480;
  bool use_augmentation = false;
  bool teacher_force_masks = true;  // ground-truth masks feed the filter in training
  bool eval_use_gt_masks = false;   // teacher-forced evaluation
};

namespace detail {

inline std::string trim(const std::string& s) {
  const size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: key '" + key + "' expects a boolean, got '" + v + "'");
}

template <class T>
T parse_num(const std::string& v, const std::string& key) {
  std::istringstream ss(v);
  T out;
  ss >> out;
  if (ss.fail() || !ss.eof())
    throw std::runtime_error("config: key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

inline std::array<int, 5> parse_channels(const std::string& v, const std::string& key) {
  std::array<int, 5> out{};
  std::istringstream ss(v);
  std::string tok;
  int i = 0;
  while (std::getline(ss, tok, ',')) {
    if (i >= 5) throw std::runtime_error("config: key '" + key + "' expects 5 values");
    out[i++] = parse_num<int>(trim(tok), key);
  }
  if (i != 5) throw std::runtime_error("config: key '" + key + "' expects 5 values");
  return out;
}

}  // namespace detail

inline void validate_config(const RunConfig& c) {
  if (c.input_mode != "rgb" && c.input_mode != "rgd")
    throw std::runtime_error("config: input_mode must be rgb or rgd");
  try {
    grasp_feature_from_string(c.grasp_feature);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("config: ") + e.what());
  }
  if (c.epochs < 1) throw std::runtime_error("config: epochs must be >= 1");
  if (c.batch_size < 1) throw std::runtime_error("config: batch_size must be >= 1");
  if (!(c.alpha > 0.0)) throw std::runtime_error("config: alpha must be > 0");
  if (c.lambda_neg < 0.0) throw std::runtime_error("config: lambda_neg must be >= 0");
  if (!(c.learning_rate > 0.0)) throw std::runtime_error("config: learning_rate must be > 0");
  if (c.lr_decay_per_epoch < 0.0)
    throw std::runtime_error("config: lr_decay_per_epoch must be >= 0");
  if (c.image_size < 160 || c.image_size % 32)
    throw std::runtime_error("config: image_size must be a multiple of 32, at least 160");
  for (int ch : c.channels)
    if (ch < 1) throw std::runtime_error("config: channels must be positive");
}

inline RunConfig parse_config_text(const std::string& text) {
  RunConfig c;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config: line " + std::to_string(line_no) +
                               " is not 'key = value'");
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));

    if (key == "train_dir") c.train_dir = val;
    else if (key == "eval_dir") c.eval_dir = val;
    else if (key == "out_dir") c.out_dir = val;
    else if (key == "input_mode") c.input_mode = val;
    else if (key == "grasp_feature") c.grasp_feature = val;
    else if (key == "use_feature_filtering") c.use_feature_filtering = detail::parse_bool(val, key);
    else if (key == "use_feature_fusion") c.use_feature_fusion = detail::parse_bool(val, key);
    else if (key == "channels") c.channels = detail::parse_channels(val, key);
    else if (key == "seg_hidden") c.seg_hidden = detail::parse_num<int>(val, key);
    else if (key == "grasp_hidden") c.grasp_hidden = detail::parse_num<int>(val, key);
    else if (key == "min_component_area") c.min_component_area = detail::parse_num<int>(val, key);
    else if (key == "alpha") c.alpha = detail::parse_num<double>(val, key);
    else if (key == "lambda_neg") c.lambda_neg = detail::parse_num<double>(val, key);
    else if (key == "epochs") c.epochs = detail::parse_num<int>(val, key);
    else if (key == "batch_size") c.batch_size = detail::parse_num<int>(val, key);
    else if (key == "learning_rate") c.learning_rate = detail::parse_num<double>(val, key);
    else if (key == "lr_decay_per_epoch") c.lr_decay_per_epoch = detail::parse_num<double>(val, key);
    else if (key == "seed") c.seed = detail::parse_num<std::uint64_t>(val, key);
    else if (key == "deterministic") c.deterministic = detail::parse_bool(val, key);
    else if (key == "image_size") c.image_size = detail::parse_num<int>(val, key);
    else if (key == "use_augmentation") c.use_augmentation = detail::parse_bool(val, key);
    else if (key == "teacher_force_masks") c.teacher_force_masks = detail::parse_bool(val, key);
    else if (key == "eval_use_gt_masks") c.eval_use_gt_masks = detail::parse_bool(val, key);
    else throw std::runtime_error("config: unknown key '" + key + "'");
  }
  validate_config(c);
  return c;
}

inline RunConfig parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read config file " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

/// Everything a run needs to be reproduced; embedded in checkpoints and run
/// manifests.
inline nlohmann::json config_echo(const RunConfig& c) {
  return {{"train_dir", c.train_dir},
          {"eval_dir", c.eval_dir},
          {"out_dir", c.out_dir},
          {"input_mode", c.input_mode},
          {"grasp_feature", c.grasp_feature},
          {"use_feature_filtering", c.use_feature_filtering},
          {"use_feature_fusion", c.use_feature_fusion},
          {"channels", c.channels},
          {"seg_hidden", c.seg_hidden},
          {"grasp_hidden", c.grasp_hidden},
          {"min_component_area", c.min_component_area},
          {"alpha", c.alpha},
          {"lambda_neg", c.lambda_neg},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"lr_decay_per_epoch", c.lr_decay_per_epoch},
          {"seed", c.seed},
          {"deterministic", c.deterministic},
          {"image_size", c.image_size},
          {"use_augmentation", c.use_augmentation},
          {"teacher_force_masks", c.teacher_force_masks},
          {"eval_use_gt_masks", c.eval_use_gt_masks}};
}

inline NetConfig to_net_config(const RunConfig& c, int num_categories) {
  NetConfig n;
  n.channels = c.channels;
  n.num_categories = num_categories;
  n.grasp_feature = grasp_feature_from_string(c.grasp_feature);
  n.feature_fusion = c.use_feature_fusion;
  n.feature_filtering = c.use_feature_filtering;
  n.seg_hidden = c.seg_hidden;
  n.grasp_hidden = c.grasp_hidden;
  n.min_component_area = c.min_component_area;
  return n;
}

}  // namespace semgrasp
