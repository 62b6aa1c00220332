// semgrasp command line: dataset conversion and synthesis, training,
// evaluation and prediction. Exit codes: 0 success, 2 usage error, 1 runtime
// failure.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <opencv2/imgproc.hpp>

#include "semgrasp/checkpoint.hpp"
#include "semgrasp/config.hpp"
#include "semgrasp/data.hpp"
#include "semgrasp/detail/sha1.hpp"
#include "semgrasp/evaluation.hpp"
#include "semgrasp/overlay.hpp"
#include "semgrasp/synth.hpp"
#include "semgrasp/trainer.hpp"

namespace fs = std::filesystem;
using namespace semgrasp;

namespace {

std::string file_sha1(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path.string());
  detail::Sha1 h;
  char buf[8192];
  while (f.read(buf, sizeof buf) || f.gcount() > 0) h.update(buf, f.gcount());
  return h.hex_digest();
}

void write_run_manifest(const fs::path& out_dir, const RunConfig& cfg,
                        const fs::path& dataset_manifest) {
  nlohmann::json j;
  j["config"] = config_echo(cfg);
  j["seed"] = cfg.seed;
  j["dataset_manifest"] = dataset_manifest.string();
  j["dataset_manifest_sha1"] = file_sha1(dataset_manifest);
  std::ofstream f(out_dir / "run_manifest.json");
  f << j.dump(2) << "\n";
}

nlohmann::json detections_json(const std::string& image_id,
                               const std::vector<Detection>& dets,
                               const std::vector<std::string>& names) {
  nlohmann::json j;
  j["image"] = image_id;
  j["detections"] = nlohmann::json::array();
  for (const Detection& d : dets) {
    const std::string name = d.category_id >= 0 && d.category_id < static_cast<int>(names.size())
                                 ? names[d.category_id]
                                 : "";
    j["detections"].push_back({{"category_id", d.category_id},
                               {"category_name", name},
                               {"confidence", d.confidence},
                               {"grasp",
                                {{"x", d.grasp.x},
                                 {"y", d.grasp.y},
                                 {"theta", d.grasp.theta},
                                 {"w", d.grasp.w},
                                 {"h", d.grasp.h}}}});
  }
  return j;
}

// Scale so the short side matches `size`, then center-crop to size x size.
ImageU8 fit_to_frame(const ImageU8& in, int size) {
  cv::Mat m(in.h, in.w, CV_8UC3, const_cast<std::uint8_t*>(in.v.data()));
  const double scale = static_cast<double>(size) / std::min(in.h, in.w);
  cv::Mat scaled;
  cv::resize(m, scaled, cv::Size(), scale, scale, cv::INTER_LINEAR);
  const int x0 = (scaled.cols - size) / 2, y0 = (scaled.rows - size) / 2;
  cv::Mat crop = scaled(cv::Rect(x0, y0, size, size)).clone();
  ImageU8 out(size, size, 3);
  std::memcpy(out.v.data(), crop.data, out.v.size());
  return out;
}

ImageU16 fit_depth_to_frame(const ImageU16& in, int size) {
  cv::Mat m(in.h, in.w, CV_16UC1, const_cast<std::uint16_t*>(in.v.data()));
  const double scale = static_cast<double>(size) / std::min(in.h, in.w);
  cv::Mat scaled;
  cv::resize(m, scaled, cv::Size(), scale, scale, cv::INTER_NEAREST);
  const int x0 = (scaled.cols - size) / 2, y0 = (scaled.rows - size) / 2;
  cv::Mat crop = scaled(cv::Rect(x0, y0, size, size)).clone();
  ImageU16 out(size, size, 1);
  std::memcpy(out.v.data(), crop.data, out.v.size() * sizeof(std::uint16_t));
  return out;
}

int cmd_convert(const std::string& cornell_dir, const std::string& out_dir) {
  const CornellParseResult parsed = parse_cornell(cornell_dir);
  if (parsed.samples.empty())
    throw std::runtime_error("convert: no usable Cornell samples in " + cornell_dir);
  fs::create_directories(out_dir);

  DatasetManifest manifest;
  manifest.split = "train";
  for (const SceneSample& s : parsed.samples)
    for (const ObjectAnnotation& o : s.objects) {
      if (o.category_id >= static_cast<int>(manifest.category_names.size()))
        manifest.category_names.resize(o.category_id + 1);
      manifest.category_names[o.category_id] = o.category_name;
    }
  for (const SceneSample& s : parsed.samples) {
    SceneSample copy = s;
    copy.image_relpath = s.source_id + ".png";
    const std::string json_name = s.source_id + ".json";
    save_scene_json(copy, fs::path(out_dir) / json_name);
    manifest.samples.push_back(json_name);
  }
  save_manifest(manifest, fs::path(out_dir) / "manifest.json");

  std::cout << "images:            " << parsed.stats.images << "\n"
            << "grasp rectangles:  " << parsed.stats.grasps << "\n"
            << "nan rects skipped: " << parsed.stats.nan_rects_skipped << "\n"
            << "samples skipped:   " << parsed.stats.samples_skipped << "\n"
            << "mask sidecars:     " << parsed.stats.mask_sidecars << "\n";
  return 0;
}

int cmd_synth(std::uint64_t seed, int count, const std::string& objects_range, int size,
              bool clutter, const std::string& out_dir) {
  int obj_min = 1, obj_max = 1;
  if (const size_t dash = objects_range.find('-'); dash != std::string::npos) {
    obj_min = std::stoi(objects_range.substr(0, dash));
    obj_max = std::stoi(objects_range.substr(dash + 1));
  } else {
    obj_min = obj_max = std::stoi(objects_range);
  }
  if (obj_min < 1 || obj_max > 5 || obj_min > obj_max)
    throw CLI::ValidationError("--objects", "expected a count or range within [1, 5]");

  fs::create_directories(out_dir);
  DatasetManifest manifest;
  manifest.split = "train";
  manifest.category_names = synth_categories();
  Rng rng = Rng(seed).derive(0x73796eu);
  for (int i = 0; i < count; ++i) {
    const int n = rng.uniform_int(obj_min, obj_max);
    SceneSample s = synth_scene(seed + static_cast<std::uint64_t>(i) * 7919u, n,
                                {.size = size, .clutter = clutter});
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04d", i);
    s.image_relpath = std::string(name) + ".png";
    save_scene_json(s, fs::path(out_dir) / (std::string(name) + ".json"));
    manifest.samples.push_back(std::string(name) + ".json");
  }
  save_manifest(manifest, fs::path(out_dir) / "manifest.json");
  std::cout << "wrote " << count << " scenes to " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  DatasetManifest manifest;
  const std::vector<SceneSample> scenes = load_dataset(cfg.train_dir, &manifest);
  if (!cfg.eval_dir.empty() && fs::exists(fs::path(cfg.eval_dir) / "manifest.json"))
    require_disjoint_splits(cfg.train_dir, cfg.eval_dir);
  fs::create_directories(cfg.out_dir);

  GraspNet net(to_net_config(cfg, static_cast<int>(manifest.category_names.size())), cfg.seed);
  const TrainStats stats = train_model(net, cfg, scenes, &std::cout,
                                       (fs::path(cfg.out_dir) / "loss.csv").string());

  nlohmann::json meta;
  meta["config"] = config_echo(cfg);
  meta["categories"] = manifest.category_names;
  save_checkpoint((fs::path(cfg.out_dir) / "checkpoint.bin").string(), meta, net.params());
  write_run_manifest(cfg.out_dir, cfg, fs::path(cfg.train_dir) / "manifest.json");
  std::cout << "final total loss " << stats.epoch_means.back().total << "\n"
            << "checkpoint: " << (fs::path(cfg.out_dir) / "checkpoint.bin").string() << "\n";
  return 0;
}

// The checkpoint's config echo must agree with the requested config on every
// field that shapes the network.
void check_compatibility(const nlohmann::json& echo, const RunConfig& cfg) {
  const nlohmann::json want = config_echo(cfg);
  for (const char* key : {"channels", "grasp_feature", "use_feature_fusion",
                          "use_feature_filtering", "seg_hidden", "grasp_hidden",
                          "image_size", "input_mode"}) {
    if (echo.at(key) != want.at(key))
      throw std::runtime_error(std::string("checkpoint/config mismatch on field '") + key +
                               "': checkpoint has " + echo.at(key).dump() + ", config has " +
                               want.at(key).dump());
  }
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint_path, bool with_sweep) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  check_compatibility(ckpt.meta.at("config"), cfg);
  const std::vector<std::string> names = ckpt.meta.at("categories");

  DatasetManifest manifest;
  const std::vector<SceneSample> scenes = load_dataset(cfg.eval_dir, &manifest);
  if (manifest.category_names.size() != names.size())
    throw std::runtime_error("checkpoint/config mismatch on field 'categories'");

  GraspNet net(to_net_config(cfg, static_cast<int>(names.size())), cfg.seed);
  load_weights(ckpt, net.params());

  const auto detections = predict_dataset(net, cfg, scenes);
  const EvalResult result = evaluate(detections, scenes);
  std::optional<SweepTable> table;
  if (with_sweep) table = sweep(detections, scenes);

  fs::create_directories(cfg.out_dir);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "report.json");
    f << eval_report_json(result, table).dump(2) << "\n";
  }
  const std::string text = eval_report_text(result, table);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "report.txt");
    f << text;
  }
  write_run_manifest(cfg.out_dir, cfg, fs::path(cfg.eval_dir) / "manifest.json");
  std::cout << text;
  return 0;
}

int cmd_predict(const std::string& image_path, const std::string& checkpoint_path,
                bool overlay, const std::string& out_dir) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_path);
  const nlohmann::json& echo = ckpt.meta.at("config");
  RunConfig cfg;
  cfg.input_mode = echo.at("input_mode");
  cfg.grasp_feature = echo.at("grasp_feature");
  cfg.use_feature_filtering = echo.at("use_feature_filtering");
  cfg.use_feature_fusion = echo.at("use_feature_fusion");
  cfg.channels = echo.at("channels");
  cfg.seg_hidden = echo.at("seg_hidden");
  cfg.grasp_hidden = echo.at("grasp_hidden");
  cfg.min_component_area = echo.at("min_component_area");
  cfg.image_size = echo.at("image_size");
  const std::vector<std::string> names = ckpt.meta.at("categories");

  GraspNet net(to_net_config(cfg, static_cast<int>(names.size())), 0);
  load_weights(ckpt, net.params());

  const ImageU8 frame = fit_to_frame(load_rgb(image_path), cfg.image_size);
  SceneSample sample;
  sample.image = frame;
  sample.source_id = fs::path(image_path).stem().string();
  if (cfg.input_mode == "rgd") {
    fs::path dpath(image_path);
    dpath.replace_extension();
    dpath += "_depth.png";
    if (!fs::exists(dpath))
      throw std::runtime_error("rgd checkpoint needs a depth sidecar: " + dpath.string());
    sample.depth = fit_depth_to_frame(load_depth16(dpath.string()), cfg.image_size);
  }
  const std::vector<Detection> dets =
      predict_scene(net, to_input_tensor(sample, cfg.input_mode));

  const nlohmann::json record = detections_json(sample.source_id, dets, names);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / (sample.source_id + "_prediction.json"));
    f << record.dump(2) << "\n";
  }
  std::cout << record.dump(2) << "\n";

  if (overlay) {
    const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
    fs::create_directories(dir);
    const ImageU8 rendered = render_overlay(frame, dets, names);
    save_rgb(rendered, (dir / (sample.source_id + "_overlay.png")).string());
    std::cout << "overlay: " << (dir / (sample.source_id + "_overlay.png")).string() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic grasp detection toolkit"};
  app.require_subcommand(1);

  std::string cornell_dir, out_dir, config_path, checkpoint_path, image_path;
  std::string objects_range = "1";
  std::uint64_t seed = 0;
  bool seed_set = false, deterministic_flag = false, with_sweep = false, overlay = false;
  bool clutter = false;
  int count = 8, size = kFrameSize;

  CLI::App* convert = app.add_subcommand("convert", "Cornell directory to scene JSON dataset");
  convert->add_option("cornell_dir", cornell_dir, "Cornell-layout input directory")->required();
  convert->add_option("--out", out_dir, "output dataset directory")->required();

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic scene dataset");
  synth->add_option("--seed", seed, "master seed");
  synth->add_option("--count", count, "number of scenes")->check(CLI::PositiveNumber);
  synth->add_option("--objects", objects_range, "objects per scene, count or min-max range");
  synth->add_option("--size", size, "frame size (multiple of 32)");
  synth->add_flag("--clutter", clutter, "draw unlabeled distractor shapes");
  synth->add_option("--out", out_dir, "output dataset directory")->required();

  CLI::App* train = app.add_subcommand("train", "train a model from a config file");
  train->add_option("--config", config_path, "run config file")->required();
  auto* train_seed = train->add_option("--seed", seed, "override config seed");
  train->add_flag("--deterministic", deterministic_flag, "force deterministic mode");
  train->add_option("--out", out_dir, "override config out_dir");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint with the rectangle metric");
  eval->add_option("--config", config_path, "run config file")->required();
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint archive")->required();
  eval->add_flag("--sweep", with_sweep, "sweep IoU and angle thresholds");
  eval->add_option("--out", out_dir, "override config out_dir");

  CLI::App* predict = app.add_subcommand("predict", "predict grasps for one image");
  predict->add_option("image", image_path, "input image")->required();
  predict->add_option("--checkpoint", checkpoint_path, "checkpoint archive")->required();
  predict->add_flag("--overlay", overlay, "write a PNG overlay next to the prediction");
  predict->add_option("--out", out_dir, "output directory (default: stdout only)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  seed_set = train_seed->count() > 0;

  try {
    if (convert->parsed()) return cmd_convert(cornell_dir, out_dir);
    if (synth->parsed()) return cmd_synth(seed, count, objects_range, size, clutter, out_dir);
    if (train->parsed() || eval->parsed()) {
      RunConfig cfg = parse_config_file(config_path);
      if (seed_set) cfg.seed = seed;
      if (deterministic_flag) cfg.deterministic = true;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      return train->parsed() ? cmd_train(cfg) : cmd_eval(cfg, checkpoint_path, with_sweep);
    }
    if (predict->parsed()) return cmd_predict(image_path, checkpoint_path, overlay, out_dir);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
