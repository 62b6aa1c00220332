// Rectangle-metric scoring: per-object evaluation, threshold sweeps over the
// Jaccard/angle axes, and the max-min variability statistic, plus JSON/text
// report rendering.
#pragma once

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "semgrasp/data.hpp"
#include "semgrasp/geometry.hpp"
#include "semgrasp/network.hpp"

namespace semgrasp {

struct MatchRecord {
  int sample_index = 0;
  int object_index = 0;
  bool correct = false;
  int matched_grasp = -1;  // index into the object's ground-truth grasps
};

/// One evaluation unit is a ground-truth object; single-object datasets
/// therefore reduce to per-image accuracy.
struct EvalResult {
  int n_samples = 0;
  int n_correct = 0;
  double accuracy = 0.0;
  std::vector<MatchRecord> records;
};

namespace detail {

// Pairs a detection with a ground-truth object. Teacher-forced detections
// carry the object index; otherwise the predicted grasp center must fall
// inside the object's mask and the categories must agree.
inline bool detection_pairs_with(const Detection& det, int object_index,
                                 const ObjectAnnotation& obj, const BitMask& mask) {
  if (det.object_index >= 0) return det.object_index == object_index;
  if (det.category_id != obj.category_id) return false;
  const int px = static_cast<int>(det.grasp.x);
  const int py = static_cast<int>(det.grasp.y);
  if (px < 0 || px >= mask.w || py < 0 || py >= mask.h) return false;
  return mask.at(py, px) != 0;
}

}  // namespace detail

inline EvalResult evaluate(const std::vector<std::vector<Detection>>& detections,
                           const std::vector<SceneSample>& gts,
                           double iou_min = 0.25, double angle_max = 30.0) {
  if (detections.size() != gts.size())
    throw std::invalid_argument("evaluate: detections not aligned with samples");
  EvalResult out;
  for (size_t s = 0; s < gts.size(); ++s) {
    const SceneSample& scene = gts[s];
    for (size_t k = 0; k < scene.objects.size(); ++k) {
      const ObjectAnnotation& obj = scene.objects[k];
      const BitMask mask = rasterize_mask(obj.mask, scene.image.h, scene.image.w);
      MatchRecord rec;
      rec.sample_index = static_cast<int>(s);
      rec.object_index = static_cast<int>(k);
      for (const Detection& det : detections[s]) {
        if (!detail::detection_pairs_with(det, static_cast<int>(k), obj, mask)) continue;
        for (size_t g = 0; g < obj.grasps.size(); ++g)
          if (is_match(det.grasp, obj.grasps[g], iou_min, angle_max)) {
            rec.correct = true;
            rec.matched_grasp = static_cast<int>(g);
            break;
          }
        if (rec.correct) break;
      }
      out.n_correct += rec.correct;
      ++out.n_samples;
      out.records.push_back(rec);
    }
  }
  out.accuracy = out.n_samples ? static_cast<double>(out.n_correct) / out.n_samples : 0.0;
  return out;
}

struct SweepRow {
  double iou = 0.0;
  double angle = 0.0;
  double accuracy = 0.0;
};

/// Cross product of the threshold lists. Variability is reported per axis:
/// across the IoU list at the standard angle rule, and across the angle list
/// at the standard IoU rule.
struct SweepTable {
  std::vector<SweepRow> rows;  // iou-major, angle-minor order
  double variability_iou_axis = 0.0;
  double variability_angle_axis = 0.0;
};

/// Max minus min of a list of accuracies (percent in, percent out).
inline double variability(const std::vector<double>& accuracies) {
  if (accuracies.empty()) throw std::invalid_argument("variability: empty list");
  const auto [lo, hi] = std::minmax_element(accuracies.begin(), accuracies.end());
  return *hi - *lo;
}

/// The one-decimal figure the variability statistic is reported at.
inline double variability_reported(const std::vector<double>& accuracies) {
  return std::round(variability(accuracies) * 10.0) / 10.0;
}

inline SweepTable sweep(const std::vector<std::vector<Detection>>& detections,
                        const std::vector<SceneSample>& gts,
                        const std::vector<double>& iou_list = {0.20, 0.25, 0.30, 0.35},
                        const std::vector<double>& angle_list = {10.0, 20.0, 30.0},
                        double iou_axis_angle = 30.0, double angle_axis_iou = 0.25) {
  SweepTable out;
  for (const double iou : iou_list)
    for (const double angle : angle_list) {
      const EvalResult r = evaluate(detections, gts, iou, angle);
      out.rows.push_back({iou, angle, r.accuracy});
    }

  // nested predicates make both axes monotone; violations are logic errors
  for (size_t a = 0; a < angle_list.size(); ++a)
    for (size_t i = 0; i + 1 < iou_list.size(); ++i)
      if (out.rows[i * angle_list.size() + a].accuracy <
          out.rows[(i + 1) * angle_list.size() + a].accuracy - 1e-12)
        throw std::logic_error("sweep: accuracy increased with a stricter IoU threshold");
  for (size_t i = 0; i < iou_list.size(); ++i)
    for (size_t a = 0; a + 1 < angle_list.size(); ++a)
      if (out.rows[i * angle_list.size() + a].accuracy >
          out.rows[i * angle_list.size() + a + 1].accuracy + 1e-12)
        throw std::logic_error("sweep: accuracy decreased with a looser angle threshold");

  std::vector<double> iou_axis, angle_axis;
  for (const SweepRow& r : out.rows) {
    if (r.angle == iou_axis_angle) iou_axis.push_back(r.accuracy * 100.0);
    if (r.iou == angle_axis_iou) angle_axis.push_back(r.accuracy * 100.0);
  }
  if (!iou_axis.empty()) out.variability_iou_axis = variability_reported(iou_axis);
  if (!angle_axis.empty()) out.variability_angle_axis = variability_reported(angle_axis);
  return out;
}

// ---------------------------------------------------------------------------
// Report rendering

inline nlohmann::json eval_report_json(const EvalResult& r,
                                       const std::optional<SweepTable>& table = {}) {
  nlohmann::json j;
  j["n_samples"] = r.n_samples;
  j["n_correct"] = r.n_correct;
  j["accuracy"] = r.accuracy;
  j["records"] = nlohmann::json::array();
  for (const MatchRecord& m : r.records)
    j["records"].push_back({{"sample", m.sample_index},
                            {"object", m.object_index},
                            {"correct", m.correct},
                            {"matched_grasp", m.matched_grasp}});
  if (table) {
    nlohmann::json rows = nlohmann::json::array();
    for (const SweepRow& row : table->rows)
      rows.push_back({{"iou", row.iou}, {"angle", row.angle}, {"accuracy", row.accuracy}});
    j["sweep"] = {{"rows", rows},
                  {"variability_iou_axis", table->variability_iou_axis},
                  {"variability_angle_axis", table->variability_angle_axis}};
  }
  return j;
}

/// Plain-text table, columns in (iou, angle, accuracy) order.
inline std::string sweep_table_text(const SweepTable& t) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "iou" << std::setw(8) << "angle"
     << "accuracy\n";
  for (const SweepRow& r : t.rows) {
    os << std::left << std::setw(8) << std::fixed << std::setprecision(2) << r.iou
       << std::setw(8) << std::setprecision(0) << r.angle << std::setprecision(4)
       << r.accuracy << "\n";
  }
  os << "variability (iou axis):   " << std::setprecision(1) << t.variability_iou_axis
     << "\n";
  os << "variability (angle axis): " << std::setprecision(1) << t.variability_angle_axis
     << "\n";
  return os.str();
}

inline std::string eval_report_text(const EvalResult& r,
                                    const std::optional<SweepTable>& table = {}) {
  std::ostringstream os;
  os << "objects evaluated: " << r.n_samples << "\n"
     << "correct:           " << r.n_correct << "\n"
     << "accuracy:          " << std::fixed << std::setprecision(4) << r.accuracy << "\n";
  if (table) os << "\n" << sweep_table_text(*table);
  return os.str();
}

}  // namespace semgrasp
