// Detection overlays: grasp rectangles with plate edges distinguished from
// opening edges, plus category and confidence labels.
#pragma once

#include <opencv2/imgproc.hpp>
#include <string>
#include <vector>

#include "semgrasp/image.hpp"
#include "semgrasp/network.hpp"

namespace semgrasp {

/// Corner order matches rect_to_polygon: edges 0-1 and 2-3 are the plate
/// edges (length w), 1-2 and 3-0 span the gripper opening (length h).
inline ImageU8 render_overlay(const ImageU8& image, const std::vector<Detection>& detections,
                              const std::vector<std::string>& category_names) {
  cv::Mat canvas(image.h, image.w, CV_8UC3);
  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x)
      canvas.at<cv::Vec3b>(y, x) =
          cv::Vec3b(image.at(y, x, 2), image.at(y, x, 1), image.at(y, x, 0));  // BGR

  const cv::Scalar plate(0, 0, 255);    // red
  const cv::Scalar opening(255, 160, 0);  // blue-ish
  for (const Detection& det : detections) {
    const QuadGrasp q = rect_to_polygon(det.grasp);
    cv::Point pts[4];
    for (int i = 0; i < 4; ++i)
      pts[i] = cv::Point(static_cast<int>(std::lround(q[i].x)),
                         static_cast<int>(std::lround(q[i].y)));
    cv::line(canvas, pts[0], pts[1], plate, 2);
    cv::line(canvas, pts[2], pts[3], plate, 2);
    cv::line(canvas, pts[1], pts[2], opening, 2);
    cv::line(canvas, pts[3], pts[0], opening, 2);

    const std::string name = det.category_id >= 0 &&
                                     det.category_id < static_cast<int>(category_names.size())
                                 ? category_names[det.category_id]
                                 : "cat" + std::to_string(det.category_id);
    char label[96];
    std::snprintf(label, sizeof label, "%s %.2f", name.c_str(), det.confidence);
    const cv::Point anchor(pts[0].x, std::max(12, pts[0].y - 6));
    cv::putText(canvas, label, anchor, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(255, 255, 255), 1, cv::LINE_AA);
  }

  ImageU8 out(image.h, image.w, 3);
  for (int y = 0; y < image.h; ++y)
    for (int x = 0; x < image.w; ++x) {
      const cv::Vec3b& px = canvas.at<cv::Vec3b>(y, x);
      out.at(y, x, 0) = px[2];
      out.at(y, x, 1) = px[1];
      out.at(y, x, 2) = px[0];
    }
  return out;
}

}  // namespace semgrasp
