// PNG/JPEG encode-decode behind the Image container. OpenCV imgcodecs does
// the codec work; everything stays RGB channel order on our side (OpenCV is
// BGR internally).
#pragma once

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <stdexcept>
#include <string>

#include "semgrasp/image.hpp"

namespace semgrasp {

inline ImageU8 load_rgb(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw std::runtime_error("cannot read image: " + path);
  cv::cvtColor(m, m, cv::COLOR_BGR2RGB);
  ImageU8 out(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    std::copy(row, row + static_cast<size_t>(m.cols) * 3,
              out.v.begin() + static_cast<size_t>(y) * m.cols * 3);
  }
  return out;
}

inline void save_rgb(const ImageU8& img, const std::string& path) {
  if (img.c != 3) throw std::invalid_argument("save_rgb: expected 3 channels");
  cv::Mat m(img.h, img.w, CV_8UC3, const_cast<std::uint8_t*>(img.v.data()));
  cv::Mat bgr;
  cv::cvtColor(m, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw std::runtime_error("cannot write image: " + path);
}

/// 16-bit single-channel PNG, the storage format for depth maps.
inline ImageU16 load_depth16(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw std::runtime_error("cannot read depth image: " + path);
  if (m.type() != CV_16UC1)
    throw std::runtime_error("depth image is not 16-bit single-channel: " + path);
  ImageU16 out(m.rows, m.cols, 1);
  for (int y = 0; y < m.rows; ++y) {
    const std::uint16_t* row = m.ptr<std::uint16_t>(y);
    std::copy(row, row + m.cols, out.v.begin() + static_cast<size_t>(y) * m.cols);
  }
  return out;
}

inline void save_depth16(const ImageU16& img, const std::string& path) {
  if (img.c != 1) throw std::invalid_argument("save_depth16: expected 1 channel");
  cv::Mat m(img.h, img.w, CV_16UC1, const_cast<std::uint16_t*>(img.v.data()));
  if (!cv::imwrite(path, m)) throw std::runtime_error("cannot write image: " + path);
}

}  // namespace semgrasp
