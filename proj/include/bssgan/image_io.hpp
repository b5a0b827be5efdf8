#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "bssgan/tensor.hpp"

namespace bssgan {

/// Catmull-Rom cubic kernel (a = -0.5).
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t < 1.0) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2.0) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0.0;
}

/// Separable bicubic resize of an (H, W, C) tensor; samples outside the
/// source are treated as zero so the result is bit-stable across platforms.
template <class T>
Tensor<T> bicubic_resize(const Tensor<T>& src, int out_h, int out_w) {
  check(src.rank() == 3, "bicubic_resize expects (H, W, C)");
  check(out_h > 0 && out_w > 0, "bicubic_resize target must be positive");
  int h = src.dim(0), w = src.dim(1), c = src.dim(2);
  if (h == out_h && w == out_w) return src;

  // horizontal pass: (h, w, c) -> (h, out_w, c)
  Tensor<T> mid({h, out_w, c}, T(0));
  double sx = static_cast<double>(w) / out_w;
  for (int ox = 0; ox < out_w; ++ox) {
    double cx = (ox + 0.5) * sx - 0.5;
    int ix = static_cast<int>(std::floor(cx));
    double wt[4];
    for (int k = 0; k < 4; ++k) wt[k] = cubic_weight(cx - (ix - 1 + k));
    for (int y = 0; y < h; ++y)
      for (int k = 0; k < 4; ++k) {
        int x = ix - 1 + k;
        if (x < 0 || x >= w) continue;
        for (int ch = 0; ch < c; ++ch)
          mid.data[(std::size_t(y) * out_w + ox) * c + ch] +=
              static_cast<T>(wt[k]) * src.data[(std::size_t(y) * w + x) * c + ch];
      }
  }
  // vertical pass: (h, out_w, c) -> (out_h, out_w, c)
  Tensor<T> dst({out_h, out_w, c}, T(0));
  double sy = static_cast<double>(h) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double cy = (oy + 0.5) * sy - 0.5;
    int iy = static_cast<int>(std::floor(cy));
    double wt[4];
    for (int k = 0; k < 4; ++k) wt[k] = cubic_weight(cy - (iy - 1 + k));
    for (int k = 0; k < 4; ++k) {
      int y = iy - 1 + k;
      if (y < 0 || y >= h) continue;
      for (std::size_t i = 0; i < std::size_t(out_w) * c; ++i)
        dst.data[std::size_t(oy) * out_w * c + i] +=
            static_cast<T>(wt[k]) * mid.data[std::size_t(y) * out_w * c + i];
    }
  }
  return dst;
}

/// byte 0 -> -1, byte 255 -> +1.
inline float byte_to_unit(unsigned char b) { return static_cast<float>(b) / 127.5f - 1.0f; }

/// Inverse map with round-half-up and clamping.
inline unsigned char unit_to_byte(float v) {
  double x = (static_cast<double>(v) + 1.0) * 127.5;
  return static_cast<unsigned char>(std::clamp(std::lround(x), 0l, 255l));
}

/// Decodes PNG/JPEG to an (H, W, 3) float tensor in [-1, 1], RGB order.
/// Returns false (leaving `out` untouched) if the file cannot be decoded.
inline bool load_image(const std::filesystem::path& path, Tensor<float>& out) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (img.empty()) return false;
  Tensor<float> t({img.rows, img.cols, 3});
  for (int y = 0; y < img.rows; ++y) {
    const cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.cols; ++x) {
      auto px = row[x];  // BGR
      std::size_t base = (std::size_t(y) * img.cols + x) * 3;
      t.data[base + 0] = byte_to_unit(px[2]);
      t.data[base + 1] = byte_to_unit(px[1]);
      t.data[base + 2] = byte_to_unit(px[0]);
    }
  }
  out = std::move(t);
  return true;
}

/// Writes an (H, W, 3) tensor in [-1, 1] as an 8-bit image; format from the
/// file extension.
inline void save_image(const std::filesystem::path& path, const Tensor<float>& t) {
  check(t.rank() == 3 && t.dim(2) == 3, "save_image expects (H, W, 3)");
  cv::Mat img(t.dim(0), t.dim(1), CV_8UC3);
  for (int y = 0; y < t.dim(0); ++y) {
    cv::Vec3b* row = img.ptr<cv::Vec3b>(y);
    for (int x = 0; x < t.dim(1); ++x) {
      std::size_t base = (std::size_t(y) * t.dim(1) + x) * 3;
      row[x] = cv::Vec3b(unit_to_byte(t.data[base + 2]), unit_to_byte(t.data[base + 1]),
                         unit_to_byte(t.data[base + 0]));
    }
  }
  std::filesystem::create_directories(path.parent_path());
  check(cv::imwrite(path.string(), img), "cannot write image " + path.string());
}

/// Tiles (N, S, S, 3) samples into a rows x cols grid image (row-major,
/// truncating or zero-padding to rows*cols).
inline Tensor<float> tile_grid(const Tensor<float>& batch, int rows, int cols) {
  check(batch.rank() == 4 && batch.dim(3) == 3, "tile_grid expects (N, S, S, 3)");
  int s = batch.dim(1);
  Tensor<float> grid({rows * s, cols * s, 3}, -1.0f);
  for (int i = 0; i < std::min(batch.dim(0), rows * cols); ++i) {
    int gy = (i / cols) * s, gx = (i % cols) * s;
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x)
        for (int c = 0; c < 3; ++c)
          grid.data[((std::size_t(gy) + y) * cols * s + gx + x) * 3 + c] =
              batch.data[((std::size_t(i) * s + y) * s + x) * 3 + c];
  }
  return grid;
}

}  // namespace bssgan
