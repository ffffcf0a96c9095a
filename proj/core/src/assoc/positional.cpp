#include "fruitlet/assoc/positional.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fruitlet::assoc {

namespace {

// Input coordinate of output sample i under corner alignment.
double source_coord(std::size_t i, std::size_t in, std::size_t out) {
  if (in == 1 || out == 1) return 0.0;
  return static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out - 1);
}

}  // namespace

sizing::Grid<double> resize_bilinear(const sizing::Grid<double>& in, std::size_t out_w,
                                     std::size_t out_h) {
  if (in.width == 0 || in.height == 0 || out_w == 0 || out_h == 0) {
    throw std::invalid_argument("resize_bilinear: empty grid");
  }
  sizing::Grid<double> out(out_w, out_h);
  std::vector<std::size_t> x_lo(out_w), x_hi(out_w);
  std::vector<double> x_t(out_w);
  for (std::size_t i = 0; i < out_w; ++i) {
    const double sx = source_coord(i, in.width, out_w);
    x_lo[i] = std::min(static_cast<std::size_t>(std::floor(sx)), in.width - 1);
    x_hi[i] = std::min(x_lo[i] + 1, in.width - 1);
    x_t[i] = sx - static_cast<double>(x_lo[i]);
  }
  for (std::size_t j = 0; j < out_h; ++j) {
    const double sy = source_coord(j, in.height, out_h);
    const std::size_t y0 = std::min(static_cast<std::size_t>(std::floor(sy)), in.height - 1);
    const std::size_t y1 = std::min(y0 + 1, in.height - 1);
    const double ty = sy - static_cast<double>(y0);
    for (std::size_t i = 0; i < out_w; ++i) {
      const double top = (1 - x_t[i]) * in.at(x_lo[i], y0) + x_t[i] * in.at(x_hi[i], y0);
      const double bot = (1 - x_t[i]) * in.at(x_lo[i], y1) + x_t[i] * in.at(x_hi[i], y1);
      out.at(i, j) = (1 - ty) * top + ty * bot;
    }
  }
  return out;
}

std::vector<double> build_positional(const sizing::DisparityPatch& disparity,
                                     const sizing::ProbMask& segmentation, const BBox& bbox,
                                     std::size_t image_width, std::size_t image_height,
                                     double max_disparity, std::size_t size) {
  if (!(bbox.width() > 0.0 && bbox.height() > 0.0)) {
    throw std::invalid_argument("build_positional: zero-area bbox");
  }
  if (image_width == 0 || image_height == 0) {
    throw std::invalid_argument("build_positional: image dimensions must be positive");
  }
  if (disparity.width == 0 || disparity.height == 0 || disparity.width != segmentation.width ||
      disparity.height != segmentation.height) {
    throw std::invalid_argument("build_positional: disparity and segmentation crops differ in size");
  }
  const std::size_t w = disparity.width, h = disparity.height;
  sizing::Grid<double> disp(w, h), seg(w, h), xs(w, h), ys(w, h);
  for (std::size_t v = 0; v < h; ++v) {
    const double y = h == 1 ? 0.5 * (bbox.y0 + bbox.y1)
                            : bbox.y0 + static_cast<double>(v) * bbox.height() / static_cast<double>(h - 1);
    for (std::size_t u = 0; u < w; ++u) {
      const double x = w == 1 ? 0.5 * (bbox.x0 + bbox.x1)
                              : bbox.x0 + static_cast<double>(u) * bbox.width() / static_cast<double>(w - 1);
      const double d = disparity.at(u, v);
      disp.at(u, v) = max_disparity > 0.0 && std::isfinite(d) ? std::clamp(d / max_disparity, 0.0, 1.0) : 0.0;
      seg.at(u, v) = segmentation.at(u, v) >= 0.5 ? 1.0 : 0.0;
      xs.at(u, v) = std::clamp(x / static_cast<double>(image_width), 0.0, 1.0);
      ys.at(u, v) = std::clamp(y / static_cast<double>(image_height), 0.0, 1.0);
    }
  }
  std::vector<double> out;
  out.reserve(kPositionalChannels * size * size);
  for (const auto* ch : {&disp, &seg, &xs, &ys}) {
    const auto r = resize_bilinear(*ch, size, size);
    out.insert(out.end(), r.values.begin(), r.values.end());
  }
  return out;
}

void write_coordinate_channels(std::vector<double>& positional, const BBox& bbox,
                               std::size_t image_width, std::size_t image_height,
                               std::size_t size) {
  if (positional.size() != kPositionalChannels * size * size) {
    throw std::invalid_argument("write_coordinate_channels: grid size mismatch");
  }
  const std::size_t plane = size * size;
  for (std::size_t j = 0; j < size; ++j) {
    const double t_y = size == 1 ? 0.5 : static_cast<double>(j) / static_cast<double>(size - 1);
    const double y = std::clamp((bbox.y0 + t_y * bbox.height()) / static_cast<double>(image_height), 0.0, 1.0);
    for (std::size_t i = 0; i < size; ++i) {
      const double t_x = size == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(size - 1);
      positional[2 * plane + j * size + i] =
          std::clamp((bbox.x0 + t_x * bbox.width()) / static_cast<double>(image_width), 0.0, 1.0);
      positional[3 * plane + j * size + i] = y;
    }
  }
}

std::vector<double> visual_from_rgb(const std::vector<double>& rgb, std::size_t width,
                                    std::size_t height, std::size_t channels, std::uint64_t seed) {
  if (rgb.size() != 3 * width * height || width == 0 || height == 0) {
    throw std::invalid_argument("visual_from_rgb: expected 3 x height x width values");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> mix(channels * 3), bias(channels);
  for (auto& m : mix) m = gauss(rng);
  for (auto& b : bias) b = gauss(rng) * 0.1;

  std::vector<sizing::Grid<double>> small;
  const std::size_t plane = width * height;
  for (std::size_t c = 0; c < 3; ++c) {
    sizing::Grid<double> g(width, height,
                           std::vector<double>(rgb.begin() + c * plane, rgb.begin() + (c + 1) * plane));
    small.push_back(resize_bilinear(g, kVisualSize, kVisualSize));
  }
  const std::size_t cells = kVisualSize * kVisualSize;
  std::vector<double> out(channels * cells);
  for (std::size_t o = 0; o < channels; ++o) {
    for (std::size_t k = 0; k < cells; ++k) {
      double acc = bias[o];
      for (std::size_t c = 0; c < 3; ++c) acc += mix[o * 3 + c] * (small[c].values[k] - 0.5);
      out[o * cells + k] = std::tanh(acc);
    }
  }
  return out;
}

}  // namespace fruitlet::assoc
