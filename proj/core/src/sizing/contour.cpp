#include <algorithm>
#include <array>
#include <cmath>
#include <deque>

#include "fruitlet/sizing/sizing.hpp"

namespace fruitlet::sizing {

namespace {

// Clockwise in image coordinates (y grows downward), starting east.
constexpr std::array<int, 8> kDx = {1, 1, 0, -1, -1, -1, 0, 1};
constexpr std::array<int, 8> kDy = {0, 1, 1, 1, 0, -1, -1, -1};

// Component label per pixel (-1 = off) plus component sizes.
struct Labels {
  std::vector<int> label;
  std::vector<std::vector<Point2>> components;
};

Labels label_components(const BinaryMask& mask) {
  Labels out;
  out.label.assign(mask.values.size(), -1);
  const int w = static_cast<int>(mask.width), h = static_cast<int>(mask.height);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t idx = static_cast<std::size_t>(y) * mask.width + x;
      if (!mask.values[idx] || out.label[idx] >= 0) continue;
      const int id = static_cast<int>(out.components.size());
      out.components.emplace_back();
      out.label[idx] = id;
      queue.emplace_back(x, y);
      while (!queue.empty()) {
        const auto [cx, cy] = queue.front();
        queue.pop_front();
        out.components[id].push_back({static_cast<double>(cx), static_cast<double>(cy)});
        for (int k = 0; k < 8; ++k) {
          const int nx = cx + kDx[k], ny = cy + kDy[k];
          if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * mask.width + nx;
          if (mask.values[nidx] && out.label[nidx] < 0) {
            out.label[nidx] = id;
            queue.emplace_back(nx, ny);
          }
        }
      }
    }
  }
  return out;
}

int largest_component(const Labels& labels) {
  int best = -1;
  std::size_t best_size = 0;
  for (std::size_t i = 0; i < labels.components.size(); ++i) {
    if (labels.components[i].size() > best_size) {
      best_size = labels.components[i].size();
      best = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace

void validate(const ProbMask& mask) {
  if (mask.width == 0 || mask.height == 0) {
    throw std::invalid_argument("mask: width and height must be >= 1");
  }
  if (mask.values.size() != mask.width * mask.height) {
    throw std::invalid_argument("mask: value count != width*height");
  }
  for (double v : mask.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("mask: value outside [0, 1]");
  }
}

BinaryMask threshold_mask(const ProbMask& mask, double thr) {
  validate(mask);
  if (!(thr > 0.0 && thr < 1.0)) throw std::invalid_argument("threshold must lie in (0, 1)");
  BinaryMask out(mask.width, mask.height);
  bool any = false;
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    out.values[i] = mask.values[i] >= thr ? 1 : 0;
    any = any || out.values[i];
  }
  if (!any) throw EmptyMaskError("no pixel reaches the segmentation threshold");
  return out;
}

std::vector<std::vector<Point2>> connected_components(const BinaryMask& mask) {
  return label_components(mask).components;
}

std::vector<Point2> extract_contour(const BinaryMask& mask) {
  const Labels labels = label_components(mask);
  const int id = largest_component(labels);
  if (id < 0) throw EmptyMaskError("contour: mask has no on-pixel");

  const int w = static_cast<int>(mask.width), h = static_cast<int>(mask.height);
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < w && y < h &&
           labels.label[static_cast<std::size_t>(y) * mask.width + x] == id;
  };

  // BFS visits in raster order from the top-left pixel, which is the seed.
  const Point2 seed = labels.components[id].front();
  const int sx = static_cast<int>(seed.x), sy = static_cast<int>(seed.y);

  // Returns the direction of the next boundary pixel scanning clockwise from
  // `start`, or -1 for an isolated pixel.
  auto next_dir = [&](int x, int y, int start) {
    for (int i = 0; i < 8; ++i) {
      const int k = (start + i) % 8;
      if (inside(x + kDx[k], y + kDy[k])) return k;
    }
    return -1;
  };

  std::vector<Point2> contour{seed};
  // The seed's west neighbor is background; scan from north-west onward.
  const int first = next_dir(sx, sy, 5);
  if (first < 0) return contour;

  int x = sx, y = sy, dir = first;
  const std::size_t limit = 4 * mask.values.size() + 8;
  while (contour.size() < limit) {
    x += kDx[dir];
    y += kDy[dir];
    const int start = dir % 2 == 0 ? (dir + 7) % 8 : (dir + 6) % 8;
    const int nd = next_dir(x, y, start);
    if (x == sx && y == sy && nd == first) break;
    contour.push_back({static_cast<double>(x), static_cast<double>(y)});
    dir = nd;
  }
  return contour;
}

Point2 segmentation_centroid(const BinaryMask& mask) {
  const Labels labels = label_components(mask);
  const int id = largest_component(labels);
  if (id < 0) throw EmptyMaskError("centroid: mask has no on-pixel");
  Point2 c;
  for (const auto& p : labels.components[id]) {
    c.x += p.x;
    c.y += p.y;
  }
  const double n = static_cast<double>(labels.components[id].size());
  return {c.x / n, c.y / n};
}

}  // namespace fruitlet::sizing
