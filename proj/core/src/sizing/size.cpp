#include <algorithm>
#include <cmath>
#include <limits>

#include "fruitlet/sizing/sizing.hpp"

namespace fruitlet::sizing {

double region_disparity(const DisparityPatch& disparity, Point2 center, double region_frac) {
  if (disparity.width == 0 || disparity.height == 0) {
    throw SizingFailedError("disparity patch is empty");
  }
  if (!(region_frac > 0.0)) throw std::invalid_argument("region_frac must be positive");
  const double side = region_frac * static_cast<double>(std::min(disparity.width, disparity.height));
  const double half = 0.5 * side;
  const auto lo = [](double v) { return static_cast<long>(std::ceil(v)); };
  const auto hi = [](double v) { return static_cast<long>(std::floor(v)); };
  const long x0 = std::max(0L, lo(center.x - half));
  const long x1 = std::min(static_cast<long>(disparity.width) - 1, hi(center.x + half));
  const long y0 = std::max(0L, lo(center.y - half));
  const long y1 = std::min(static_cast<long>(disparity.height) - 1, hi(center.y + half));

  double best = -std::numeric_limits<double>::infinity();
  for (long y = y0; y <= y1; ++y) {
    for (long x = x0; x <= x1; ++x) {
      const double d = disparity.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
      if (std::isfinite(d) && d > 0.0) best = std::max(best, d);
    }
  }
  if (!std::isfinite(best)) {
    throw SizingFailedError("no valid disparity in the square region around the centroid");
  }
  return best;
}

SizeMeasurement compute_size(const EllipseParams& ellipse, const DisparityPatch& disparity,
                             Point2 centroid, double baseline_mm, double region_frac) {
  if (!(baseline_mm > 0.0)) throw std::invalid_argument("baseline_mm must be positive");
  const double d = region_disparity(disparity, centroid, region_frac);
  SizeMeasurement m;
  m.disparity_used = d;
  m.baseline_mm = baseline_mm;
  m.minor_px = ellipse.minor_len;
  m.diameter_mm = ellipse.minor_len * baseline_mm / d;
  return m;
}

FruitletSize measure_fruitlet(const ProbMask& mask, const DisparityPatch& disparity,
                              const SizingOptions& options) {
  if (disparity.width != mask.width || disparity.height != mask.height) {
    throw std::invalid_argument("disparity patch is not aligned with the mask crop");
  }
  const BinaryMask binary = threshold_mask(mask, options.threshold);
  FruitletSize out;
  const auto contour = extract_contour(binary);
  out.contour_points = contour.size();
  out.ellipse = fit_ellipse(contour);
  out.centroid = segmentation_centroid(binary);
  out.size = compute_size(out.ellipse, disparity, out.centroid, options.baseline_mm,
                          options.region_frac);
  return out;
}

}  // namespace fruitlet::sizing
