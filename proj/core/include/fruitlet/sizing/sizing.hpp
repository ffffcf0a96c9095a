#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fruitlet::sizing {

class SizingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Threshold left no pixel on; the fruitlet is reported as not sized.
class EmptyMaskError : public SizingError {
 public:
  using SizingError::SizingError;
};
class FitFailedError : public SizingError {
 public:
  using SizingError::SizingError;
};
class SizingFailedError : public SizingError {
 public:
  using SizingError::SizingError;
};

/// Row-major image; pixel (x, y) has its center at integer coordinates.
template <typename T>
struct Grid {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(std::size_t w, std::size_t h, T fill = T{}) : width(w), height(h), values(w * h, fill) {}
  Grid(std::size_t w, std::size_t h, std::vector<T> v)
      : width(w), height(h), values(std::move(v)) {
    if (values.size() != w * h) throw std::invalid_argument("grid: value count != width*height");
  }

  T& at(std::size_t x, std::size_t y) { return values[y * width + x]; }
  const T& at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
  bool operator==(const Grid&) const = default;
};

/// Segmentation probabilities in [0, 1].
using ProbMask = Grid<double>;
using BinaryMask = Grid<std::uint8_t>;
/// Disparity in pixels, aligned with the detection crop.
using DisparityPatch = Grid<double>;

/// Throws std::invalid_argument unless width, height >= 1 and values in [0, 1].
void validate(const ProbMask& mask);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct EllipseParams {
  double cx = 0.0;
  double cy = 0.0;
  double major_len = 0.0;  // full axis lengths in pixels
  double minor_len = 0.0;
  double angle = 0.0;  // of the major axis, radians in [0, pi)
  bool operator==(const EllipseParams&) const = default;
};

struct SizeMeasurement {
  double diameter_mm = 0.0;
  double disparity_used = 0.0;
  double baseline_mm = 0.0;
  double minor_px = 0.0;
  bool operator==(const SizeMeasurement&) const = default;
};

inline constexpr double kDefaultThreshold = 0.5;
inline constexpr double kDefaultRegionFrac = 0.25;

/// Pixel on iff value >= thr. Throws EmptyMaskError when nothing is on.
BinaryMask threshold_mask(const ProbMask& mask, double thr = kDefaultThreshold);

/// Pixels of each 8-connected component, components in raster order of
/// their first pixel.
std::vector<std::vector<Point2>> connected_components(const BinaryMask& mask);

/// Boundary of the largest 8-connected component (ties: earliest in raster
/// order), ordered by Moore-neighbor border following, clockwise from the
/// component's top-left pixel. Interior pixels are excluded.
std::vector<Point2> extract_contour(const BinaryMask& mask);

/// Mean of the pixels of the largest 8-connected component.
Point2 segmentation_centroid(const BinaryMask& mask);

/// Conic a x^2 + b xy + c y^2 + d x + e y + f = 0.
struct Conic {
  double a, b, c, d, e, f;
};

/// Direct least-squares ellipse fit: minimizes algebraic distance subject to
/// 4ac - b^2 = 1 (numerically stable reduced eigenproblem). Returns the conic
/// scaled so that the constraint holds.
Conic fit_conic(std::span<const Point2> points);
EllipseParams conic_to_ellipse(const Conic& conic);
Conic ellipse_to_conic(const EllipseParams& ellipse);

/// fit_conic followed by canonicalization. Throws FitFailedError for fewer
/// than five points, collinear scatter, or a non-elliptic result.
EllipseParams fit_ellipse(std::span<const Point2> points);

/// `n` points spaced uniformly in parameter angle around the ellipse.
std::vector<Point2> sample_ellipse(const EllipseParams& ellipse, std::size_t n);

/// Nearest-surface disparity: max valid (finite, > 0) disparity within the
/// axis-aligned square of side region_frac * min(width, height), centered at
/// `center`. Throws SizingFailedError when the square holds no valid value.
double region_disparity(const DisparityPatch& disparity, Point2 center, double region_frac);

/// diameter = minor_len * baseline / d, d from region_disparity().
SizeMeasurement compute_size(const EllipseParams& ellipse, const DisparityPatch& disparity,
                             Point2 centroid, double baseline_mm,
                             double region_frac = kDefaultRegionFrac);

struct SizingOptions {
  double threshold = kDefaultThreshold;
  double region_frac = kDefaultRegionFrac;
  double baseline_mm = 0.0;
};

struct FruitletSize {
  EllipseParams ellipse;
  SizeMeasurement size;
  Point2 centroid;
  std::size_t contour_points = 0;
};

/// Full crop-level pipeline: threshold, contour, fit, metric size.
FruitletSize measure_fruitlet(const ProbMask& mask, const DisparityPatch& disparity,
                              const SizingOptions& options);

}  // namespace fruitlet::sizing
