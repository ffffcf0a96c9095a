#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "fruitlet/sizing/sizing.hpp"

namespace {

using namespace fruitlet::sizing;
constexpr double kPi = std::numbers::pi;

BinaryMask mask_from_rows(const std::vector<std::string>& rows) {
  BinaryMask m(rows.front().size(), rows.size());
  for (std::size_t y = 0; y < rows.size(); ++y)
    for (std::size_t x = 0; x < rows[y].size(); ++x) m.at(x, y) = rows[y][x] == '#';
  return m;
}

using PixelSet = std::set<std::pair<int, int>>;

PixelSet to_set(const std::vector<Point2>& pts) {
  PixelSet s;
  for (const auto& p : pts) s.emplace(static_cast<int>(p.x), static_cast<int>(p.y));
  return s;
}

// Brute-force labeling oracle: repeated relaxation of minimum labels over
// 8-neighborhoods until nothing changes.
std::vector<int> brute_force_labels(const BinaryMask& m) {
  const int w = static_cast<int>(m.width), h = static_cast<int>(m.height);
  std::vector<int> lab(m.values.size(), -1);
  for (int i = 0; i < w * h; ++i)
    if (m.values[i]) lab[i] = i;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (lab[y * w + x] < 0) continue;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h || lab[ny * w + nx] < 0) continue;
            if (lab[ny * w + nx] < lab[y * w + x]) {
              lab[y * w + x] = lab[ny * w + nx];
              changed = true;
            }
          }
      }
  }
  return lab;
}

// Pixels of label `id` with a 4-neighbor outside the component.
PixelSet brute_force_boundary(const BinaryMask& m, const std::vector<int>& lab, int id) {
  const int w = static_cast<int>(m.width), h = static_cast<int>(m.height);
  PixelSet s;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (lab[y * w + x] != id) continue;
      const int nb[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
      for (const auto& d : nb) {
        const int nx = x + d[0], ny = y + d[1];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h || lab[ny * w + nx] != id) {
          s.emplace(x, y);
          break;
        }
      }
    }
  return s;
}

TEST(ThresholdMask, UniformHighIsAllOn) {
  const auto b = threshold_mask(ProbMask(4, 3, 0.9), 0.5);
  for (auto v : b.values) EXPECT_EQ(v, 1);
}

TEST(ThresholdMask, UniformZeroIsEmpty) {
  EXPECT_THROW(threshold_mask(ProbMask(4, 3, 0.0), 0.5), EmptyMaskError);
}

TEST(ThresholdMask, CheckerboardSelectsHighCells) {
  ProbMask m(6, 5);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x) m.at(x, y) = (x + y) % 2 ? 0.6 : 0.4;
  const auto b = threshold_mask(m, 0.5);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x) EXPECT_EQ(b.at(x, y), (x + y) % 2 ? 1 : 0);
}

TEST(ThresholdMask, RejectsInvalidInput) {
  EXPECT_THROW(threshold_mask(ProbMask(2, 2, 1.5), 0.5), std::invalid_argument);
  EXPECT_THROW(threshold_mask(ProbMask(2, 2, 0.5), 1.0), std::invalid_argument);
  EXPECT_THROW(threshold_mask(ProbMask(), 0.5), std::invalid_argument);
}

TEST(ExtractContour, SquareGivesEightBorderPixelsClockwise) {
  const auto m = mask_from_rows({".....", ".###.", ".###.", ".###.", "....."});
  const auto c = extract_contour(m);
  const std::vector<Point2> expected = {{1, 1}, {2, 1}, {3, 1}, {3, 2},
                                        {3, 3}, {2, 3}, {1, 3}, {1, 2}};
  EXPECT_EQ(c, expected);
}

TEST(ExtractContour, SinglePixel) {
  const auto m = mask_from_rows({"...", ".#.", "..."});
  const auto c = extract_contour(m);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(c[0], (Point2{1, 1}));
}

TEST(ExtractContour, PicksLargestComponentAgainstBruteForceLabels) {
  const auto m = mask_from_rows({
      "..........",
      ".####.....",
      ".####...##",
      ".####...##",
      "..........",
  });
  const auto lab = brute_force_labels(m);
  std::map<int, int> area;
  for (int l : lab)
    if (l >= 0) ++area[l];
  ASSERT_EQ(area.size(), 2u);
  int big = -1;
  for (auto [l, a] : area)
    if (a == 12) big = l;
  ASSERT_GE(big, 0);
  EXPECT_EQ(std::count_if(area.begin(), area.end(), [](auto kv) { return kv.second == 4; }), 1);

  const auto c = extract_contour(m);
  EXPECT_EQ(to_set(c), brute_force_boundary(m, lab, big));
  for (const auto& p : c) EXPECT_LT(p.x, 5.0);
}

TEST(ExtractContour, BoundaryOfRandomEllipsesMatchesOracle) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 25; ++trial) {
    const double ra = 3 + 12 * u(rng), rb = 3 + 12 * u(rng), th = kPi * u(rng);
    BinaryMask m(40, 40);
    for (int y = 0; y < 40; ++y)
      for (int x = 0; x < 40; ++x) {
        const double dx = x - 19.5, dy = y - 19.7;
        const double p = (std::cos(th) * dx + std::sin(th) * dy) / ra;
        const double q = (-std::sin(th) * dx + std::cos(th) * dy) / rb;
        m.at(x, y) = p * p + q * q <= 1.0;
      }
    const auto lab = brute_force_labels(m);
    int id = -1;
    for (int l : lab) id = std::max(id, l);
    if (id < 0) continue;
    // Convex blobs are a single component; its label is the smallest index.
    int first = *std::min_element(lab.begin(), lab.end(), [](int a, int b) {
      return (a < 0 ? INT32_MAX : a) < (b < 0 ? INT32_MAX : b);
    });
    const auto c = extract_contour(m);
    EXPECT_EQ(to_set(c), brute_force_boundary(m, lab, first)) << "trial " << trial;
    // Consecutive contour pixels are 8-neighbors.
    for (std::size_t i = 1; i < c.size(); ++i) {
      EXPECT_LE(std::abs(c[i].x - c[i - 1].x), 1.0);
      EXPECT_LE(std::abs(c[i].y - c[i - 1].y), 1.0);
    }
  }
}

TEST(ExtractContour, ThinLineIsTracedBothWays) {
  const auto m = mask_from_rows({".....", ".###.", "....."});
  const auto c = extract_contour(m);
  const std::vector<Point2> expected = {{1, 1}, {2, 1}, {3, 1}, {2, 1}};
  EXPECT_EQ(c, expected);
}

TEST(FitEllipse, NoiselessAxisAligned) {
  const EllipseParams truth{0, 0, 10, 4, 0};
  const auto e = fit_ellipse(sample_ellipse(truth, 100));
  EXPECT_NEAR(e.cx, 0, 1e-6);
  EXPECT_NEAR(e.cy, 0, 1e-6);
  EXPECT_NEAR(e.major_len, 10, 1e-6);
  EXPECT_NEAR(e.minor_len, 4, 1e-6);
  EXPECT_NEAR(e.angle, 0, 1e-6);
}

TEST(FitEllipse, CircleHasEqualAxesAndZeroAngle) {
  const auto e = fit_ellipse(sample_ellipse({2, -1, 6, 6, 0}, 64));
  EXPECT_NEAR(e.major_len, 6, 1e-6);
  EXPECT_NEAR(e.minor_len, 6, 1e-6);
  EXPECT_EQ(e.angle, 0.0);
}

TEST(FitEllipse, NoiselessRandomEllipses) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double minor = 2 + 50 * u(rng);
    const EllipseParams truth{200 * u(rng) - 100, 200 * u(rng) - 100, minor * (1.05 + u(rng)),
                              minor, kPi * u(rng)};
    const auto e = fit_ellipse(sample_ellipse(truth, 50 + trial));
    EXPECT_NEAR(e.cx, truth.cx, 1e-6);
    EXPECT_NEAR(e.cy, truth.cy, 1e-6);
    EXPECT_NEAR(e.major_len, truth.major_len, 1e-6);
    EXPECT_NEAR(e.minor_len, truth.minor_len, 1e-6);
    const double dang = std::remainder(e.angle - truth.angle, kPi);
    EXPECT_NEAR(dang, 0.0, 1e-6);
    EXPECT_GE(e.angle, 0.0);
    EXPECT_LT(e.angle, kPi);
  }
}

// Independent oracle: Fitzgibbon's original 6x6 formulation, solving
// S^-1 C a = mu a for the eigenvector with positive mu, no normalization.
Eigen::Matrix<double, 6, 1> oracle_conic(const std::vector<Point2>& pts) {
  Eigen::MatrixXd design(pts.size(), 6);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double x = pts[i].x, y = pts[i].y;
    design.row(i) << x * x, x * y, y * y, x, y, 1.0;
  }
  const Eigen::MatrixXd scatter = design.transpose() * design;
  Eigen::MatrixXd constraint = Eigen::MatrixXd::Zero(6, 6);
  constraint(0, 2) = constraint(2, 0) = 2.0;
  constraint(1, 1) = -1.0;
  const Eigen::MatrixXd sys = scatter.inverse() * constraint;
  Eigen::EigenSolver<Eigen::MatrixXd> es(sys);
  int best = -1;
  for (int i = 0; i < 6; ++i) {
    if (std::abs(es.eigenvalues()(i).imag()) < 1e-12 && es.eigenvalues()(i).real() > 0) best = i;
  }
  Eigen::Matrix<double, 6, 1> a = es.eigenvectors().col(best).real();
  a /= std::sqrt(4 * a(0) * a(2) - a(1) * a(1));
  return a;
}

TEST(FitEllipse, NoisyFitAgreesWithGeneralizedEigenOracle) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> noise(0.0, 0.05);
  const EllipseParams truth{30, 20, 12, 6, kPi / 6};
  auto pts = sample_ellipse(truth, 200);
  for (auto& p : pts) {
    p.x += noise(rng);
    p.y += noise(rng);
  }
  const Conic k = fit_conic(pts);
  const auto ref = oracle_conic(pts);
  const double sign = (ref(0) * k.a > 0) ? 1.0 : -1.0;
  const double mine[6] = {k.a, k.b, k.c, k.d, k.e, k.f};
  for (int i = 0; i < 6; ++i) EXPECT_NEAR(mine[i], sign * ref(i), 1e-6 * (1 + std::abs(ref(i))));

  const auto e = conic_to_ellipse(k);
  const auto e_ref = conic_to_ellipse({ref(0), ref(1), ref(2), ref(3), ref(4), ref(5)});
  EXPECT_NEAR(e.major_len, 12, 0.02 * 12);
  EXPECT_NEAR(e.minor_len, 6, 0.02 * 6);
  EXPECT_NEAR(e.major_len, e_ref.major_len, 1e-6);
  EXPECT_NEAR(e.minor_len, e_ref.minor_len, 1e-6);
}

TEST(FitEllipse, TooFewOrCollinearPointsFail) {
  const std::vector<Point2> four = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  EXPECT_THROW(fit_ellipse(four), FitFailedError);
  std::vector<Point2> line;
  for (int i = 0; i < 10; ++i) line.push_back({1.0 * i, 2.0 * i + 1});
  EXPECT_THROW(fit_ellipse(line), FitFailedError);
  const std::vector<Point2> same(8, Point2{3, 3});
  EXPECT_THROW(fit_ellipse(same), FitFailedError);
}

TEST(FitEllipseProperties, ScaleEquivariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    auto pts = sample_ellipse({10 * u(rng), 10 * u(rng), 20 + 10 * u(rng), 8 + 5 * u(rng),
                               kPi * u(rng)},
                              40);
    for (auto& p : pts) {
      p.x += noise(rng);
      p.y += noise(rng);
    }
    const double k = 0.1 + 10 * u(rng);
    auto scaled = pts;
    for (auto& p : scaled) {
      p.x *= k;
      p.y *= k;
    }
    const auto a = fit_ellipse(pts), b = fit_ellipse(scaled);
    EXPECT_NEAR(b.major_len / (k * a.major_len), 1.0, 1e-9);
    EXPECT_NEAR(b.minor_len / (k * a.minor_len), 1.0, 1e-9);
  }
}

TEST(FitEllipseProperties, RotationEquivariance) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.3);
  for (int trial = 0; trial < 50; ++trial) {
    auto pts = sample_ellipse({5 * u(rng), 5 * u(rng), 30, 12 + 10 * u(rng), kPi * u(rng)}, 40);
    for (auto& p : pts) {
      p.x += noise(rng);
      p.y += noise(rng);
    }
    const double theta = 2 * kPi * u(rng);
    auto rotated = pts;
    for (auto& p : rotated) {
      p = {std::cos(theta) * p.x - std::sin(theta) * p.y,
           std::sin(theta) * p.x + std::cos(theta) * p.y};
    }
    const auto a = fit_ellipse(pts), b = fit_ellipse(rotated);
    EXPECT_NEAR(std::remainder(b.angle - a.angle - theta, kPi), 0.0, 1e-6);
    EXPECT_NEAR(b.major_len, a.major_len, 1e-6);
  }
}

TEST(FitEllipseProperties, ResampledFitIsFixedPoint) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const EllipseParams e0{50 * u(rng), 50 * u(rng), 40 + 20 * u(rng), 10 + 20 * u(rng),
                           kPi * u(rng)};
    const auto e1 = fit_ellipse(sample_ellipse(e0, 64));
    const auto e2 = fit_ellipse(sample_ellipse(e1, 64));
    EXPECT_NEAR(e2.cx, e1.cx, 1e-9);
    EXPECT_NEAR(e2.cy, e1.cy, 1e-9);
    EXPECT_NEAR(e2.major_len, e1.major_len, 1e-9);
    EXPECT_NEAR(e2.minor_len, e1.minor_len, 1e-9);
    EXPECT_NEAR(std::remainder(e2.angle - e1.angle, kPi), 0.0, 1e-9);
  }
}

TEST(ComputeSize, EquationArithmetic) {
  EllipseParams e{5, 5, 60, 50, 0};
  const auto m = compute_size(e, DisparityPatch(11, 11, 500.0), {5, 5}, 100.0);
  EXPECT_EQ(m.diameter_mm, 10.0);
  EXPECT_EQ(m.disparity_used, 500.0);
  EXPECT_EQ(m.minor_px, 50.0);
  EXPECT_EQ(m.diameter_mm, m.minor_px * m.baseline_mm / m.disparity_used);
}

TEST(ComputeSize, ZeroDisparityFails) {
  EllipseParams e{5, 5, 60, 50, 0};
  EXPECT_THROW(compute_size(e, DisparityPatch(11, 11, 0.0), {5, 5}, 100.0), SizingFailedError);
  DisparityPatch nan_patch(11, 11, std::nan(""));
  EXPECT_THROW(compute_size(e, nan_patch, {5, 5}, 100.0), SizingFailedError);
}

TEST(ComputeSize, UsesMaxInsideSquareOnly) {
  // 40x40 crop, side 0.25 * 40 = 10 around (20, 20): pixels 15..25.
  DisparityPatch d(40, 40, 600.0);
  // Brute-force scan of the region definition to build the patch.
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 40; ++x)
      if (std::abs(x - 20) <= 5 && std::abs(y - 20) <= 5) d.at(x, y) = 300.0 + (x + y == 40 ? 100 : 0);
  const EllipseParams e{20, 20, 44, 40, 0};
  const auto m = compute_size(e, d, {20, 20}, 100.0, 0.25);
  EXPECT_EQ(m.disparity_used, 400.0);
  EXPECT_DOUBLE_EQ(m.diameter_mm, 10.0);
}

TEST(ComputeSize, MonotoneAndLinear) {
  const EllipseParams e{4, 4, 30, 20, 0};
  double prev = std::numeric_limits<double>::infinity();
  for (double disp = 10; disp <= 1000; disp *= 1.7) {
    const double mm = compute_size(e, DisparityPatch(9, 9, disp), {4, 4}, 60.0).diameter_mm;
    EXPECT_LT(mm, prev);
    prev = mm;
  }
  const double base = compute_size(e, DisparityPatch(9, 9, 250.0), {4, 4}, 60.0).diameter_mm;
  EXPECT_EQ(compute_size(e, DisparityPatch(9, 9, 250.0), {4, 4}, 120.0).diameter_mm, 2 * base);
  EllipseParams e2 = e;
  e2.minor_len *= 2;
  EXPECT_EQ(compute_size(e2, DisparityPatch(9, 9, 250.0), {4, 4}, 60.0).diameter_mm, 2 * base);
}

TEST(MeasureFruitlet, RasterizedDiskRoundTrip) {
  ProbMask mask(81, 81, 0.0);
  const double r = 30.0;
  for (int y = 0; y < 81; ++y)
    for (int x = 0; x < 81; ++x) mask.at(x, y) = std::hypot(x - 40.0, y - 40.0) <= r ? 0.95 : 0.02;
  DisparityPatch disp(81, 81, 100.0);
  const auto res = measure_fruitlet(mask, disp, {.baseline_mm = 50.0});
  EXPECT_NEAR(res.centroid.x, 40.0, 1e-9);
  EXPECT_NEAR(res.centroid.y, 40.0, 1e-9);
  // Contour pixel centers sit about half a pixel inside the true edge.
  EXPECT_NEAR(res.ellipse.minor_len, 2 * r - 1.0, 1.0);
  EXPECT_NEAR(res.size.diameter_mm, res.ellipse.minor_len * 50.0 / 100.0, 1e-12);
}

TEST(MeasureFruitlet, MisalignedDisparityRejected) {
  EXPECT_THROW(measure_fruitlet(ProbMask(5, 5, 0.9), DisparityPatch(4, 5, 1.0), {.baseline_mm = 1}),
               std::invalid_argument);
}

}  // namespace
