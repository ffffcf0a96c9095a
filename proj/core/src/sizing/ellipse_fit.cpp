#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fruitlet/sizing/sizing.hpp"

namespace fruitlet::sizing {

namespace {

// Below this relative eigenvalue gap the quadratic form is treated as a
// circle and the angle is reported as 0.
constexpr double kCircleTolerance = 1e-10;

double normalize_angle(double a) {
  a = std::fmod(a, std::numbers::pi);
  if (a < 0.0) a += std::numbers::pi;
  if (a >= std::numbers::pi) a -= std::numbers::pi;
  return a;
}

}  // namespace

Conic fit_conic(std::span<const Point2> points) {
  const std::size_t n = points.size();
  if (n < 5) throw FitFailedError("ellipse fit needs at least 5 points, got " + std::to_string(n));

  // Center and isotropically scale the points; undone on the conic below.
  double mx = 0.0, my = 0.0;
  for (const auto& p : points) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& p : points) {
    const double dx = p.x - mx, dy = p.y - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double trace = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  if (trace <= 0.0 || det <= 1e-12 * trace * trace) {
    throw FitFailedError("ellipse fit: points are collinear or coincident");
  }
  const double s = std::sqrt(2.0 * static_cast<double>(n) / trace);

  Eigen::MatrixX3d quad(n, 3), lin(n, 3);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = (points[i].x - mx) * s, y = (points[i].y - my) * s;
    quad.row(i) << x * x, x * y, y * y;
    lin.row(i) << x, y, 1.0;
  }
  const Eigen::Matrix3d s1 = quad.transpose() * quad;
  const Eigen::Matrix3d s2 = quad.transpose() * lin;
  const Eigen::Matrix3d s3 = lin.transpose() * lin;
  const Eigen::Matrix3d t = -s3.ldlt().solve(s2.transpose());
  const Eigen::Matrix3d reduced = s1 + s2 * t;
  Eigen::Matrix3d c1_inv;
  c1_inv << 0.0, 0.0, 0.5, 0.0, -1.0, 0.0, 0.5, 0.0, 0.0;
  const Eigen::Matrix3d m = c1_inv * reduced;

  Eigen::EigenSolver<Eigen::Matrix3d> solver(m);
  int best = -1;
  double best_eval = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d v = solver.eigenvectors().col(i).real();
    const double cond = 4.0 * v(0) * v(2) - v(1) * v(1);
    const double ev = std::abs(solver.eigenvalues()(i).real());
    if (cond > 0.0 && ev < best_eval) {
      best_eval = ev;
      best = i;
    }
  }
  if (best < 0) throw FitFailedError("ellipse fit: no elliptic solution");

  Eigen::Vector3d a1 = solver.eigenvectors().col(best).real();
  a1 /= std::sqrt(4.0 * a1(0) * a1(2) - a1(1) * a1(1));
  const Eigen::Vector3d a2 = t * a1;

  // Conic in normalized coordinates u = s (x - mx), v = s (y - my).
  const double A = a1(0), B = a1(1), C = a1(2), D = a2(0), E = a2(1), F = a2(2);
  // Substitute back; quadratic terms pick up s^2, linear terms s.
  const double s2c = s * s;
  Conic out;
  out.a = A * s2c;
  out.b = B * s2c;
  out.c = C * s2c;
  out.d = -2.0 * A * s2c * mx - B * s2c * my + D * s;
  out.e = -2.0 * C * s2c * my - B * s2c * mx + E * s;
  out.f = A * s2c * mx * mx + B * s2c * mx * my + C * s2c * my * my - D * s * mx - E * s * my + F;
  // Restore the 4ac - b^2 = 1 normalization in original coordinates.
  const double norm = std::sqrt(4.0 * out.a * out.c - out.b * out.b);
  out.a /= norm;
  out.b /= norm;
  out.c /= norm;
  out.d /= norm;
  out.e /= norm;
  out.f /= norm;
  return out;
}

EllipseParams conic_to_ellipse(const Conic& k) {
  const double det = 4.0 * k.a * k.c - k.b * k.b;
  if (!(det > 0.0)) throw FitFailedError("conic is not an ellipse");
  EllipseParams e;
  e.cx = (k.b * k.e - 2.0 * k.c * k.d) / det;
  e.cy = (k.b * k.d - 2.0 * k.a * k.e) / det;
  const double f0 = k.f + 0.5 * (k.d * e.cx + k.e * e.cy);

  const double mean = 0.5 * (k.a + k.c);
  const double half_diff = 0.5 * (k.a - k.c);
  const double radius = std::hypot(half_diff, 0.5 * k.b);
  double lam_small = mean - radius, lam_large = mean + radius;
  if (mean < 0.0) std::swap(lam_small, lam_large);  // flip so |lam_small| <= |lam_large|
  const double r_major = -f0 / lam_small;
  const double r_minor = -f0 / lam_large;
  if (!(r_major > 0.0 && r_minor > 0.0)) throw FitFailedError("conic is imaginary or degenerate");
  e.major_len = 2.0 * std::sqrt(r_major);
  e.minor_len = 2.0 * std::sqrt(r_minor);

  if (radius <= kCircleTolerance * std::abs(mean)) {
    e.angle = 0.0;
  } else {
    // Eigenvector of [[a, b/2], [b/2, c]] for the eigenvalue of smaller
    // magnitude is the major axis.
    const double theta = 0.5 * std::atan2(k.b, k.a - k.c);  // axis of the larger eigenvalue
    e.angle = normalize_angle(mean > 0.0 ? theta + 0.5 * std::numbers::pi : theta);
  }
  return e;
}

Conic ellipse_to_conic(const EllipseParams& e) {
  const double ra = 0.5 * e.major_len, rb = 0.5 * e.minor_len;
  const double cs = std::cos(e.angle), sn = std::sin(e.angle);
  // (x' / ra)^2 + (y' / rb)^2 = 1 with x' = R^T (p - c).
  const double A = cs * cs / (ra * ra) + sn * sn / (rb * rb);
  const double B = 2.0 * cs * sn * (1.0 / (ra * ra) - 1.0 / (rb * rb));
  const double C = sn * sn / (ra * ra) + cs * cs / (rb * rb);
  Conic k{A, B, C, -2.0 * A * e.cx - B * e.cy, -2.0 * C * e.cy - B * e.cx,
          A * e.cx * e.cx + B * e.cx * e.cy + C * e.cy * e.cy - 1.0};
  const double norm = std::sqrt(4.0 * k.a * k.c - k.b * k.b);
  return {k.a / norm, k.b / norm, k.c / norm, k.d / norm, k.e / norm, k.f / norm};
}

EllipseParams fit_ellipse(std::span<const Point2> points) {
  return conic_to_ellipse(fit_conic(points));
}

std::vector<Point2> sample_ellipse(const EllipseParams& e, std::size_t n) {
  std::vector<Point2> out(n);
  const double ra = 0.5 * e.major_len, rb = 0.5 * e.minor_len;
  const double cs = std::cos(e.angle), sn = std::sin(e.angle);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
    const double u = ra * std::cos(t), v = rb * std::sin(t);
    out[i] = {e.cx + cs * u - sn * v, e.cy + sn * u + cs * v};
  }
  return out;
}

}  // namespace fruitlet::sizing
