#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "fruitlet/assoc/observation.hpp"
#include "fruitlet/sizing/sizing.hpp"

namespace fruitlet::assoc {

inline constexpr std::size_t kPositionalChannels = 4;
inline constexpr std::size_t kPositionalSize = 64;
inline constexpr std::size_t kVisualSize = 7;

/// Bilinear resize with corner alignment: output sample i maps to input
/// coordinate i * (in - 1) / (out - 1). Single-pixel axes are replicated.
sizing::Grid<double> resize_bilinear(const sizing::Grid<double>& in, std::size_t out_w,
                                     std::size_t out_h);

/// Positional descriptor of a detection, channel-major 4 x size x size.
///
/// The crops sample the box with corner alignment: crop column u lies at
/// x0 + u * (x1 - x0) / (w - 1). Channels are disparity / max_disparity
/// (clamped to [0, 1]), segmentation thresholded at 0.5, x / image_width and
/// y / image_height.
std::vector<double> build_positional(const sizing::DisparityPatch& disparity,
                                     const sizing::ProbMask& segmentation, const BBox& bbox,
                                     std::size_t image_width, std::size_t image_height,
                                     double max_disparity, std::size_t size = kPositionalSize);

/// Rewrites the x and y channels of a positional grid for a new box.
void write_coordinate_channels(std::vector<double>& positional, const BBox& bbox,
                               std::size_t image_width, std::size_t image_height,
                               std::size_t size = kPositionalSize);

/// Fallback descriptor for raw 3 x H x W RGB crops in [0, 1]: resized to
/// 7 x 7 and mixed to `channels` by a fixed seeded 1x1 projection with tanh.
std::vector<double> visual_from_rgb(const std::vector<double>& rgb, std::size_t width,
                                    std::size_t height, std::size_t channels,
                                    std::uint64_t seed = 0);

}  // namespace fruitlet::assoc
