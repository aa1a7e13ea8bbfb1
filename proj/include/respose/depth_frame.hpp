#pragma once

#include <cmath>
#include <filesystem>
#include <optional>
#include <vector>

#include "respose/camera.hpp"

namespace respose {

// Sensor range; readings outside (0, 8] m are treated as holes.
inline constexpr double kMaxDepthMeters = 8.0;

inline bool depth_valid(double d) { return std::isfinite(d) && d > 0.0 && d <= kMaxDepthMeters; }

// Row-major per-pixel depth in meters. Invalid pixels are stored as 0.
struct DepthFrame {
  int width = 0;
  int height = 0;
  std::vector<float> depth;
  CameraIntrinsics intrinsics;

  bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
  double at(int x, int y) const { return depth[static_cast<std::size_t>(y) * width + x]; }
};

// Depth for the landmark at pixel (u, v), rounding to the nearest pixel.
// A valid center pixel is returned unchanged; otherwise the mean of valid
// depths in the square window of half-width `radius` is used. Returns
// nullopt when the whole window is holes; throws when (u, v) rounds outside
// the frame.
std::optional<double> fill_depth(const DepthFrame& frame, double u, double v, int radius);

// Binary sidecar format: magic "RPDEPTH1", u32 width, u32 height, then
// row-major little-endian float32 depths in meters.
void write_depth_frame(const std::filesystem::path& path, const DepthFrame& frame);
DepthFrame read_depth_frame(const std::filesystem::path& path, const CameraIntrinsics& intrinsics);

}  // namespace respose
