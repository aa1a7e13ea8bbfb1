#include "respose/depth_frame.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "respose/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "depth frame I/O assumes a little-endian host");

namespace respose {

namespace {
constexpr char kMagic[8] = {'R', 'P', 'D', 'E', 'P', 'T', 'H', '1'};
}

std::optional<double> fill_depth(const DepthFrame& frame, double u, double v, int radius) {
  if (radius < 0) throw std::invalid_argument("fill_depth: negative radius");
  const int x = static_cast<int>(std::lround(u));
  const int y = static_cast<int>(std::lround(v));
  if (!frame.in_bounds(x, y)) throw std::out_of_range("fill_depth: coordinates outside frame");

  const double center = frame.at(x, y);
  if (depth_valid(center)) return center;

  double sum = 0.0;
  int count = 0;
  const int x0 = std::max(0, x - radius), x1 = std::min(frame.width - 1, x + radius);
  const int y0 = std::max(0, y - radius), y1 = std::min(frame.height - 1, y + radius);
  for (int yy = y0; yy <= y1; ++yy) {
    for (int xx = x0; xx <= x1; ++xx) {
      const double d = frame.at(xx, yy);
      if (depth_valid(d)) {
        sum += d;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

void write_depth_frame(const std::filesystem::path& path, const DepthFrame& frame) {
  if (frame.depth.size() != static_cast<std::size_t>(frame.width) * frame.height)
    throw SchemaError("depth frame: grid size does not match width x height");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw SchemaError("depth frame: cannot open " + path.string() + " for writing");
  const std::uint32_t w = frame.width, h = frame.height;
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char*>(&w), sizeof(w));
  out.write(reinterpret_cast<const char*>(&h), sizeof(h));
  out.write(reinterpret_cast<const char*>(frame.depth.data()),
            static_cast<std::streamsize>(frame.depth.size() * sizeof(float)));
  if (!out) throw SchemaError("depth frame: short write to " + path.string());
}

DepthFrame read_depth_frame(const std::filesystem::path& path, const CameraIntrinsics& intrinsics) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("depth frame: cannot open " + path.string());
  char magic[8];
  std::uint32_t w = 0, h = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&w), sizeof(w));
  in.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw FileIntegrityError("depth frame: bad magic in " + path.string());
  if (w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h > (1u << 28))
    throw FileIntegrityError("depth frame: implausible dimensions in " + path.string());
  DepthFrame frame;
  frame.width = static_cast<int>(w);
  frame.height = static_cast<int>(h);
  frame.intrinsics = intrinsics;
  frame.depth.resize(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(frame.depth.data()),
          static_cast<std::streamsize>(frame.depth.size() * sizeof(float)));
  if (!in) throw FileIntegrityError("depth frame: truncated file " + path.string());
  return frame;
}

}  // namespace respose
