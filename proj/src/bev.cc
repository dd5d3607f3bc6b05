#include "unilgl/bev.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "unilgl/errors.h"

namespace unilgl {

void BevConfig::Validate() const {
  if (!(resolution > 0.0) || !std::isfinite(resolution)) {
    throw ConfigError("bev resolution must be positive");
  }
  if (width <= 0 || height <= 0) throw ConfigError("bev dimensions must be positive");
  if (patch_size <= 0 || width % patch_size != 0 || height % patch_size != 0) {
    throw ConfigError("bev dimensions must be divisible by the patch size");
  }
}

std::span<const uint32_t> BevPair::Bucket(Pixel p) const {
  if (!InBounds(p) || cell_offsets_.empty()) return {};
  const size_t cell = static_cast<size_t>(p.v) * config_.width + p.u;
  return std::span<const uint32_t>(point_indices_.data() + cell_offsets_[cell],
                                   cell_offsets_[cell + 1] - cell_offsets_[cell]);
}

Pixel PixelOf(double x, double y, const BevConfig& config) {
  const double fu = std::floor(x / config.resolution) + config.width / 2;
  const double fv = std::floor(y / config.resolution) + config.height / 2;
  // Clamp far-away values before the integer conversion.
  const double lim = 1e9;
  return {static_cast<int>(std::clamp(fu, -lim, lim)), static_cast<int>(std::clamp(fv, -lim, lim))};
}

BevPair Encode(const PointCloud& cloud, const BevConfig& config) {
  config.Validate();
  if (cloud.empty()) throw EmptyInputError("cannot encode an empty cloud");

  const int W = config.width;
  const int H = config.height;
  const size_t cells = static_cast<size_t>(W) * H;

  BevPair bev;
  bev.config_ = config;
  std::vector<int64_t> cell_of(cloud.size(), -1);
  std::vector<uint32_t> counts(cells, 0);
  float imin = std::numeric_limits<float>::infinity();
  float imax = -std::numeric_limits<float>::infinity();
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Point& p = cloud.points[i];
    imin = std::min(imin, p.intensity);
    imax = std::max(imax, p.intensity);
    const Pixel px = PixelOf(p.x, p.y, config);
    if (px.u < 0 || px.v < 0 || px.u >= W || px.v >= H) {
      ++bev.num_cropped_;
      continue;
    }
    const size_t cell = static_cast<size_t>(px.v) * W + px.u;
    cell_of[i] = static_cast<int64_t>(cell);
    ++counts[cell];
  }
  if (bev.num_cropped_ == cloud.size()) {
    throw EmptyProjectionError("all " + std::to_string(cloud.size()) +
                               " points fall outside the BEV grid");
  }

  bev.cell_offsets_.assign(cells + 1, 0);
  for (size_t c = 0; c < cells; ++c) bev.cell_offsets_[c + 1] = bev.cell_offsets_[c] + counts[c];
  bev.point_indices_.resize(bev.cell_offsets_[cells]);
  std::vector<uint32_t> cursor(bev.cell_offsets_.begin(), bev.cell_offsets_.end() - 1);
  std::vector<float> cell_max_intensity(cells, -std::numeric_limits<float>::infinity());
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (cell_of[i] < 0) continue;
    const size_t cell = static_cast<size_t>(cell_of[i]);
    bev.point_indices_[cursor[cell]++] = static_cast<uint32_t>(i);
    cell_max_intensity[cell] = std::max(cell_max_intensity[cell], cloud.points[i].intensity);
  }

  uint32_t cmin = std::numeric_limits<uint32_t>::max();
  uint32_t cmax = 0;
  for (size_t c = 0; c < cells; ++c) {
    if (counts[c] == 0) continue;
    cmin = std::min(cmin, counts[c]);
    cmax = std::max(cmax, counts[c]);
  }

  bev.spatial_ = BevImage::Zero(H, W);
  bev.intensity_ = BevImage::Zero(H, W);
  bev.occupancy_ = BevImage::Zero(H, W);
  const double crange = static_cast<double>(cmax) - cmin;
  const double irange = static_cast<double>(imax) - imin;
  for (int v = 0; v < H; ++v) {
    for (int u = 0; u < W; ++u) {
      const size_t c = static_cast<size_t>(v) * W + u;
      if (counts[c] == 0) continue;
      bev.occupied_.push_back({u, v});
      bev.occupancy_(v, u) = 1.f;
      bev.spatial_(v, u) =
          crange > 0.0 ? static_cast<float>((counts[c] - static_cast<double>(cmin)) / crange) : 1.f;
      bev.intensity_(v, u) =
          irange > 0.0 ? static_cast<float>((cell_max_intensity[c] - static_cast<double>(imin)) / irange)
                       : 1.f;
    }
  }
  return bev;
}

BevPair MakeBevPairForTesting(const BevConfig& config, const BevImage& spatial,
                              const BevImage& intensity) {
  config.Validate();
  if (spatial.rows() != config.height || spatial.cols() != config.width ||
      intensity.rows() != config.height || intensity.cols() != config.width) {
    throw ConfigError("image dimensions do not match the BEV config");
  }
  BevPair bev;
  bev.config_ = config;
  bev.spatial_ = spatial;
  bev.intensity_ = intensity;
  bev.occupancy_ = ((spatial.array() != 0.f) || (intensity.array() != 0.f)).cast<float>();
  for (int v = 0; v < config.height; ++v) {
    for (int u = 0; u < config.width; ++u) {
      if (bev.occupancy_(v, u) > 0.f) bev.occupied_.push_back({u, v});
    }
  }
  return bev;
}

uint32_t LiftKeypointIndex(const BevPair& bev, const PointCloud& cloud, Pixel pixel,
                           BevChannel channel) {
  const auto bucket = bev.Bucket(pixel);
  if (bucket.empty()) {
    throw MissingBucketError("pixel (" + std::to_string(pixel.u) + ", " + std::to_string(pixel.v) +
                             ") has no points");
  }
  for (const uint32_t idx : bucket) {
    if (idx >= cloud.size()) throw ArgumentError("bucket index out of range for cloud");
  }
  uint32_t best = bucket[0];
  for (const uint32_t idx : bucket.subspan(1)) {
    const Point& p = cloud.points[idx];
    const Point& b = cloud.points[best];
    if (channel == BevChannel::kSpatial ? std::abs(p.z) < std::abs(b.z)
                                        : p.intensity > b.intensity) {
      best = idx;
    }
  }
  return best;
}

std::vector<Eigen::Vector3d> LiftKeypoints(const BevPair& bev, const PointCloud& cloud,
                                           std::span<const Pixel> pixels, BevChannel channel) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(pixels.size());
  for (const Pixel& px : pixels) {
    out.push_back(cloud.points[LiftKeypointIndex(bev, cloud, px, channel)].xyz());
  }
  return out;
}

void WritePgm(const BevImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << image.cols() << ' ' << image.rows() << "\n255\n";
  std::string row(static_cast<size_t>(image.cols()), '\0');
  for (Eigen::Index v = 0; v < image.rows(); ++v) {
    for (Eigen::Index u = 0; u < image.cols(); ++u) {
      const float x = std::clamp(image(v, u), 0.f, 1.f);
      row[static_cast<size_t>(u)] = static_cast<char>(std::lround(x * 255.f));
    }
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace unilgl
