#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "unilgl/types.h"

namespace unilgl {

struct BevConfig {
  double resolution = 0.4;  // meters per pixel
  int width = 200;          // pixels along x
  int height = 200;         // pixels along y
  int patch_size = 8;       // feature patch edge C, pixels

  // Throws ConfigError unless resolution > 0 and both dimensions are positive
  // multiples of the patch size.
  void Validate() const;
  bool operator==(const BevConfig&) const = default;
};

// Integer pixel: u indexes columns (x), v indexes rows (y).
struct Pixel {
  int u = 0;
  int v = 0;
  bool operator==(const Pixel&) const = default;
};

enum class BevChannel { kSpatial, kIntensity };

using BevImage = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Spatial and intensity bird's-eye-view images of one cloud, together with
// the pixel -> point-index buckets used for keypoint lifting. Images are
// indexed (v, u).
class BevPair {
 public:
  const BevConfig& config() const { return config_; }
  const BevImage& spatial() const { return spatial_; }
  const BevImage& intensity() const { return intensity_; }
  // 1 where a pixel holds at least one point, else 0.
  const BevImage& occupancy() const { return occupancy_; }
  const BevImage& image(BevChannel channel) const {
    return channel == BevChannel::kSpatial ? spatial_ : intensity_;
  }

  bool InBounds(Pixel p) const {
    return p.u >= 0 && p.v >= 0 && p.u < config_.width && p.v < config_.height;
  }
  bool Occupied(Pixel p) const { return InBounds(p) && occupancy_(p.v, p.u) > 0.f; }
  // Indices into the source cloud of the points that fell in pixel `p`.
  std::span<const uint32_t> Bucket(Pixel p) const;

  // Occupied pixels in row-major order.
  const std::vector<Pixel>& occupied() const { return occupied_; }
  size_t num_retained() const { return point_indices_.size(); }
  size_t num_cropped() const { return num_cropped_; }

 private:
  friend BevPair Encode(const PointCloud& cloud, const BevConfig& config);
  friend BevPair MakeBevPairForTesting(const BevConfig& config, const BevImage& spatial,
                                       const BevImage& intensity);

  BevConfig config_;
  BevImage spatial_;
  BevImage intensity_;
  BevImage occupancy_;
  std::vector<uint32_t> cell_offsets_;   // size W*H + 1
  std::vector<uint32_t> point_indices_;  // grouped per cell
  std::vector<Pixel> occupied_;
  size_t num_cropped_ = 0;
};

// Pixel of a sensor-frame (x, y), sensor-centered. May be out of bounds.
Pixel PixelOf(double x, double y, const BevConfig& config);

// Rasterizes `cloud`. Spatial value: min-max normalized point count over
// occupied cells. Intensity value: per-cell max intensity min-max normalized
// by the whole cloud's intensity range. When all occupied cells share one
// count (or the cloud one intensity), occupied pixels are 1 and the rest 0.
// Points outside the grid are dropped and counted in num_cropped().
BevPair Encode(const PointCloud& cloud, const BevConfig& config);

// Builds a pair with the given images and no buckets; a pixel counts as
// occupied when either image is non-zero there. Only feature code that never
// lifts keypoints may consume it.
BevPair MakeBevPairForTesting(const BevConfig& config, const BevImage& spatial,
                              const BevImage& intensity);

// Index of the bucket point representing `pixel`: smallest |z| for the
// spatial channel, largest intensity for the intensity channel. Ties go to
// the earlier point.
uint32_t LiftKeypointIndex(const BevPair& bev, const PointCloud& cloud, Pixel pixel,
                           BevChannel channel);

std::vector<Eigen::Vector3d> LiftKeypoints(const BevPair& bev, const PointCloud& cloud,
                                           std::span<const Pixel> pixels, BevChannel channel);

// 8-bit binary PGM, grey = lround(value * 255).
void WritePgm(const BevImage& image, const std::filesystem::path& path);

}  // namespace unilgl
