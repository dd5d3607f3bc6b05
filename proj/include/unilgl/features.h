#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "unilgl/bev.h"
#include "unilgl/types.h"

namespace unilgl {

inline constexpr int kDescriptorDim = 384;

// Unit-norm global descriptor of one cloud.
struct GlobalDescriptor {
  Eigen::VectorXf values;

  int dim() const { return static_cast<int>(values.size()); }
};

// Patch-level local feature tokens for both BEV channels. Column
// `row * cols + col` of each token matrix is the unit-norm token of that
// patch.
struct LocalFeatureMap {
  int rows = 0;
  int cols = 0;
  int patch_size = 0;
  Eigen::MatrixXf spatial;    // dim x (rows * cols)
  Eigen::MatrixXf intensity;  // dim x (rows * cols)

  int dim() const { return static_cast<int>(spatial.rows()); }
  int num_patches() const { return rows * cols; }
  const Eigen::MatrixXf& tokens(BevChannel channel) const {
    return channel == BevChannel::kSpatial ? spatial : intensity;
  }
};

struct Features {
  GlobalDescriptor global;
  LocalFeatureMap local;
};

// Produces features for a BEV pair. Implementations must be stateless or
// internally synchronized.
class FeatureBackend {
 public:
  virtual ~FeatureBackend() = default;
  virtual std::string name() const = 0;
  // `cloud_id` identifies the source cloud for backends keyed by cloud
  // rather than by content.
  virtual Features Extract(const BevPair& bev, const std::string& cloud_id) const = 0;
};

struct ReferenceBackendOptions {
  uint64_t seed = 0x5eed1234abcdULL;
  int dim = kDescriptorDim;
  // Radius, in patch sizes, of the disc summarized by each patch token.
  double context_radius = 1.5;
  // Global descriptor: histogram of pairwise pixel distances between
  // occupied cells, split by the (unordered) pair of intensity levels.
  int global_distance_bins = 30;
  double global_pair_range_px = 90.0;
  int global_intensity_bins = 4;
};

// Deterministic hand-built stand-in for a trained network. Each patch token
// is a seeded random projection of rotation-invariant statistics (8-bin
// histogram, mean, max, spread, occupancy) of both channels over a disc
// around the patch center. The global descriptor is a seeded projection of
// the square-rooted, normalized histogram of distances between occupied
// pixels, split by their intensity levels. Distances between scene elements
// do not depend on where the sensor stands or where it faces, so the
// descriptor is invariant to yaw and changes with translation only through
// what is visible.
class ReferenceBackend final : public FeatureBackend {
 public:
  explicit ReferenceBackend(ReferenceBackendOptions options = {});

  std::string name() const override { return "reference"; }
  Features Extract(const BevPair& bev, const std::string& cloud_id = {}) const override;

  // Raw per-patch statistics before projection; exposed for tests.
  static constexpr int kRawPatchDim = 49;
  Eigen::MatrixXf RawPatchStatistics(const BevPair& bev) const;
  // Raw global statistics before projection. Images with more than 4000
  // occupied pixels use an evenly strided subset of them.
  Eigen::VectorXf PairHistogram(const BevPair& bev) const;

 private:
  ReferenceBackendOptions options_;
  Eigen::MatrixXf local_projection_;   // dim x kRawPatchDim
  Eigen::MatrixXf global_projection_;  // dim x raw global size
};

// Validates that the BEV dimensions are compatible with the backend output
// and returns its features.
Features Extract(const BevPair& bev, const FeatureBackend& backend,
                 const std::string& cloud_id = {});

// Feature at a real-valued pixel (u, v): bilinear blend of the four
// surrounding patch-center tokens (edge-clamped), L2-normalized. Patch
// (r, c) is centered at u = c*C + (C-1)/2, v = r*C + (C-1)/2. Throws
// RangeError outside [0, W-1] x [0, H-1].
Eigen::VectorXf Interpolate(const LocalFeatureMap& map, BevChannel channel, double u, double v);

// Batched Interpolate at integer pixels; column k is the feature of
// pixels[k].
Eigen::MatrixXf InterpolatePixels(const LocalFeatureMap& map, BevChannel channel,
                                  std::span<const Pixel> pixels);

struct LossConfig {
  double margin = 0.3;  // triplet margin c
  double alpha = 0.125;  // local-loss balance
  int negatives_per_query = 18;
  double temperature = 1.0;  // InfoNCE logits are dot / temperature

  void Validate() const;
};

// max_n max(c + |q - p| - |q - n|, 0).
double LazyTripletLoss(const GlobalDescriptor& query, const GlobalDescriptor& positive,
                       std::span<const GlobalDescriptor> negatives, const LossConfig& cfg);
double LazyTripletLossFromDistances(double positive_distance,
                                    std::span<const double> negative_distances, double margin);

// -(1/|A|) sum_i log(exp(a_i . b_pos(i)) / sum_k exp(a_i . b_k)). All vectors
// must be unit norm within 1e-3.
double InfoNceLoss(std::span<const Eigen::VectorXf> feats_a, std::span<const size_t> positive_index,
                   std::span<const Eigen::VectorXf> feats_b, double temperature = 1.0);

// lpr + alpha * (sum of the four directional/channel local losses).
double CombinedLoss(double lpr_loss, const std::array<double, 4>& local_losses,
                    const LossConfig& cfg);

// One uniformly random occupied pixel per patch that has any, in patch order.
std::vector<Pixel> SampleTrainingKeypoints(const BevPair& bev, uint64_t seed);

// InfoNCE inputs for one image pair: keypoints of the first image whose
// lifted point, moved by `first_to_second`, lands within one patch of a
// keypoint of the second image become anchors; all second-image keypoints
// are candidates.
struct InfoNceBatch {
  std::vector<Eigen::VectorXf> anchors;
  std::vector<size_t> positive_index;
  std::vector<Eigen::VectorXf> candidates;
};
InfoNceBatch BuildInfoNceBatch(const BevPair& first, const PointCloud& first_cloud,
                               const LocalFeatureMap& first_map, const BevPair& second,
                               const PointCloud& second_cloud, const LocalFeatureMap& second_map,
                               const PoseSE3& first_to_second, BevChannel channel,
                               uint64_t seed);

// Embedding file, little endian:
//   char[8] "ULGLEMB1"; uint32 version (1); uint32 dim; uint32 patch_size;
//   uint32 rows; uint32 cols; uint64 record count;
//   per record: uint32 id length, id bytes, dim floats (global),
//   rows*cols*dim floats (spatial tokens, patch-major), same for intensity.
// A zero-byte file is an empty set.
struct EmbeddingSet {
  int dim = kDescriptorDim;
  int patch_size = 8;
  int rows = 0;
  int cols = 0;
  std::map<std::string, Features> records;
  std::vector<std::string> warnings;
};

void ExportEmbeddings(const EmbeddingSet& set, const std::filesystem::path& path);
// Vectors within 1e-3 of unit norm are renormalized; others are rejected
// with a ValidationError naming the cloud id.
EmbeddingSet ImportEmbeddings(const std::filesystem::path& path);

// Serves features from an imported embedding set by cloud id.
class ImportedBackend final : public FeatureBackend {
 public:
  explicit ImportedBackend(std::shared_ptr<const EmbeddingSet> set) : set_(std::move(set)) {}
  std::string name() const override { return "imported"; }
  Features Extract(const BevPair& bev, const std::string& cloud_id) const override;

 private:
  std::shared_ptr<const EmbeddingSet> set_;
};

}  // namespace unilgl
