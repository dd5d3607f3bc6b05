#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "unilgl/cloud_io.h"
#include "unilgl/types.h"

namespace unilgl {

// Convex polygon, counter-clockwise, strictly convex, no repeated vertices.
struct Hull2D {
  std::vector<Eigen::Vector2d> vertices;
  double area = 0.0;
};

// Co-visibility thresholds on convex-hull IoU.
inline constexpr double kPositiveIou = 0.25;
inline constexpr double kNegativeIou = 0.2;
// Distance-supervision baseline: positives lie within this many meters.
inline constexpr double kPositiveDistance = 5.0;

enum class PairLabel { kPositive, kNegative, kIgnore };

std::string ToString(PairLabel label);
PairLabel ParsePairLabel(const std::string& text);

struct CovisLabel {
  double iou = 0.0;  // IoU, or center distance (m) in distance mode
  PairLabel label = PairLabel::kIgnore;
};

// positive iff iou > 0.25, negative iff iou < 0.2, ignore in between.
PairLabel LabelFromIou(double iou);
PairLabel LabelFromDistance(double distance);

// Signed shoelace area, positive for counter-clockwise input.
double SignedArea(std::span<const Eigen::Vector2d> polygon);

// Monotone-chain hull. Throws DegenerateHullError for fewer than three
// non-collinear points.
Hull2D ConvexHull(std::span<const Eigen::Vector2d> points);

// Hull of the world-frame (x, y) footprint of `cloud` placed at `world_pose`.
Hull2D CloudHull(const PointCloud& cloud, const PoseSE3& world_pose);

// Intersection polygon of two convex polygons (Sutherland–Hodgman). Empty
// when the overlap has no area.
std::vector<Eigen::Vector2d> IntersectConvex(const Hull2D& a, const Hull2D& b);

double Iou(const Hull2D& a, const Hull2D& b);

enum class LabelMode { kIou, kDistance };

struct LabelOptions {
  LabelMode mode = LabelMode::kIou;
  // Pairs whose hull centroids (or poses, in distance mode) differ by more
  // than this are not emitted; consumers treat missing pairs as negative.
  std::optional<double> max_centroid_distance;
};

using PairKey = std::pair<int, int>;
using LabelMap = std::map<PairKey, CovisLabel>;

struct HullSet {
  std::vector<std::optional<Hull2D>> hulls;  // nullopt for degenerate entries
  std::vector<std::string> diagnostics;
};

HullSet ComputeHulls(const DatasetManifest& manifest);

// Labels all unordered pairs (i < j) of one sequence.
LabelMap LabelPairs(const DatasetManifest& manifest, const LabelOptions& options,
                    std::vector<std::string>* diagnostics = nullptr);
LabelMap LabelPairs(const HullSet& hulls, std::span<const PoseSE3> poses,
                    const LabelOptions& options);

// Labels every (query i, database j) combination.
LabelMap LabelCrossPairs(const DatasetManifest& queries, const DatasetManifest& database,
                         const LabelOptions& options,
                         std::vector<std::string>* diagnostics = nullptr);
LabelMap LabelCrossPairs(const HullSet& query_hulls, std::span<const PoseSE3> query_poses,
                         const HullSet& db_hulls, std::span<const PoseSE3> db_poses,
                         const LabelOptions& options);

// CSV with header "i,j,iou,label" (or "i,j,distance,label").
void WriteLabelsCsv(const LabelMap& labels, LabelMode mode, const std::filesystem::path& path);
LabelMap ReadLabelsCsv(const std::filesystem::path& path);

}  // namespace unilgl
