#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "unilgl/bev.h"
#include "unilgl/features.h"
#include "unilgl/types.h"

namespace unilgl {

struct Correspondence {
  Eigen::Vector3d query;     // point in the query sensor frame
  Eigen::Vector3d database;  // matched point in the database sensor frame
  BevChannel channel = BevChannel::kSpatial;
  double feature_distance = 0.0;
};

using CorrespondenceSet = std::vector<Correspondence>;

// Pose minimizing sum_i w_i |T q_i - d_i|^2: weighted centroids, SVD of the
// weighted cross-covariance, reflection guard. Throws DegeneracyError when
// fewer than three pairs carry weight or the weighted cross-covariance has
// rank < 2.
PoseSE3 SolveWeighted(std::span<const Correspondence> pairs, std::span<const double> weights);
PoseSE3 SolveWeighted(std::span<const Eigen::Vector3d> query, std::span<const Eigen::Vector3d> database,
                      std::span<const double> weights);

struct GncConfig {
  double xi = 0.5;         // TLS truncation, meters
  double growth = 1.4;     // mu multiplier per outer iteration
  int max_iterations = 100;
  double tolerance = 1e-6;  // max weight change for convergence
  // Fewer inliers (w > 0.5) than this, absolute or as a fraction of all
  // pairs, is reported as NoConsensusError.
  int min_inliers = 3;
  double min_inlier_ratio = 0.1;

  void Validate() const;
};

// Surrogate cost of one GNC outer iteration at fixed mu: before the weight
// update, after it, and after the following pose solve.
struct GncStep {
  double mu = 0.0;
  double cost_start = 0.0;
  double cost_after_weights = 0.0;
  double cost_after_pose = 0.0;
};

struct RegistrationResult {
  PoseSE3 pose;  // maps query-frame points into the database frame
  std::vector<double> weights;
  int iterations = 0;
  bool converged = false;
  int inlier_count = 0;
  std::vector<GncStep> trace;
  // Correspondence counts per channel (filled by Localize).
  int spatial_matches = 0;
  int intensity_matches = 0;
};

// w r^2 + mu (1 - w) / (mu + w) xi^2, the outlier-process form of TLS.
double GncSurrogate(double residual_sq, double weight, double mu, double xi);
// Closed-form minimizer of GncSurrogate over w in [0, 1].
double GncWeight(double residual_sq, double mu, double xi);

// Graduated non-convexity for truncated least squares. Starts from the
// all-inlier solution with mu = xi^2 / (2 r_max^2 - xi^2) and alternates the
// weight update and the weighted pose solve, growing mu each round, until
// weights stop changing or the iteration cap is reached.
RegistrationResult GncRegister(const CorrespondenceSet& pairs, const GncConfig& cfg);

struct MatchConfig {
  int max_keypoints = 512;  // per channel
  bool mutual = true;
  // Reverse nearest neighbour must land within this many pixels.
  int mutual_tolerance_px = 2;
  // Best / second-best feature distance cap, second best taken outside
  // `exclusion_radius_px` of the best; values >= 1 disable it.
  double ratio = 0.95;
  int exclusion_radius_px = 8;

  void Validate() const;
};

struct MatchSide {
  const BevPair& bev;
  const LocalFeatureMap& features;
  const PointCloud& cloud;
};

// Query keypoints for one channel: the brightest occupied pixel of every
// patch, then the brightest `max_keypoints` of those (ties by position).
std::vector<Pixel> SelectKeypoints(const BevPair& bev, BevChannel channel, int max_keypoints);

struct FeatureMatch {
  int query = 0;     // index into the query keypoints
  int database = 0;  // index into the database candidates
  double distance = 0.0;
};

// Nearest-neighbour search in feature space with the optional ratio and
// mutual filters. Columns are unit-norm features; `query_all` with its pixels
// is the reverse-search set for the mutual check (it must contain the
// keypoints). Nearest neighbours are decided by exact double-precision
// distance among the top single-precision candidates (ties: lowest index).
// With the ratio test enabled, a keypoint whose nearest distance is shared by
// two database features is ambiguous and dropped.
std::vector<FeatureMatch> MatchFeatureMatrices(const Eigen::MatrixXf& query_keypoints,
                                               std::span<const Pixel> query_keypoint_pixels,
                                               const Eigen::MatrixXf& query_all,
                                               std::span<const Pixel> query_all_pixels,
                                               const Eigen::MatrixXf& database,
                                               std::span<const Pixel> database_pixels,
                                               const MatchConfig& cfg);

// Pixel-level matching per channel (never across channels), followed by
// keypoint lifting. Throws InsufficientMatchesError below three pairs.
CorrespondenceSet MatchFeatures(const MatchSide& query, const MatchSide& database,
                                const MatchConfig& cfg);

struct LocalizeConfig {
  MatchConfig match;
  GncConfig gnc;
};

RegistrationResult Localize(const MatchSide& query, const MatchSide& database,
                            const LocalizeConfig& cfg);

struct PoseError {
  double translation = 0.0;  // meters
  double rotation_deg = 0.0;
  bool success = false;
};

inline constexpr double kSuccessTranslation = 2.0;
inline constexpr double kSuccessRotationDeg = 5.0;

// e_t = |t_est - t_gt|, e_R = |Log(R_est^T R_gt)| in degrees, success iff
// e_t < 2 m and e_R < 5 deg.
PoseError PoseMetrics(const PoseSE3& estimate, const PoseSE3& truth);

// "pose <12 values> inliers <n> iterations <k> converged <0|1>".
std::string FormatRegistrationRecord(const RegistrationResult& result);

}  // namespace unilgl
