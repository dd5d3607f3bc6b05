#include "unilgl/registration.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/LU>
#include <Eigen/SVD>

#include "unilgl/cloud_io.h"
#include "unilgl/errors.h"
#include "unilgl/lie.h"

namespace unilgl {

PoseSE3 SolveWeighted(std::span<const Eigen::Vector3d> query, std::span<const Eigen::Vector3d> database,
                      std::span<const double> weights) {
  const size_t n = query.size();
  if (database.size() != n || weights.size() != n) {
    throw ArgumentError("point sets and weights must have equal length");
  }
  size_t active = 0;
  double wsum = 0.0;
  for (const double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ArgumentError("weights must be finite and >= 0");
    if (w > 0.0) ++active;
    wsum += w;
  }
  if (active < 3 || !(wsum > 0.0)) {
    throw DegeneracyError("weighted alignment needs at least three weighted pairs");
  }
  Eigen::Vector3d qc = Eigen::Vector3d::Zero();
  Eigen::Vector3d dc = Eigen::Vector3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    qc += weights[i] * query[i];
    dc += weights[i] * database[i];
  }
  qc /= wsum;
  dc /= wsum;
  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  for (size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    H += weights[i] * (query[i] - qc) * (database[i] - dc).transpose();
  }
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Vector3d s = svd.singularValues();
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0)) {
    throw DegeneracyError("weighted cross-covariance has rank < 2 (collinear or coincident points)");
  }
  const Eigen::Matrix3d& U = svd.matrixU();
  const Eigen::Matrix3d& V = svd.matrixV();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((V * U.transpose()).determinant() < 0.0) D(2, 2) = -1.0;
  const Eigen::Matrix3d R = V * D * U.transpose();
  return PoseSE3(R, dc - R * qc);
}

PoseSE3 SolveWeighted(std::span<const Correspondence> pairs, std::span<const double> weights) {
  std::vector<Eigen::Vector3d> q, d;
  q.reserve(pairs.size());
  d.reserve(pairs.size());
  for (const auto& c : pairs) {
    q.push_back(c.query);
    d.push_back(c.database);
  }
  return SolveWeighted(q, d, weights);
}

void GncConfig::Validate() const {
  if (!(xi > 0.0)) throw ConfigError("GNC truncation xi must be positive");
  if (!(growth > 1.0)) throw ConfigError("GNC growth factor must exceed 1");
  if (max_iterations < 1) throw ConfigError("GNC needs at least one iteration");
  if (!(tolerance > 0.0)) throw ConfigError("GNC tolerance must be positive");
  if (min_inliers < 3) throw ConfigError("GNC needs at least three inliers");
  if (!(min_inlier_ratio >= 0.0 && min_inlier_ratio <= 1.0)) {
    throw ConfigError("GNC minimum inlier ratio must lie in [0, 1]");
  }
}

double GncSurrogate(double residual_sq, double weight, double mu, double xi) {
  return weight * residual_sq + mu * (1.0 - weight) / (mu + weight) * xi * xi;
}

double GncWeight(double residual_sq, double mu, double xi) {
  const double xi2 = xi * xi;
  if (residual_sq >= (mu + 1.0) / mu * xi2) return 0.0;
  if (residual_sq <= mu / (mu + 1.0) * xi2) return 1.0;
  return std::clamp(std::sqrt(xi2 * mu * (mu + 1.0) / residual_sq) - mu, 0.0, 1.0);
}

namespace {

std::vector<double> SquaredResiduals(const CorrespondenceSet& pairs, const PoseSE3& pose) {
  std::vector<double> r2(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    r2[i] = (pose * pairs[i].query - pairs[i].database).squaredNorm();
  }
  return r2;
}

double TotalSurrogate(const std::vector<double>& r2, const std::vector<double>& w, double mu, double xi) {
  double s = 0.0;
  for (size_t i = 0; i < r2.size(); ++i) s += GncSurrogate(r2[i], w[i], mu, xi);
  return s;
}

int CountInliers(const std::vector<double>& w) {
  return static_cast<int>(std::count_if(w.begin(), w.end(), [](double x) { return x > 0.5; }));
}

}  // namespace

RegistrationResult GncRegister(const CorrespondenceSet& pairs, const GncConfig& cfg) {
  cfg.Validate();
  if (pairs.size() < 3) throw InsufficientMatchesError("registration needs at least three pairs");
  for (const auto& c : pairs) {
    if (!c.query.allFinite() || !c.database.allFinite()) {
      throw ArgumentError("correspondence coordinates must be finite");
    }
  }
  const double xi2 = cfg.xi * cfg.xi;
  RegistrationResult result;
  result.weights.assign(pairs.size(), 1.0);
  result.pose = SolveWeighted(pairs, result.weights);
  std::vector<double> r2 = SquaredResiduals(pairs, result.pose);
  const double r2_max = *std::max_element(r2.begin(), r2.end());

  if (2.0 * r2_max - xi2 <= 0.0) {
    // Every residual already sits inside the convex regime.
    result.converged = true;
    result.inlier_count = static_cast<int>(pairs.size());
    return result;
  }
  double mu = xi2 / (2.0 * r2_max - xi2);
  std::vector<double> w = result.weights;
  for (int it = 0; it < cfg.max_iterations; ++it) {
    GncStep step;
    step.mu = mu;
    step.cost_start = TotalSurrogate(r2, w, mu, cfg.xi);
    double max_change = 0.0;
    double wsum = 0.0;
    for (size_t i = 0; i < pairs.size(); ++i) {
      const double nw = GncWeight(r2[i], mu, cfg.xi);
      max_change = std::max(max_change, std::abs(nw - w[i]));
      w[i] = nw;
      wsum += nw;
    }
    step.cost_after_weights = TotalSurrogate(r2, w, mu, cfg.xi);
    if (!(wsum > 0.0)) {
      throw NoConsensusError("all correspondence weights collapsed to zero");
    }
    result.pose = SolveWeighted(pairs, w);
    r2 = SquaredResiduals(pairs, result.pose);
    step.cost_after_pose = TotalSurrogate(r2, w, mu, cfg.xi);
    result.trace.push_back(step);
    result.iterations = it + 1;
    if (max_change < cfg.tolerance) {
      result.converged = true;
      break;
    }
    mu *= cfg.growth;
  }
  result.weights = w;
  result.inlier_count = CountInliers(w);
  const double ratio = static_cast<double>(result.inlier_count) / static_cast<double>(pairs.size());
  if (result.inlier_count < cfg.min_inliers || ratio < cfg.min_inlier_ratio) {
    throw NoConsensusError("only " + std::to_string(result.inlier_count) + " of " +
                           std::to_string(pairs.size()) + " correspondences agree");
  }
  return result;
}

void MatchConfig::Validate() const {
  if (max_keypoints < 3) throw ConfigError("max_keypoints must be at least 3");
  if (mutual_tolerance_px < 0) throw ConfigError("mutual tolerance must be >= 0");
  if (!(ratio > 0.0)) throw ConfigError("match ratio must be positive");
  if (exclusion_radius_px < 0) throw ConfigError("exclusion radius must be >= 0");
}

std::vector<Pixel> SelectKeypoints(const BevPair& bev, BevChannel channel, int max_keypoints) {
  const BevConfig& cfg = bev.config();
  const int C = cfg.patch_size;
  const BevImage& img = bev.image(channel);
  struct Candidate {
    Pixel px;
    float value;
    int order;
  };
  std::vector<Candidate> picks;
  for (int pr = 0; pr < cfg.height / C; ++pr) {
    for (int pc = 0; pc < cfg.width / C; ++pc) {
      bool found = false;
      Candidate best{};
      for (int v = pr * C; v < (pr + 1) * C; ++v) {
        for (int u = pc * C; u < (pc + 1) * C; ++u) {
          if (!bev.Occupied({u, v})) continue;
          if (!found || img(v, u) > best.value) {
            best = {{u, v}, img(v, u), 0};
            found = true;
          }
        }
      }
      if (found) {
        best.order = static_cast<int>(picks.size());
        picks.push_back(best);
      }
    }
  }
  if (static_cast<int>(picks.size()) > max_keypoints) {
    std::stable_sort(picks.begin(), picks.end(),
                     [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
    picks.resize(static_cast<size_t>(max_keypoints));
    std::sort(picks.begin(), picks.end(),
              [](const Candidate& a, const Candidate& b) { return a.order < b.order; });
  }
  std::vector<Pixel> out;
  out.reserve(picks.size());
  for (const auto& c : picks) out.push_back(c.px);
  return out;
}

namespace {

double PixelDistance(const Pixel& a, const Pixel& b) { return std::hypot(a.u - b.u, a.v - b.v); }

// Single-precision similarities only screen candidates: every column within
// kRefineSlack of the float maximum is re-ranked by its exact double-precision
// distance to `query`, so rounding in the product never decides between
// near-identical features. Ties keep the lowest index; `tied` reports whether
// another candidate sits at exactly the same distance.
constexpr float kRefineSlack = 1e-5f;

struct BestMatch {
  int index = 0;
  double distance = 0.0;
  bool tied = false;
};

BestMatch Refine(const Eigen::Ref<const Eigen::VectorXf>& sim, const Eigen::Ref<const Eigen::VectorXf>& query,
                 const Eigen::MatrixXf& candidates) {
  const float top = sim.maxCoeff();
  const Eigen::VectorXd q = query.cast<double>();
  BestMatch best;
  best.distance = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < sim.size(); ++j) {
    if (sim[j] < top - kRefineSlack) continue;
    const double d = (candidates.col(j).cast<double>() - q).norm();
    if (d < best.distance) {
      best = {static_cast<int>(j), d, false};
    } else if (d == best.distance) {
      best.tied = true;
    }
  }
  return best;
}

}  // namespace

std::vector<FeatureMatch> MatchFeatureMatrices(const Eigen::MatrixXf& query_keypoints,
                                               std::span<const Pixel> query_keypoint_pixels,
                                               const Eigen::MatrixXf& query_all,
                                               std::span<const Pixel> query_all_pixels,
                                               const Eigen::MatrixXf& database,
                                               std::span<const Pixel> database_pixels,
                                               const MatchConfig& cfg) {
  std::vector<FeatureMatch> out;
  if (query_keypoints.cols() == 0 || database.cols() == 0) return out;
  if (query_keypoints.rows() != database.rows()) throw ArgumentError("feature dimensions differ");
  const Eigen::MatrixXf sim = query_keypoints.transpose() * database;  // K x N
  std::vector<BestMatch> best(static_cast<size_t>(sim.rows()));
  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    best[i] = Refine(sim.row(i).transpose(), query_keypoints.col(i), database);
  }

  std::vector<int> reverse(static_cast<size_t>(sim.rows()), -1);
  if (cfg.mutual && query_all.cols() > 0) {
    Eigen::MatrixXf chosen(database.rows(), sim.rows());
    for (Eigen::Index i = 0; i < sim.rows(); ++i) chosen.col(i) = database.col(best[i].index);
    const Eigen::MatrixXf back = query_all.transpose() * chosen;  // Nq x K
    for (Eigen::Index i = 0; i < sim.rows(); ++i) {
      reverse[i] = Refine(back.col(i), chosen.col(i), query_all).index;
    }
  }

  for (Eigen::Index i = 0; i < sim.rows(); ++i) {
    const int j1 = best[i].index;
    const double d1 = best[i].distance;
    if (cfg.ratio < 1.0) {
      // An identical feature elsewhere (edge-clamped interpolation) makes the
      // nearest neighbour ambiguous even inside the exclusion radius.
      if (best[i].tied) continue;
      float s2 = -std::numeric_limits<float>::infinity();
      for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        if (PixelDistance(database_pixels[j], database_pixels[j1]) <= cfg.exclusion_radius_px) continue;
        s2 = std::max(s2, sim(i, j));
      }
      if (std::isfinite(s2)) {
        const double d2 = std::sqrt(std::max(0.0, 2.0 - 2.0 * static_cast<double>(s2)));
        if (!(d1 <= cfg.ratio * d2) || d2 == 0.0) continue;
      }
    }
    if (cfg.mutual && query_all.cols() > 0) {
      if (PixelDistance(query_all_pixels[reverse[i]], query_keypoint_pixels[i]) >
          cfg.mutual_tolerance_px) {
        continue;
      }
    }
    out.push_back({static_cast<int>(i), j1, d1});
  }
  return out;
}

CorrespondenceSet MatchFeatures(const MatchSide& query, const MatchSide& database,
                                const MatchConfig& cfg) {
  cfg.Validate();
  if (!(query.bev.config() == database.bev.config())) {
    throw ConfigError("query and database were encoded with different BEV configurations");
  }
  CorrespondenceSet pairs;
  for (const BevChannel channel : {BevChannel::kSpatial, BevChannel::kIntensity}) {
    const std::vector<Pixel> keypoints = SelectKeypoints(query.bev, channel, cfg.max_keypoints);
    const std::vector<Pixel>& db_pixels = database.bev.occupied();
    const std::vector<Pixel>& q_pixels = query.bev.occupied();
    const Eigen::MatrixXf kq = InterpolatePixels(query.features, channel, keypoints);
    const Eigen::MatrixXf fdb = InterpolatePixels(database.features, channel, db_pixels);
    const Eigen::MatrixXf fq = cfg.mutual ? InterpolatePixels(query.features, channel, q_pixels)
                                          : Eigen::MatrixXf();
    const auto matches = MatchFeatureMatrices(kq, keypoints, fq, q_pixels, fdb, db_pixels, cfg);
    for (const FeatureMatch& m : matches) {
      Correspondence c;
      c.query = query.cloud.points[LiftKeypointIndex(query.bev, query.cloud, keypoints[m.query], channel)].xyz();
      c.database =
          database.cloud.points[LiftKeypointIndex(database.bev, database.cloud, db_pixels[m.database], channel)]
              .xyz();
      c.channel = channel;
      c.feature_distance = m.distance;
      pairs.push_back(c);
    }
  }
  if (pairs.size() < 3) {
    throw InsufficientMatchesError("only " + std::to_string(pairs.size()) +
                                   " feature matches survived (need 3)");
  }
  return pairs;
}

RegistrationResult Localize(const MatchSide& query, const MatchSide& database,
                            const LocalizeConfig& cfg) {
  const CorrespondenceSet pairs = MatchFeatures(query, database, cfg.match);
  RegistrationResult result = GncRegister(pairs, cfg.gnc);
  for (const auto& c : pairs) {
    (c.channel == BevChannel::kSpatial ? result.spatial_matches : result.intensity_matches)++;
  }
  return result;
}

PoseError PoseMetrics(const PoseSE3& estimate, const PoseSE3& truth) {
  PoseError e;
  e.translation = (estimate.translation() - truth.translation()).norm();
  e.rotation_deg =
      lie::LogSO3(estimate.rotation().transpose() * truth.rotation()).norm() * 180.0 / M_PI;
  e.success = e.translation < kSuccessTranslation && e.rotation_deg < kSuccessRotationDeg;
  return e;
}

std::string FormatRegistrationRecord(const RegistrationResult& result) {
  return "pose " + FormatPose(result.pose) + " inliers " + std::to_string(result.inlier_count) +
         " iterations " + std::to_string(result.iterations) + " converged " +
         (result.converged ? "1" : "0");
}

}  // namespace unilgl
