#include "unilgl/synth.h"

#include <cmath>
#include <limits>
#include <optional>

#include <gtest/gtest.h>

#include "test_util.h"
#include "unilgl/covis.h"
#include "unilgl/errors.h"

namespace unilgl {
namespace {

SceneSpec RandomSpec(uint64_t seed, int boxes, int cylinders) {
  SceneSpec spec;
  spec.seed = seed;
  spec.extent = 60.0;
  spec.random_boxes = boxes;
  spec.random_cylinders = cylinders;
  return spec;
}

TEST(GenerateScene, DeterministicInSeed) {
  const Scene a = GenerateScene(RandomSpec(42, 30, 30));
  const Scene b = GenerateScene(RandomSpec(42, 30, 30));
  const Scene c = GenerateScene(RandomSpec(43, 30, 30));
  EXPECT_TRUE(a == b);
  EXPECT_FALSE(a == c);
  EXPECT_EQ(a.num_primitives(), 60u);
}

TEST(GenerateScene, PrimitivesStayInsideExtent) {
  const SceneSpec spec = RandomSpec(7, 50, 50);
  const Scene s = GenerateScene(spec);
  ASSERT_EQ(s.num_primitives(), 100u);
  for (const auto& b : s.boxes) {
    const double footprint = b.half_extent.head<2>().norm();
    EXPECT_LE(std::abs(b.center.x()) + footprint, spec.extent);
    EXPECT_LE(std::abs(b.center.y()) + footprint, spec.extent);
    // Boxes stand on the ground.
    EXPECT_NEAR(b.center.z(), b.half_extent.z(), 1e-12);
    EXPECT_GT(b.reflectivity, 0.0);
    EXPECT_LE(b.reflectivity, 1.0);
  }
  for (const auto& c : s.cylinders) {
    EXPECT_LE(std::abs(c.center.x()) + c.radius, spec.extent);
    EXPECT_LE(std::abs(c.center.y()) + c.radius, spec.extent);
    EXPECT_LT(c.z_min, c.z_max);
  }
}

TEST(GenerateScene, CorridorKeptClear) {
  SceneSpec spec = RandomSpec(8, 200, 200);
  spec.waypoints = {{-40, 0}, {40, 0}};
  spec.corridor_clearance = 4.0;
  const Scene s = GenerateScene(spec);
  // Distance to the segment from (-40, 0) to (40, 0).
  auto clearance = [](const Eigen::Vector2d& c) {
    return std::hypot(std::max(0.0, std::abs(c.x()) - 40.0), c.y());
  };
  for (const auto& b : s.boxes) {
    EXPECT_GE(clearance(b.center.head<2>()) - b.half_extent.head<2>().norm(), 4.0 - 1e-9);
  }
  for (const auto& c : s.cylinders) EXPECT_GE(clearance(c.center) - c.radius, 4.0 - 1e-9);
  EXPECT_GT(s.num_primitives(), 300u);
}

TEST(GenerateScene, Errors) {
  SceneSpec spec = RandomSpec(1, 5, 5);
  spec.extent = 0.0;
  EXPECT_THROW(GenerateScene(spec), ValidationError);
  EXPECT_THROW(GenerateScene(SceneSpec()), ValidationError);  // no primitives at all
  SceneSpec outside;
  outside.cylinders.push_back({{99.9, 0}, 0.5, 0.0, 3.0, 0.5});
  EXPECT_THROW(GenerateScene(outside), ValidationError);
}

// Sensor inside a closed box: every return range equals the analytic
// distance to the nearest wall along the beam, up to the range noise.
TEST(RenderScan, ClosedBoxMatchesAnalyticRanges) {
  SceneSpec spec;
  spec.extent = 50.0;
  const Eigen::Vector3d half(10.0, 7.0, 5.0);
  spec.boxes.push_back({Eigen::Vector3d(0, 0, 0), half, 0.0, 0.6});
  const Scene scene = GenerateScene(spec);
  const Eigen::Vector3d origin(1.0, -2.0, 1.8);
  const PoseSE3 pose(Eigen::Matrix3d::Identity(), origin);
  auto exact_range = [&](const Eigen::Vector3d& dir) {
    double t = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      if (dir[k] > 0) t = std::min(t, (half[k] - origin[k]) / dir[k]);
      if (dir[k] < 0) t = std::min(t, (-half[k] - origin[k]) / dir[k]);
    }
    return t;
  };
  for (const double sigma : {0.0, 0.01}) {
    ScanSpec scan;
    scan.range_noise = sigma;
    scan.azimuth_resolution_deg = 2.0;
    const PointCloud cloud = RenderScan(scene, pose, scan);
    // Every beam hits: 180 azimuths x 31 elevations.
    ASSERT_EQ(cloud.size(), 180u * 31u);
    double sum_sq = 0.0;
    for (const Point& p : cloud.points) {
      const Eigen::Vector3d q = p.xyz();
      const double err = q.norm() - exact_range(q.normalized());
      sum_sq += err * err;
      EXPECT_LE(std::abs(err), 5.0 * sigma + 1e-5);
      EXPECT_NEAR(p.intensity, ReturnIntensity(0.6, exact_range(q.normalized())), 1e-3);
    }
    const double rms = std::sqrt(sum_sq / cloud.size());
    if (sigma > 0) {
      EXPECT_NEAR(rms, sigma, 0.1 * sigma);
    } else {
      EXPECT_LT(rms, 1e-5);
    }
  }
}

TEST(RenderScan, CylinderRangeAlongAxis) {
  SceneSpec spec;
  spec.extent = 50.0;
  spec.cylinders.push_back({{10, 0}, 1.0, -5.0, 5.0, 0.5});
  const Scene scene = GenerateScene(spec);
  const auto hit = CastRay(scene, {0, 0, 0}, {1, 0, 0}, 0.1, 40.0);
  ASSERT_TRUE(hit.has_value());
  EXPECT_NEAR(hit->range, 9.0, 1e-12);
  EXPECT_FALSE(CastRay(scene, {0, 0, 0}, {-1, 0, 0}, 0.1, 40.0).has_value());
  EXPECT_FALSE(CastRay(scene, {0, 0, 0}, {1, 0, 0}, 0.1, 8.0).has_value());
}

TEST(RenderScan, DeterministicAndWedgeLimited) {
  const Scene scene = GenerateScene(RandomSpec(9, 80, 80));
  const PoseSE3 pose = PoseSE3::FromYaw(0.4, {1, 2, 1.8});
  const ScanSpec fov = ScanSpec::FovLimited(70.0);
  const PointCloud a = RenderScan(scene, pose, fov);
  const PointCloud b = RenderScan(scene, pose, fov);
  ASSERT_EQ(a.size(), b.size());
  for (size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a.points[k].x, b.points[k].x);
    EXPECT_EQ(a.points[k].intensity, b.points[k].intensity);
  }
  for (const Point& p : a.points) {
    const double az = std::atan2(p.y, p.x) * 180.0 / M_PI;
    EXPECT_GE(az, -35.0 - 1e-3);
    EXPECT_LT(az, 35.0 + 1e-3);
    EXPECT_GE(p.intensity, 0.f);
    EXPECT_LE(p.intensity, 1.f);
  }
}

// Narrow wedges facing opposite directions barely share any ground area.
TEST(RenderScan, OppositeFovWedgesHaveLowOverlap) {
  const Scene scene = GenerateScene(RandomSpec(10, 150, 200));
  const ScanSpec fov = ScanSpec::FovLimited(70.0);
  for (const double yaw : {0.0, 1.0, 2.5}) {
    const PoseSE3 front = PoseSE3::FromYaw(yaw, {0, 0, 1.8});
    const PoseSE3 back = PoseSE3::FromYaw(yaw + M_PI, {0, 0, 1.8});
    const double iou = Iou(CloudHull(RenderScan(scene, front, fov), front),
                           CloudHull(RenderScan(scene, back, fov), back));
    EXPECT_LT(iou, 0.2) << "yaw " << yaw;
  }
}

// Rotating world and sensor together about the vertical axis leaves the
// sensor-frame cloud unchanged.
TEST(RenderScan, YawEquivariance) {
  const SceneSpec spec = RandomSpec(11, 60, 60);
  const Scene scene = GenerateScene(spec);
  const double theta = 0.7;
  const Eigen::Matrix2d rot = Eigen::Rotation2Dd(theta).toRotationMatrix();
  SceneSpec turned_spec;
  turned_spec.extent = 2.0 * spec.extent;  // rotated corners may leave the square
  for (auto b : scene.boxes) {
    b.center.head<2>() = rot * b.center.head<2>();
    b.yaw += theta;
    turned_spec.boxes.push_back(b);
  }
  for (auto c : scene.cylinders) {
    c.center = rot * c.center;
    turned_spec.cylinders.push_back(c);
  }
  const Scene turned = GenerateScene(turned_spec);
  const Eigen::Vector2d t(3.0, -4.0);
  const Eigen::Vector2d rt = rot * t;
  ScanSpec scan;
  scan.range_noise = 0.0;
  const PointCloud a = RenderScan(scene, PoseSE3::FromYaw(0.2, {t.x(), t.y(), 1.8}), scan);
  const PointCloud b = RenderScan(turned, PoseSE3::FromYaw(0.2 + theta, {rt.x(), rt.y(), 1.8}), scan);
  // Beams grazing an edge may flip between hit and miss; almost all agree.
  ASSERT_NEAR(static_cast<double>(a.size()), static_cast<double>(b.size()), 0.002 * a.size());
  if (a.size() == b.size()) {
    int off = 0;
    for (size_t k = 0; k < a.size(); ++k) off += (a.points[k].xyz() - b.points[k].xyz()).norm() > 1e-3;
    EXPECT_LE(off, static_cast<int>(0.002 * a.size()));
  }
}

// Two scans of one scene from nearby poses agree once aligned by the true
// poses. A point of the second scan is co-visible when the surface point its
// beam hit (re-cast without noise) is also the first hit along the ray from
// the first sensor. Its residual is the distance to the first sensor's
// surface there: the plane through three nearby noiseless hits, skipping
// silhouettes where a fourth hit leaves that plane.
TEST(RenderScan, GroundTruthConsistentAcrossPoses) {
  const Scene scene = GenerateScene(RandomSpec(12, 80, 100));
  const ScanSpec scan;
  const double sigma = scan.range_noise;
  ASSERT_GT(sigma, 0.0);
  const PoseSE3 a = PoseSE3::FromYaw(0.3, {2, -1, 1.8});
  const PoseSE3 b = PoseSE3::FromYaw(1.9, {5, 2, 1.8});
  const PointCloud cloud_b = RenderScan(scene, b, scan);
  const Eigen::Vector3d oa = a.translation(), ob = b.translation();
  auto hit_point = [&](const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) -> std::optional<Eigen::Vector3d> {
    const auto hit = CastRay(scene, origin, dir, scan.min_range, scan.max_range);
    if (!hit) return std::nullopt;
    return Eigen::Vector3d(origin + hit->range * dir);
  };
  int covisible = 0, silhouettes = 0, consistent = 0;
  for (const Point& p : cloud_b.points) {
    const Eigen::Vector3d measured = b * p.xyz().cast<double>();
    const auto surface = hit_point(ob, (measured - ob).normalized());
    if (!surface) continue;
    const double dist = (*surface - oa).norm();
    if (dist < scan.min_range + 1.0 || dist > scan.max_range - 1.0) continue;
    const Eigen::Vector3d dir = (*surface - oa) / dist;
    const auto seen = hit_point(oa, dir);
    if (!seen || (*seen - *surface).norm() > 1e-6 * (1.0 + dist)) continue;
    ++covisible;
    const Eigen::Vector3d e1 = dir.cross(Eigen::Vector3d::UnitZ()).normalized(), e2 = dir.cross(e1);
    const double s = 1e-4;
    const auto h1 = hit_point(oa, (dir + s * e1).normalized());
    const auto h2 = hit_point(oa, (dir + s * e2).normalized());
    const auto h3 = hit_point(oa, (dir - s * e1 - s * e2).normalized());
    const Eigen::Vector3d normal = h1 && h2 ? (*h1 - *seen).cross(*h2 - *seen).normalized() : Eigen::Vector3d::Zero();
    if (!h3 || !normal.allFinite() || normal.isZero() || std::abs(normal.dot(*h3 - *seen)) > 1e-4) {
      ++silhouettes;
      continue;
    }
    consistent += std::abs(normal.dot(measured - *seen)) <= 3.0 * sigma;
  }
  ASSERT_GT(covisible, 5000);
  EXPECT_LE(silhouettes, 0.02 * covisible);
  EXPECT_GE(consistent, 0.99 * (covisible - silhouettes)) << consistent << " of " << covisible - silhouettes;
}

TEST(RenderScan, EmptyScanAndValidation) {
  SceneSpec spec;
  spec.extent = 100.0;
  spec.cylinders.push_back({{90, 90}, 0.5, 0.0, 3.0, 0.5});
  const Scene scene = GenerateScene(spec);
  EXPECT_THROW(RenderScan(scene, PoseSE3::FromYaw(0, {0, 0, 1.8}), ScanSpec()), EmptyScanError);
  EXPECT_THROW(RenderScan(scene, PoseSE3::FromYaw(0, {150, 0, 1.8}), ScanSpec()), ValidationError);
  ScanSpec bad;
  bad.fov_deg = 90.0;  // panoramic must cover 360 degrees
  EXPECT_THROW(RenderScan(scene, PoseSE3(), bad), ValidationError);
  EXPECT_THROW(ScanSpec::FovLimited(0.0).Validate(), ValidationError);
}

TEST(ReturnIntensity, FalloffAndClamp) {
  EXPECT_DOUBLE_EQ(ReturnIntensity(0.5, 0.0), 0.5);
  EXPECT_DOUBLE_EQ(ReturnIntensity(0.5, 50.0), 0.25);
  EXPECT_DOUBLE_EQ(ReturnIntensity(3.0, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(ReturnIntensity(-1.0, 0.0), 0.0);
}

}  // namespace
}  // namespace unilgl
