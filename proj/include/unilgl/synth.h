#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "unilgl/cloud_io.h"
#include "unilgl/types.h"

// Synthetic worlds made of analytic primitives and a ray-casting LiDAR
// simulator with exact ground truth. World frame: z up, ground at z = 0.
namespace unilgl {

// Box rotated by `yaw` about the vertical axis through its center.
struct BoxPrimitive {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d half_extent = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  double reflectivity = 0.5;
};

// Vertical cylinder between z_min and z_max.
struct CylinderPrimitive {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  double radius = 0.5;
  double z_min = 0.0;
  double z_max = 3.0;
  double reflectivity = 0.5;
};

// Infinite plane {x : normal . x = offset}, normal unit length.
struct PlanePrimitive {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  double reflectivity = 0.2;
};

struct SceneSpec {
  uint64_t seed = 42;
  double extent = 100.0;  // world spans [-extent, extent]^2 horizontally
  // Randomly placed landmarks (in addition to the explicit ones below).
  int random_boxes = 0;
  int random_cylinders = 0;
  bool ground_plane = false;
  double ground_reflectivity = 0.1;
  // Random landmarks keep at least this horizontal distance from every
  // waypoint-to-waypoint segment (a free corridor for the sensor).
  double corridor_clearance = 0.0;
  std::vector<BoxPrimitive> boxes;
  std::vector<CylinderPrimitive> cylinders;
  std::vector<PlanePrimitive> planes;
  std::vector<Eigen::Vector2d> waypoints;
};

struct Scene {
  double extent = 0.0;
  std::vector<BoxPrimitive> boxes;
  std::vector<CylinderPrimitive> cylinders;
  std::vector<PlanePrimitive> planes;
  std::vector<Eigen::Vector2d> waypoints;

  size_t num_primitives() const { return boxes.size() + cylinders.size() + planes.size(); }
  bool operator==(const Scene&) const;
};

struct RayHit {
  double range = 0.0;
  double reflectivity = 0.0;
};

// Nearest intersection along origin + s * direction (unit) for s in
// (min_range, max_range].
std::optional<RayHit> CastRay(const Scene& scene, const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& direction, double min_range, double max_range);

// Deterministic in spec.seed. Throws ValidationError for a non-positive extent
// or an empty primitive list.
Scene GenerateScene(const SceneSpec& spec);

struct ScanSpec {
  SensorKind sensor = SensorKind::kPanoramic;
  double fov_deg = 360.0;  // horizontal field of view; 360 for panoramic
  double min_range = 0.5;
  double max_range = 40.0;
  double azimuth_resolution_deg = 0.4;
  double elevation_min_deg = -15.0;
  double elevation_max_deg = 15.0;
  double elevation_resolution_deg = 1.0;
  double range_noise = 0.01;  // sigma, meters
  uint64_t noise_seed = 7;

  // A FoV-limited spec with the given wedge.
  static ScanSpec FovLimited(double fov_deg);
  void Validate() const;
};

// Intensity of a return: reflectivity / (1 + range / 50 m), clamped to [0, 1].
double ReturnIntensity(double reflectivity, double range);

// Ray-cast cloud in the sensor frame (x forward, z up). Beams sweep the
// azimuth in [-fov/2, fov/2) around +x. Range noise is seeded per ray from
// noise_seed, so the same scene, pose and spec always give the same cloud.
// Throws EmptyScanError when no ray hits.
PointCloud RenderScan(const Scene& scene, const PoseSE3& pose, const ScanSpec& spec);

}  // namespace unilgl
