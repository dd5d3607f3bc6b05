#include "unilgl/synth.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unilgl/errors.h"
#include "unilgl/rng.h"

namespace unilgl {
namespace {

constexpr double kDegToRad = M_PI / 180.0;
constexpr int kMaxPlacementAttempts = 200;

// Ray parameter interval (t_near, t_far) inside an axis-aligned box centered
// at the origin, or nothing.
std::optional<std::pair<double, double>> SlabInterval(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                                                      const Eigen::Vector3d& half) {
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (o[k] < -half[k] || o[k] > half[k]) return std::nullopt;
      continue;
    }
    double t0 = (-half[k] - o[k]) / d[k];
    double t1 = (half[k] - o[k]) / d[k];
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return std::nullopt;
  }
  return std::make_pair(t_near, t_far);
}

// Smallest ray parameter in (lo, hi] among the candidates.
void Consider(double t, double lo, double* best) {
  if (t > lo && t < *best) *best = t;
}

double BoxHit(const BoxPrimitive& b, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir, double lo) {
  const double c = std::cos(-b.yaw);
  const double s = std::sin(-b.yaw);
  const Eigen::Vector3d rel = origin - b.center;
  const Eigen::Vector3d o(c * rel.x() - s * rel.y(), s * rel.x() + c * rel.y(), rel.z());
  const Eigen::Vector3d d(c * dir.x() - s * dir.y(), s * dir.x() + c * dir.y(), dir.z());
  double best = std::numeric_limits<double>::infinity();
  if (const auto iv = SlabInterval(o, d, b.half_extent)) {
    // Entry face from outside, exit face from inside.
    Consider(iv->first, lo, &best);
    if (!std::isfinite(best)) Consider(iv->second, lo, &best);
  }
  return best;
}

double CylinderHit(const CylinderPrimitive& cyl, const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                   double lo) {
  double best = std::numeric_limits<double>::infinity();
  const double ox = o.x() - cyl.center.x();
  const double oy = o.y() - cyl.center.y();
  const double a = d.x() * d.x() + d.y() * d.y();
  const double r2 = cyl.radius * cyl.radius;
  if (a > 1e-15) {
    const double b = 2.0 * (ox * d.x() + oy * d.y());
    const double c = ox * ox + oy * oy - r2;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (const double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        const double z = o.z() + t * d.z();
        if (z >= cyl.z_min && z <= cyl.z_max) Consider(t, lo, &best);
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (const double zc : {cyl.z_min, cyl.z_max}) {
      const double t = (zc - o.z()) / d.z();
      const double x = ox + t * d.x();
      const double y = oy + t * d.y();
      if (x * x + y * y <= r2) Consider(t, lo, &best);
    }
  }
  return best;
}

double PlaneHit(const PlanePrimitive& p, const Eigen::Vector3d& o, const Eigen::Vector3d& d, double lo) {
  const double denom = p.normal.dot(d);
  if (std::abs(denom) < 1e-15) return std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  Consider((p.offset - p.normal.dot(o)) / denom, lo, &best);
  return best;
}

double SegmentDistance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

bool InCorridor(const Eigen::Vector2d& p, double footprint, const SceneSpec& spec) {
  if (spec.corridor_clearance <= 0.0 || spec.waypoints.empty()) return false;
  const double limit = spec.corridor_clearance + footprint;
  if (spec.waypoints.size() == 1) return (p - spec.waypoints[0]).norm() < limit;
  for (size_t k = 0; k + 1 < spec.waypoints.size(); ++k) {
    if (SegmentDistance(p, spec.waypoints[k], spec.waypoints[k + 1]) < limit) return true;
  }
  return false;
}

}  // namespace

bool Scene::operator==(const Scene& o) const {
  auto vec_eq = [](const auto& a, const auto& b, auto eq) {
    if (a.size() != b.size()) return false;
    for (size_t k = 0; k < a.size(); ++k) {
      if (!eq(a[k], b[k])) return false;
    }
    return true;
  };
  return extent == o.extent &&
         vec_eq(boxes, o.boxes,
                [](const BoxPrimitive& a, const BoxPrimitive& b) {
                  return a.center == b.center && a.half_extent == b.half_extent && a.yaw == b.yaw &&
                         a.reflectivity == b.reflectivity;
                }) &&
         vec_eq(cylinders, o.cylinders,
                [](const CylinderPrimitive& a, const CylinderPrimitive& b) {
                  return a.center == b.center && a.radius == b.radius && a.z_min == b.z_min &&
                         a.z_max == b.z_max && a.reflectivity == b.reflectivity;
                }) &&
         vec_eq(planes, o.planes,
                [](const PlanePrimitive& a, const PlanePrimitive& b) {
                  return a.normal == b.normal && a.offset == b.offset && a.reflectivity == b.reflectivity;
                }) &&
         vec_eq(waypoints, o.waypoints, [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) { return a == b; });
}

std::optional<RayHit> CastRay(const Scene& scene, const Eigen::Vector3d& origin,
                              const Eigen::Vector3d& direction, double min_range, double max_range) {
  double best = std::numeric_limits<double>::infinity();
  double refl = 0.0;
  auto take = [&](double t, double r) {
    if (t < best) {
      best = t;
      refl = r;
    }
  };
  for (const auto& b : scene.boxes) take(BoxHit(b, origin, direction, min_range), b.reflectivity);
  for (const auto& c : scene.cylinders) take(CylinderHit(c, origin, direction, min_range), c.reflectivity);
  for (const auto& p : scene.planes) take(PlaneHit(p, origin, direction, min_range), p.reflectivity);
  if (!(best <= max_range)) return std::nullopt;
  return RayHit{best, refl};
}

Scene GenerateScene(const SceneSpec& spec) {
  if (!(spec.extent > 0.0) || !std::isfinite(spec.extent)) {
    throw ValidationError("scene extent must be positive");
  }
  if (spec.random_boxes < 0 || spec.random_cylinders < 0) {
    throw ValidationError("primitive counts must be >= 0");
  }
  Scene scene;
  scene.extent = spec.extent;
  scene.waypoints = spec.waypoints;
  auto check_inside = [&](const Eigen::Vector2d& c, double footprint, const char* what) {
    if (std::abs(c.x()) + footprint > spec.extent || std::abs(c.y()) + footprint > spec.extent) {
      throw ValidationError(std::string(what) + " lies outside the world extent");
    }
  };
  for (const auto& b : spec.boxes) {
    if (!(b.half_extent.array() > 0.0).all()) throw ValidationError("box extents must be positive");
    check_inside(b.center.head<2>(), b.half_extent.head<2>().norm(), "box");
    scene.boxes.push_back(b);
  }
  for (const auto& c : spec.cylinders) {
    if (!(c.radius > 0.0) || !(c.z_max > c.z_min)) throw ValidationError("invalid cylinder");
    check_inside(c.center, c.radius, "cylinder");
    scene.cylinders.push_back(c);
  }
  for (const auto& p : spec.planes) {
    if (std::abs(p.normal.norm() - 1.0) > 1e-9) throw ValidationError("plane normal must be unit length");
    scene.planes.push_back(p);
  }
  if (spec.ground_plane) {
    scene.planes.push_back({Eigen::Vector3d::UnitZ(), 0.0, spec.ground_reflectivity});
  }

  Rng rng(spec.seed);
  for (int k = 0; k < spec.random_boxes; ++k) {
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      const double hx = rng.Uniform(0.5, 4.0);
      const double hy = rng.Uniform(0.5, 4.0);
      const double height = rng.Uniform(1.5, 8.0);
      const double footprint = std::hypot(hx, hy);
      const double lim = spec.extent - footprint;
      if (lim <= 0.0) throw ValidationError("world extent too small for the requested landmarks");
      const Eigen::Vector2d c(rng.Uniform(-lim, lim), rng.Uniform(-lim, lim));
      const double yaw = rng.Uniform(-M_PI, M_PI);
      const double refl = rng.Uniform(0.05, 1.0);
      if (InCorridor(c, footprint, spec)) continue;
      scene.boxes.push_back({Eigen::Vector3d(c.x(), c.y(), 0.5 * height),
                             Eigen::Vector3d(hx, hy, 0.5 * height), yaw, refl});
      break;
    }
  }
  for (int k = 0; k < spec.random_cylinders; ++k) {
    for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
      const double radius = rng.Uniform(0.15, 0.8);
      const double height = rng.Uniform(2.0, 8.0);
      const double lim = spec.extent - radius;
      if (lim <= 0.0) throw ValidationError("world extent too small for the requested landmarks");
      const Eigen::Vector2d c(rng.Uniform(-lim, lim), rng.Uniform(-lim, lim));
      const double refl = rng.Uniform(0.05, 1.0);
      if (InCorridor(c, radius, spec)) continue;
      scene.cylinders.push_back({c, radius, 0.0, height, refl});
      break;
    }
  }
  if (scene.num_primitives() == 0) throw ValidationError("scene has no primitives");
  return scene;
}

ScanSpec ScanSpec::FovLimited(double fov_deg) {
  ScanSpec s;
  s.sensor = SensorKind::kFovLimited;
  s.fov_deg = fov_deg;
  return s;
}

void ScanSpec::Validate() const {
  if (!(fov_deg > 0.0 && fov_deg <= 360.0)) throw ValidationError("field of view must lie in (0, 360]");
  if (!(azimuth_resolution_deg > 0.0) || !(elevation_resolution_deg > 0.0)) {
    throw ValidationError("angular resolutions must be positive");
  }
  if (!(elevation_max_deg >= elevation_min_deg)) throw ValidationError("elevation range is inverted");
  if (!(min_range >= 0.0) || !(max_range > min_range)) throw ValidationError("invalid range limits");
  if (!(range_noise >= 0.0)) throw ValidationError("range noise must be >= 0");
  if (sensor == SensorKind::kPanoramic && fov_deg != 360.0) {
    throw ValidationError("panoramic sensors cover 360 degrees");
  }
}

double ReturnIntensity(double reflectivity, double range) {
  return std::clamp(reflectivity / (1.0 + range / 50.0), 0.0, 1.0);
}

PointCloud RenderScan(const Scene& scene, const PoseSE3& pose, const ScanSpec& spec) {
  spec.Validate();
  const Eigen::Vector2d p = pose.translation().head<2>();
  if (std::abs(p.x()) > scene.extent || std::abs(p.y()) > scene.extent) {
    throw ValidationError("sensor pose lies outside the world extent");
  }
  const int n_az = std::max(1, static_cast<int>(std::lround(spec.fov_deg / spec.azimuth_resolution_deg)));
  const int n_el = static_cast<int>(std::floor((spec.elevation_max_deg - spec.elevation_min_deg) /
                                               spec.elevation_resolution_deg + 1e-9)) + 1;
  const Eigen::Vector3d origin = pose.translation();
  const Eigen::Matrix3d& R = pose.rotation();
  // Only primitives that can intersect the range sphere matter.
  Scene local;
  local.extent = scene.extent;
  local.planes = scene.planes;
  for (const auto& b : scene.boxes) {
    if ((b.center - origin).norm() <= spec.max_range + b.half_extent.norm()) local.boxes.push_back(b);
  }
  for (const auto& c : scene.cylinders) {
    const double reach = std::hypot(c.radius, std::max(std::abs(c.z_min - origin.z()), std::abs(c.z_max - origin.z())));
    if ((c.center - p).norm() <= spec.max_range + reach) local.cylinders.push_back(c);
  }
  PointCloud cloud;
  cloud.points.reserve(static_cast<size_t>(n_az) * n_el / 2);
  for (int a = 0; a < n_az; ++a) {
    const double az = (-0.5 * spec.fov_deg + a * spec.azimuth_resolution_deg) * kDegToRad;
    for (int e = 0; e < n_el; ++e) {
      const double el = (spec.elevation_min_deg + e * spec.elevation_resolution_deg) * kDegToRad;
      const Eigen::Vector3d dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      const auto hit = CastRay(local, origin, R * dir, spec.min_range, spec.max_range);
      if (!hit) continue;
      double range = hit->range;
      if (spec.range_noise > 0.0) {
        Rng noise(MixSeed(spec.noise_seed, static_cast<uint64_t>(a) * n_el + e));
        range = std::max(0.0, range + noise.Normal(0.0, spec.range_noise));
      }
      const Eigen::Vector3d q = range * dir;
      Point pt;
      pt.x = static_cast<float>(q.x());
      pt.y = static_cast<float>(q.y());
      pt.z = static_cast<float>(q.z());
      pt.intensity = static_cast<float>(ReturnIntensity(hit->reflectivity, hit->range));
      cloud.points.push_back(pt);
    }
  }
  if (cloud.points.empty()) throw EmptyScanError("no ray hit anything from this pose");
  return cloud;
}

}  // namespace unilgl
