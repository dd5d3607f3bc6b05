#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "unilgl/types.h"

// On-disk formats.
//
// Cloud CSV (*.csv): one point per line, "x,y,z,intensity". Blank lines and
// lines starting with '#' are skipped. Values are written in the shortest form
// that parses back to the same float32.
//
// Cloud binary (any other extension, conventionally *.bin): little-endian
//   uint64  point count N
//   N x { float32 x, float32 y, float32 z, float32 intensity }
//
// Manifest (text): optional "sensor panoramic|fov-limited" directive, then one
// entry per line:
//   <cloud path> r00 r01 r02 t0 r10 r11 r12 t1 r20 r21 r22 t2 <timestamp>
// Paths are relative to the manifest's directory. '#' starts a comment line.
namespace unilgl {

enum class SensorKind { kPanoramic, kFovLimited };

std::string ToString(SensorKind kind);
SensorKind ParseSensorKind(const std::string& text);

struct ManifestEntry {
  std::string path;  // as written in the manifest
  PoseSE3 pose;      // sensor-to-world
  double timestamp = 0.0;
};

struct DatasetManifest {
  SensorKind sensor = SensorKind::kPanoramic;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;  // directory used to resolve entry paths

  std::filesystem::path Resolve(const ManifestEntry& entry) const { return base_dir / entry.path; }
  size_t size() const { return entries.size(); }
};

// Rotations are rejected beyond this orthonormality / determinant error.
inline constexpr double kManifestRotationTolerance = 1e-6;

PointCloud LoadCloud(const std::filesystem::path& path);
void SaveCloud(const PointCloud& cloud, const std::filesystem::path& path);

PointCloud LoadCloudCsv(const std::filesystem::path& path);
PointCloud LoadCloudBinary(const std::filesystem::path& path);
void SaveCloudCsv(const PointCloud& cloud, const std::filesystem::path& path);
void SaveCloudBinary(const PointCloud& cloud, const std::filesystem::path& path);

DatasetManifest LoadManifest(const std::filesystem::path& path);
// Does not verify that referenced clouds exist.
DatasetManifest ParseManifest(const std::string& text, const std::filesystem::path& base_dir,
                              const std::string& source_name = "<manifest>");
void SaveManifest(const DatasetManifest& manifest, const std::filesystem::path& path);

// Pose as 12 numbers, row-major [R|t], full double precision.
std::string FormatPose(const PoseSE3& pose);

}  // namespace unilgl
