#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "unilgl/lie.h"
#include "unilgl/rng.h"
#include "unilgl/types.h"

namespace unilgl::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("unilgl_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline Eigen::Vector3d RandomVector(Rng& rng, double scale = 1.0) {
  return {rng.Uniform(-scale, scale), rng.Uniform(-scale, scale), rng.Uniform(-scale, scale)};
}

// Rotation drawn uniformly (unit quaternion from a normalized Gaussian 4-vector).
inline Eigen::Matrix3d RandomRotation(Rng& rng) {
  Eigen::Quaterniond q(rng.Normal(), rng.Normal(), rng.Normal(), rng.Normal());
  q.normalize();
  return q.toRotationMatrix();
}

inline PoseSE3 RandomPose(Rng& rng, double translation_scale = 5.0) {
  return PoseSE3(RandomRotation(rng), RandomVector(rng, translation_scale));
}

inline double TranslationDistance(const PoseSE3& a, const PoseSE3& b) {
  return (a.translation() - b.translation()).norm();
}

inline double RotationDistance(const PoseSE3& a, const PoseSE3& b) {
  return lie::LogSO3(a.rotation().transpose() * b.rotation()).norm();
}

}  // namespace unilgl::testing
