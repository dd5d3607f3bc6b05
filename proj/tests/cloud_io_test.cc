#include "unilgl/cloud_io.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>

#include "test_util.h"
#include "unilgl/errors.h"

namespace unilgl {
namespace {

using testing::TempDir;

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path) << text;
}

PointCloud RandomCloud(Rng& rng, int n) {
  PointCloud cloud;
  for (int k = 0; k < n; ++k) {
    Point p;
    // Wide dynamic range, including values that need all 9 significant digits.
    p.x = static_cast<float>(rng.Normal(0.0, 50.0));
    p.y = static_cast<float>(rng.Normal(0.0, 1e-3));
    p.z = static_cast<float>(rng.Uniform(-1e4, 1e4));
    p.intensity = static_cast<float>(rng.Uniform(0.0, 255.0));
    cloud.points.push_back(p);
  }
  return cloud;
}

bool BitEqual(const Point& a, const Point& b) { return std::memcmp(&a, &b, sizeof(Point)) == 0; }

TEST(CloudIo, ParsesCsvRecord) {
  TempDir dir;
  WriteText(dir / "c.csv", "# x,y,z,i\n1.0,2.0,0.5,10.0\n\n");
  const PointCloud cloud = LoadCloud(dir / "c.csv");
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud.points[0].x, 1.f);
  EXPECT_EQ(cloud.points[0].y, 2.f);
  EXPECT_EQ(cloud.points[0].z, 0.5f);
  EXPECT_EQ(cloud.points[0].intensity, 10.f);
}

TEST(CloudIo, NanIsParseErrorNamingRecord) {
  TempDir dir;
  WriteText(dir / "c.csv", "1,2,3,4\n1,nan,3,4\n");
  try {
    LoadCloud(dir / "c.csv");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(CloudIo, MalformedCsvRecord) {
  TempDir dir;
  WriteText(dir / "c.csv", "1,2,3\n");
  EXPECT_THROW(LoadCloud(dir / "c.csv"), ParseError);
  WriteText(dir / "d.csv", "1,2,3,x\n");
  EXPECT_THROW(LoadCloud(dir / "d.csv"), ParseError);
}

TEST(CloudIo, EmptyCloudIsEmptyInput) {
  TempDir dir;
  WriteText(dir / "c.csv", "# nothing\n");
  EXPECT_THROW(LoadCloud(dir / "c.csv"), EmptyInputError);
}

TEST(CloudIo, MissingFileIsIoError) {
  TempDir dir;
  EXPECT_THROW(LoadCloud(dir / "missing.bin"), IoError);
}

TEST(CloudIo, TruncatedBinaryIsParseError) {
  TempDir dir;
  PointCloud cloud;
  cloud.points = {Point{1, 2, 3, 4}, Point{5, 6, 7, 8}};
  SaveCloudBinary(cloud, dir / "c.bin");
  std::filesystem::resize_file(dir / "c.bin", std::filesystem::file_size(dir / "c.bin") - 3);
  EXPECT_THROW(LoadCloud(dir / "c.bin"), ParseError);
}

TEST(CloudIo, BinaryNonFiniteIsParseError) {
  TempDir dir;
  const float inf = std::numeric_limits<float>::infinity();
  std::ofstream out(dir / "c.bin", std::ios::binary);
  const uint64_t n = 1;
  const float rec[4] = {1.f, inf, 0.f, 1.f};
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  out.close();
  EXPECT_THROW(LoadCloud(dir / "c.bin"), ParseError);
}

// Property: save -> load reproduces every field bit for bit, in both formats.
TEST(CloudIo, RoundTripIsBitExact) {
  TempDir dir;
  for (uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const PointCloud cloud = RandomCloud(rng, 1000);
    for (const char* name : {"c.csv", "c.bin"}) {
      SaveCloud(cloud, dir / name);
      const PointCloud back = LoadCloud(dir / name);
      ASSERT_EQ(back.size(), cloud.size());
      for (size_t k = 0; k < cloud.size(); ++k) {
        ASSERT_TRUE(BitEqual(back.points[k], cloud.points[k])) << name << " point " << k;
      }
    }
  }
}

TEST(Manifest, IdentityEntry) {
  const DatasetManifest m = ParseManifest("a.bin 1 0 0 0 0 1 0 0 0 0 1 0 3.5\n", "/data");
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m.entries[0].path, "a.bin");
  EXPECT_EQ(m.entries[0].timestamp, 3.5);
  EXPECT_EQ(m.entries[0].pose.Matrix(), Eigen::Matrix4d::Identity());
  EXPECT_EQ(m.Resolve(m.entries[0]), std::filesystem::path("/data/a.bin"));
  EXPECT_EQ(m.sensor, SensorKind::kPanoramic);
}

TEST(Manifest, ReflectionIsValidationError) {
  EXPECT_THROW(ParseManifest("a.bin 1 0 0 0 0 1 0 0 0 0 -1 0 0\n", "."), ValidationError);
}

TEST(Manifest, NonOrthonormalBeyondToleranceRejected) {
  EXPECT_THROW(ParseManifest("a.bin 1.00001 0 0 0 0 1 0 0 0 0 1 0 0\n", "."), ValidationError);
  // Within tolerance is accepted.
  EXPECT_NO_THROW(ParseManifest("a.bin 1.0000001 0 0 0 0 1 0 0 0 0 1 0 0\n", "."));
}

TEST(Manifest, OrderPreserved) {
  const DatasetManifest m = ParseManifest(
      "sensor fov-limited\n# comment\n"
      "c.bin 1 0 0 0 0 1 0 0 0 0 1 0 0\n"
      "a.bin 1 0 0 1 0 1 0 0 0 0 1 0 1\n"
      "b.bin 1 0 0 2 0 1 0 0 0 0 1 0 2\n",
      ".");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.sensor, SensorKind::kFovLimited);
  EXPECT_EQ(m.entries[0].path, "c.bin");
  EXPECT_EQ(m.entries[1].path, "a.bin");
  EXPECT_EQ(m.entries[2].path, "b.bin");
  EXPECT_EQ(m.entries[2].pose.translation().x(), 2.0);
}

TEST(Manifest, MalformedLineIsParseError) {
  EXPECT_THROW(ParseManifest("a.bin 1 0 0 0\n", "."), ParseError);
  EXPECT_THROW(ParseManifest("a.bin 1 0 0 0 0 1 0 0 0 0 1 0 zz\n", "."), ParseError);
  EXPECT_THROW(ParseManifest("sensor sideways\n", "."), ParseError);
}

TEST(Manifest, MissingCloudIsIoError) {
  TempDir dir;
  WriteText(dir / "m.txt", "missing.bin 1 0 0 0 0 1 0 0 0 0 1 0 0\n");
  EXPECT_THROW(LoadManifest(dir / "m.txt"), IoError);
}

// Property: save -> load of random manifests reproduces poses exactly.
TEST(Manifest, RoundTrip) {
  TempDir dir;
  Rng rng(11);
  DatasetManifest m;
  m.sensor = SensorKind::kFovLimited;
  for (int k = 0; k < 20; ++k) {
    const std::string name = "s" + std::to_string(k) + ".bin";
    SaveCloud(RandomCloud(rng, 3), dir / name);
    m.entries.push_back({name, testing::RandomPose(rng, 100.0), rng.Uniform(0, 1e6)});
  }
  SaveManifest(m, dir / "m.txt");
  const DatasetManifest back = LoadManifest(dir / "m.txt");
  ASSERT_EQ(back.size(), m.size());
  EXPECT_EQ(back.sensor, m.sensor);
  for (size_t k = 0; k < m.size(); ++k) {
    EXPECT_EQ(back.entries[k].path, m.entries[k].path);
    EXPECT_EQ(back.entries[k].timestamp, m.entries[k].timestamp);
    EXPECT_EQ(back.entries[k].pose.Matrix(), m.entries[k].pose.Matrix());
  }
}

}  // namespace
}  // namespace unilgl
