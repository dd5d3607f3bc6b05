#include "unilgl/cloud_io.h"

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unilgl/errors.h"

namespace unilgl {
namespace {

static_assert(std::endian::native == std::endian::little, "binary cloud I/O assumes little endian");

std::string_view Trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
bool ParseNumber(std::string_view s, T& out) {
  s = Trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end;
}

template <typename T>
void AppendNumber(std::string& out, T v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), ptr);
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteFile(const std::filesystem::path& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

bool IsCsv(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  for (char& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == ".csv";
}

}  // namespace

std::string ToString(SensorKind kind) {
  return kind == SensorKind::kPanoramic ? "panoramic" : "fov-limited";
}

SensorKind ParseSensorKind(const std::string& text) {
  if (text == "panoramic") return SensorKind::kPanoramic;
  if (text == "fov-limited") return SensorKind::kFovLimited;
  throw ParseError("unknown sensor kind '" + text + "'");
}

PointCloud LoadCloudCsv(const std::filesystem::path& path) {
  const std::string text = ReadFile(path);
  PointCloud cloud;
  cloud.frame_id = path.stem().string();
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = Trim(line);
    if (view.empty() || view.front() == '#') continue;
    std::array<float, 4> v{};
    size_t field = 0;
    size_t start = 0;
    bool ok = true;
    while (ok) {
      const size_t comma = view.find(',', start);
      const std::string_view tok =
          view.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      if (field >= 4 || !ParseNumber(tok, v[field])) ok = false;
      ++field;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (!ok || field != 4) {
      throw ParseError(path.string() + ": malformed record at line " + std::to_string(line_no));
    }
    const Point p{v[0], v[1], v[2], v[3]};
    if (!p.IsValid()) {
      throw ParseError(path.string() + ": invalid point (non-finite or negative intensity) at line " +
                       std::to_string(line_no));
    }
    cloud.points.push_back(p);
  }
  if (cloud.empty()) throw EmptyInputError(path.string() + ": cloud has no points");
  return cloud;
}

PointCloud LoadCloudBinary(const std::filesystem::path& path) {
  const std::string data = ReadFile(path);
  if (data.size() < sizeof(uint64_t)) throw ParseError(path.string() + ": truncated header");
  uint64_t n = 0;
  std::memcpy(&n, data.data(), sizeof(n));
  const size_t record = 4 * sizeof(float);
  if ((data.size() - sizeof(uint64_t)) / record < n ||
      data.size() != sizeof(uint64_t) + n * record) {
    throw ParseError(path.string() + ": size does not match point count " + std::to_string(n));
  }
  if (n == 0) throw EmptyInputError(path.string() + ": cloud has no points");
  PointCloud cloud;
  cloud.frame_id = path.stem().string();
  cloud.points.resize(n);
  const char* src = data.data() + sizeof(uint64_t);
  for (uint64_t i = 0; i < n; ++i) {
    std::array<float, 4> v;
    std::memcpy(v.data(), src + i * record, record);
    const Point p{v[0], v[1], v[2], v[3]};
    if (!p.IsValid()) {
      throw ParseError(path.string() + ": invalid point at record " + std::to_string(i));
    }
    cloud.points[i] = p;
  }
  return cloud;
}

PointCloud LoadCloud(const std::filesystem::path& path) {
  return IsCsv(path) ? LoadCloudCsv(path) : LoadCloudBinary(path);
}

void SaveCloudCsv(const PointCloud& cloud, const std::filesystem::path& path) {
  std::string out;
  out.reserve(cloud.size() * 40);
  for (const Point& p : cloud.points) {
    AppendNumber(out, p.x);
    out += ',';
    AppendNumber(out, p.y);
    out += ',';
    AppendNumber(out, p.z);
    out += ',';
    AppendNumber(out, p.intensity);
    out += '\n';
  }
  WriteFile(path, out);
}

void SaveCloudBinary(const PointCloud& cloud, const std::filesystem::path& path) {
  const uint64_t n = cloud.size();
  std::string out(sizeof(n) + n * 4 * sizeof(float), '\0');
  std::memcpy(out.data(), &n, sizeof(n));
  char* dst = out.data() + sizeof(n);
  for (const Point& p : cloud.points) {
    const std::array<float, 4> v{p.x, p.y, p.z, p.intensity};
    std::memcpy(dst, v.data(), sizeof(v));
    dst += sizeof(v);
  }
  WriteFile(path, out);
}

void SaveCloud(const PointCloud& cloud, const std::filesystem::path& path) {
  if (IsCsv(path)) {
    SaveCloudCsv(cloud, path);
  } else {
    SaveCloudBinary(cloud, path);
  }
}

std::string FormatPose(const PoseSE3& pose) {
  std::string out;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!out.empty()) out += ' ';
      AppendNumber(out, c < 3 ? pose.rotation()(r, c) : pose.translation()(r));
    }
  }
  return out;
}

DatasetManifest ParseManifest(const std::string& text, const std::filesystem::path& base_dir,
                              const std::string& source_name) {
  DatasetManifest manifest;
  manifest.base_dir = base_dir;
  std::istringstream in(text);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = Trim(line);
    if (view.empty() || view.front() == '#') continue;
    std::istringstream fields{std::string(view)};
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) tok.push_back(t);
    const std::string where = source_name + ":" + std::to_string(line_no);
    if (tok.size() == 2 && tok[0] == "sensor") {
      manifest.sensor = ParseSensorKind(tok[1]);
      continue;
    }
    if (tok.size() != 14) {
      throw ParseError(where + ": expected path + 12 pose values + timestamp, got " +
                       std::to_string(tok.size()) + " fields");
    }
    std::array<double, 13> v{};
    for (size_t k = 0; k < 13; ++k) {
      if (!ParseNumber(tok[k + 1], v[k]) || !std::isfinite(v[k])) {
        throw ParseError(where + ": bad number '" + tok[k + 1] + "'");
      }
    }
    Eigen::Matrix3d R;
    Eigen::Vector3d t;
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) R(r, c) = v[r * 4 + c];
      t(r) = v[r * 4 + 3];
    }
    PoseSE3 pose(R, t);
    if (!pose.IsValid(kManifestRotationTolerance)) {
      throw ValidationError(where + ": rotation is not orthonormal with det +1");
    }
    manifest.entries.push_back({tok[0], pose, v[12]});
  }
  return manifest;
}

DatasetManifest LoadManifest(const std::filesystem::path& path) {
  const std::string text = ReadFile(path);
  DatasetManifest manifest = ParseManifest(text, path.parent_path(), path.string());
  for (const ManifestEntry& e : manifest.entries) {
    if (!std::filesystem::exists(manifest.Resolve(e))) {
      throw IoError(path.string() + ": referenced cloud not found: " + e.path);
    }
  }
  return manifest;
}

void SaveManifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  std::string out = "sensor " + ToString(manifest.sensor) + "\n";
  for (const ManifestEntry& e : manifest.entries) {
    out += e.path;
    out += ' ';
    out += FormatPose(e.pose);
    out += ' ';
    AppendNumber(out, e.timestamp);
    out += '\n';
  }
  WriteFile(path, out);
}

}  // namespace unilgl
