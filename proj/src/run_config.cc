#include "unilgl/run_config.h"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

#include "unilgl/errors.h"

namespace unilgl {
namespace {

std::string Num(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string Trim(const std::string& s) {
  const size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() {
  const BevConfig bev;
  const GncConfig gnc;
  const MatchConfig match;
  const LossConfig loss;
  const ReferenceBackendOptions ref;
  const OptimizeOptions pg;
  const BenchmarkSpec bench;
  const ScanSpec& scan = bench.scan;
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  values_ = {
      {"seed", "0"},
      {"workers", "1"},
      {"bev.resolution", Num(bev.resolution)},
      {"bev.width", std::to_string(bev.width)},
      {"bev.height", std::to_string(bev.height)},
      {"bev.patch_size", std::to_string(bev.patch_size)},
      {"backend.kind", "reference"},
      {"backend.embeddings", ""},
      {"backend.seed", std::to_string(ref.seed)},
      {"backend.dim", std::to_string(ref.dim)},
      {"backend.context_radius", Num(ref.context_radius)},
      {"backend.global_distance_bins", std::to_string(ref.global_distance_bins)},
      {"backend.global_pair_range_px", Num(ref.global_pair_range_px)},
      {"backend.global_intensity_bins", std::to_string(ref.global_intensity_bins)},
      {"retrieval.k", "1"},
      {"labels.mode", "iou"},
      {"labels.max_centroid_distance", "none"},
      {"gnc.xi", Num(gnc.xi)},
      {"gnc.growth", Num(gnc.growth)},
      {"gnc.max_iterations", std::to_string(gnc.max_iterations)},
      {"gnc.tolerance", Num(gnc.tolerance)},
      {"gnc.min_inliers", std::to_string(gnc.min_inliers)},
      {"gnc.min_inlier_ratio", Num(gnc.min_inlier_ratio)},
      {"match.max_keypoints", std::to_string(match.max_keypoints)},
      {"match.mutual", b(match.mutual)},
      {"match.mutual_tolerance_px", std::to_string(match.mutual_tolerance_px)},
      {"match.ratio", Num(match.ratio)},
      {"match.exclusion_radius_px", std::to_string(match.exclusion_radius_px)},
      {"loss.margin", Num(loss.margin)},
      {"loss.alpha", Num(loss.alpha)},
      {"loss.negatives_per_query", std::to_string(loss.negatives_per_query)},
      {"loss.temperature", Num(loss.temperature)},
      {"pose_graph.max_iterations", std::to_string(pg.max_iterations)},
      {"pose_graph.gradient_tolerance", Num(pg.gradient_tolerance)},
      {"pose_graph.step_tolerance", Num(pg.step_tolerance)},
      {"pose_graph.initial_lambda", Num(pg.initial_lambda)},
      {"pose_graph.huber", b(pg.huber)},
      {"pose_graph.huber_delta", Num(pg.huber_delta)},
      {"synth.seed", std::to_string(bench.seed)},
      {"synth.db_count", std::to_string(bench.db_count)},
      {"synth.query_count", std::to_string(bench.query_count)},
      {"synth.spacing", Num(bench.spacing)},
      {"synth.max_offset", Num(bench.max_offset)},
      {"synth.max_yaw_deg", Num(bench.max_yaw_deg)},
      {"synth.sensor_height", Num(bench.sensor_height)},
      {"synth.extent", Num(bench.extent)},
      {"synth.boxes", std::to_string(bench.boxes)},
      {"synth.cylinders", std::to_string(bench.cylinders)},
      {"synth.ground_plane", b(bench.ground_plane)},
      {"synth.sensor", ToString(scan.sensor)},
      {"synth.fov_deg", Num(scan.fov_deg)},
      {"synth.min_range", Num(scan.min_range)},
      {"synth.max_range", Num(scan.max_range)},
      {"synth.azimuth_resolution_deg", Num(scan.azimuth_resolution_deg)},
      {"synth.elevation_min_deg", Num(scan.elevation_min_deg)},
      {"synth.elevation_max_deg", Num(scan.elevation_max_deg)},
      {"synth.elevation_resolution_deg", Num(scan.elevation_resolution_deg)},
      {"synth.range_noise", Num(scan.range_noise)},
      {"synth.noise_seed", std::to_string(scan.noise_seed)},
  };
}

RunConfig RunConfig::FromFile(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << file.rdbuf();
  RunConfig cfg;
  cfg.Merge(ss.str(), path.string());
  return cfg;
}

void RunConfig::Merge(const std::string& text, const std::string& source_name) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = Trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      Set(Trim(t.substr(0, eq)), Trim(t.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(source_name + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::Override(const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  Set(Trim(assignment.substr(0, eq)), Trim(assignment.substr(eq + 1)));
}

void RunConfig::Set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = value;
}

const std::string& RunConfig::Get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::GetDouble(const std::string& key) const {
  const std::string& s = Get(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": '" + s + "' is not a number");
  }
  return v;
}

int RunConfig::GetInt(const std::string& key) const {
  const std::string& s = Get(key);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": '" + s + "' is not an integer");
  }
  return v;
}

uint64_t RunConfig::GetU64(const std::string& key) const {
  const std::string& s = Get(key);
  uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ConfigError(key + ": '" + s + "' is not an unsigned integer");
  }
  return v;
}

bool RunConfig::GetBool(const std::string& key) const {
  const std::string& s = Get(key);
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

BevConfig RunConfig::bev() const {
  BevConfig c;
  c.resolution = GetDouble("bev.resolution");
  c.width = GetInt("bev.width");
  c.height = GetInt("bev.height");
  c.patch_size = GetInt("bev.patch_size");
  return c;
}

GncConfig RunConfig::gnc() const {
  GncConfig c;
  c.xi = GetDouble("gnc.xi");
  c.growth = GetDouble("gnc.growth");
  c.max_iterations = GetInt("gnc.max_iterations");
  c.tolerance = GetDouble("gnc.tolerance");
  c.min_inliers = GetInt("gnc.min_inliers");
  c.min_inlier_ratio = GetDouble("gnc.min_inlier_ratio");
  return c;
}

MatchConfig RunConfig::match() const {
  MatchConfig c;
  c.max_keypoints = GetInt("match.max_keypoints");
  c.mutual = GetBool("match.mutual");
  c.mutual_tolerance_px = GetInt("match.mutual_tolerance_px");
  c.ratio = GetDouble("match.ratio");
  c.exclusion_radius_px = GetInt("match.exclusion_radius_px");
  return c;
}

LocalizeConfig RunConfig::localize() const { return {match(), gnc()}; }

LossConfig RunConfig::loss() const {
  LossConfig c;
  c.margin = GetDouble("loss.margin");
  c.alpha = GetDouble("loss.alpha");
  c.negatives_per_query = GetInt("loss.negatives_per_query");
  c.temperature = GetDouble("loss.temperature");
  return c;
}

ReferenceBackendOptions RunConfig::reference_backend() const {
  ReferenceBackendOptions o;
  o.seed = GetU64("backend.seed");
  o.dim = GetInt("backend.dim");
  o.context_radius = GetDouble("backend.context_radius");
  o.global_distance_bins = GetInt("backend.global_distance_bins");
  o.global_pair_range_px = GetDouble("backend.global_pair_range_px");
  o.global_intensity_bins = GetInt("backend.global_intensity_bins");
  return o;
}

OptimizeOptions RunConfig::pose_graph() const {
  OptimizeOptions o;
  o.max_iterations = GetInt("pose_graph.max_iterations");
  o.gradient_tolerance = GetDouble("pose_graph.gradient_tolerance");
  o.step_tolerance = GetDouble("pose_graph.step_tolerance");
  o.initial_lambda = GetDouble("pose_graph.initial_lambda");
  o.huber = GetBool("pose_graph.huber");
  o.huber_delta = GetDouble("pose_graph.huber_delta");
  return o;
}

LabelOptions RunConfig::labels() const {
  LabelOptions o;
  const std::string& mode = Get("labels.mode");
  if (mode == "iou") {
    o.mode = LabelMode::kIou;
  } else if (mode == "distance") {
    o.mode = LabelMode::kDistance;
  } else {
    throw ConfigError("labels.mode must be 'iou' or 'distance'");
  }
  if (Get("labels.max_centroid_distance") != "none") {
    o.max_centroid_distance = GetDouble("labels.max_centroid_distance");
  }
  return o;
}

BenchmarkSpec RunConfig::benchmark() const {
  BenchmarkSpec s;
  s.seed = GetU64("synth.seed");
  s.db_count = GetInt("synth.db_count");
  s.query_count = GetInt("synth.query_count");
  s.spacing = GetDouble("synth.spacing");
  s.max_offset = GetDouble("synth.max_offset");
  s.max_yaw_deg = GetDouble("synth.max_yaw_deg");
  s.sensor_height = GetDouble("synth.sensor_height");
  s.extent = GetDouble("synth.extent");
  s.boxes = GetInt("synth.boxes");
  s.cylinders = GetInt("synth.cylinders");
  s.ground_plane = GetBool("synth.ground_plane");
  try {
    s.scan.sensor = ParseSensorKind(Get("synth.sensor"));
  } catch (const Error& e) {
    throw ConfigError(std::string("synth.sensor: ") + e.what());
  }
  s.scan.fov_deg = GetDouble("synth.fov_deg");
  if (s.scan.sensor == SensorKind::kPanoramic) s.scan.fov_deg = 360.0;
  s.scan.min_range = GetDouble("synth.min_range");
  s.scan.max_range = GetDouble("synth.max_range");
  s.scan.azimuth_resolution_deg = GetDouble("synth.azimuth_resolution_deg");
  s.scan.elevation_min_deg = GetDouble("synth.elevation_min_deg");
  s.scan.elevation_max_deg = GetDouble("synth.elevation_max_deg");
  s.scan.elevation_resolution_deg = GetDouble("synth.elevation_resolution_deg");
  s.scan.range_noise = GetDouble("synth.range_noise");
  s.scan.noise_seed = GetU64("synth.noise_seed");
  return s;
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.bev = bev();
  p.backend = reference_backend();
  p.localize = localize();
  p.workers = workers();
  return p;
}

void RunConfig::Validate() const {
  GetU64("seed");
  if (workers() < 1) throw ConfigError("workers must be at least 1");
  if (GetInt("retrieval.k") < 1) throw ConfigError("retrieval.k must be at least 1");
  try {
    bev().Validate();
    gnc().Validate();
    match().Validate();
    loss().Validate();
    pose_graph().Validate();
    benchmark().Validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  labels();
  reference_backend();
  const std::string& kind = Get("backend.kind");
  if (kind == "imported") {
    if (Get("backend.embeddings").empty()) {
      throw ConfigError("backend.kind = imported requires backend.embeddings");
    }
  } else if (kind != "reference") {
    throw ConfigError("backend.kind must be 'reference' or 'imported'");
  }
}

std::string RunConfig::Dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + '\n';
  return out;
}

}  // namespace unilgl
