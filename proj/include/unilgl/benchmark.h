#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unilgl/bev.h"
#include "unilgl/cloud_io.h"
#include "unilgl/features.h"
#include "unilgl/registration.h"
#include "unilgl/retrieval.h"
#include "unilgl/synth.h"

// Desk-scale localization benchmark: a synthetic world, a database pass along
// a trajectory and a query pass with bounded pose offsets, plus the cascaded
// retrieval + registration pipeline that runs on it (and on any manifests).
namespace unilgl {

struct BenchmarkSpec {
  uint64_t seed = 1;
  int db_count = 50;
  int query_count = 50;
  double spacing = 8.0;        // meters between consecutive database poses
  double max_offset = 5.0;     // query translation offset bound, meters
  double max_yaw_deg = 180.0;  // query heading offset bound
  double sensor_height = 1.8;
  double extent = 120.0;
  int boxes = 500;
  int cylinders = 700;
  bool ground_plane = false;
  ScanSpec scan;

  void Validate() const;
};

struct Benchmark {
  Scene scene;
  ScanSpec scan;
  std::vector<PoseSE3> db_poses;
  std::vector<PoseSE3> query_poses;
  std::vector<PointCloud> db_clouds;
  std::vector<PointCloud> query_clouds;
};

Benchmark GenerateBenchmark(const BenchmarkSpec& spec, int workers = 1);

// Writes <dir>/db/NNN.bin, <dir>/query/NNN.bin, <dir>/db.manifest and
// <dir>/query.manifest.
void WriteBenchmark(const Benchmark& bench, const std::filesystem::path& dir);

struct EncodedScan {
  BevPair bev;
  Features features;
  PointCloud cloud;
};

EncodedScan EncodeScan(PointCloud cloud, const BevConfig& bev, const FeatureBackend& backend,
                       const std::string& id = {});

struct LocalizationRecord {
  int query = 0;
  bool ok = false;
  std::string error;
  int retrieved = -1;
  double descriptor_distance = 0.0;
  std::optional<bool> retrieval_positive;
  RegistrationResult registration;
  PoseSE3 estimate;  // query sensor-to-world, T_db * dT
  std::optional<PoseError> pose_error;
};

// Top-1 retrieval against `index` (ids are slots of `database`), then
// registration against the retrieved scan. Never throws for per-query
// failures; they are recorded.
LocalizationRecord LocalizeQuery(int query_id, const EncodedScan& query, const DescriptorIndex& index,
                                 const std::vector<EncodedScan>& database,
                                 const std::vector<PoseSE3>& db_poses, const LocalizeConfig& cfg,
                                 const std::optional<PoseSE3>& truth);

struct LocalizationSummary {
  int queries = 0;
  int errors = 0;
  int successes = 0;
  double success_rate = 0.0;
  int retrieval_evaluated = 0;  // queries with a labeled positive
  int retrieval_correct = 0;
  double recall_at_1 = 0.0;
  double median_translation_error = 0.0;
  double median_rotation_error_deg = 0.0;
};

// Success rate counts every query (errors are failures); recall@1 counts
// queries that have a positive.
LocalizationSummary Summarize(const std::vector<LocalizationRecord>& records);

std::string FormatSummary(const LocalizationSummary& summary);

// One row per query in input order.
void WriteLocalizationCsv(const std::vector<LocalizationRecord>& records, const std::filesystem::path& path);

struct PipelineConfig {
  BevConfig bev;
  ReferenceBackendOptions backend;
  LocalizeConfig localize;
  int workers = 1;
};

struct BenchmarkRun {
  std::vector<LocalizationRecord> records;
  LocalizationSummary summary;
};

// Encodes every scan, labels query/database pairs by hull IoU, indexes the
// database and localizes every query.
BenchmarkRun RunBenchmark(const Benchmark& bench, const PipelineConfig& cfg);

}  // namespace unilgl
