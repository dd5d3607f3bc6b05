#include "unilgl/benchmark.h"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "unilgl/covis.h"
#include "unilgl/errors.h"
#include "unilgl/parallel.h"
#include "unilgl/rng.h"

namespace unilgl {
namespace {

constexpr double kDegToRad = M_PI / 180.0;

std::string Num(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string ScanName(int k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%03d.bin", k);
  return buf;
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// Smooth random walk that bends back toward the origin near the boundary.
std::vector<Eigen::Vector2d> Trajectory(const BenchmarkSpec& spec, Rng& rng) {
  const double margin = spec.extent - spec.scan.max_range * 0.5 - spec.max_offset;
  std::vector<Eigen::Vector2d> pts;
  Eigen::Vector2d p(-0.5 * margin, -0.5 * margin);
  double heading = rng.Uniform(0.0, 0.5 * M_PI);
  for (int k = 0; k < spec.db_count; ++k) {
    pts.push_back(p);
    heading += rng.Normal(0.0, 20.0 * kDegToRad);
    Eigen::Vector2d next = p + spec.spacing * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    if (std::abs(next.x()) > margin || std::abs(next.y()) > margin) {
      heading = std::atan2(-p.y(), -p.x()) + rng.Normal(0.0, 10.0 * kDegToRad);
      next = p + spec.spacing * Eigen::Vector2d(std::cos(heading), std::sin(heading));
    }
    p = next;
  }
  return pts;
}

}  // namespace

void BenchmarkSpec::Validate() const {
  if (db_count < 1 || query_count < 1) throw ConfigError("benchmark needs database and query scans");
  if (!(spacing > 0.0)) throw ConfigError("benchmark spacing must be positive");
  if (!(max_offset >= 0.0)) throw ConfigError("query offset bound must be >= 0");
  if (!(max_yaw_deg >= 0.0 && max_yaw_deg <= 180.0)) throw ConfigError("query yaw bound must lie in [0, 180]");
  if (boxes < 0 || cylinders < 0) throw ConfigError("landmark counts must be >= 0");
  if (!(extent > scan.max_range * 0.5 + max_offset)) throw ConfigError("benchmark extent too small");
  scan.Validate();
}

Benchmark GenerateBenchmark(const BenchmarkSpec& spec, int workers) {
  spec.Validate();
  Rng rng(spec.seed);
  Benchmark bench;
  bench.scan = spec.scan;

  const std::vector<Eigen::Vector2d> path = Trajectory(spec, rng);
  SceneSpec scene_spec;
  scene_spec.seed = MixSeed(spec.seed, 1);
  scene_spec.extent = spec.extent;
  scene_spec.random_boxes = spec.boxes;
  scene_spec.random_cylinders = spec.cylinders;
  scene_spec.ground_plane = spec.ground_plane;
  scene_spec.corridor_clearance = spec.max_offset + 1.5;
  scene_spec.waypoints = path;
  bench.scene = GenerateScene(scene_spec);

  for (size_t k = 0; k < path.size(); ++k) {
    const Eigen::Vector2d dir = k + 1 < path.size() ? path[k + 1] - path[k] : path[k] - path[k - 1];
    const double yaw = std::atan2(dir.y(), dir.x());
    bench.db_poses.push_back(
        PoseSE3::FromYaw(yaw, Eigen::Vector3d(path[k].x(), path[k].y(), spec.sensor_height)));
  }
  for (int q = 0; q < spec.query_count; ++q) {
    const PoseSE3& anchor = bench.db_poses[static_cast<size_t>(q) % bench.db_poses.size()];
    // Offset sampled uniformly over the disc, heading offset uniformly.
    const double r = spec.max_offset * std::sqrt(rng.Uniform());
    const double a = rng.Uniform(-M_PI, M_PI);
    const double dyaw = rng.Uniform(-spec.max_yaw_deg, spec.max_yaw_deg) * kDegToRad;
    const Eigen::Vector3d t = anchor.translation() + Eigen::Vector3d(r * std::cos(a), r * std::sin(a), 0.0);
    const double base_yaw = std::atan2(anchor.rotation()(1, 0), anchor.rotation()(0, 0));
    bench.query_poses.push_back(PoseSE3::FromYaw(base_yaw + dyaw, t));
  }

  bench.db_clouds.resize(bench.db_poses.size());
  bench.query_clouds.resize(bench.query_poses.size());
  const size_t n_db = bench.db_poses.size();
  ParallelFor(n_db + bench.query_poses.size(), workers, [&](size_t k) {
    ScanSpec scan = spec.scan;
    scan.noise_seed = MixSeed(spec.seed ^ spec.scan.noise_seed, 100 + k);
    if (k < n_db) {
      bench.db_clouds[k] = RenderScan(bench.scene, bench.db_poses[k], scan);
    } else {
      bench.query_clouds[k - n_db] = RenderScan(bench.scene, bench.query_poses[k - n_db], scan);
    }
  });
  return bench;
}

void WriteBenchmark(const Benchmark& bench, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "db");
  std::filesystem::create_directories(dir / "query");
  auto write_pass = [&](const std::vector<PointCloud>& clouds, const std::vector<PoseSE3>& poses,
                        const std::string& sub) {
    DatasetManifest m;
    m.sensor = bench.scan.sensor;
    m.base_dir = dir;
    for (size_t k = 0; k < clouds.size(); ++k) {
      const std::string rel = sub + "/" + ScanName(static_cast<int>(k));
      SaveCloud(clouds[k], dir / rel);
      m.entries.push_back({rel, poses[k], static_cast<double>(k)});
    }
    SaveManifest(m, dir / (sub + ".manifest"));
  };
  write_pass(bench.db_clouds, bench.db_poses, "db");
  write_pass(bench.query_clouds, bench.query_poses, "query");
}

EncodedScan EncodeScan(PointCloud cloud, const BevConfig& bev, const FeatureBackend& backend,
                       const std::string& id) {
  EncodedScan s;
  s.bev = Encode(cloud, bev);
  s.features = Extract(s.bev, backend, id);
  s.cloud = std::move(cloud);
  return s;
}

LocalizationRecord LocalizeQuery(int query_id, const EncodedScan& query, const DescriptorIndex& index,
                                 const std::vector<EncodedScan>& database,
                                 const std::vector<PoseSE3>& db_poses, const LocalizeConfig& cfg,
                                 const std::optional<PoseSE3>& truth) {
  LocalizationRecord rec;
  rec.query = query_id;
  try {
    const Neighbor top = index.Query(query.features.global, 1).front();
    rec.retrieved = top.id;
    rec.descriptor_distance = top.distance;
    if (top.id < 0 || static_cast<size_t>(top.id) >= database.size() ||
        static_cast<size_t>(top.id) >= db_poses.size()) {
      throw ConfigError("index id " + std::to_string(top.id) + " has no database scan");
    }
    const EncodedScan& db = database[static_cast<size_t>(top.id)];
    rec.registration = Localize({query.bev, query.features.local, query.cloud},
                                {db.bev, db.features.local, db.cloud}, cfg);
    rec.estimate = db_poses[static_cast<size_t>(top.id)] * rec.registration.pose;
    if (truth) rec.pose_error = PoseMetrics(rec.estimate, *truth);
    rec.ok = true;
  } catch (const Error& e) {
    rec.ok = false;
    rec.error = e.what();
  }
  return rec;
}

LocalizationSummary Summarize(const std::vector<LocalizationRecord>& records) {
  LocalizationSummary s;
  s.queries = static_cast<int>(records.size());
  std::vector<double> et, er;
  for (const auto& r : records) {
    if (!r.ok) ++s.errors;
    if (r.ok && r.pose_error) {
      if (r.pose_error->success) ++s.successes;
      et.push_back(r.pose_error->translation);
      er.push_back(r.pose_error->rotation_deg);
    }
    if (r.retrieval_positive.has_value()) {
      // Only queries with a positive in the database carry a value.
      ++s.retrieval_evaluated;
      if (*r.retrieval_positive) ++s.retrieval_correct;
    }
  }
  s.success_rate = s.queries > 0 ? static_cast<double>(s.successes) / s.queries : 0.0;
  s.recall_at_1 =
      s.retrieval_evaluated > 0 ? static_cast<double>(s.retrieval_correct) / s.retrieval_evaluated : 0.0;
  s.median_translation_error = Median(et);
  s.median_rotation_error_deg = Median(er);
  return s;
}

std::string FormatSummary(const LocalizationSummary& s) {
  std::ostringstream out;
  out << "queries: " << s.queries << '\n'
      << "errors: " << s.errors << '\n'
      << "successes: " << s.successes << '\n'
      << "success_rate: " << Num(s.success_rate) << '\n'
      << "retrieval_evaluated: " << s.retrieval_evaluated << '\n'
      << "retrieval_correct: " << s.retrieval_correct << '\n'
      << "recall_at_1: " << Num(s.recall_at_1) << '\n'
      << "median_translation_error: " << Num(s.median_translation_error) << '\n'
      << "median_rotation_error_deg: " << Num(s.median_rotation_error_deg) << '\n';
  return out.str();
}

void WriteLocalizationCsv(const std::vector<LocalizationRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "query,status,retrieved,descriptor_distance,retrieval_positive,spatial_matches,"
         "intensity_matches,inliers,iterations,converged,e_t,e_R_deg,success,"
         "r00,r01,r02,t0,r10,r11,r12,t1,r20,r21,r22,t2,error\n";
  for (const auto& r : records) {
    out << r.query << ',' << (r.ok ? "ok" : "error") << ',' << r.retrieved << ','
        << Num(r.descriptor_distance) << ','
        << (r.retrieval_positive ? (*r.retrieval_positive ? "1" : "0") : "") << ','
        << r.registration.spatial_matches << ',' << r.registration.intensity_matches << ','
        << r.registration.inlier_count << ',' << r.registration.iterations << ','
        << (r.registration.converged ? 1 : 0) << ',';
    if (r.pose_error) {
      out << Num(r.pose_error->translation) << ',' << Num(r.pose_error->rotation_deg) << ','
          << (r.pose_error->success ? 1 : 0);
    } else {
      out << ",,";
    }
    for (int row = 0; row < 3; ++row) {
      for (int col = 0; col < 4; ++col) {
        out << ',';
        if (r.ok) {
          out << Num(col < 3 ? r.estimate.rotation()(row, col) : r.estimate.translation()(row));
        }
      }
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out << ',' << err << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

BenchmarkRun RunBenchmark(const Benchmark& bench, const PipelineConfig& cfg) {
  const ReferenceBackend backend(cfg.backend);
  const size_t n_db = bench.db_clouds.size();
  const size_t n_q = bench.query_clouds.size();
  std::vector<EncodedScan> db(n_db), queries(n_q);
  ParallelFor(n_db + n_q, cfg.workers, [&](size_t k) {
    if (k < n_db) {
      db[k] = EncodeScan(bench.db_clouds[k], cfg.bev, backend);
    } else {
      queries[k - n_db] = EncodeScan(bench.query_clouds[k - n_db], cfg.bev, backend);
    }
  });

  HullSet db_hulls, q_hulls;
  for (size_t k = 0; k < n_db; ++k) db_hulls.hulls.push_back(CloudHull(bench.db_clouds[k], bench.db_poses[k]));
  for (size_t k = 0; k < n_q; ++k) {
    q_hulls.hulls.push_back(CloudHull(bench.query_clouds[k], bench.query_poses[k]));
  }
  const LabelMap labels = LabelCrossPairs(q_hulls, bench.query_poses, db_hulls, bench.db_poses, {});

  DescriptorIndex index;
  for (size_t k = 0; k < n_db; ++k) index.Add(static_cast<int>(k), db[k].features.global);

  BenchmarkRun run;
  run.records.resize(n_q);
  ParallelFor(n_q, cfg.workers, [&](size_t q) {
    LocalizationRecord rec = LocalizeQuery(static_cast<int>(q), queries[q], index, db, bench.db_poses,
                                           cfg.localize, bench.query_poses[q]);
    bool has_positive = false;
    for (size_t j = 0; j < n_db; ++j) {
      const auto it = labels.find({static_cast<int>(q), static_cast<int>(j)});
      if (it != labels.end() && it->second.label == PairLabel::kPositive) has_positive = true;
    }
    if (has_positive && rec.retrieved >= 0) {
      const auto it = labels.find({static_cast<int>(q), rec.retrieved});
      rec.retrieval_positive = it != labels.end() && it->second.label == PairLabel::kPositive;
    } else if (has_positive) {
      rec.retrieval_positive = false;
    }
    run.records[q] = std::move(rec);
  });
  run.summary = Summarize(run.records);
  return run;
}

}  // namespace unilgl
