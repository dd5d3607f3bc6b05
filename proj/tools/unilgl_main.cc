// unilgl: command-line entry point for the localization toolkit.
//
// Exit status: 0 when every item succeeded, 1 when some items failed (each
// failure is recorded in the output and reported on stderr), 2 for usage or
// configuration errors, 3 for other fatal errors.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "unilgl/benchmark.h"
#include "unilgl/bev.h"
#include "unilgl/cloud_io.h"
#include "unilgl/covis.h"
#include "unilgl/errors.h"
#include "unilgl/features.h"
#include "unilgl/parallel.h"
#include "unilgl/pose_graph.h"
#include "unilgl/registration.h"
#include "unilgl/retrieval.h"
#include "unilgl/run_config.h"

namespace {

namespace fs = std::filesystem;
using unilgl::RunConfig;

constexpr int kExitOk = 0;
constexpr int kExitItemErrors = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFatal = 3;

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  int workers = 0;  // 0: take the config value
};

std::string Num(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

std::string Csv(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::ofstream OpenOut(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw unilgl::IoError("cannot write " + path.string());
  return out;
}

RunConfig LoadConfig(const GlobalOptions& g) {
  RunConfig cfg = g.config_path.empty() ? RunConfig() : RunConfig::FromFile(g.config_path);
  for (const auto& o : g.overrides) cfg.Override(o);
  if (g.workers > 0) cfg.Set("workers", std::to_string(g.workers));
  cfg.Validate();
  return cfg;
}

// Manifest whose missing clouds surface later as per-item errors instead of
// failing the whole command.
unilgl::DatasetManifest LoadManifestLenient(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw unilgl::IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return unilgl::ParseManifest(ss.str(), fs::path(path).parent_path(), path);
}

std::unique_ptr<unilgl::FeatureBackend> MakeBackend(const RunConfig& cfg) {
  if (cfg.Get("backend.kind") == "imported") {
    auto set = std::make_shared<const unilgl::EmbeddingSet>(
        unilgl::ImportEmbeddings(cfg.Get("backend.embeddings")));
    for (const auto& w : set->warnings) std::cerr << "warning: " << w << '\n';
    return std::make_unique<unilgl::ImportedBackend>(set);
  }
  return std::make_unique<unilgl::ReferenceBackend>(cfg.reference_backend());
}

std::string IndexName(size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%03zu", k);
  return buf;
}

// Reports per-item errors on stderr; returns the exit status for them.
int ReportItemErrors(const std::vector<std::string>& errors, const std::string& what) {
  int n = 0;
  for (size_t k = 0; k < errors.size(); ++k) {
    if (errors[k].empty()) continue;
    std::cerr << "error: " << what << ' ' << k << ": " << errors[k] << '\n';
    ++n;
  }
  return n > 0 ? kExitItemErrors : kExitOk;
}

// ---------------------------------------------------------------- synth

int CmdSynth(const RunConfig& cfg, const std::string& out_dir) {
  const unilgl::BenchmarkSpec spec = cfg.benchmark();
  const unilgl::Benchmark bench = unilgl::GenerateBenchmark(spec, cfg.workers());
  unilgl::WriteBenchmark(bench, out_dir);
  size_t db_points = 0, q_points = 0;
  for (const auto& c : bench.db_clouds) db_points += c.size();
  for (const auto& c : bench.query_clouds) q_points += c.size();
  std::cout << "sensor: " << unilgl::ToString(spec.scan.sensor) << '\n'
            << "primitives: " << bench.scene.num_primitives() << '\n'
            << "database_scans: " << bench.db_clouds.size() << '\n'
            << "query_scans: " << bench.query_clouds.size() << '\n'
            << "database_points: " << db_points << '\n'
            << "query_points: " << q_points << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- encode

int CmdEncode(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_dir) {
  const unilgl::DatasetManifest m = LoadManifestLenient(manifest_path);
  const unilgl::BevConfig bev = cfg.bev();
  fs::create_directories(out_dir);
  struct Row {
    size_t points = 0, retained = 0, cropped = 0, occupied = 0;
    std::string error;
  };
  std::vector<Row> rows(m.size());
  unilgl::ParallelFor(m.size(), cfg.workers(), [&](size_t k) {
    try {
      const unilgl::PointCloud cloud = unilgl::LoadCloud(m.Resolve(m.entries[k]));
      const unilgl::BevPair pair = unilgl::Encode(cloud, bev);
      unilgl::WritePgm(pair.spatial(), fs::path(out_dir) / (IndexName(k) + "_spatial.pgm"));
      unilgl::WritePgm(pair.intensity(), fs::path(out_dir) / (IndexName(k) + "_intensity.pgm"));
      rows[k] = {cloud.size(), pair.num_retained(), pair.num_cropped(), pair.occupied().size(), ""};
    } catch (const unilgl::Error& e) {
      rows[k].error = e.what();
    }
  });
  std::ofstream out = OpenOut(fs::path(out_dir) / "encode.csv");
  out << "index,path,status,points,retained,cropped,occupied_pixels,error\n";
  std::vector<std::string> errors;
  for (size_t k = 0; k < rows.size(); ++k) {
    const Row& r = rows[k];
    out << k << ',' << Csv(m.entries[k].path) << ',' << (r.error.empty() ? "ok" : "error") << ','
        << r.points << ',' << r.retained << ',' << r.cropped << ',' << r.occupied << ',' << Csv(r.error)
        << '\n';
    errors.push_back(r.error);
  }
  const int status = ReportItemErrors(errors, "scan");
  std::cout << "encoded: " << std::count(errors.begin(), errors.end(), std::string()) << " of " << m.size()
            << '\n';
  return status;
}

// ---------------------------------------------------------------- label

int CmdLabel(const RunConfig& cfg, const std::string& manifest_path, const std::string& database_path,
             const std::string& out_path) {
  const unilgl::LabelOptions options = cfg.labels();
  const unilgl::DatasetManifest m = LoadManifestLenient(manifest_path);
  std::vector<std::string> diagnostics;
  unilgl::LabelMap labels;
  if (database_path.empty()) {
    labels = unilgl::LabelPairs(m, options, &diagnostics);
  } else {
    labels = unilgl::LabelCrossPairs(m, LoadManifestLenient(database_path), options, &diagnostics);
  }
  unilgl::WriteLabelsCsv(labels, options.mode, out_path);
  int pos = 0, neg = 0, ign = 0;
  for (const auto& [key, l] : labels) {
    (l.label == unilgl::PairLabel::kPositive ? pos : l.label == unilgl::PairLabel::kNegative ? neg : ign)++;
  }
  for (const auto& d : diagnostics) std::cerr << "error: " << d << '\n';
  std::cout << "pairs: " << labels.size() << '\n'
            << "positive: " << pos << '\n'
            << "negative: " << neg << '\n'
            << "ignore: " << ign << '\n';
  return diagnostics.empty() ? kExitOk : kExitItemErrors;
}

// ---------------------------------------------------------------- extract

int CmdExtract(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_path) {
  const unilgl::DatasetManifest m = LoadManifestLenient(manifest_path);
  const auto backend = MakeBackend(cfg);
  const unilgl::BevConfig bev = cfg.bev();
  std::vector<std::optional<unilgl::Features>> feats(m.size());
  std::vector<std::string> errors(m.size());
  unilgl::ParallelFor(m.size(), cfg.workers(), [&](size_t k) {
    try {
      const unilgl::BevPair pair = unilgl::Encode(unilgl::LoadCloud(m.Resolve(m.entries[k])), bev);
      feats[k] = unilgl::Extract(pair, *backend, m.entries[k].path);
    } catch (const unilgl::Error& e) {
      errors[k] = e.what();
    }
  });
  unilgl::EmbeddingSet set;
  set.patch_size = bev.patch_size;
  set.rows = bev.height / bev.patch_size;
  set.cols = bev.width / bev.patch_size;
  for (size_t k = 0; k < m.size(); ++k) {
    if (!feats[k]) continue;
    set.dim = feats[k]->global.dim();
    set.records.emplace(m.entries[k].path, std::move(*feats[k]));
  }
  unilgl::ExportEmbeddings(set, out_path);
  std::cout << "backend: " << backend->name() << '\n'
            << "records: " << set.records.size() << '\n'
            << "dim: " << set.dim << '\n';
  return ReportItemErrors(errors, "scan");
}

// ---------------------------------------------------------------- index

struct EncodedSet {
  std::vector<std::optional<unilgl::EncodedScan>> scans;
  std::vector<std::string> errors;
};

EncodedSet EncodeManifest(const RunConfig& cfg, const unilgl::DatasetManifest& m,
                          const unilgl::FeatureBackend& backend) {
  EncodedSet s;
  s.scans.resize(m.size());
  s.errors.resize(m.size());
  const unilgl::BevConfig bev = cfg.bev();
  unilgl::ParallelFor(m.size(), cfg.workers(), [&](size_t k) {
    try {
      s.scans[k] = unilgl::EncodeScan(unilgl::LoadCloud(m.Resolve(m.entries[k])), bev, backend,
                                      m.entries[k].path);
    } catch (const unilgl::Error& e) {
      s.errors[k] = e.what();
    }
  });
  return s;
}

int CmdIndex(const RunConfig& cfg, const std::string& manifest_path, const std::string& out_path) {
  const unilgl::DatasetManifest m = LoadManifestLenient(manifest_path);
  const auto backend = MakeBackend(cfg);
  const EncodedSet enc = EncodeManifest(cfg, m, *backend);
  unilgl::DescriptorIndex index;
  for (size_t k = 0; k < m.size(); ++k) {
    if (enc.scans[k]) index.Add(static_cast<int>(k), enc.scans[k]->features.global);
  }
  index.Save(out_path);
  std::cout << "indexed: " << index.size() << " of " << m.size() << '\n' << "dim: " << index.dim() << '\n';
  return ReportItemErrors(enc.errors, "scan");
}

// ---------------------------------------------------------------- query

int CmdQuery(const RunConfig& cfg, const std::string& index_path, const std::string& manifest_path,
             const std::string& out_path, int k_override) {
  const unilgl::DescriptorIndex index = unilgl::DescriptorIndex::Load(index_path);
  const unilgl::DatasetManifest m = LoadManifestLenient(manifest_path);
  const int k = k_override > 0 ? k_override : cfg.GetInt("retrieval.k");
  const auto backend = MakeBackend(cfg);
  const EncodedSet enc = EncodeManifest(cfg, m, *backend);
  std::vector<std::vector<unilgl::Neighbor>> results(m.size());
  std::vector<std::string> errors = enc.errors;
  for (size_t q = 0; q < m.size(); ++q) {
    if (!enc.scans[q]) continue;
    try {
      results[q] = index.Query(enc.scans[q]->features.global, k);
    } catch (const unilgl::Error& e) {
      errors[q] = e.what();
    }
  }
  std::ofstream out = OpenOut(out_path);
  out << "query,rank,id,distance,error\n";
  for (size_t q = 0; q < m.size(); ++q) {
    if (!errors[q].empty()) {
      out << q << ",,,," << Csv(errors[q]) << '\n';
      continue;
    }
    for (size_t r = 0; r < results[q].size(); ++r) {
      out << q << ',' << r + 1 << ',' << results[q][r].id << ',' << Num(results[q][r].distance) << ",\n";
    }
  }
  std::cout << "queries: " << m.size() << '\n' << "k: " << k << '\n';
  return ReportItemErrors(errors, "query");
}

// ---------------------------------------------------------------- evaluate

std::vector<double> ParseThresholds(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || ptr != tok.data() + tok.size()) {
      throw unilgl::ArgumentError("bad threshold '" + tok + "'");
    }
    out.push_back(v);
  }
  return out;
}

int CmdEvaluate(const RunConfig& cfg, const std::string& index_path, const std::string& queries_path,
                const std::string& labels_path, const std::string& out_dir, bool svg,
                const std::string& thresholds) {
  const unilgl::DescriptorIndex index = unilgl::DescriptorIndex::Load(index_path);
  const unilgl::DatasetManifest m = LoadManifestLenient(queries_path);
  if (m.size() == 0) throw unilgl::ArgumentError("the query manifest is empty");
  const unilgl::LabelMap labels = unilgl::ReadLabelsCsv(labels_path);
  const std::set<int> db_ids(index.ids().begin(), index.ids().end());
  for (const auto& [key, l] : labels) {
    if (key.first < 0 || static_cast<size_t>(key.first) >= m.size() || !db_ids.count(key.second)) {
      throw unilgl::ConfigError("label pair (" + std::to_string(key.first) + ", " +
                                std::to_string(key.second) + ") does not match the queries or the index");
    }
  }
  const auto backend = MakeBackend(cfg);
  const EncodedSet enc = EncodeManifest(cfg, m, *backend);
  std::vector<unilgl::QueryItem> items;
  for (size_t q = 0; q < m.size(); ++q) {
    if (enc.scans[q]) items.push_back({static_cast<int>(q), enc.scans[q]->features.global});
  }
  if (items.empty()) throw unilgl::EvaluationError("no query could be encoded");
  unilgl::EvaluateOptions options;
  options.k = cfg.GetInt("retrieval.k");
  if (!thresholds.empty()) options.thresholds = ParseThresholds(thresholds);
  const unilgl::RetrievalReport report =
      unilgl::Evaluate(index, items, unilgl::PositivesFromLabels(labels), options);
  fs::create_directories(out_dir);
  unilgl::WritePrCurveCsv(report, fs::path(out_dir) / "pr_curve.csv");
  {
    std::ofstream out = OpenOut(fs::path(out_dir) / "retrieval.csv");
    out << "query,top1,distance,has_positive,top1_positive\n";
    for (const auto& r : report.queries) {
      out << r.query_id << ',' << r.neighbors.front().id << ',' << Num(r.neighbors.front().distance) << ','
          << (r.has_positive ? 1 : 0) << ',' << (r.top1_positive ? 1 : 0) << '\n';
    }
  }
  const std::string summary = unilgl::FormatSummary(report);
  OpenOut(fs::path(out_dir) / "summary.txt") << summary;
  if (svg) unilgl::WritePrCurveSvg(report, fs::path(out_dir) / "pr_curve.svg");
  std::cout << summary;
  return ReportItemErrors(enc.errors, "query");
}

// ---------------------------------------------------------------- localize

int CmdLocalize(const RunConfig& cfg, const std::string& database_path, const std::string& queries_path,
                const std::string& out_path, const std::string& summary_path) {
  const unilgl::DatasetManifest db_m = LoadManifestLenient(database_path);
  const unilgl::DatasetManifest q_m = LoadManifestLenient(queries_path);
  if (q_m.size() == 0) throw unilgl::ArgumentError("the query manifest is empty");
  const auto backend = MakeBackend(cfg);
  const unilgl::LocalizeConfig loc = cfg.localize();

  EncodedSet db = EncodeManifest(cfg, db_m, *backend);
  unilgl::DescriptorIndex index;
  std::vector<unilgl::EncodedScan> db_scans(db_m.size());
  std::vector<unilgl::PoseSE3> db_poses(db_m.size());
  std::vector<std::optional<unilgl::Hull2D>> db_hulls(db_m.size());
  for (size_t k = 0; k < db_m.size(); ++k) {
    db_poses[k] = db_m.entries[k].pose;
    if (!db.scans[k]) continue;
    index.Add(static_cast<int>(k), db.scans[k]->features.global);
    try {
      db_hulls[k] = unilgl::CloudHull(db.scans[k]->cloud, db_poses[k]);
    } catch (const unilgl::DegenerateHullError&) {
    }
    db_scans[k] = std::move(*db.scans[k]);
  }
  if (index.empty()) throw unilgl::EmptyIndexError("no database scan could be encoded");
  int status = ReportItemErrors(db.errors, "database scan");

  std::vector<unilgl::LocalizationRecord> records(q_m.size());
  unilgl::ParallelFor(q_m.size(), cfg.workers(), [&](size_t q) {
    const unilgl::PoseSE3 truth = q_m.entries[q].pose;
    unilgl::LocalizationRecord rec;
    rec.query = static_cast<int>(q);
    try {
      const unilgl::EncodedScan scan = unilgl::EncodeScan(unilgl::LoadCloud(q_m.Resolve(q_m.entries[q])),
                                                          cfg.bev(), *backend, q_m.entries[q].path);
      rec = unilgl::LocalizeQuery(static_cast<int>(q), scan, index, db_scans, db_poses, loc, truth);
      // Retrieval correctness by footprint overlap, when it is defined.
      std::optional<unilgl::Hull2D> qh;
      try {
        qh = unilgl::CloudHull(scan.cloud, truth);
      } catch (const unilgl::DegenerateHullError&) {
      }
      if (qh) {
        bool any = false;
        for (const auto& h : db_hulls) {
          if (h && unilgl::LabelFromIou(unilgl::Iou(*qh, *h)) == unilgl::PairLabel::kPositive) any = true;
        }
        if (any) {
          const auto& h = rec.retrieved >= 0 ? db_hulls[static_cast<size_t>(rec.retrieved)] : std::nullopt;
          rec.retrieval_positive =
              h.has_value() && unilgl::LabelFromIou(unilgl::Iou(*qh, *h)) == unilgl::PairLabel::kPositive;
        }
      }
    } catch (const unilgl::Error& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    records[q] = std::move(rec);
  });
  unilgl::WriteLocalizationCsv(records, out_path);
  const unilgl::LocalizationSummary summary = unilgl::Summarize(records);
  const std::string text = unilgl::FormatSummary(summary);
  if (!summary_path.empty()) OpenOut(summary_path) << text;
  std::cout << text;
  std::vector<std::string> errors;
  for (const auto& r : records) errors.push_back(r.ok ? "" : r.error);
  return std::max(status, ReportItemErrors(errors, "query"));
}

// ---------------------------------------------------------------- graph-optimize

int CmdGraphOptimize(const RunConfig& cfg, const std::string& graph_path, const std::string& out_path,
                     const std::string& trajectory_path, const std::string& base_manifest) {
  unilgl::PoseGraph graph = unilgl::LoadG2o(graph_path);
  const unilgl::OptimizeResult result = unilgl::Optimize(graph, cfg.pose_graph());
  graph.nodes() = result.nodes;
  unilgl::SaveG2o(graph, out_path);
  if (!trajectory_path.empty()) {
    std::optional<unilgl::DatasetManifest> base;
    if (!base_manifest.empty()) {
      base = LoadManifestLenient(base_manifest);
    }
    unilgl::SaveManifest(unilgl::TrajectoryManifest(result.nodes, base ? &*base : nullptr), trajectory_path);
  }
  std::cout << "nodes: " << graph.nodes().size() << '\n'
            << "edges: " << graph.edges().size() << '\n'
            << "initial_cost: " << Num(result.initial_cost) << '\n'
            << "final_cost: " << Num(result.final_cost) << '\n'
            << "iterations: " << result.iterations << '\n'
            << "converged: " << (result.converged ? 1 : 0) << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- loss

int CmdLoss(const RunConfig& cfg, const std::string& embeddings_path, const std::string& manifest_path,
            const std::string& labels_path, const std::string& out_path) {
  const unilgl::LossConfig loss = cfg.loss();
  loss.Validate();
  const unilgl::EmbeddingSet set = unilgl::ImportEmbeddings(embeddings_path);
  for (const auto& w : set.warnings) std::cerr << "warning: " << w << '\n';
  const unilgl::DatasetManifest m = LoadManifestLenient(manifest_path);
  const unilgl::LabelMap labels = unilgl::ReadLabelsCsv(labels_path);
  auto descriptor = [&](int k) -> const unilgl::GlobalDescriptor& {
    if (k < 0 || static_cast<size_t>(k) >= m.size()) {
      throw unilgl::ConfigError("label index " + std::to_string(k) + " is outside the manifest");
    }
    const auto it = set.records.find(m.entries[static_cast<size_t>(k)].path);
    if (it == set.records.end()) {
      throw unilgl::ConfigError("no embedding for " + m.entries[static_cast<size_t>(k)].path);
    }
    return it->second.global;
  };
  // Labels are symmetric; gather positives and negatives per scan in id order.
  std::map<int, std::vector<int>> positives, negatives;
  for (const auto& [key, l] : labels) {
    if (l.label == unilgl::PairLabel::kPositive) {
      positives[key.first].push_back(key.second);
      positives[key.second].push_back(key.first);
    } else if (l.label == unilgl::PairLabel::kNegative) {
      negatives[key.first].push_back(key.second);
      negatives[key.second].push_back(key.first);
    }
  }
  std::ofstream out = OpenOut(out_path);
  out << "query,positive,negatives,lazy_triplet\n";
  double total = 0.0;
  int count = 0;
  for (auto& [q, pos] : positives) {
    auto neg_it = negatives.find(q);
    if (neg_it == negatives.end()) continue;
    std::sort(pos.begin(), pos.end());
    std::vector<int> negs = neg_it->second;
    std::sort(negs.begin(), negs.end());
    if (static_cast<int>(negs.size()) > loss.negatives_per_query) negs.resize(loss.negatives_per_query);
    std::vector<unilgl::GlobalDescriptor> neg_desc;
    for (const int n : negs) neg_desc.push_back(descriptor(n));
    const double l = unilgl::LazyTripletLoss(descriptor(q), descriptor(pos.front()), neg_desc, loss);
    out << q << ',' << pos.front() << ',' << negs.size() << ',' << Num(l) << '\n';
    total += l;
    ++count;
  }
  std::cout << "triplets: " << count << '\n'
            << "mean_lazy_triplet: " << Num(count > 0 ? total / count : 0.0) << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR global localization toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every sub-command");
  GlobalOptions g;
  bool print_config = false;
  app.add_option("--config", g.config_path, "Config file of 'key = value' lines")->check(CLI::ExistingFile);
  app.add_option("--set", g.overrides, "Override one config key (key=value); repeatable");
  app.add_option("--workers", g.workers, "Worker threads (overrides the 'workers' key)")->check(CLI::NonNegativeNumber);
  app.add_flag("--print-config", print_config, "Print the effective configuration before running");

  std::string out, manifest, database, queries, index, labels, graph, trajectory, embeddings, thresholds,
      summary;
  int k = 0;
  bool svg = false;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic desk benchmark");
  synth->add_option("--out", out, "Output directory")->required();

  auto* encode = app.add_subcommand("encode", "Encode scans into spatial/intensity BEV images");
  encode->add_option("--manifest", manifest, "Scan manifest")->required();
  encode->add_option("--out", out, "Output directory")->required();

  auto* label = app.add_subcommand("label", "Co-visibility labels from footprint overlap");
  label->add_option("--manifest", manifest, "Scan manifest (queries when --database is given)")->required();
  label->add_option("--database", database, "Database manifest for cross labels");
  label->add_option("--out", out, "Output CSV")->required();

  auto* extract = app.add_subcommand("extract", "Extract descriptors and patch tokens to an embedding file");
  extract->add_option("--manifest", manifest, "Scan manifest")->required();
  extract->add_option("--out", out, "Output embedding file")->required();

  auto* index_cmd = app.add_subcommand("index", "Build a global-descriptor index");
  index_cmd->add_option("--manifest", manifest, "Database manifest")->required();
  index_cmd->add_option("--out", out, "Output index file")->required();

  auto* query = app.add_subcommand("query", "k-nearest-neighbour retrieval");
  query->add_option("--index", index, "Index file")->required();
  query->add_option("--manifest", manifest, "Query manifest")->required();
  query->add_option("--out", out, "Output CSV")->required();
  query->add_option("-k", k, "Neighbours per query (default: retrieval.k)");

  auto* localize = app.add_subcommand("localize", "Retrieval followed by registration for every query");
  localize->add_option("--database", database, "Database manifest")->required();
  localize->add_option("--queries", queries, "Query manifest (poses are ground truth)")->required();
  localize->add_option("--out", out, "Per-query CSV")->required();
  localize->add_option("--summary", summary, "Summary file");

  auto* evaluate = app.add_subcommand("evaluate", "Recall@1, precision-recall curve and AP");
  evaluate->add_option("--index", index, "Index file")->required();
  evaluate->add_option("--queries", queries, "Query manifest")->required();
  evaluate->add_option("--labels", labels, "Cross labels CSV (query, database)")->required();
  evaluate->add_option("--out-dir", out, "Output directory")->required();
  evaluate->add_flag("--svg", svg, "Also write pr_curve.svg");
  evaluate->add_option("--thresholds", thresholds, "Comma-separated distance thresholds");

  auto* gopt = app.add_subcommand("graph-optimize", "Optimize an SE(3) pose graph (g2o format)");
  gopt->add_option("--graph", graph, "Input g2o file")->required();
  gopt->add_option("--out", out, "Output g2o file")->required();
  gopt->add_option("--trajectory", trajectory, "Write the optimized trajectory as a manifest");
  gopt->add_option("--manifest", manifest, "Manifest supplying paths and timestamps for --trajectory");

  auto* loss = app.add_subcommand("loss", "Evaluate the lazy triplet loss on exported embeddings");
  loss->add_option("--embeddings", embeddings, "Embedding file")->required();
  loss->add_option("--manifest", manifest, "Manifest whose entry paths key the embeddings")->required();
  loss->add_option("--labels", labels, "Labels CSV over manifest indices")->required();
  loss->add_option("--out", out, "Output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const RunConfig cfg = LoadConfig(g);
    if (print_config) std::cout << cfg.Dump();
    if (*synth) return CmdSynth(cfg, out);
    if (*encode) return CmdEncode(cfg, manifest, out);
    if (*label) return CmdLabel(cfg, manifest, database, out);
    if (*extract) return CmdExtract(cfg, manifest, out);
    if (*index_cmd) return CmdIndex(cfg, manifest, out);
    if (*query) return CmdQuery(cfg, index, manifest, out, k);
    if (*localize) return CmdLocalize(cfg, database, queries, out, summary);
    if (*evaluate) return CmdEvaluate(cfg, index, queries, labels, out, svg, thresholds);
    if (*gopt) return CmdGraphOptimize(cfg, graph, out, trajectory, manifest);
    if (*loss) return CmdLoss(cfg, embeddings, manifest, labels, out);
  } catch (const unilgl::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const unilgl::ArgumentError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFatal;
  }
  return kExitUsage;
}
