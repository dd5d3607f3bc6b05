#include "unilgl/covis.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "unilgl/errors.h"

namespace unilgl {
namespace {

constexpr double kDedupTolerance = 1e-12;

double Cross(const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

Eigen::Vector2d Centroid(const Hull2D& h) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& v : h.vertices) c += v;
  return c / static_cast<double>(h.vertices.size());
}

void DedupRing(std::vector<Eigen::Vector2d>& poly) {
  std::vector<Eigen::Vector2d> out;
  out.reserve(poly.size());
  for (const auto& p : poly) {
    if (out.empty() || (p - out.back()).cwiseAbs().maxCoeff() > kDedupTolerance) out.push_back(p);
  }
  while (out.size() > 1 && (out.front() - out.back()).cwiseAbs().maxCoeff() <= kDedupTolerance) {
    out.pop_back();
  }
  poly = std::move(out);
}

}  // namespace

std::string ToString(PairLabel label) {
  switch (label) {
    case PairLabel::kPositive: return "positive";
    case PairLabel::kNegative: return "negative";
    case PairLabel::kIgnore: return "ignore";
  }
  return "ignore";
}

PairLabel ParsePairLabel(const std::string& text) {
  if (text == "positive") return PairLabel::kPositive;
  if (text == "negative") return PairLabel::kNegative;
  if (text == "ignore") return PairLabel::kIgnore;
  throw ParseError("unknown label '" + text + "'");
}

PairLabel LabelFromIou(double iou) {
  if (iou > kPositiveIou) return PairLabel::kPositive;
  if (iou < kNegativeIou) return PairLabel::kNegative;
  return PairLabel::kIgnore;
}

PairLabel LabelFromDistance(double distance) {
  return distance < kPositiveDistance ? PairLabel::kPositive : PairLabel::kNegative;
}

double SignedArea(std::span<const Eigen::Vector2d> polygon) {
  const size_t n = polygon.size();
  if (n < 3) return 0.0;
  double twice = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const auto& a = polygon[i];
    const auto& b = polygon[(i + 1) % n];
    twice += a.x() * b.y() - b.x() * a.y();
  }
  return 0.5 * twice;
}

Hull2D ConvexHull(std::span<const Eigen::Vector2d> points) {
  std::vector<Eigen::Vector2d> pts(points.begin(), points.end());
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) throw DegenerateHullError("hull needs at least 3 distinct points");

  std::vector<Eigen::Vector2d> hull(2 * pts.size());
  size_t k = 0;
  for (const auto& p : pts) {
    while (k >= 2 && Cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (size_t i = pts.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && Cross(hull[k - 2], hull[k - 1], pts[i]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) throw DegenerateHullError("points are collinear");
  Hull2D out;
  out.area = SignedArea(hull);
  out.vertices = std::move(hull);
  if (!(out.area > 0.0)) throw DegenerateHullError("hull has zero area");
  return out;
}

Hull2D CloudHull(const PointCloud& cloud, const PoseSE3& world_pose) {
  std::vector<Eigen::Vector2d> xy;
  xy.reserve(cloud.size());
  for (const Point& p : cloud.points) xy.push_back((world_pose * p.xyz()).head<2>());
  return ConvexHull(xy);
}

std::vector<Eigen::Vector2d> IntersectConvex(const Hull2D& a, const Hull2D& b) {
  std::vector<Eigen::Vector2d> poly = a.vertices;
  const size_t m = b.vertices.size();
  for (size_t e = 0; e < m && !poly.empty(); ++e) {
    const Eigen::Vector2d& p0 = b.vertices[e];
    const Eigen::Vector2d& p1 = b.vertices[(e + 1) % m];
    const Eigen::Vector2d d = p1 - p0;
    auto side = [&](const Eigen::Vector2d& q) {
      return d.x() * (q.y() - p0.y()) - d.y() * (q.x() - p0.x());
    };
    std::vector<Eigen::Vector2d> next;
    next.reserve(poly.size() + 1);
    for (size_t i = 0; i < poly.size(); ++i) {
      const Eigen::Vector2d& cur = poly[i];
      const Eigen::Vector2d& prv = poly[(i + poly.size() - 1) % poly.size()];
      const double sc = side(cur);
      const double sp = side(prv);
      if (sc >= 0.0) {
        if (sp < 0.0) next.push_back(prv + (cur - prv) * (sp / (sp - sc)));
        next.push_back(cur);
      } else if (sp >= 0.0) {
        next.push_back(prv + (cur - prv) * (sp / (sp - sc)));
      }
    }
    DedupRing(next);
    poly = std::move(next);
  }
  if (poly.size() < 3 || SignedArea(poly) <= 0.0) return {};
  return poly;
}

double Iou(const Hull2D& a, const Hull2D& b) {
  const auto inter = IntersectConvex(a, b);
  const double ia = inter.empty() ? 0.0 : SignedArea(inter);
  const double uni = a.area + b.area - ia;
  if (!(uni > 0.0)) return 0.0;
  return std::clamp(ia / uni, 0.0, 1.0);
}

HullSet ComputeHulls(const DatasetManifest& manifest) {
  HullSet set;
  set.hulls.reserve(manifest.size());
  for (size_t i = 0; i < manifest.size(); ++i) {
    const ManifestEntry& e = manifest.entries[i];
    try {
      set.hulls.emplace_back(CloudHull(LoadCloud(manifest.Resolve(e)), e.pose));
    } catch (const DegenerateHullError& err) {
      set.hulls.emplace_back(std::nullopt);
      set.diagnostics.push_back("entry " + std::to_string(i) + " (" + e.path +
                                ") excluded: " + err.what());
    }
  }
  return set;
}

namespace {

std::optional<CovisLabel> LabelOne(const std::optional<Hull2D>& a, const PoseSE3& pa,
                                   const std::optional<Hull2D>& b, const PoseSE3& pb,
                                   const LabelOptions& options) {
  if (options.mode == LabelMode::kDistance) {
    const double d = (pa.translation() - pb.translation()).norm();
    if (options.max_centroid_distance && d > *options.max_centroid_distance) return std::nullopt;
    return CovisLabel{d, LabelFromDistance(d)};
  }
  if (!a || !b) return std::nullopt;
  if (options.max_centroid_distance &&
      (Centroid(*a) - Centroid(*b)).norm() > *options.max_centroid_distance) {
    return std::nullopt;
  }
  const double iou = Iou(*a, *b);
  return CovisLabel{iou, LabelFromIou(iou)};
}

}  // namespace

LabelMap LabelPairs(const HullSet& hulls, std::span<const PoseSE3> poses,
                    const LabelOptions& options) {
  const size_t n = poses.size();
  if (n < 2) throw ArgumentError("labeling needs at least two entries");
  LabelMap out;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      const std::optional<Hull2D> none;
      const auto& hi = options.mode == LabelMode::kIou ? hulls.hulls.at(i) : none;
      const auto& hj = options.mode == LabelMode::kIou ? hulls.hulls.at(j) : none;
      if (auto l = LabelOne(hi, poses[i], hj, poses[j], options)) {
        out.emplace(PairKey{static_cast<int>(i), static_cast<int>(j)}, *l);
      }
    }
  }
  return out;
}

namespace {

std::vector<PoseSE3> PosesOf(const DatasetManifest& m) {
  std::vector<PoseSE3> poses;
  poses.reserve(m.size());
  for (const auto& e : m.entries) poses.push_back(e.pose);
  return poses;
}

}  // namespace

LabelMap LabelPairs(const DatasetManifest& manifest, const LabelOptions& options,
                    std::vector<std::string>* diagnostics) {
  if (manifest.size() < 2) throw ArgumentError("labeling needs at least two entries");
  HullSet hulls;
  if (options.mode == LabelMode::kIou) hulls = ComputeHulls(manifest);
  if (diagnostics) {
    diagnostics->insert(diagnostics->end(), hulls.diagnostics.begin(), hulls.diagnostics.end());
  }
  return LabelPairs(hulls, PosesOf(manifest), options);
}

LabelMap LabelCrossPairs(const HullSet& query_hulls, std::span<const PoseSE3> query_poses,
                         const HullSet& db_hulls, std::span<const PoseSE3> db_poses,
                         const LabelOptions& options) {
  LabelMap out;
  const std::optional<Hull2D> none;
  for (size_t i = 0; i < query_poses.size(); ++i) {
    for (size_t j = 0; j < db_poses.size(); ++j) {
      const auto& hi = options.mode == LabelMode::kIou ? query_hulls.hulls.at(i) : none;
      const auto& hj = options.mode == LabelMode::kIou ? db_hulls.hulls.at(j) : none;
      if (auto l = LabelOne(hi, query_poses[i], hj, db_poses[j], options)) {
        out.emplace(PairKey{static_cast<int>(i), static_cast<int>(j)}, *l);
      }
    }
  }
  return out;
}

LabelMap LabelCrossPairs(const DatasetManifest& queries, const DatasetManifest& database,
                         const LabelOptions& options, std::vector<std::string>* diagnostics) {
  HullSet qh, dh;
  if (options.mode == LabelMode::kIou) {
    qh = ComputeHulls(queries);
    dh = ComputeHulls(database);
  }
  if (diagnostics) {
    for (const auto& d : qh.diagnostics) diagnostics->push_back("query " + d);
    for (const auto& d : dh.diagnostics) diagnostics->push_back("database " + d);
  }
  return LabelCrossPairs(qh, PosesOf(queries), dh, PosesOf(database), options);
}

void WriteLabelsCsv(const LabelMap& labels, LabelMode mode, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << (mode == LabelMode::kIou ? "i,j,iou,label\n" : "i,j,distance,label\n");
  char buf[64];
  for (const auto& [key, l] : labels) {
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), l.iou);
    out << key.first << ',' << key.second << ',' << std::string_view(buf, ptr - buf) << ','
        << ToString(l.label) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

LabelMap ReadLabelsCsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  LabelMap out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.rfind("i,j,", 0) == 0) continue;
    std::stringstream ss(line);
    std::string f[4];
    for (auto& s : f) std::getline(ss, s, ',');
    try {
      const int i = std::stoi(f[0]);
      const int j = std::stoi(f[1]);
      const double v = std::stod(f[2]);
      out[{i, j}] = CovisLabel{v, ParsePairLabel(f[3])};
    } catch (const std::exception&) {
      throw ParseError(path.string() + ": malformed label at line " + std::to_string(line_no));
    }
  }
  return out;
}

}  // namespace unilgl
