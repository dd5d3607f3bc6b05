#include "unilgl/retrieval.h"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "unilgl/errors.h"

namespace unilgl {
namespace {

constexpr char kIndexMagic[8] = {'U', 'L', 'G', 'L', 'I', 'D', 'X', '1'};

std::string Num(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace

void DescriptorIndex::Add(int id, const GlobalDescriptor& descriptor) {
  if (Contains(id)) throw ArgumentError("duplicate descriptor id " + std::to_string(id));
  if (!ids_.empty() && descriptor.dim() != dim()) {
    throw ArgumentError("descriptor dimension " + std::to_string(descriptor.dim()) +
                        " does not match index dimension " + std::to_string(dim()));
  }
  if (descriptor.dim() == 0 || !descriptor.values.allFinite() ||
      std::abs(descriptor.values.cast<double>().norm() - 1.0) > 1e-6) {
    throw ArgumentError("descriptor " + std::to_string(id) + " is not unit norm");
  }
  dim_ = descriptor.dim();
  data_.insert(data_.end(), descriptor.values.data(), descriptor.values.data() + dim_);
  ids_.push_back(id);
}

bool DescriptorIndex::Contains(int id) const {
  return std::find(ids_.begin(), ids_.end(), id) != ids_.end();
}

std::vector<Neighbor> DescriptorIndex::Query(const GlobalDescriptor& q, int k) const {
  if (ids_.empty()) throw EmptyIndexError("query on an empty index");
  if (k < 1) throw ArgumentError("k must be at least 1");
  if (q.dim() != dim()) throw ArgumentError("query dimension does not match the index");
  const Eigen::VectorXd qd = q.values.cast<double>();
  std::vector<Neighbor> all(ids_.size());
  for (size_t i = 0; i < ids_.size(); ++i) {
    double s = 0.0;
    const float* col = data_.data() + i * dim_;
    for (Eigen::Index d = 0; d < qd.size(); ++d) {
      const double diff = qd[d] - static_cast<double>(col[d]);
      s += diff * diff;
    }
    all[i] = {ids_[i], std::sqrt(s)};
  }
  const size_t kk = std::min<size_t>(static_cast<size_t>(k), all.size());
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(kk), all.end(), less);
  all.resize(kk);
  return all;
}

void DescriptorIndex::Save(const std::filesystem::path& path) const {
  std::string out(kIndexMagic, sizeof(kIndexMagic));
  const uint32_t d = static_cast<uint32_t>(dim());
  const uint64_t n = ids_.size();
  out.append(reinterpret_cast<const char*>(&d), sizeof(d));
  out.append(reinterpret_cast<const char*>(&n), sizeof(n));
  for (size_t i = 0; i < ids_.size(); ++i) {
    const int32_t id = ids_[i];
    out.append(reinterpret_cast<const char*>(&id), sizeof(id));
    out.append(reinterpret_cast<const char*>(data_.data() + i * dim_), d * sizeof(float));
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed for " + path.string());
}

DescriptorIndex DescriptorIndex::Load(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << file.rdbuf();
  const std::string data = ss.str();
  size_t pos = 0;
  auto take = [&](void* dst, size_t n) {
    if (data.size() - pos < n) throw ParseError(path.string() + ": truncated index file");
    std::memcpy(dst, data.data() + pos, n);
    pos += n;
  };
  char magic[8];
  take(magic, sizeof(magic));
  if (std::memcmp(magic, kIndexMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": not an index file");
  }
  uint32_t d = 0;
  uint64_t n = 0;
  take(&d, sizeof(d));
  take(&n, sizeof(n));
  DescriptorIndex index;
  for (uint64_t i = 0; i < n; ++i) {
    int32_t id = 0;
    take(&id, sizeof(id));
    GlobalDescriptor g;
    g.values.resize(d);
    take(g.values.data(), d * sizeof(float));
    index.Add(id, g);
  }
  if (pos != data.size()) throw ParseError(path.string() + ": trailing bytes in index file");
  return index;
}

PositiveFn PositivesFromLabels(const LabelMap& labels) {
  return [&labels](int q, int db) {
    const auto it = labels.find({q, db});
    return it != labels.end() && it->second.label == PairLabel::kPositive;
  };
}

RetrievalReport Evaluate(const DescriptorIndex& index, const std::vector<QueryItem>& queries,
                         const PositiveFn& is_positive, const EvaluateOptions& options) {
  if (index.empty()) throw EmptyIndexError("evaluation on an empty index");
  if (queries.empty()) throw EvaluationError("no queries to evaluate");
  RetrievalReport report;
  report.queries.reserve(queries.size());
  for (const QueryItem& q : queries) {
    QueryResult r;
    r.query_id = q.id;
    r.neighbors = index.Query(q.descriptor, std::max(1, options.k));
    for (const int db : index.ids()) {
      if (is_positive(q.id, db)) {
        r.has_positive = true;
        break;
      }
    }
    r.top1_positive = is_positive(q.id, r.neighbors.front().id);
    if (r.has_positive) {
      ++report.evaluated;
      if (r.top1_positive) ++report.top1_correct;
    } else {
      ++report.excluded;
    }
    report.queries.push_back(std::move(r));
  }
  if (report.evaluated == 0) throw EvaluationError("no query has a positive match in the database");
  report.recall_at_1 = static_cast<double>(report.top1_correct) / report.evaluated;

  std::vector<double> thresholds = options.thresholds;
  if (thresholds.empty()) {
    for (const auto& r : report.queries) thresholds.push_back(r.neighbors.front().distance);
  }
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  for (const double t : thresholds) {
    PrSample s;
    s.threshold = t;
    for (const auto& r : report.queries) {
      const bool predicted = r.neighbors.front().distance <= t;
      if (predicted && r.top1_positive) {
        ++s.tp;
      } else if (predicted) {
        ++s.fp;
      }
      if (r.has_positive && !(predicted && r.top1_positive)) ++s.fn;
    }
    s.precision = (s.tp + s.fp) > 0 ? static_cast<double>(s.tp) / (s.tp + s.fp) : 1.0;
    s.recall = (s.tp + s.fn) > 0 ? static_cast<double>(s.tp) / (s.tp + s.fn) : 0.0;
    report.pr_curve.push_back(s);
  }

  double area = 0.0;
  double prev_r = 0.0;
  double prev_p = 1.0;
  for (const PrSample& s : report.pr_curve) {
    area += (s.recall - prev_r) * 0.5 * (s.precision + prev_p);
    prev_r = s.recall;
    prev_p = s.precision;
  }
  report.average_precision = area;
  return report;
}

void WritePrCurveCsv(const RetrievalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "threshold,tp,fp,fn,precision,recall\n";
  for (const PrSample& s : report.pr_curve) {
    out << Num(s.threshold) << ',' << s.tp << ',' << s.fp << ',' << s.fn << ',' << Num(s.precision)
        << ',' << Num(s.recall) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::string FormatSummary(const RetrievalReport& report) {
  std::ostringstream s;
  s << "queries: " << report.queries.size() << '\n'
    << "evaluated: " << report.evaluated << '\n'
    << "excluded_no_positive: " << report.excluded << '\n'
    << "top1_correct: " << report.top1_correct << '\n'
    << "recall_at_1: " << Num(report.recall_at_1) << '\n'
    << "average_precision: " << Num(report.average_precision) << '\n';
  return s.str();
}

void WritePrCurveSvg(const RetrievalReport& report, const std::filesystem::path& path) {
  constexpr double kSize = 400.0;
  constexpr double kMargin = 40.0;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  const double full = kSize + 2 * kMargin;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << full << "\" height=\"" << full
      << "\">\n"
      << "<rect x=\"" << kMargin << "\" y=\"" << kMargin << "\" width=\"" << kSize << "\" height=\""
      << kSize << "\" fill=\"none\" stroke=\"black\"/>\n"
      << "<text x=\"" << full / 2 << "\" y=\"" << full - 8 << "\" text-anchor=\"middle\">recall</text>\n"
      << "<text x=\"12\" y=\"" << full / 2 << "\" transform=\"rotate(-90 12 " << full / 2
      << ")\" text-anchor=\"middle\">precision</text>\n"
      << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"";
  auto pt = [&](double r, double p) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", kMargin + r * kSize, kMargin + (1.0 - p) * kSize);
    return std::string(buf);
  };
  out << pt(0.0, 1.0);
  for (const PrSample& s : report.pr_curve) out << pt(s.recall, s.precision);
  out << "\"/>\n";
  char title[96];
  std::snprintf(title, sizeof(title), "AP %.4f  R@1 %.4f", report.average_precision,
                report.recall_at_1);
  out << "<text x=\"" << full / 2 << "\" y=\"24\" text-anchor=\"middle\">" << title << "</text>\n"
      << "</svg>\n";
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace unilgl
