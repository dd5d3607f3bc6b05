#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "unilgl/covis.h"
#include "unilgl/features.h"

namespace unilgl {

struct Neighbor {
  int id = 0;
  double distance = 0.0;
  bool operator==(const Neighbor&) const = default;
};

// Exact brute-force L2 index over unit-norm global descriptors. Immutable
// once built; Query is safe to call concurrently.
class DescriptorIndex {
 public:
  DescriptorIndex() = default;

  // Throws ArgumentError on a duplicate id, a dimension mismatch, or a
  // descriptor that is not unit norm.
  void Add(int id, const GlobalDescriptor& descriptor);

  size_t size() const { return ids_.size(); }
  bool empty() const { return ids_.empty(); }
  int dim() const { return dim_; }
  bool Contains(int id) const;
  const std::vector<int>& ids() const { return ids_; }
  Eigen::Map<const Eigen::VectorXf> Descriptor(size_t slot) const {
    return Eigen::Map<const Eigen::VectorXf>(data_.data() + slot * dim_, dim_);
  }

  // k nearest entries by L2 distance, ascending; ties broken by lower id.
  // k larger than the index returns every entry.
  std::vector<Neighbor> Query(const GlobalDescriptor& q, int k) const;

  // Binary file: "ULGLIDX1", uint32 dim, uint64 count, then per entry
  // int32 id and dim float32 values (little endian).
  void Save(const std::filesystem::path& path) const;
  static DescriptorIndex Load(const std::filesystem::path& path);

 private:
  std::vector<int> ids_;
  int dim_ = 0;
  std::vector<float> data_;  // entry-major, dim_ floats each
};

struct QueryItem {
  int id = 0;
  GlobalDescriptor descriptor;
};

// Whether database entry `db_id` is a true match for query `query_id`.
using PositiveFn = std::function<bool(int query_id, int db_id)>;

// Positive iff the pair (query, db) is labeled positive; absent pairs are
// negative.
PositiveFn PositivesFromLabels(const LabelMap& labels);

struct PrSample {
  double threshold = 0.0;
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 1.0;
  double recall = 0.0;
};

struct QueryResult {
  int query_id = 0;
  std::vector<Neighbor> neighbors;
  bool has_positive = false;
  bool top1_positive = false;
};

struct RetrievalReport {
  std::vector<QueryResult> queries;
  int evaluated = 0;  // queries with at least one positive
  int excluded = 0;   // queries with no positive in the database
  int top1_correct = 0;
  double recall_at_1 = 0.0;
  double average_precision = 0.0;
  std::vector<PrSample> pr_curve;  // thresholds ascending
};

struct EvaluateOptions {
  int k = 1;
  // Descriptor-distance thresholds; empty means every distinct top-1
  // distance.
  std::vector<double> thresholds;
};

// Top-1 recall and the precision-recall sweep. At threshold t a query is a
// predicted match when its top-1 distance is <= t: TP if that entry is a
// positive, otherwise FP. Queries with positives that are not TP at t count
// as FN. Queries without any positive are excluded from the recall
// denominator. Average precision is the trapezoidal area under the curve
// starting from (recall 0, precision 1). Throws EvaluationError when no
// query has a positive.
RetrievalReport Evaluate(const DescriptorIndex& index, const std::vector<QueryItem>& queries,
                         const PositiveFn& is_positive, const EvaluateOptions& options = {});

void WritePrCurveCsv(const RetrievalReport& report, const std::filesystem::path& path);
std::string FormatSummary(const RetrievalReport& report);
void WritePrCurveSvg(const RetrievalReport& report, const std::filesystem::path& path);

}  // namespace unilgl
