#include "unilgl/features.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "unilgl/errors.h"
#include "unilgl/rng.h"

namespace unilgl {
namespace {

constexpr int kHistogramBins = 8;
constexpr int kStatsPerRingChannel = 1 + kHistogramBins + 3;  // occupancy, hist, mean, max, std
constexpr int kContextRings = 2;
constexpr double kUnitTolerance = 1e-3;
constexpr size_t kMaxPairPixels = 4000;

Eigen::MatrixXf GaussianMatrix(int rows, int cols, uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXf m(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  // Column-major fill order is part of the determinism contract.
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = static_cast<float>(rng.Normal() * scale);
  }
  return m;
}

void NormalizeColumns(Eigen::MatrixXf& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const float n = m.col(c).norm();
    if (n > 0.f) m.col(c) /= n;
  }
}

double PatchCenter(int index, int patch_size) { return index * patch_size + 0.5 * (patch_size - 1); }

}  // namespace

ReferenceBackend::ReferenceBackend(ReferenceBackendOptions options) : options_(options) {
  if (options_.dim <= 0) throw ConfigError("descriptor dimension must be positive");
  if (!(options_.context_radius > 0.0)) throw ConfigError("context radius must be positive");
  local_projection_ = GaussianMatrix(options_.dim, kRawPatchDim, MixSeed(options_.seed, 1));
  if (options_.global_distance_bins < 1 || options_.global_intensity_bins < 1) {
    throw ConfigError("global histogram bin counts must be positive");
  }
  if (!(options_.global_pair_range_px > 0.0)) throw ConfigError("global pair range must be positive");
  const int ib = options_.global_intensity_bins;
  const int raw_global = options_.global_distance_bins * ib * (ib + 1) / 2 + 1;
  global_projection_ = GaussianMatrix(options_.dim, raw_global, MixSeed(options_.seed, 2));
}

Eigen::MatrixXf ReferenceBackend::RawPatchStatistics(const BevPair& bev) const {
  const BevConfig& cfg = bev.config();
  const int C = cfg.patch_size;
  const int rows = cfg.height / C;
  const int cols = cfg.width / C;
  const double radius = options_.context_radius * C;
  const double inner = 0.5 * radius;
  const BevImage& occ = bev.occupancy();
  const BevImage* channels[2] = {&bev.spatial(), &bev.intensity()};

  Eigen::MatrixXf raw = Eigen::MatrixXf::Zero(kRawPatchDim, rows * cols);
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      const double cu = PatchCenter(pc, C);
      const double cv = PatchCenter(pr, C);
      double total[kContextRings] = {0, 0};
      double occupied[kContextRings] = {0, 0};
      double hist[kContextRings][2][kHistogramBins] = {};
      double sum[kContextRings][2] = {};
      double sumsq[kContextRings][2] = {};
      double maxv[kContextRings][2] = {};
      const int u0 = std::max(0, static_cast<int>(std::ceil(cu - radius)));
      const int u1 = std::min(cfg.width - 1, static_cast<int>(std::floor(cu + radius)));
      const int v0 = std::max(0, static_cast<int>(std::ceil(cv - radius)));
      const int v1 = std::min(cfg.height - 1, static_cast<int>(std::floor(cv + radius)));
      for (int v = v0; v <= v1; ++v) {
        for (int u = u0; u <= u1; ++u) {
          const double d = std::hypot(u - cu, v - cv);
          if (d > radius) continue;
          const int ring = d <= inner ? 0 : 1;
          total[ring] += 1.0;
          if (occ(v, u) <= 0.f) continue;
          occupied[ring] += 1.0;
          for (int ch = 0; ch < 2; ++ch) {
            const double x = (*channels[ch])(v, u);
            const int bin = std::min(kHistogramBins - 1, static_cast<int>(x * kHistogramBins));
            hist[ring][ch][std::max(0, bin)] += 1.0;
            sum[ring][ch] += x;
            sumsq[ring][ch] += x * x;
            maxv[ring][ch] = std::max(maxv[ring][ch], x);
          }
        }
      }
      auto col = raw.col(pr * cols + pc);
      for (int ring = 0; ring < kContextRings; ++ring) {
        for (int ch = 0; ch < 2; ++ch) {
          const int base = (ring * 2 + ch) * kStatsPerRingChannel;
          const double n = total[ring] > 0.0 ? total[ring] : 1.0;
          const double k = occupied[ring];
          col(base) = static_cast<float>(k / n);
          for (int b = 0; b < kHistogramBins; ++b) {
            col(base + 1 + b) = static_cast<float>(hist[ring][ch][b] / n);
          }
          if (k > 0.0) {
            const double mean = sum[ring][ch] / k;
            const double var = std::max(0.0, sumsq[ring][ch] / k - mean * mean);
            col(base + 1 + kHistogramBins) = static_cast<float>(mean);
            col(base + 2 + kHistogramBins) = static_cast<float>(maxv[ring][ch]);
            col(base + 3 + kHistogramBins) = static_cast<float>(std::sqrt(var));
          }
        }
      }
      col(kRawPatchDim - 1) = 1.f;
    }
  }
  return raw;
}

Features ReferenceBackend::Extract(const BevPair& bev, const std::string&) const {
  const BevConfig& cfg = bev.config();
  cfg.Validate();
  const int C = cfg.patch_size;
  const int rows = cfg.height / C;
  const int cols = cfg.width / C;
  const Eigen::MatrixXf raw = RawPatchStatistics(bev);

  Features out;
  out.local.rows = rows;
  out.local.cols = cols;
  out.local.patch_size = C;
  // Same statistics, two independent projections: one token field per channel.
  out.local.spatial = local_projection_ * raw;
  Eigen::MatrixXf raw_intensity = raw;
  for (int ring = 0; ring < kContextRings; ++ring) {
    // Swap channel blocks so the intensity token leads with intensity stats.
    const int s = (ring * 2) * kStatsPerRingChannel;
    const int i = (ring * 2 + 1) * kStatsPerRingChannel;
    raw_intensity.middleRows(s, kStatsPerRingChannel).swap(
        raw_intensity.middleRows(i, kStatsPerRingChannel));
  }
  out.local.intensity = local_projection_ * raw_intensity;
  NormalizeColumns(out.local.spatial);
  NormalizeColumns(out.local.intensity);

  out.global.values = global_projection_ * PairHistogram(bev);
  out.global.values.normalize();
  return out;
}

Eigen::VectorXf ReferenceBackend::PairHistogram(const BevPair& bev) const {
  const int bins = options_.global_distance_bins;
  const int ib = options_.global_intensity_bins;
  const double range = options_.global_pair_range_px;
  const int combos = ib * (ib + 1) / 2;
  // Evenly strided subset keeps the pair count bounded on dense images.
  const std::vector<Pixel>& occ = bev.occupied();
  const size_t stride = std::max<size_t>(1, (occ.size() + kMaxPairPixels - 1) / kMaxPairPixels);
  std::vector<Pixel> px;
  std::vector<int> level;
  for (size_t k = 0; k < occ.size(); k += stride) {
    px.push_back(occ[k]);
    const float x = bev.intensity()(occ[k].v, occ[k].u);
    level.push_back(std::clamp(static_cast<int>(x * ib), 0, ib - 1));
  }
  // Index of the unordered intensity-level pair (a <= b).
  auto combo = [ib](int a, int b) {
    if (a > b) std::swap(a, b);
    return a * ib - a * (a - 1) / 2 + (b - a);
  };
  std::vector<double> hist(static_cast<size_t>(bins * combos), 0.0);
  for (size_t a = 0; a < px.size(); ++a) {
    for (size_t b = a + 1; b < px.size(); ++b) {
      const double d = std::hypot(px[a].u - px[b].u, px[a].v - px[b].v);
      if (d >= range) continue;
      const int bin = std::min(bins - 1, static_cast<int>(d / range * bins));
      hist[static_cast<size_t>(combo(level[a], level[b]) * bins + bin)] += 1.0;
    }
  }
  Eigen::VectorXf raw = Eigen::VectorXf::Zero(bins * combos + 1);
  double norm2 = 0.0;
  for (const double h : hist) norm2 += h;  // |sqrt(h)|^2
  const double scale = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
  for (size_t k = 0; k < hist.size(); ++k) raw(static_cast<Eigen::Index>(k)) = static_cast<float>(std::sqrt(hist[k]) * scale);
  // Small constant so an empty image still projects to a valid direction.
  raw(raw.size() - 1) = 1e-3f;
  return raw;
}

Features Extract(const BevPair& bev, const FeatureBackend& backend, const std::string& cloud_id) {
  const BevConfig& cfg = bev.config();
  cfg.Validate();
  Features f = backend.Extract(bev, cloud_id);
  const LocalFeatureMap& m = f.local;
  if (m.patch_size != cfg.patch_size || m.rows * m.patch_size != cfg.height ||
      m.cols * m.patch_size != cfg.width) {
    throw ConfigError("feature map grid " + std::to_string(m.rows) + "x" + std::to_string(m.cols) +
                      " (patch " + std::to_string(m.patch_size) +
                      ") does not match the BEV configuration");
  }
  return f;
}

Eigen::VectorXf Interpolate(const LocalFeatureMap& map, BevChannel channel, double u, double v) {
  const int C = map.patch_size;
  const double umax = map.cols * C - 1;
  const double vmax = map.rows * C - 1;
  if (!(u >= 0.0 && u <= umax && v >= 0.0 && v <= vmax)) {
    throw RangeError("pixel (" + std::to_string(u) + ", " + std::to_string(v) +
                     ") is outside the feature map");
  }
  const double gx = std::clamp((u - 0.5 * (C - 1)) / C, 0.0, map.cols - 1.0);
  const double gy = std::clamp((v - 0.5 * (C - 1)) / C, 0.0, map.rows - 1.0);
  const int c0 = static_cast<int>(std::floor(gx));
  const int r0 = static_cast<int>(std::floor(gy));
  const int c1 = std::min(c0 + 1, map.cols - 1);
  const int r1 = std::min(r0 + 1, map.rows - 1);
  const float fx = static_cast<float>(gx - c0);
  const float fy = static_cast<float>(gy - r0);
  const Eigen::MatrixXf& t = map.tokens(channel);
  Eigen::VectorXf f = ((1.f - fx) * (1.f - fy)) * t.col(r0 * map.cols + c0) +
                      (fx * (1.f - fy)) * t.col(r0 * map.cols + c1) +
                      ((1.f - fx) * fy) * t.col(r1 * map.cols + c0) +
                      (fx * fy) * t.col(r1 * map.cols + c1);
  const float n = f.norm();
  if (n > 0.f) f /= n;
  return f;
}

Eigen::MatrixXf InterpolatePixels(const LocalFeatureMap& map, BevChannel channel,
                                  std::span<const Pixel> pixels) {
  Eigen::MatrixXf out(map.dim(), static_cast<Eigen::Index>(pixels.size()));
  for (size_t k = 0; k < pixels.size(); ++k) {
    out.col(static_cast<Eigen::Index>(k)) = Interpolate(map, channel, pixels[k].u, pixels[k].v);
  }
  return out;
}

void LossConfig::Validate() const {
  if (!(margin > 0.0)) throw ConfigError("triplet margin must be positive");
  if (!(alpha >= 0.0)) throw ConfigError("loss balance must be non-negative");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (negatives_per_query < 1) throw ConfigError("negatives per query must be at least 1");
}

double LazyTripletLossFromDistances(double positive_distance,
                                    std::span<const double> negative_distances, double margin) {
  if (negative_distances.empty()) throw ArgumentError("lazy triplet loss needs a negative");
  double worst = 0.0;
  for (const double dn : negative_distances) {
    worst = std::max(worst, margin + positive_distance - dn);
  }
  return worst;
}

double LazyTripletLoss(const GlobalDescriptor& query, const GlobalDescriptor& positive,
                       std::span<const GlobalDescriptor> negatives, const LossConfig& cfg) {
  if (negatives.empty()) throw ArgumentError("lazy triplet loss needs a negative");
  auto dist = [&](const GlobalDescriptor& other) {
    if (other.dim() != query.dim()) throw ArgumentError("descriptor dimensions differ");
    return (query.values.cast<double>() - other.values.cast<double>()).norm();
  };
  std::vector<double> dn;
  dn.reserve(negatives.size());
  for (const auto& n : negatives) dn.push_back(dist(n));
  return LazyTripletLossFromDistances(dist(positive), dn, cfg.margin);
}

double InfoNceLoss(std::span<const Eigen::VectorXf> feats_a, std::span<const size_t> positive_index,
                   std::span<const Eigen::VectorXf> feats_b, double temperature) {
  if (feats_a.empty()) throw ArgumentError("InfoNCE needs at least one anchor feature");
  if (feats_b.empty()) throw ArgumentError("InfoNCE needs at least one candidate feature");
  if (positive_index.size() != feats_a.size()) {
    throw ArgumentError("correspondence map must cover every anchor feature");
  }
  if (!(temperature > 0.0)) throw ArgumentError("temperature must be positive");
  auto check = [](const Eigen::VectorXf& f, const char* what) {
    const double n = f.cast<double>().norm();
    if (!(std::abs(n - 1.0) <= kUnitTolerance)) {
      throw ArgumentError(std::string(what) + " feature is not unit norm (norm " +
                          std::to_string(n) + ")");
    }
  };
  for (const auto& f : feats_a) check(f, "anchor");
  for (const auto& f : feats_b) check(f, "candidate");

  double total = 0.0;
  std::vector<double> logits(feats_b.size());
  for (size_t i = 0; i < feats_a.size(); ++i) {
    if (positive_index[i] >= feats_b.size()) throw ArgumentError("positive index out of range");
    const Eigen::VectorXd a = feats_a[i].cast<double>();
    double mx = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < feats_b.size(); ++k) {
      if (feats_b[k].size() != a.size()) throw ArgumentError("feature dimensions differ");
      logits[k] = a.dot(feats_b[k].cast<double>()) / temperature;
      mx = std::max(mx, logits[k]);
    }
    double denom = 0.0;
    for (const double l : logits) denom += std::exp(l - mx);
    total += (mx + std::log(denom)) - logits[positive_index[i]];
  }
  return total / static_cast<double>(feats_a.size());
}

double CombinedLoss(double lpr_loss, const std::array<double, 4>& local_losses,
                    const LossConfig& cfg) {
  double local = 0.0;
  for (const double l : local_losses) local += l;
  return lpr_loss + cfg.alpha * local;
}

std::vector<Pixel> SampleTrainingKeypoints(const BevPair& bev, uint64_t seed) {
  const BevConfig& cfg = bev.config();
  const int C = cfg.patch_size;
  std::vector<Pixel> out;
  std::vector<Pixel> candidates;
  for (int pr = 0; pr < cfg.height / C; ++pr) {
    for (int pc = 0; pc < cfg.width / C; ++pc) {
      candidates.clear();
      for (int v = pr * C; v < (pr + 1) * C; ++v) {
        for (int u = pc * C; u < (pc + 1) * C; ++u) {
          if (bev.Occupied({u, v})) candidates.push_back({u, v});
        }
      }
      if (candidates.empty()) continue;
      Rng rng(MixSeed(seed, static_cast<uint64_t>(pr * (cfg.width / C) + pc)));
      out.push_back(candidates[rng.Index(candidates.size())]);
    }
  }
  return out;
}

InfoNceBatch BuildInfoNceBatch(const BevPair& first, const PointCloud& first_cloud,
                               const LocalFeatureMap& first_map, const BevPair& second,
                               const PointCloud& second_cloud, const LocalFeatureMap& second_map,
                               const PoseSE3& first_to_second, BevChannel channel,
                               uint64_t seed) {
  (void)second_cloud;
  const std::vector<Pixel> kp1 = SampleTrainingKeypoints(first, seed);
  const std::vector<Pixel> kp2 = SampleTrainingKeypoints(second, MixSeed(seed, 0xb));
  InfoNceBatch batch;
  batch.candidates.reserve(kp2.size());
  for (const Pixel& p : kp2) batch.candidates.push_back(Interpolate(second_map, channel, p.u, p.v));
  const double max_px = second.config().patch_size;
  for (const Pixel& p : kp1) {
    const Eigen::Vector3d x1 = first_cloud.points[LiftKeypointIndex(first, first_cloud, p, channel)].xyz();
    const Eigen::Vector3d x2 = first_to_second * x1;
    const Pixel q = PixelOf(x2.x(), x2.y(), second.config());
    if (!second.InBounds(q)) continue;
    double best = std::numeric_limits<double>::infinity();
    size_t best_k = 0;
    for (size_t k = 0; k < kp2.size(); ++k) {
      const double d = std::hypot(kp2[k].u - q.u, kp2[k].v - q.v);
      if (d < best) {
        best = d;
        best_k = k;
      }
    }
    if (best > max_px) continue;
    batch.anchors.push_back(Interpolate(first_map, channel, p.u, p.v));
    batch.positive_index.push_back(best_k);
  }
  return batch;
}

// ---------------------------------------------------------------------------
// Embedding files

namespace {

constexpr char kEmbeddingMagic[8] = {'U', 'L', 'G', 'L', 'E', 'M', 'B', '1'};
constexpr uint32_t kEmbeddingVersion = 1;

static_assert(std::endian::native == std::endian::little, "embedding I/O assumes little endian");

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <typename T>
  T Get(const char* what) {
    T v;
    Bytes(&v, sizeof(T), what);
    return v;
  }
  void Bytes(void* dst, size_t n, const char* what) {
    if (data_.size() - pos_ < n) throw ParseError(std::string("embedding file truncated in ") + what);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  bool AtEnd() const { return pos_ == data_.size(); }

 private:
  std::string data_;
  size_t pos_ = 0;
};

template <typename T>
void Put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void PutFloats(std::string& out, const float* data, size_t n) {
  out.append(reinterpret_cast<const char*>(data), n * sizeof(float));
}

// Returns false when the vector cannot be brought to unit norm.
bool NormalizeOnLoad(Eigen::Ref<Eigen::VectorXf> v) {
  if (!v.allFinite()) return false;
  const double n = v.cast<double>().norm();
  if (!(std::abs(n - 1.0) <= kUnitTolerance)) return false;
  if (std::abs(n - 1.0) > 1e-6) v /= static_cast<float>(n);
  return true;
}

}  // namespace

void ExportEmbeddings(const EmbeddingSet& set, const std::filesystem::path& path) {
  std::string out;
  out.append(kEmbeddingMagic, sizeof(kEmbeddingMagic));
  Put(out, kEmbeddingVersion);
  Put(out, static_cast<uint32_t>(set.dim));
  Put(out, static_cast<uint32_t>(set.patch_size));
  Put(out, static_cast<uint32_t>(set.rows));
  Put(out, static_cast<uint32_t>(set.cols));
  Put(out, static_cast<uint64_t>(set.records.size()));
  const size_t m = static_cast<size_t>(set.rows) * set.cols;
  for (const auto& [id, f] : set.records) {
    if (f.global.dim() != set.dim || f.local.dim() != set.dim ||
        static_cast<size_t>(f.local.num_patches()) != m) {
      throw ArgumentError("record '" + id + "' does not match the embedding header");
    }
    Put(out, static_cast<uint32_t>(id.size()));
    out.append(id);
    PutFloats(out, f.global.values.data(), set.dim);
    PutFloats(out, f.local.spatial.data(), m * set.dim);
    PutFloats(out, f.local.intensity.data(), m * set.dim);
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot write " + path.string());
  file.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failed for " + path.string());
}

EmbeddingSet ImportEmbeddings(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << file.rdbuf();
  EmbeddingSet set;
  if (ss.str().empty()) return set;

  Reader in(ss.str());
  char magic[8];
  in.Bytes(magic, sizeof(magic), "header");
  if (std::memcmp(magic, kEmbeddingMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + ": not an embedding file");
  }
  const uint32_t version = in.Get<uint32_t>("header");
  if (version != kEmbeddingVersion) {
    throw ParseError(path.string() + ": unsupported embedding version " + std::to_string(version));
  }
  set.dim = static_cast<int>(in.Get<uint32_t>("header"));
  set.patch_size = static_cast<int>(in.Get<uint32_t>("header"));
  set.rows = static_cast<int>(in.Get<uint32_t>("header"));
  set.cols = static_cast<int>(in.Get<uint32_t>("header"));
  const uint64_t count = in.Get<uint64_t>("header");
  if (set.dim <= 0 || set.patch_size <= 0 || set.rows <= 0 || set.cols <= 0) {
    throw ParseError(path.string() + ": invalid embedding header");
  }
  if (set.dim != kDescriptorDim) {
    set.warnings.push_back("descriptor dimension " + std::to_string(set.dim) + " differs from " +
                           std::to_string(kDescriptorDim));
  }
  const int m = set.rows * set.cols;
  for (uint64_t r = 0; r < count; ++r) {
    const uint32_t len = in.Get<uint32_t>("record id");
    std::string id(len, '\0');
    in.Bytes(id.data(), len, "record id");
    Features f;
    f.global.values.resize(set.dim);
    f.local.rows = set.rows;
    f.local.cols = set.cols;
    f.local.patch_size = set.patch_size;
    f.local.spatial.resize(set.dim, m);
    f.local.intensity.resize(set.dim, m);
    in.Bytes(f.global.values.data(), set.dim * sizeof(float), "global descriptor");
    in.Bytes(f.local.spatial.data(), static_cast<size_t>(m) * set.dim * sizeof(float), "tokens");
    in.Bytes(f.local.intensity.data(), static_cast<size_t>(m) * set.dim * sizeof(float), "tokens");
    bool ok = NormalizeOnLoad(f.global.values);
    for (int k = 0; ok && k < m; ++k) {
      ok = NormalizeOnLoad(f.local.spatial.col(k)) && NormalizeOnLoad(f.local.intensity.col(k));
    }
    if (!ok) {
      throw ValidationError(path.string() + ": record '" + id +
                            "' holds a vector that cannot be unit-normalized");
    }
    if (!set.records.emplace(id, std::move(f)).second) {
      throw ParseError(path.string() + ": duplicate record id '" + id + "'");
    }
  }
  if (!in.AtEnd()) throw ParseError(path.string() + ": trailing bytes after last record");
  return set;
}

Features ImportedBackend::Extract(const BevPair& bev, const std::string& cloud_id) const {
  const auto it = set_->records.find(cloud_id);
  if (it == set_->records.end()) {
    throw ArgumentError("no imported embedding for cloud '" + cloud_id + "'");
  }
  (void)bev;
  return it->second;
}

}  // namespace unilgl
