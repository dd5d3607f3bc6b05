// End-to-end tests of the unilgl executable on a small synthetic benchmark.

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "scenarios.h"
#include "test_util.h"
#include "unilgl/cloud_io.h"
#include "unilgl/covis.h"
#include "unilgl/pose_graph.h"

namespace unilgl {
namespace {

namespace fs = std::filesystem;

const char* kSmallWorld =
    "synth.db_count = 5\n"
    "synth.query_count = 4\n"
    "synth.extent = 60\n"
    "synth.boxes = 125\n"
    "synth.cylinders = 175\n";

std::string ReadAll(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string Quote(const fs::path& p) { return "'" + p.string() + "'"; }

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir();
    std::ofstream(*dir_ / "small.cfg") << kSmallWorld;
    const RunResult r = Run("--config " + Quote(*dir_ / "small.cfg") + " synth --out " + Quote(*dir_ / "bench"));
    ASSERT_EQ(r.status, 0) << r.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }

  static RunResult Run(const std::string& args) {
    static int counter = 0;
    const fs::path out = dir_->path() / ("stdout_" + std::to_string(counter));
    const fs::path err = dir_->path() / ("stderr_" + std::to_string(counter++));
    const std::string cmd = std::string("'") + UNILGL_CLI_PATH + "' " + args + " >" + Quote(out) + " 2>" + Quote(err);
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = ReadAll(out);
    r.err = ReadAll(err);
    return r;
  }

  static fs::path Path(const std::string& name) { return dir_->path() / name; }
  static std::string Q(const std::string& name) { return Quote(Path(name)); }
  static std::string Config() { return "--config " + Q("small.cfg") + " "; }

  static testing::TempDir* dir_;
};

testing::TempDir* Cli::dir_ = nullptr;

// Runs `args_for(suffix)` twice with different output suffixes and returns
// both results; outputs are compared by the caller.
template <typename F>
std::pair<RunResult, RunResult> Twice(F args_for) {
  return {args_for("a"), args_for("b")};
}

TEST_F(Cli, SynthWritesBenchmarkDeterministically) {
  const RunResult again = Run(Config() + "synth --out " + Q("bench2"));
  ASSERT_EQ(again.status, 0) << again.err;
  EXPECT_NE(again.out.find("database_scans: 5"), std::string::npos) << again.out;
  for (const std::string f : {"db.manifest", "query.manifest", "db/000.bin", "db/004.bin", "query/003.bin"}) {
    EXPECT_EQ(ReadAll(Path("bench") / f), ReadAll(Path("bench2") / f)) << f;
    EXPECT_FALSE(ReadAll(Path("bench") / f).empty()) << f;
  }
  const DatasetManifest q = LoadManifest(Path("bench") / "query.manifest");
  EXPECT_EQ(q.size(), 4u);
}

TEST_F(Cli, EncodeWritesImagesAndTable) {
  const auto [a, b] = Twice([&](const std::string& s) { return Run("encode --manifest " + Q("bench/db.manifest") + " --out " + Q("enc_" + s)); });
  ASSERT_EQ(a.status, 0) << a.err;
  ASSERT_EQ(b.status, 0) << b.err;
  EXPECT_EQ(ReadAll(Path("enc_a/encode.csv")), ReadAll(Path("enc_b/encode.csv")));
  EXPECT_EQ(ReadAll(Path("enc_a/002_intensity.pgm")), ReadAll(Path("enc_b/002_intensity.pgm")));
  const std::string pgm = ReadAll(Path("enc_a/000_spatial.pgm"));
  EXPECT_EQ(pgm.substr(0, 15), "P5\n200 200\n255\n");
  EXPECT_EQ(pgm.size(), 15u + 200u * 200u);
}

TEST_F(Cli, RetrievalPipeline) {
  ASSERT_EQ(Run(Config() + "index --manifest " + Q("bench/db.manifest") + " --out " + Q("db.index")).status, 0);
  const auto [la, lb] = Twice([&](const std::string& s) {
    return Run("label --manifest " + Q("bench/query.manifest") + " --database " + Q("bench/db.manifest") +
               " --out " + Q("cross_" + s + ".csv"));
  });
  ASSERT_EQ(la.status, 0) << la.err;
  EXPECT_EQ(ReadAll(Path("cross_a.csv")), ReadAll(Path("cross_b.csv")));
  EXPECT_EQ(ReadLabelsCsv(Path("cross_a.csv")).size(), 20u);

  const auto [qa, qb] = Twice([&](const std::string& s) {
    return Run("query --index " + Q("db.index") + " --manifest " + Q("bench/query.manifest") + " -k 3 --out " +
               Q("knn_" + s + ".csv"));
  });
  ASSERT_EQ(qa.status, 0) << qa.err;
  const std::string knn = ReadAll(Path("knn_a.csv"));
  EXPECT_EQ(knn, ReadAll(Path("knn_b.csv")));
  EXPECT_EQ(std::count(knn.begin(), knn.end(), '\n'), 1 + 4 * 3);

  const auto [ea, eb] = Twice([&](const std::string& s) {
    return Run("evaluate --index " + Q("db.index") + " --queries " + Q("bench/query.manifest") + " --labels " +
               Q("cross_a.csv") + " --svg --out-dir " + Q("eval_" + s));
  });
  ASSERT_EQ(ea.status, 0) << ea.err;
  for (const std::string f : {"pr_curve.csv", "retrieval.csv", "summary.txt", "pr_curve.svg"}) {
    EXPECT_EQ(ReadAll(Path("eval_a") / f), ReadAll(Path("eval_b") / f)) << f;
  }
  EXPECT_NE(ea.out.find("recall_at_1"), std::string::npos) << ea.out;
}

TEST_F(Cli, ExtractAndLoss) {
  const auto [xa, xb] = Twice([&](const std::string& s) {
    return Run("extract --manifest " + Q("bench/db.manifest") + " --out " + Q("emb_" + s + ".bin"));
  });
  ASSERT_EQ(xa.status, 0) << xa.err;
  EXPECT_EQ(ReadAll(Path("emb_a.bin")), ReadAll(Path("emb_b.bin")));
  ASSERT_EQ(Run("label --manifest " + Q("bench/db.manifest") + " --out " + Q("db_labels.csv")).status, 0);
  const auto [a, b] = Twice([&](const std::string& s) {
    return Run("loss --embeddings " + Q("emb_a.bin") + " --manifest " + Q("bench/db.manifest") + " --labels " +
               Q("db_labels.csv") + " --out " + Q("loss_" + s + ".csv"));
  });
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(ReadAll(Path("loss_a.csv")), ReadAll(Path("loss_b.csv")));
  EXPECT_EQ(ReadAll(Path("loss_a.csv")).rfind("query,positive,negatives,lazy_triplet\n", 0), 0u);

  // The imported backend reproduces the reference index from the exported file.
  ASSERT_EQ(Run("index --manifest " + Q("bench/db.manifest") + " --out " + Q("ref.index")).status, 0);
  ASSERT_EQ(Run("--set backend.kind=imported --set backend.embeddings=" + Q("emb_a.bin") + " index --manifest " +
                Q("bench/db.manifest") + " --out " + Q("imp.index"))
                .status,
            0);
  EXPECT_EQ(ReadAll(Path("ref.index")), ReadAll(Path("imp.index")));
}

TEST_F(Cli, LocalizeDeterministicWithSummary) {
  const auto [a, b] = Twice([&](const std::string& s) {
    return Run(Config() + "--workers 2 localize --database " + Q("bench/db.manifest") + " --queries " +
               Q("bench/query.manifest") + " --out " + Q("loc_" + s + ".csv") + " --summary " +
               Q("loc_" + s + ".txt"));
  });
  ASSERT_LE(a.status, 1) << a.err;
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(ReadAll(Path("loc_a.csv")), ReadAll(Path("loc_b.csv")));
  EXPECT_EQ(ReadAll(Path("loc_a.txt")), ReadAll(Path("loc_b.txt")));
  EXPECT_NE(ReadAll(Path("loc_a.txt")).find("queries: 4\n"), std::string::npos);
}

TEST_F(Cli, MissingQueryScanIsAPerItemError) {
  DatasetManifest q = LoadManifest(Path("bench") / "query.manifest");
  q.entries[1].path = "query/does_not_exist.bin";
  SaveManifest(q, Path("bench") / "broken.manifest");
  const RunResult r = Run("localize --database " + Q("bench/db.manifest") + " --queries " +
                          Q("bench/broken.manifest") + " --out " + Q("broken.csv"));
  EXPECT_EQ(r.status, 1) << r.err;
  EXPECT_NE(r.err.find("query 1"), std::string::npos) << r.err;
  std::istringstream csv(ReadAll(Path("broken.csv")));
  std::string line;
  std::getline(csv, line);
  std::vector<std::string> rows;
  while (std::getline(csv, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[1].rfind("1,error,", 0), 0u) << rows[1];
  for (const int k : {0, 2, 3}) EXPECT_EQ(rows[k].find(",error,"), std::string::npos) << rows[k];

  const RunResult enc = Run("encode --manifest " + Q("bench/broken.manifest") + " --out " + Q("enc_broken"));
  EXPECT_EQ(enc.status, 1);
  EXPECT_NE(ReadAll(Path("enc_broken/encode.csv")).find("1,query/does_not_exist.bin,error"), std::string::npos);
}

TEST_F(Cli, GraphOptimize) {
  auto chain = testing::MakeDriftChain();
  SaveG2o(chain.graph, Path("drift.g2o"));
  const auto [a, b] = Twice([&](const std::string& s) {
    return Run("graph-optimize --graph " + Q("drift.g2o") + " --out " + Q("opt_" + s + ".g2o") + " --trajectory " +
               Q("traj_" + s + ".manifest"));
  });
  ASSERT_EQ(a.status, 0) << a.err;
  EXPECT_EQ(ReadAll(Path("opt_a.g2o")), ReadAll(Path("opt_b.g2o")));
  EXPECT_EQ(ReadAll(Path("traj_a.manifest")), ReadAll(Path("traj_b.manifest")));
  EXPECT_EQ(a.out, b.out);
  const PoseGraph opt = LoadG2o(Path("opt_a.g2o"));
  const double before = testing::TranslationDistance(chain.graph.nodes().back(), chain.truth.back());
  const double after = testing::TranslationDistance(opt.nodes().back(), chain.truth.back());
  EXPECT_LE(after, 0.2 * before);
  const DatasetManifest traj = ParseManifest(ReadAll(Path("traj_a.manifest")), dir_->path());
  ASSERT_EQ(traj.size(), 10u);
  EXPECT_EQ(traj.entries[9].path, "node_9");
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(Run("").status, 2);
  EXPECT_EQ(Run("--help").status, 0);
  EXPECT_EQ(Run("frobnicate").status, 2);
  EXPECT_EQ(Run("index --out x").status, 2);  // missing --manifest
  EXPECT_EQ(Run("--config " + Q("no_such.cfg") + " synth --out " + Q("x")).status, 2);
  const RunResult bad_key = Run("--set gnc.xii=1 index --manifest " + Q("bench/db.manifest") + " --out " + Q("x"));
  EXPECT_EQ(bad_key.status, 2);
  EXPECT_NE(bad_key.err.find("gnc.xii"), std::string::npos) << bad_key.err;
  EXPECT_EQ(Run("--set gnc.xi=-1 index --manifest " + Q("bench/db.manifest") + " --out " + Q("x")).status, 2);
  EXPECT_EQ(Run("index --manifest " + Q("missing.manifest") + " --out " + Q("x")).status, 3);
  EXPECT_EQ(Run("graph-optimize --graph " + Q("small.cfg") + " --out " + Q("x.g2o")).status, 3);

  const RunResult printed = Run("--print-config --set loss.margin=0.3 graph-optimize --graph " + Q("missing.g2o") +
                                " --out " + Q("x.g2o"));
  EXPECT_NE(printed.out.find("loss.margin = 0.3\n"), std::string::npos);
  EXPECT_EQ(printed.status, 3);
}

TEST_F(Cli, EvaluateRejectsForeignLabels) {
  // Labels over database indices that the index does not hold.
  LabelMap labels;
  labels[{0, 42}] = {0.5, PairLabel::kPositive};
  WriteLabelsCsv(labels, LabelMode::kIou, Path("foreign.csv"));
  ASSERT_EQ(Run("index --manifest " + Q("bench/db.manifest") + " --out " + Q("e.index")).status, 0);
  EXPECT_EQ(Run("evaluate --index " + Q("e.index") + " --queries " + Q("bench/query.manifest") + " --labels " +
                Q("foreign.csv") + " --out-dir " + Q("eval_foreign"))
                .status,
            2);
}

}  // namespace
}  // namespace unilgl
