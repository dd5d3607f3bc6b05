#include "unilgl/pose_graph.h"

#include <chrono>
#include <cmath>

#include <gtest/gtest.h>

#include "scenarios.h"
#include "test_util.h"
#include "unilgl/errors.h"

namespace unilgl {
namespace {

using lie::Matrix6d;
using lie::Vector6d;
using testing::MakeDriftChain;
using testing::RandomPose;
using testing::RotationDistance;
using testing::TranslationDistance;

Vector6d RandomTangent(Rng& rng, double scale) {
  Vector6d xi;
  for (int k = 0; k < 6; ++k) xi[k] = rng.Uniform(-scale, scale);
  return xi;
}

// Graph whose measurements agree exactly with the node poses.
PoseGraph ConsistentGraph(uint64_t seed, int n) {
  Rng rng(seed);
  PoseGraph g;
  for (int k = 0; k < n; ++k) g.AddNode(RandomPose(rng, 10.0));
  for (int k = 1; k < n; ++k) g.AddOdometry(k, k - 1, g.nodes()[k - 1].Inverse() * g.nodes()[k]);
  for (int k = 3; k < n; k += 2) g.AddLoop(k, k - 3, g.nodes()[k - 3].Inverse() * g.nodes()[k]);
  return g;
}

TEST(Residual, ZeroWhenConsistent) {
  const PoseGraph g = ConsistentGraph(1, 12);
  for (const auto& e : g.edges()) EXPECT_LT(Residual(e, g.nodes()).norm(), 1e-12);
  EXPECT_LT(TotalCost(g, g.nodes()), 1e-20);
}

TEST(Residual, MatchesDefinition) {
  Rng rng(2);
  const std::vector<PoseSE3> nodes = {RandomPose(rng), RandomPose(rng)};
  const PoseGraphEdge e{1, 0, RandomPose(rng), EdgeKind::kOdometry, Vector6d::Ones()};
  const Vector6d r = Residual(e, nodes);
  // Exp(r) must reproduce T_1^-1 T_0 dT.
  const Eigen::Matrix4d want = nodes[1].Inverse().Matrix() * nodes[0].Matrix() * e.measurement.Matrix();
  EXPECT_LT((lie::ExpSE3(r).Matrix() - want).norm(), 1e-9);
}

// Analytic Jacobians against central differences of the residual under right
// perturbations, over random poses with non-trivial residuals.
TEST(ResidualJacobians, MatchFiniteDifferences) {
  Rng rng(3);
  const double h = 1e-6;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<PoseSE3> nodes = {RandomPose(rng, 3.0), RandomPose(rng, 3.0)};
    const PoseSE3 exact = nodes[0].Inverse() * nodes[1];
    const PoseGraphEdge e{1, 0, exact * lie::ExpSE3(RandomTangent(rng, 0.5)), EdgeKind::kOdometry,
                          Vector6d::Ones()};
    Matrix6d ji, jj;
    ResidualJacobians(e, nodes, &ji, &jj);
    for (int node = 0; node < 2; ++node) {
      const Matrix6d& analytic = node == 1 ? ji : jj;
      Matrix6d numeric;
      for (int c = 0; c < 6; ++c) {
        Vector6d d = Vector6d::Zero();
        d[c] = h;
        std::vector<PoseSE3> plus = nodes, minus = nodes;
        plus[node] = nodes[node] * lie::ExpSE3(d);
        minus[node] = nodes[node] * lie::ExpSE3(-d);
        numeric.col(c) = (Residual(e, plus) - Residual(e, minus)) / (2 * h);
      }
      EXPECT_LT((numeric - analytic).cwiseAbs().maxCoeff(), 1e-5) << "trial " << trial << " node " << node;
    }
  }
}

TEST(ResidualJacobians, AtZeroResidual) {
  const PoseGraph g = ConsistentGraph(4, 2);
  Matrix6d ji, jj;
  ResidualJacobians(g.edges()[0], g.nodes(), &ji, &jj);
  EXPECT_LT((ji + Matrix6d::Identity()).norm(), 1e-9);
  EXPECT_LT((jj - lie::Adjoint(g.edges()[0].measurement.Inverse())).norm(), 1e-9);
}

TEST(Optimize, ConsistentGraphUnchanged) {
  const PoseGraph g = ConsistentGraph(5, 15);
  const OptimizeResult r = Optimize(g);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.final_cost, 1e-20);
  for (size_t k = 0; k < g.nodes().size(); ++k) {
    EXPECT_LT(TranslationDistance(r.nodes[k], g.nodes()[k]), 1e-9);
    EXPECT_LT(RotationDistance(r.nodes[k], g.nodes()[k]), 1e-9);
  }
}

TEST(Optimize, LoopClosureRemovesDrift) {
  const auto chain = MakeDriftChain();
  const double before = TranslationDistance(chain.graph.nodes().back(), chain.truth.back());
  const auto t0 = std::chrono::steady_clock::now();
  const OptimizeResult r = Optimize(chain.graph);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double after = TranslationDistance(r.nodes.back(), chain.truth.back());
  EXPECT_GT(before, 0.05);
  EXPECT_LE(after, 0.2 * before) << before << " -> " << after;
  EXPECT_LT(r.final_cost, r.initial_cost);
  EXPECT_LT(seconds, 1.0);
  // The gauge node never moves.
  EXPECT_EQ(r.nodes[0].Matrix(), chain.graph.nodes()[0].Matrix());
}

// Straight chain along x: nine odometry steps of 1.01 m and a 9 m loop.
// Minimizing 9 (d - 1.01)^2 + (9 d - 9)^2 over a common step d gives
// d = 1.001, so node k lands at 1.001 k and the endpoint error falls from
// 0.09 m to 0.009 m.
TEST(Optimize, StraightDriftChainClosedForm) {
  const auto chain = MakeDriftChain(10, 0.01, 0.0);
  EXPECT_NEAR(TranslationDistance(chain.graph.nodes().back(), chain.truth.back()), 0.09, 1e-12);
  const OptimizeResult r = Optimize(chain.graph);
  EXPECT_TRUE(r.converged);
  for (int k = 0; k < 10; ++k) {
    EXPECT_LT((r.nodes[k].translation() - Eigen::Vector3d(1.001 * k, 0, 0)).norm(), 1e-9) << k;
    EXPECT_LT(RotationDistance(r.nodes[k], PoseSE3()), 1e-12) << k;
  }
  EXPECT_NEAR(TranslationDistance(r.nodes.back(), chain.truth.back()), 0.009, 1e-9);
}

TEST(Optimize, TwoNodeWeightedMeanClosedForm) {
  // Two parallel translation-only measurements with weights 1 and 3: the
  // least-squares estimate is their weighted mean.
  PoseGraph g;
  g.AddNode(PoseSE3());
  g.AddNode(PoseSE3(Eigen::Matrix3d::Identity(), {5, 5, 5}));
  g.AddOdometry(1, 0, PoseSE3(Eigen::Matrix3d::Identity(), {1, 0, 0}));
  g.AddOdometry(1, 0, PoseSE3(Eigen::Matrix3d::Identity(), {2, 0, 0}), Vector6d::Constant(3.0));
  const OptimizeResult r = Optimize(g);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.nodes[1].translation() - Eigen::Vector3d(1.75, 0, 0)).norm(), 1e-9);
  EXPECT_LT(RotationDistance(r.nodes[1], PoseSE3()), 1e-9);
  // Remaining cost: 1 * 0.75^2 + 3 * 0.25^2.
  EXPECT_NEAR(r.final_cost, 0.75, 1e-9);
}

TEST(Optimize, TwoNodeSingleEdgeIsComposition) {
  Rng rng(6);
  PoseGraph g;
  g.AddNode(RandomPose(rng));
  g.AddNode(RandomPose(rng));
  const PoseSE3 m = RandomPose(rng);
  g.AddOdometry(1, 0, m);
  const OptimizeResult r = Optimize(g);
  const PoseSE3 want = g.nodes()[0] * m;
  EXPECT_LT(TranslationDistance(r.nodes[1], want), 1e-8);
  EXPECT_LT(RotationDistance(r.nodes[1], want), 1e-8);
}

TEST(Optimize, GaugeNodeIsHonoured) {
  auto chain = MakeDriftChain();
  chain.graph.set_gauge(9);
  const OptimizeResult r = Optimize(chain.graph);
  EXPECT_EQ(r.nodes[9].Matrix(), chain.graph.nodes()[9].Matrix());
}

// Property: over noisy random graphs, accepted costs never increase.
TEST(Optimize, AcceptedCostsMonotone) {
  for (uint64_t seed = 10; seed < 20; ++seed) {
    Rng rng(seed);
    PoseGraph g = ConsistentGraph(seed, 20);
    PoseGraph noisy;
    for (const auto& n : g.nodes()) noisy.AddNode(n * lie::ExpSE3(RandomTangent(rng, 0.3)));
    for (auto e : g.edges()) {
      e.measurement = e.measurement * lie::ExpSE3(RandomTangent(rng, 0.05));
      noisy.AddEdge(e);
    }
    const OptimizeResult r = Optimize(noisy);
    ASSERT_FALSE(r.accepted_costs.empty());
    EXPECT_LE(r.accepted_costs.front(), r.initial_cost);
    for (size_t k = 1; k < r.accepted_costs.size(); ++k) {
      EXPECT_LE(r.accepted_costs[k], r.accepted_costs[k - 1]);
    }
    EXPECT_DOUBLE_EQ(r.final_cost, r.accepted_costs.back());
    EXPECT_NEAR(r.final_cost, TotalCost(noisy, r.nodes), 1e-12 * (1.0 + r.final_cost));
  }
}

TEST(Optimize, HuberCostAndRobustness) {
  OptimizeOptions huber;
  huber.huber = true;
  huber.huber_delta = 0.1;
  // One edge with a 1 m translation residual: rho(1) = 2 * 0.1 * 1 - 0.01.
  PoseGraph g;
  g.AddNode(PoseSE3());
  g.AddNode(PoseSE3());
  g.AddOdometry(1, 0, PoseSE3(Eigen::Matrix3d::Identity(), {1, 0, 0}));
  EXPECT_NEAR(TotalCost(g, g.nodes()), 1.0, 1e-12);
  EXPECT_NEAR(TotalCost(g, g.nodes(), huber), 0.19, 1e-12);

  // A wrong loop closure pulls the chain less under Huber than under L2.
  auto chain = MakeDriftChain(10, 0.0);
  chain.graph.AddLoop(6, 2, PoseSE3(Eigen::Matrix3d::Identity(), {0, 3, 0}) * chain.truth[2].Inverse() *
                               chain.truth[6]);
  huber.huber_delta = 0.05;
  auto error = [&](const OptimizeResult& r) {
    double worst = 0.0;
    for (size_t k = 0; k < r.nodes.size(); ++k) {
      worst = std::max(worst, TranslationDistance(r.nodes[k], chain.truth[k]));
    }
    return worst;
  };
  const double l2 = error(Optimize(chain.graph));
  const double robust = error(Optimize(chain.graph, huber));
  EXPECT_LT(robust, l2);
}

TEST(PoseGraphValidate, Errors) {
  PoseGraph g;
  g.AddNode(PoseSE3());
  g.AddNode(PoseSE3());
  g.AddNode(PoseSE3());
  g.AddOdometry(1, 0, PoseSE3());
  // Node 2 only reachable through a loop edge is still disconnected.
  g.AddLoop(2, 0, PoseSE3());
  EXPECT_THROW(g.Validate(), ConnectivityError);
  EXPECT_THROW(Optimize(g), ConnectivityError);
  g.AddOdometry(2, 1, PoseSE3());
  EXPECT_NO_THROW(g.Validate());
  g.set_gauge(7);
  EXPECT_THROW(g.Validate(), ValidationError);
  EXPECT_THROW(PoseGraph().Validate(), ValidationError);
  PoseGraph bad = ConsistentGraph(7, 3);
  EXPECT_THROW(bad.AddOdometry(0, 1, PoseSE3()), ValidationError);
  bad.AddOdometry(5, 1, PoseSE3());  // index range is checked by Validate
  EXPECT_THROW(bad.Validate(), ValidationError);
  OptimizeOptions o;
  o.initial_lambda = 0.0;
  EXPECT_THROW(Optimize(ConsistentGraph(8, 3), o), ConfigError);
}

TEST(G2o, RoundTrip) {
  testing::TempDir dir;
  auto chain = MakeDriftChain();
  Vector6d w;
  w << 1, 2, 3, 4, 5, 6;
  chain.graph.AddLoop(7, 3, chain.truth[3].Inverse() * chain.truth[7], w);
  chain.graph.set_gauge(2);
  SaveG2o(chain.graph, dir / "g.g2o");
  const PoseGraph back = LoadG2o(dir / "g.g2o");
  ASSERT_EQ(back.nodes().size(), chain.graph.nodes().size());
  ASSERT_EQ(back.edges().size(), chain.graph.edges().size());
  EXPECT_EQ(back.gauge(), 2);
  for (size_t k = 0; k < back.nodes().size(); ++k) {
    EXPECT_LT((back.nodes()[k].Matrix() - chain.graph.nodes()[k].Matrix()).norm(), 1e-12);
  }
  for (size_t k = 0; k < back.edges().size(); ++k) {
    const auto &a = back.edges()[k], &b = chain.graph.edges()[k];
    EXPECT_EQ(a.i, b.i);
    EXPECT_EQ(a.j, b.j);
    EXPECT_EQ(a.kind, b.kind);
    EXPECT_EQ(a.weight, b.weight);
    EXPECT_LT((a.measurement.Matrix() - b.measurement.Matrix()).norm(), 1e-12);
  }
  // Numbers are written shortest-round-trip, so reformatting the same graph
  // object is byte-identical.
  EXPECT_EQ(FormatG2o(back), FormatG2o(back));
  EXPECT_EQ(FormatG2o(chain.graph), FormatG2o(chain.graph));
}

TEST(G2o, EdgeDirectionAndKinds) {
  // EDGE 0 -> 1 stores T_0^-1 T_1; the reversed edge 1 -> 0 stores its inverse.
  const std::string info = " 1 0 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1\n";
  const std::string text = "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\n"
                           "VERTEX_SE3:QUAT 1 1 0 0 0 0 0 1\n"
                           "VERTEX_SE3:QUAT 2 2 0 0 0 0 0 1\n"
                           "EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1" + info +
                           "EDGE_SE3:QUAT 2 1 -1 0 0 0 0 0 1" + info +
                           "EDGE_SE3:QUAT 0 2 2 0 0 0 0 0 1" + info;
  const PoseGraph g = ParseG2o(text);
  ASSERT_EQ(g.edges().size(), 3u);
  EXPECT_EQ(g.edges()[0].kind, EdgeKind::kOdometry);
  EXPECT_EQ(g.edges()[1].kind, EdgeKind::kOdometry);
  EXPECT_EQ(g.edges()[2].kind, EdgeKind::kLoop);
  EXPECT_EQ(g.edges()[1].i, 2);
  EXPECT_EQ(g.edges()[1].j, 1);
  for (const auto& e : g.edges()) EXPECT_LT(Residual(e, g.nodes()).norm(), 1e-12);
  EXPECT_EQ(g.gauge(), 0);
}

TEST(G2o, ParseErrors) {
  const std::string v = "VERTEX_SE3:QUAT 0 0 0 0 0 0 0 1\nVERTEX_SE3:QUAT 1 1 0 0 0 0 0 1\n";
  EXPECT_THROW(ParseG2o("VERTEX_SE3:QUAT 0 0 0 0 0 0 0\n"), ParseError);
  EXPECT_THROW(ParseG2o("VERTEX_SE3:QUAT 0 0 0 0 0 0 0 2\n"), ParseError);
  EXPECT_THROW(ParseG2o("VERTEX_SE3:QUAT 1 0 0 0 0 0 0 1\n"), ParseError);
  EXPECT_THROW(ParseG2o("EDGE_SE2 0 1\n"), ParseError);
  EXPECT_THROW(ParseG2o(v + "EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 1 2 0 0 0 0 1 0 0 0 0 1 0 0 0 1 0 0 1 0 1\n"),
               ParseError);
  EXPECT_THROW(ParseG2o(v + "EDGE_SE3:QUAT 0 1 1 0 0 0 0 0 1 1 0 0\n"), ParseError);
  EXPECT_THROW(LoadG2o("/nonexistent/graph.g2o"), IoError);
  try {
    ParseG2o(v + "BOGUS\n", "x.g2o");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("x.g2o:3"), std::string::npos) << e.what();
  }
}

TEST(TrajectoryManifest, WithAndWithoutBase) {
  const auto chain = MakeDriftChain(3);
  const DatasetManifest plain = TrajectoryManifest(chain.truth);
  ASSERT_EQ(plain.size(), 3u);
  EXPECT_EQ(plain.entries[2].path, "node_2");
  EXPECT_EQ(plain.entries[2].timestamp, 2.0);
  EXPECT_EQ(plain.entries[1].pose.Matrix(), chain.truth[1].Matrix());

  DatasetManifest base;
  base.base_dir = "/data";
  for (int k = 0; k < 3; ++k) base.entries.push_back({"scan" + std::to_string(k) + ".bin", PoseSE3(), 10.0 + k});
  const DatasetManifest m = TrajectoryManifest(chain.truth, &base);
  EXPECT_EQ(m.base_dir, base.base_dir);
  EXPECT_EQ(m.entries[1].path, "scan1.bin");
  EXPECT_EQ(m.entries[1].timestamp, 11.0);
  EXPECT_EQ(m.entries[2].pose.Matrix(), chain.truth[2].Matrix());
  base.entries.pop_back();
  EXPECT_THROW(TrajectoryManifest(chain.truth, &base), ArgumentError);
}

}  // namespace
}  // namespace unilgl
