#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "unilgl/cloud_io.h"
#include "unilgl/lie.h"
#include "unilgl/types.h"

// SE(3) pose graph over a trajectory with odometry and loop-closure edges.
//
// An edge (i, j, dT) with i > j states that dT maps frame-i coordinates into
// frame-j coordinates, i.e. dT ~= T_j^-1 T_i. Its residual is
// r = Log(T_i^-1 T_j dT), zero when the nodes agree with the measurement.
// Tangent vectors follow lie.h: [translation; rotation].
//
// g2o text format (read and written):
//   VERTEX_SE3:QUAT <id> x y z qx qy qz qw
//   EDGE_SE3:QUAT <from> <to> x y z qx qy qz qw <21 upper-triangular info>
//   FIX <id>
// An edge's measurement is T_from^-1 T_to, so EDGE from=j to=i carries dT.
// The information matrix must be diagonal; its diagonal is the edge weight.
// Edges with to == from + 1 are odometry, all others loop closures.
namespace unilgl {

enum class EdgeKind { kOdometry, kLoop };

struct PoseGraphEdge {
  int i = 0;
  int j = 0;
  PoseSE3 measurement;
  EdgeKind kind = EdgeKind::kOdometry;
  lie::Vector6d weight = lie::Vector6d::Ones();  // diagonal information
};

class PoseGraph {
 public:
  int AddNode(const PoseSE3& pose);
  // Both require i > j; weights default to one.
  void AddOdometry(int i, int j, const PoseSE3& measurement,
                   const lie::Vector6d& weight = lie::Vector6d::Ones());
  void AddLoop(int i, int j, const PoseSE3& measurement,
               const lie::Vector6d& weight = lie::Vector6d::Ones());
  void AddEdge(const PoseGraphEdge& edge);

  std::vector<PoseSE3>& nodes() { return nodes_; }
  const std::vector<PoseSE3>& nodes() const { return nodes_; }
  const std::vector<PoseGraphEdge>& edges() const { return edges_; }
  int gauge() const { return gauge_; }
  void set_gauge(int node) { gauge_ = node; }

  // Index ranges, i > j, valid poses and weights, gauge node present, and
  // connectivity through odometry edges (ConnectivityError).
  void Validate() const;

 private:
  std::vector<PoseSE3> nodes_;
  std::vector<PoseGraphEdge> edges_;
  int gauge_ = 0;
};

lie::Vector6d Residual(const PoseGraphEdge& edge, const std::vector<PoseSE3>& nodes);

// Jacobians of Residual under right perturbations T <- T Exp(delta) of node i
// and node j.
void ResidualJacobians(const PoseGraphEdge& edge, const std::vector<PoseSE3>& nodes,
                       lie::Matrix6d* d_i, lie::Matrix6d* d_j);

struct OptimizeOptions {
  int max_iterations = 100;
  double gradient_tolerance = 1e-10;  // max-norm of the gradient
  double step_tolerance = 1e-12;      // norm of the update
  double initial_lambda = 1e-4;
  bool huber = false;
  double huber_delta = 1.0;

  void Validate() const;
};

struct OptimizeResult {
  std::vector<PoseSE3> nodes;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_costs;  // cost after every accepted step
};

// sum_e rho(r_e^T W_e r_e) with rho the identity, or Huber when enabled.
double TotalCost(const PoseGraph& graph, const std::vector<PoseSE3>& nodes,
                 const OptimizeOptions& options = {});

// Levenberg-Marquardt on the product manifold with the gauge node fixed.
// Accepted steps never increase the cost.
OptimizeResult Optimize(const PoseGraph& graph, const OptimizeOptions& options = {});

PoseGraph LoadG2o(const std::filesystem::path& path);
PoseGraph ParseG2o(const std::string& text, const std::string& source_name = "<g2o>");
std::string FormatG2o(const PoseGraph& graph);
void SaveG2o(const PoseGraph& graph, const std::filesystem::path& path);

// Trajectory as a manifest. With `base`, entries keep their paths and
// timestamps and receive the new poses; otherwise paths are "node_<k>" and
// timestamps the node index.
DatasetManifest TrajectoryManifest(const std::vector<PoseSE3>& nodes,
                                   const DatasetManifest* base = nullptr);

}  // namespace unilgl
