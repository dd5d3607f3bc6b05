#include "unilgl/pose_graph.h"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include "unilgl/errors.h"

namespace unilgl {
namespace {

std::string Num(double v) {
  std::array<char, 64> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

int Find(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

// rho(s) and rho'(s) for a squared, weighted residual norm s.
double Rho(double s, const OptimizeOptions& o) {
  if (!o.huber) return s;
  const double d2 = o.huber_delta * o.huber_delta;
  return s <= d2 ? s : 2.0 * o.huber_delta * std::sqrt(s) - d2;
}

double RhoPrime(double s, const OptimizeOptions& o) {
  if (!o.huber) return 1.0;
  const double d2 = o.huber_delta * o.huber_delta;
  return s <= d2 ? 1.0 : o.huber_delta / std::sqrt(s);
}

}  // namespace

int PoseGraph::AddNode(const PoseSE3& pose) {
  nodes_.push_back(pose);
  return static_cast<int>(nodes_.size()) - 1;
}

void PoseGraph::AddOdometry(int i, int j, const PoseSE3& measurement, const lie::Vector6d& weight) {
  AddEdge({i, j, measurement, EdgeKind::kOdometry, weight});
}

void PoseGraph::AddLoop(int i, int j, const PoseSE3& measurement, const lie::Vector6d& weight) {
  AddEdge({i, j, measurement, EdgeKind::kLoop, weight});
}

void PoseGraph::AddEdge(const PoseGraphEdge& edge) {
  if (edge.i <= edge.j) {
    throw ValidationError("edge (" + std::to_string(edge.i) + ", " + std::to_string(edge.j) +
                          ") violates i > j");
  }
  edges_.push_back(edge);
}

void PoseGraph::Validate() const {
  const int n = static_cast<int>(nodes_.size());
  if (n == 0) throw ValidationError("pose graph has no nodes");
  if (gauge_ < 0 || gauge_ >= n) throw ValidationError("gauge node does not exist");
  for (size_t k = 0; k < nodes_.size(); ++k) {
    if (!nodes_[k].IsValid(1e-6)) throw ValidationError("node " + std::to_string(k) + " is not a rigid pose");
  }
  std::vector<int> parent(static_cast<size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  for (const auto& e : edges_) {
    if (e.i <= e.j) throw ValidationError("edge violates i > j");
    if (e.j < 0 || e.i >= n) {
      throw ValidationError("edge (" + std::to_string(e.i) + ", " + std::to_string(e.j) +
                            ") references a missing node");
    }
    if (!e.measurement.IsValid(1e-6)) throw ValidationError("edge measurement is not a rigid pose");
    if (!(e.weight.array() >= 0.0).all() || !e.weight.allFinite()) {
      throw ValidationError("edge weights must be finite and >= 0");
    }
    if (e.kind == EdgeKind::kOdometry) parent[Find(parent, e.i)] = Find(parent, e.j);
  }
  const int root = Find(parent, 0);
  for (int k = 1; k < n; ++k) {
    if (Find(parent, k) != root) {
      throw ConnectivityError("node " + std::to_string(k) + " is not connected by odometry edges");
    }
  }
}

lie::Vector6d Residual(const PoseGraphEdge& edge, const std::vector<PoseSE3>& nodes) {
  return lie::LogSE3(nodes[edge.i].Inverse() * nodes[edge.j] * edge.measurement);
}

void ResidualJacobians(const PoseGraphEdge& edge, const std::vector<PoseSE3>& nodes,
                       lie::Matrix6d* d_i, lie::Matrix6d* d_j) {
  const PoseSE3 e = nodes[edge.i].Inverse() * nodes[edge.j] * edge.measurement;
  const lie::Matrix6d jr_inv = lie::RightJacobianInverseSE3(lie::LogSE3(e));
  if (d_i) *d_i = -jr_inv * lie::Adjoint(e.Inverse());
  if (d_j) *d_j = jr_inv * lie::Adjoint(edge.measurement.Inverse());
}

void OptimizeOptions::Validate() const {
  if (max_iterations < 0) throw ConfigError("max_iterations must be >= 0");
  if (!(gradient_tolerance >= 0.0) || !(step_tolerance >= 0.0)) {
    throw ConfigError("tolerances must be >= 0");
  }
  if (!(initial_lambda > 0.0)) throw ConfigError("initial lambda must be positive");
  if (!(huber_delta > 0.0)) throw ConfigError("Huber delta must be positive");
}

double TotalCost(const PoseGraph& graph, const std::vector<PoseSE3>& nodes,
                 const OptimizeOptions& options) {
  double cost = 0.0;
  for (const auto& e : graph.edges()) {
    const lie::Vector6d r = Residual(e, nodes);
    cost += Rho(r.dot(e.weight.cwiseProduct(r)), options);
  }
  return cost;
}

OptimizeResult Optimize(const PoseGraph& graph, const OptimizeOptions& options) {
  options.Validate();
  graph.Validate();
  const int n = static_cast<int>(graph.nodes().size());
  // Column block of every free node; the gauge has none.
  std::vector<int> block(static_cast<size_t>(n), -1);
  int free_nodes = 0;
  for (int k = 0; k < n; ++k) {
    if (k != graph.gauge()) block[k] = free_nodes++;
  }
  const int dim = 6 * free_nodes;

  OptimizeResult result;
  result.nodes = graph.nodes();
  result.initial_cost = TotalCost(graph, result.nodes, options);
  double cost = result.initial_cost;
  double lambda = options.initial_lambda;
  if (dim == 0 || graph.edges().empty()) {
    result.final_cost = cost;
    result.converged = true;
    return result;
  }

  for (int it = 0; it < options.max_iterations; ++it) {
    result.iterations = it + 1;
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(graph.edges().size() * 4 * 36);
    for (const auto& e : graph.edges()) {
      const lie::Vector6d r = Residual(e, result.nodes);
      const double s = r.dot(e.weight.cwiseProduct(r));
      const lie::Vector6d w = RhoPrime(s, options) * e.weight;
      lie::Matrix6d ji, jj;
      ResidualJacobians(e, result.nodes, &ji, &jj);
      const std::array<std::pair<int, const lie::Matrix6d*>, 2> parts = {
          std::make_pair(block[e.i], &ji), std::make_pair(block[e.j], &jj)};
      for (const auto& [ba, ja] : parts) {
        if (ba < 0) continue;
        g.segment<6>(6 * ba) += ja->transpose() * w.cwiseProduct(r);
        for (const auto& [bb, jb] : parts) {
          if (bb < 0) continue;
          const lie::Matrix6d h = ja->transpose() * w.asDiagonal() * (*jb);
          for (int a = 0; a < 6; ++a) {
            for (int b = 0; b < 6; ++b) triplets.emplace_back(6 * ba + a, 6 * bb + b, h(a, b));
          }
        }
      }
    }
    if (g.lpNorm<Eigen::Infinity>() < options.gradient_tolerance) {
      result.converged = true;
      break;
    }
    Eigen::SparseMatrix<double> H(dim, dim);
    H.setFromTriplets(triplets.begin(), triplets.end());
    const Eigen::VectorXd diag = H.diagonal();

    bool accepted = false;
    bool tiny_step = false;
    for (int attempt = 0; attempt < 20 && !accepted; ++attempt) {
      Eigen::SparseMatrix<double> A = H;
      for (int k = 0; k < dim; ++k) A.coeffRef(k, k) += lambda * std::max(diag[k], 1e-9);
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(A);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd step = solver.solve(-g);
      if (step.norm() < options.step_tolerance) {
        tiny_step = true;
        break;
      }
      std::vector<PoseSE3> candidate = result.nodes;
      for (int k = 0; k < n; ++k) {
        if (block[k] < 0) continue;
        const lie::Vector6d d = step.segment<6>(6 * block[k]);
        const PoseSE3 updated = candidate[k] * lie::ExpSE3(d);
        candidate[k] = PoseSE3(lie::ProjectToSO3(updated.rotation()), updated.translation());
      }
      const double new_cost = TotalCost(graph, candidate, options);
      if (new_cost <= cost) {
        result.nodes = std::move(candidate);
        const double decrease = cost - new_cost;
        cost = new_cost;
        result.accepted_costs.push_back(cost);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (decrease <= 1e-15 * std::max(1.0, cost)) tiny_step = true;
      } else {
        lambda *= 10.0;
      }
    }
    if (tiny_step) {
      result.converged = true;
      break;
    }
    if (!accepted) break;
  }
  result.final_cost = cost;
  return result;
}

PoseGraph ParseG2o(const std::string& text, const std::string& source_name) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  std::vector<std::pair<int, PoseSE3>> vertices;
  struct RawEdge {
    int from, to;
    PoseSE3 m;
    lie::Vector6d w;
    int line;
  };
  std::vector<RawEdge> raw_edges;
  int fixed = -1;
  auto fail = [&](const std::string& what) {
    throw ParseError(source_name + ":" + std::to_string(line_no) + ": " + what);
  };
  auto read_pose = [&](std::istringstream& ls) {
    double x, y, z, qx, qy, qz, qw;
    if (!(ls >> x >> y >> z >> qx >> qy >> qz >> qw)) fail("expected x y z qx qy qz qw");
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!(std::abs(q.norm() - 1.0) < 1e-3)) fail("quaternion is not unit norm");
    q.normalize();
    return PoseSE3(q.toRotationMatrix(), Eigen::Vector3d(x, y, z));
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "VERTEX_SE3:QUAT") {
      int id;
      if (!(ls >> id)) fail("expected vertex id");
      vertices.emplace_back(id, read_pose(ls));
    } else if (tag == "EDGE_SE3:QUAT") {
      int from, to;
      if (!(ls >> from >> to)) fail("expected edge endpoints");
      const PoseSE3 m = read_pose(ls);
      Eigen::Matrix<double, 6, 6> info = Eigen::Matrix<double, 6, 6>::Zero();
      for (int a = 0; a < 6; ++a) {
        for (int b = a; b < 6; ++b) {
          if (!(ls >> info(a, b))) fail("expected 21 information entries");
        }
      }
      for (int a = 0; a < 6; ++a) {
        for (int b = a + 1; b < 6; ++b) {
          if (info(a, b) != 0.0) fail("only diagonal information matrices are supported");
        }
      }
      raw_edges.push_back({from, to, m, info.diagonal(), line_no});
    } else if (tag == "FIX") {
      if (!(ls >> fixed)) fail("expected node id after FIX");
    } else {
      fail("unknown record '" + tag + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing tokens");
  }
  PoseGraph graph;
  for (size_t k = 0; k < vertices.size(); ++k) {
    if (vertices[k].first != static_cast<int>(k)) {
      throw ParseError(source_name + ": vertex ids must be 0..N-1 in order");
    }
    graph.AddNode(vertices[k].second);
  }
  for (const auto& e : raw_edges) {
    line_no = e.line;
    if (e.from == e.to) fail("self edge");
    // Stored as T_from^-1 T_to; the graph wants i > j with dT ~= T_j^-1 T_i.
    PoseGraphEdge edge;
    if (e.to > e.from) {
      edge = {e.to, e.from, e.m, EdgeKind::kLoop, e.w};
    } else {
      edge = {e.from, e.to, e.m.Inverse(), EdgeKind::kLoop, e.w};
    }
    edge.kind = edge.i == edge.j + 1 ? EdgeKind::kOdometry : EdgeKind::kLoop;
    graph.AddEdge(edge);
  }
  graph.set_gauge(fixed >= 0 ? fixed : 0);
  return graph;
}

PoseGraph LoadG2o(const std::filesystem::path& path) {
  std::ifstream file(path);
  if (!file) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << file.rdbuf();
  return ParseG2o(ss.str(), path.string());
}

std::string FormatG2o(const PoseGraph& graph) {
  std::ostringstream out;
  auto pose = [&](const PoseSE3& p) {
    const Eigen::Quaterniond q(p.rotation());
    const Eigen::Vector3d& t = p.translation();
    out << Num(t.x()) << ' ' << Num(t.y()) << ' ' << Num(t.z()) << ' ' << Num(q.x()) << ' '
        << Num(q.y()) << ' ' << Num(q.z()) << ' ' << Num(q.w());
  };
  for (size_t k = 0; k < graph.nodes().size(); ++k) {
    out << "VERTEX_SE3:QUAT " << k << ' ';
    pose(graph.nodes()[k]);
    out << '\n';
  }
  for (const auto& e : graph.edges()) {
    out << "EDGE_SE3:QUAT " << e.j << ' ' << e.i << ' ';
    pose(e.measurement);
    for (int a = 0; a < 6; ++a) {
      for (int b = a; b < 6; ++b) out << ' ' << Num(a == b ? e.weight[a] : 0.0);
    }
    out << '\n';
  }
  out << "FIX " << graph.gauge() << '\n';
  return out.str();
}

void SaveG2o(const PoseGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << FormatG2o(graph);
  if (!out) throw IoError("write failed for " + path.string());
}

DatasetManifest TrajectoryManifest(const std::vector<PoseSE3>& nodes, const DatasetManifest* base) {
  DatasetManifest m;
  if (base) {
    if (base->size() != nodes.size()) {
      throw ArgumentError("trajectory has " + std::to_string(nodes.size()) + " nodes but the manifest has " +
                          std::to_string(base->size()) + " entries");
    }
    m = *base;
    for (size_t k = 0; k < nodes.size(); ++k) m.entries[k].pose = nodes[k];
    return m;
  }
  for (size_t k = 0; k < nodes.size(); ++k) {
    m.entries.push_back({"node_" + std::to_string(k), nodes[k], static_cast<double>(k)});
  }
  return m;
}

}  // namespace unilgl
