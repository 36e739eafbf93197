#include "msmap/factor_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/SparseCholesky>

namespace msmap {

Matrix6d FixedNoiseTable::covariance(FactorKind kind) const {
  double rot = 0.0;
  double trans = 0.0;
  switch (kind) {
    case FactorKind::prior:
      rot = prior_rot;
      trans = prior_trans;
      break;
    case FactorKind::odometry:
      rot = odom_rot;
      trans = odom_trans;
      break;
    case FactorKind::loop:
      rot = loop_rot;
      trans = loop_trans;
      break;
  }
  Vector6d d;
  d << rot, rot, rot, trans, trans, trans;
  return d.asDiagonal();
}

void PoseGraph::add_node(NodeId id, const Pose& pose) {
  if (!nodes_.emplace(id, pose).second)
    throw std::invalid_argument("pose graph: duplicate node");
}

const Pose& PoseGraph::node(NodeId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::invalid_argument("pose graph: unknown node");
  return it->second;
}

void PoseGraph::set_node(NodeId id, const Pose& pose) {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw std::invalid_argument("pose graph: unknown node");
  it->second = pose;
}

void PoseGraph::check_psd(const Matrix6d& cov) const {
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("pose graph: covariance not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-10)
    throw std::invalid_argument("pose graph: covariance not PSD");
}

void PoseGraph::add_prior(NodeId id, const Pose& pose, const Matrix6d& cov) {
  node(id);
  for (const auto& f : factors_)
    if (f.kind == FactorKind::prior && f.a == id)
      throw std::invalid_argument("pose graph: duplicate prior on node");
  check_psd(cov);
  factors_.push_back({FactorKind::prior, id, id, pose, symmetrized(cov)});
}

void PoseGraph::add_odometry(NodeId i, NodeId j, const Pose& measurement,
                             const Matrix6d& cov) {
  node(i);
  node(j);
  if (i == j) throw std::invalid_argument("pose graph: odometry needs i != j");
  check_psd(cov);
  factors_.push_back({FactorKind::odometry, i, j, measurement, symmetrized(cov)});
}

bool PoseGraph::add_loop(NodeId i, NodeId j,
                         const RegistrationResult& registration) {
  if (!registration.converged || registration.degenerate ||
      !registration.covariance_valid)
    return false;
  add_loop_between(i, j, registration.transform, registration.covariance);
  return true;
}

void PoseGraph::add_loop_between(NodeId i, NodeId j, const Pose& measurement,
                                 const Matrix6d& cov) {
  node(i);
  node(j);
  if (i == j) throw std::invalid_argument("pose graph: loop needs i != j");
  check_psd(cov);
  factors_.push_back({FactorKind::loop, i, j, measurement, symmetrized(cov)});
}

Matrix6d PoseGraph::effective_covariance(const Factor& factor) const {
  return mode == NoiseMode::fpgo ? fixed_noise.covariance(factor.kind)
                                 : factor.covariance;
}

Vector6d factor_residual(const PoseGraph& graph, const Factor& factor) {
  if (factor.kind == FactorKind::prior)
    return se3_log(compose(inverse(factor.measurement), graph.node(factor.a)));
  return se3_log(compose(inverse(factor.measurement),
                         between(graph.node(factor.a), graph.node(factor.b))));
}

namespace {

// First-order inverse right Jacobian of the log map: Jr^-1(e) ~ I + ad(e)/2.
Matrix6d inv_right_jacobian(const Vector6d& e) {
  return Matrix6d::Identity() + 0.5 * se3_ad(e);
}

struct FactorBlocks {
  Vector6d residual;
  Matrix6d information;
  Matrix6d jac_a;  // d e / d delta_a
  Matrix6d jac_b;  // d e / d delta_b (between factors only)
};

FactorBlocks linearize(const PoseGraph& graph, const Factor& factor) {
  FactorBlocks out;
  out.residual = factor_residual(graph, factor);
  const Matrix6d cov = graph.effective_covariance(factor);
  Eigen::LDLT<Matrix6d> ldlt(cov);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw IllPosedError("factor covariance is not invertible");
  out.information = symmetrized(ldlt.solve(Matrix6d::Identity()));

  const Matrix6d jr_inv = inv_right_jacobian(out.residual);
  if (factor.kind == FactorKind::prior) {
    out.jac_a = jr_inv;
  } else {
    out.jac_b = jr_inv;
    out.jac_a =
        -jr_inv * adjoint(inverse(between(graph.node(factor.a),
                                          graph.node(factor.b))));
  }
  return out;
}

std::map<NodeId, int> node_index(const PoseGraph& graph) {
  std::map<NodeId, int> index;
  int next = 0;
  for (const auto& [id, pose] : graph.nodes()) index.emplace(id, next++);
  return index;
}

// Every node must be connected (through factors) to at least one prior.
void check_gauge(const PoseGraph& graph, const std::map<NodeId, int>& index) {
  const int n = static_cast<int>(index.size());
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& f : graph.factors())
    if (f.kind != FactorKind::prior)
      parent[find(index.at(f.a))] = find(index.at(f.b));

  std::vector<char> anchored(n, 0);
  for (const auto& f : graph.factors())
    if (f.kind == FactorKind::prior) anchored[find(index.at(f.a))] = 1;
  for (const auto& [id, idx] : index)
    if (!anchored[find(idx)])
      throw IllPosedError(
          "gauge freedom: node component has no prior factor (6-dim null space)");
}

struct NormalEquations {
  Eigen::SparseMatrix<double> h;
  Eigen::VectorXd g;
  double cost = 0.0;
};

NormalEquations assemble(const PoseGraph& graph,
                         const std::map<NodeId, int>& index) {
  const int dim = 6 * static_cast<int>(index.size());
  NormalEquations eq;
  eq.g = Eigen::VectorXd::Zero(dim);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(graph.factors().size() * 144);

  const auto add_block = [&](int row, int col, const Matrix6d& m) {
    for (int r = 0; r < 6; ++r)
      for (int c = 0; c < 6; ++c)
        triplets.emplace_back(row + r, col + c, m(r, c));
  };

  for (const auto& factor : graph.factors()) {
    const FactorBlocks blocks = linearize(graph, factor);
    const int ia = 6 * index.at(factor.a);
    eq.cost += blocks.residual.dot(blocks.information * blocks.residual);

    const Matrix6d wa = blocks.jac_a.transpose() * blocks.information;
    add_block(ia, ia, wa * blocks.jac_a);
    eq.g.segment<6>(ia) += wa * blocks.residual;

    if (factor.kind != FactorKind::prior) {
      const int ib = 6 * index.at(factor.b);
      const Matrix6d wb = blocks.jac_b.transpose() * blocks.information;
      add_block(ib, ib, wb * blocks.jac_b);
      add_block(ia, ib, wa * blocks.jac_b);
      add_block(ib, ia, wb * blocks.jac_a);
      eq.g.segment<6>(ib) += wb * blocks.residual;
    }
  }
  eq.h.resize(dim, dim);
  eq.h.setFromTriplets(triplets.begin(), triplets.end());
  return eq;
}

void apply_step(PoseGraph& graph, const std::map<NodeId, int>& index,
                const Eigen::VectorXd& delta) {
  for (const auto& [id, idx] : index) {
    const Vector6d d = delta.segment<6>(6 * idx);
    graph.set_node(id, compose(graph.node(id), se3_exp(d)));
  }
}

// Condition estimate of a factorized SPD matrix: power iteration for the
// largest eigenvalue, inverse iteration (reusing the factorization) for the
// smallest. Deterministic start vector.
double condition_estimate(
    const Eigen::SparseMatrix<double>& h,
    const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>& solver) {
  const int n = static_cast<int>(h.rows());
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  for (int i = 0; i < n; ++i) v[i] += 0.01 * ((i * 2654435761u % 97) / 97.0);
  v.normalize();
  double lmax = 0.0;
  for (int it = 0; it < 40; ++it) {
    v = h * v;
    lmax = v.norm();
    if (lmax == 0.0) return std::numeric_limits<double>::infinity();
    v /= lmax;
  }
  Eigen::VectorXd w = v;
  double lmin_inv = 0.0;
  for (int it = 0; it < 40; ++it) {
    w = solver.solve(w);
    lmin_inv = w.norm();
    if (!std::isfinite(lmin_inv) || lmin_inv == 0.0)
      return std::numeric_limits<double>::infinity();
    w /= lmin_inv;
  }
  return lmax * lmin_inv;
}

}  // namespace

double graph_cost(const PoseGraph& graph) {
  double cost = 0.0;
  for (const auto& factor : graph.factors()) {
    const Vector6d e = factor_residual(graph, factor);
    const Matrix6d cov = graph.effective_covariance(factor);
    cost += e.dot(cov.ldlt().solve(e));
  }
  return cost;
}

OptReport optimize(PoseGraph& graph, const OptimizeConfig& config) {
  const auto index = node_index(graph);
  if (index.empty()) return {};
  check_gauge(graph, index);

  OptReport report;
  double lambda = config.lambda_init;
  const int dim = 6 * static_cast<int>(index.size());
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(dim);

  NormalEquations eq = assemble(graph, index);
  report.initial_cost = eq.cost;
  if (!std::isfinite(eq.cost)) throw IllPosedError("non-finite cost");
  double cost = eq.cost;

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  Eigen::SparseMatrix<double> identity(dim, dim);
  identity.setIdentity();

  int iter = 0;
  for (; iter < config.max_iter; ++iter) {
    if (cost == 0.0) {
      report.converged = true;
      break;
    }
    bool stepped = false;
    while (lambda <= config.lambda_max) {
      const Eigen::SparseMatrix<double> damped = eq.h + lambda * identity;
      solver.compute(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= config.lambda_up;
        continue;
      }
      const Eigen::VectorXd delta = solver.solve(-eq.g);
      if (!delta.allFinite()) {
        lambda *= config.lambda_up;
        continue;
      }

      PoseGraph trial = graph;
      apply_step(trial, index, delta);
      const double trial_cost = graph_cost(trial);
      if (!std::isfinite(trial_cost)) throw IllPosedError("non-finite cost");

      if (trial_cost <= cost) {
        graph = std::move(trial);
        lambda = std::max(lambda * config.lambda_down, 1e-12);
        stepped = true;
        const double decrease = cost - trial_cost;
        cost = trial_cost;
        report.cost_history.push_back(cost);
        if (decrease <= config.rel_tol * std::max(cost, 1.0))
          report.converged = true;
        break;
      }
      lambda *= config.lambda_up;
    }
    if (!stepped) {
      report.converged = true;  // no improving step exists at any damping
      break;
    }
    if (report.converged) {
      ++iter;
      break;
    }
    eq = assemble(graph, index);
    cost = eq.cost;
  }

  report.iterations = iter;
  report.final_cost = cost;

  eq = assemble(graph, index);
  solver.compute(eq.h);
  report.condition = solver.info() == Eigen::Success
                         ? condition_estimate(eq.h, solver)
                         : std::numeric_limits<double>::infinity();
  return report;
}

Eigen::MatrixXd information_matrix(const PoseGraph& graph) {
  const auto index = node_index(graph);
  const NormalEquations eq = assemble(graph, index);
  return Eigen::MatrixXd(eq.h);
}

std::map<NodeId, Matrix6d> marginals(const PoseGraph& graph) {
  const auto index = node_index(graph);
  if (index.empty()) return {};
  const NormalEquations eq = assemble(graph, index);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  solver.compute(eq.h);
  if (solver.info() != Eigen::Success)
    throw IllPosedError("marginals: singular information matrix (gauge freedom)");
  const double dmin = solver.vectorD().minCoeff();
  const double dmax = solver.vectorD().maxCoeff();
  if (!(dmin > 0.0) || dmin < 1e-14 * dmax)
    throw IllPosedError("marginals: singular information matrix (gauge freedom)");

  const int dim = 6 * static_cast<int>(index.size());
  std::map<NodeId, Matrix6d> out;
  Eigen::MatrixXd rhs(dim, 6);
  for (const auto& [id, idx] : index) {
    rhs.setZero();
    rhs.block<6, 6>(6 * idx, 0).setIdentity();
    const Eigen::MatrixXd cols = solver.solve(rhs);
    out.emplace(id, symmetrized(cols.block<6, 6>(6 * idx, 0)));
  }
  return out;
}

std::vector<EdgeError> edge_error_report(const PoseGraph& graph) {
  std::vector<EdgeError> out;
  out.reserve(graph.factors().size());
  for (std::size_t i = 0; i < graph.factors().size(); ++i) {
    const Factor& factor = graph.factors()[i];
    const Vector6d e = factor_residual(graph, factor);
    const Matrix6d cov = graph.effective_covariance(factor);
    out.push_back({i, factor.kind, e.norm(), std::sqrt(e.dot(cov.ldlt().solve(e)))});
  }
  return out;
}

}  // namespace msmap
