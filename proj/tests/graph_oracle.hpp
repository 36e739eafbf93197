#pragma once

#include <map>

#include <Eigen/Dense>

#include "msmap/factor_graph.hpp"
#include "msmap/rng.hpp"
#include "test_util.hpp"

// Independent dense Gauss-Newton reference for the pose-graph optimizer:
// numeric (central difference) Jacobians, dense normal equations, step
// halving. Shares only the residual definition with the implementation.

namespace msmap::testutil {

inline Eigen::Matrix<double, 6, 6> numeric_factor_jacobian(
    const PoseGraph& graph, const Factor& factor, NodeId which,
    double h = 1e-6) {
  PoseGraph probe = graph;
  Eigen::Matrix<double, 6, 6> jac;
  for (int d = 0; d < 6; ++d) {
    Vector6d dv = Vector6d::Zero();
    dv[d] = h;
    probe.set_node(which, compose(graph.node(which), se3_exp(dv)));
    const Vector6d plus = factor_residual(probe, factor);
    probe.set_node(which, compose(graph.node(which), se3_exp(-dv)));
    const Vector6d minus = factor_residual(probe, factor);
    probe.set_node(which, graph.node(which));
    jac.col(d) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

/// Dense Gauss-Newton with numeric Jacobians; mutates the graph estimates.
/// Returns the final cost.
inline double oracle_optimize(PoseGraph& graph, int max_iter = 100) {
  std::map<NodeId, int> index;
  int next = 0;
  for (const auto& [id, pose] : graph.nodes()) index.emplace(id, next++);
  const int dim = 6 * next;

  double cost = graph_cost(graph);
  for (int iter = 0; iter < max_iter && cost > 0.0; ++iter) {
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
    for (const auto& factor : graph.factors()) {
      const Vector6d e = factor_residual(graph, factor);
      const Matrix6d info =
          graph.effective_covariance(factor).ldlt().solve(Matrix6d::Identity());
      std::vector<NodeId> involved = {factor.a};
      if (factor.kind != FactorKind::prior) involved.push_back(factor.b);
      std::vector<Eigen::Matrix<double, 6, 6>> jacs;
      for (NodeId id : involved)
        jacs.push_back(numeric_factor_jacobian(graph, factor, id));
      for (std::size_t r = 0; r < involved.size(); ++r) {
        const int ir = 6 * index.at(involved[r]);
        g.segment<6>(ir) += jacs[r].transpose() * info * e;
        for (std::size_t c = 0; c < involved.size(); ++c) {
          const int ic = 6 * index.at(involved[c]);
          h.block<6, 6>(ir, ic) += jacs[r].transpose() * info * jacs[c];
        }
      }
    }

    const Eigen::VectorXd delta =
        (h + 1e-12 * Eigen::MatrixXd::Identity(dim, dim)).ldlt().solve(-g);

    double scale = 1.0;
    bool improved = false;
    for (int half = 0; half < 24 && !improved; ++half, scale *= 0.5) {
      PoseGraph trial = graph;
      for (const auto& [id, idx] : index)
        trial.set_node(id, compose(graph.node(id),
                                   se3_exp(scale * delta.segment<6>(6 * idx))));
      const double trial_cost = graph_cost(trial);
      if (trial_cost < cost) {
        graph = std::move(trial);
        improved = true;
        if (cost - trial_cost <= 1e-15 * std::max(cost, 1.0)) {
          cost = trial_cost;
          return cost;
        }
        cost = trial_cost;
      }
    }
    if (!improved) break;
  }
  return cost;
}

/// Random connected pose graph: a noisy odometry chain with extra loop
/// edges, a prior on the first node, and perturbed initial estimates.
inline PoseGraph random_graph(std::uint64_t seed, int num_nodes,
                              double noise_rot = 0.002,
                              double noise_trans = 0.005) {
  CounterRng rng(seed);
  PoseGraph graph;

  std::vector<Pose> truth;
  Pose cur = Pose::Identity();
  for (int i = 0; i < num_nodes; ++i) {
    truth.push_back(cur);
    const NodeId id{0, i};
    const Vector6d jitter =
        random_twist(rng, 1, i, noise_rot, noise_trans);
    graph.add_node(id, compose(cur, se3_exp(jitter)));
    cur = compose(cur, se3_exp(random_twist(rng, 2, i, 0.15, 0.5)));
  }

  const Matrix6d prior_cov = 1e-4 * Matrix6d::Identity();
  graph.add_prior({0, 0}, truth[0], prior_cov);

  for (int i = 0; i + 1 < num_nodes; ++i) {
    const Pose meas =
        compose(between(truth[i], truth[i + 1]),
                se3_exp(random_twist(rng, 3, i, noise_rot, noise_trans)));
    const Matrix6d cov = random_psd6(rng, 4, i, 1e-4) + 1e-5 * Matrix6d::Identity();
    graph.add_odometry({0, i}, {0, i + 1}, meas, cov);
  }
  // A couple of loop edges when the graph is big enough.
  for (int i = 0; i + 3 < num_nodes; i += 3) {
    const Pose meas =
        compose(between(truth[i], truth[i + 3]),
                se3_exp(random_twist(rng, 5, i, noise_rot, noise_trans)));
    const Matrix6d cov = random_psd6(rng, 6, i, 1e-4) + 1e-5 * Matrix6d::Identity();
    graph.add_loop_between({0, i}, {0, i + 3}, meas, cov);
  }
  return graph;
}

/// Four-node square with the loop-closing edge inconsistent with the
/// odometry chain by `mismatch` meters of translation.
inline PoseGraph square_loop_graph(double mismatch, const Matrix6d& odom_cov,
                                   const Matrix6d& loop_cov) {
  PoseGraph graph;
  const std::vector<Eigen::Vector3d> corners = {
      {0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}};
  for (int i = 0; i < 4; ++i)
    graph.add_node({0, i}, Pose(Eigen::Matrix3d::Identity(), corners[i]));

  graph.add_prior({0, 0}, Pose(Eigen::Matrix3d::Identity(), corners[0]),
                  1e-6 * Matrix6d::Identity());
  for (int i = 0; i < 3; ++i) {
    const Pose meas(Eigen::Matrix3d::Identity(),
                    corners[i + 1] - corners[i]);
    graph.add_odometry({0, i}, {0, i + 1}, meas, odom_cov);
  }
  // Closing edge 3 -> 0, shifted so the cycle cannot be satisfied exactly.
  Pose closing(Eigen::Matrix3d::Identity(),
               Eigen::Vector3d(mismatch, -1.0, 0.0));
  graph.add_loop_between({0, 3}, {0, 0}, closing, loop_cov);
  return graph;
}

}  // namespace msmap::testutil
