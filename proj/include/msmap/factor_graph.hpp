#pragma once

#include <map>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "msmap/registration.hpp"
#include "msmap/se3.hpp"

// Pose graph over SE(3) with prior, odometry and loop factors, optimized by
// Levenberg-Marquardt on the product manifold (right-perturbation retraction
// pose <- pose * exp(delta)). Residuals are e = log(z^-1 h(x)); UPGO weighs
// each factor by the inverse of its own covariance, FPGO by a fixed diagonal
// noise table.

namespace msmap {

struct NodeId {
  int session = 0;
  int frame = 0;

  friend auto operator<=>(const NodeId&, const NodeId&) = default;
};

enum class FactorKind { prior, odometry, loop };

struct Factor {
  FactorKind kind = FactorKind::odometry;
  NodeId a;
  NodeId b;          // equal to a for priors
  Pose measurement;  // absolute pose for priors, relative a->b otherwise
  Matrix6d covariance = Matrix6d::Identity();
};

enum class NoiseMode { upgo, fpgo };

/// Fixed diagonal noise per factor kind, interpreted as variances in the
/// [rot | trans] tangent ordering.
struct FixedNoiseTable {
  double prior_rot = 1e-2;
  double prior_trans = 1e0;
  double odom_rot = 1e-8;
  double odom_trans = 1e-6;
  double loop_rot = 1e-1;
  double loop_trans = 1e-1;

  Matrix6d covariance(FactorKind kind) const;
};

/// Raised when the optimization problem is ill-posed (missing prior, singular
/// information); the CLI maps it to exit code 3.
struct IllPosedError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class PoseGraph {
 public:
  NoiseMode mode = NoiseMode::upgo;
  FixedNoiseTable fixed_noise;

  void add_node(NodeId id, const Pose& pose);
  bool has_node(NodeId id) const { return nodes_.count(id) != 0; }
  const Pose& node(NodeId id) const;
  void set_node(NodeId id, const Pose& pose);
  const std::map<NodeId, Pose>& nodes() const { return nodes_; }

  /// Unary factor anchoring the node (and its component's gauge). At most
  /// one prior per node.
  void add_prior(NodeId id, const Pose& pose, const Matrix6d& cov);

  void add_odometry(NodeId i, NodeId j, const Pose& measurement,
                    const Matrix6d& cov);

  /// Gated loop insertion: rejected (unconverged, degenerate, or unusable
  /// covariance) registrations add nothing and return false. The
  /// registration transform must already be the relative measurement i->j.
  bool add_loop(NodeId i, NodeId j, const RegistrationResult& registration);

  /// Ungated loop factor (deserialization, synthetic tests).
  void add_loop_between(NodeId i, NodeId j, const Pose& measurement,
                        const Matrix6d& cov);

  const std::vector<Factor>& factors() const { return factors_; }

  /// Covariance actually used at optimization time (FPGO swaps in the table).
  Matrix6d effective_covariance(const Factor& factor) const;

 private:
  void check_psd(const Matrix6d& cov) const;

  std::map<NodeId, Pose> nodes_;
  std::vector<Factor> factors_;
};

/// Residual e = log(z^-1 h(x)) of one factor at the current estimates.
Vector6d factor_residual(const PoseGraph& graph, const Factor& factor);

/// Total weighted cost sum e' Omega e.
double graph_cost(const PoseGraph& graph);

struct OptimizeConfig {
  int max_iter = 100;
  double rel_tol = 1e-12;   // relative cost decrease defining convergence
  double lambda_init = 1e-4;
  double lambda_up = 10.0;
  double lambda_down = 0.1;
  double lambda_max = 1e12;
};

struct OptReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  double condition = 0.0;  // condition estimate of the information matrix
  std::vector<double> cost_history;  // cost after each accepted step
};

/// Throws IllPosedError when some node's connected component has no prior
/// factor, or when the cost turns non-finite.
OptReport optimize(PoseGraph& graph, const OptimizeConfig& config = {});

/// Dense Gauss-Newton information matrix J' Omega J at the current estimates
/// in node order (6 rows/cols per node); no prior requirement, no damping.
Eigen::MatrixXd information_matrix(const PoseGraph& graph);

/// Per-node 6x6 covariance blocks of the inverse information matrix at the
/// current estimates, in the tangent at each node. Throws IllPosedError when
/// the information matrix is singular (gauge freedom).
std::map<NodeId, Matrix6d> marginals(const PoseGraph& graph);

struct EdgeError {
  std::size_t index = 0;
  FactorKind kind = FactorKind::odometry;
  double unweighted = 0.0;  // |e|
  double weighted = 0.0;    // sqrt(e' Omega e)
};

/// Residual norms per factor in insertion order.
std::vector<EdgeError> edge_error_report(const PoseGraph& graph);

}  // namespace msmap
