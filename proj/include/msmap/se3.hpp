#pragma once

#include <Eigen/Dense>

// Lie-group math on SO(3)/SE(3) and the covariance transforms built on it.
// Tangent (twist) ordering is [rotation | translation] everywhere; all 6x6
// covariance/information matrices follow it. Perturbations are right-handed:
// a noisy pose is T * exp(eps), with eps expressed in the body frame.

namespace msmap {

using Vector6d = Eigen::Matrix<double, 6, 1>;
using Matrix6d = Eigen::Matrix<double, 6, 6>;

struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose() = default;
  Pose(const Eigen::Matrix3d& r, const Eigen::Vector3d& t)
      : rotation(r), translation(t) {}

  static Pose Identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return rotation * p + translation;
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

Eigen::Matrix3d skew(const Eigen::Vector3d& v);

/// True when R'R = I and det(R) = +1 within tol.
bool is_valid_rotation(const Eigen::Matrix3d& r, double tol = 1e-9);

/// Principal rotation angle of R, in [0, pi].
double rotation_angle(const Eigen::Matrix3d& r);

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w);

/// Inverse of so3_exp on the principal branch. Throws std::domain_error when
/// the angle is within 1e-6 of pi (the branch is ambiguous there).
Eigen::Vector3d so3_log(const Eigen::Matrix3d& r);

Pose se3_exp(const Vector6d& xi);
Vector6d se3_log(const Pose& p);

Pose compose(const Pose& a, const Pose& b);
Pose inverse(const Pose& a);

/// a^-1 * b: the pose of b expressed in the frame of a.
Pose between(const Pose& a, const Pose& b);

/// 6x6 adjoint [[R, 0], [ [t]x R, R ]] under the [rot|trans] ordering.
Matrix6d adjoint(const Pose& p);

/// Algebra adjoint ad(xi) = [[ [rho]x, 0 ], [ [tau]x, [rho]x ]].
Matrix6d se3_ad(const Vector6d& xi);

Matrix6d symmetrized(const Matrix6d& m);

/// Carries a tangent covariance through the adjoint of p: Ad Cov Ad'.
Matrix6d transform_covariance(const Matrix6d& cov, const Pose& p);

/// Covariance of between(pose_i, pose_j) given independent right-perturbation
/// covariances of the two poses, to first order:
///   Ad_{rel^-1} cov_i Ad_{rel^-1}' + cov_j,  Ad_{rel^-1} = Ad_{j^-1} Ad_i.
Matrix6d relative_pose_covariance(const Pose& pose_i, const Matrix6d& cov_i,
                                  const Pose& pose_j, const Matrix6d& cov_j);

}  // namespace msmap
