#include "msmap/se3.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace msmap {

namespace {
// Below this angle the trig closed forms lose precision to cancellation;
// second-order Taylor expansions are exact to ~1e-16 there.
constexpr double kTaylorEps = 1e-4;
constexpr double kPiBranchGuard = 1e-6;
}  // namespace

Eigen::Matrix3d skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

bool is_valid_rotation(const Eigen::Matrix3d& r, double tol) {
  const double ortho = (r.transpose() * r - Eigen::Matrix3d::Identity())
                           .cwiseAbs()
                           .maxCoeff();
  return ortho <= tol && std::abs(r.determinant() - 1.0) <= tol;
}

namespace {

// sin(theta) * axis, from the skew part of R.
Eigen::Vector3d sin_axis(const Eigen::Matrix3d& r) {
  return {0.5 * (r(2, 1) - r(1, 2)), 0.5 * (r(0, 2) - r(2, 0)),
          0.5 * (r(1, 0) - r(0, 1))};
}

}  // namespace

double rotation_angle(const Eigen::Matrix3d& r) {
  // atan2 keeps full precision at both ends of [0, pi], unlike acos.
  return std::atan2(sin_axis(r).norm(), 0.5 * (r.trace() - 1.0));
}

Eigen::Matrix3d so3_exp(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  const Eigen::Matrix3d wx = skew(w);
  double s, c;
  if (theta < kTaylorEps) {
    s = 1.0 - t2 / 6.0;
    c = 0.5 - t2 / 24.0;
  } else {
    s = std::sin(theta) / theta;
    const double half_sin = std::sin(0.5 * theta);
    c = 2.0 * half_sin * half_sin / t2;
  }
  return Eigen::Matrix3d::Identity() + s * wx + c * wx * wx;
}

Eigen::Vector3d so3_log(const Eigen::Matrix3d& r) {
  const Eigen::Vector3d sa = sin_axis(r);
  const double s = sa.norm();
  const double c = 0.5 * (r.trace() - 1.0);
  const double theta = std::atan2(s, c);
  if (std::numbers::pi - theta < kPiBranchGuard) {
    throw std::domain_error(
        "so3_log: rotation angle within 1e-6 of pi, branch ambiguous");
  }
  if (s < kTaylorEps) {
    // theta ~ 0 here; the branch cut above already excluded theta ~ pi.
    return sa * (1.0 + theta * theta / 6.0);
  }
  return sa * (theta / s);
}

namespace {

// Left Jacobian of SO(3): exp((w+dw)^) ~ exp(J_l dw) exp(w^).
Eigen::Matrix3d so3_left_jacobian(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  const Eigen::Matrix3d wx = skew(w);
  double a, b;
  if (theta < kTaylorEps) {
    a = 0.5 - t2 / 24.0;
    b = 1.0 / 6.0 - t2 / 120.0;
  } else {
    const double half_sin = std::sin(0.5 * theta);
    a = 2.0 * half_sin * half_sin / t2;
    b = (theta - std::sin(theta)) / (t2 * theta);
  }
  return Eigen::Matrix3d::Identity() + a * wx + b * wx * wx;
}

Eigen::Matrix3d so3_left_jacobian_inverse(const Eigen::Vector3d& w) {
  const double theta = w.norm();
  const double t2 = theta * theta;
  const Eigen::Matrix3d wx = skew(w);
  double coef;
  if (theta < kTaylorEps) {
    coef = 1.0 / 12.0 + t2 / 720.0;
  } else {
    // 1 - (theta/2) cot(theta/2), with the cotangent kept in tan form so
    // the subtraction stays accurate for small angles.
    const double half = 0.5 * theta;
    coef = (1.0 - half / std::tan(half)) / t2;
  }
  return Eigen::Matrix3d::Identity() - 0.5 * wx + coef * wx * wx;
}

}  // namespace

Pose se3_exp(const Vector6d& xi) {
  const Eigen::Vector3d rho = xi.head<3>();
  const Eigen::Vector3d tau = xi.tail<3>();
  return Pose(so3_exp(rho), so3_left_jacobian(rho) * tau);
}

Vector6d se3_log(const Pose& p) {
  const Eigen::Vector3d rho = so3_log(p.rotation);
  Vector6d xi;
  xi.head<3>() = rho;
  xi.tail<3>() = so3_left_jacobian_inverse(rho) * p.translation;
  return xi;
}

Pose compose(const Pose& a, const Pose& b) {
  return Pose(a.rotation * b.rotation, a.rotation * b.translation + a.translation);
}

Pose inverse(const Pose& a) {
  const Eigen::Matrix3d rt = a.rotation.transpose();
  return Pose(rt, -(rt * a.translation));
}

Pose between(const Pose& a, const Pose& b) { return compose(inverse(a), b); }

Matrix6d adjoint(const Pose& p) {
  Matrix6d ad = Matrix6d::Zero();
  ad.topLeftCorner<3, 3>() = p.rotation;
  ad.bottomLeftCorner<3, 3>() = skew(p.translation) * p.rotation;
  ad.bottomRightCorner<3, 3>() = p.rotation;
  return ad;
}

Matrix6d se3_ad(const Vector6d& xi) {
  Matrix6d m = Matrix6d::Zero();
  const Eigen::Matrix3d rx = skew(xi.head<3>());
  m.topLeftCorner<3, 3>() = rx;
  m.bottomLeftCorner<3, 3>() = skew(xi.tail<3>());
  m.bottomRightCorner<3, 3>() = rx;
  return m;
}

Matrix6d symmetrized(const Matrix6d& m) { return 0.5 * (m + m.transpose()); }

Matrix6d transform_covariance(const Matrix6d& cov, const Pose& p) {
  const Matrix6d ad = adjoint(p);
  return symmetrized(ad * cov * ad.transpose());
}

Matrix6d relative_pose_covariance(const Pose& pose_i, const Matrix6d& cov_i,
                                  const Pose& pose_j, const Matrix6d& cov_j) {
  const Matrix6d ad = adjoint(inverse(between(pose_i, pose_j)));
  return symmetrized(ad * cov_i * ad.transpose() + cov_j);
}

}  // namespace msmap
