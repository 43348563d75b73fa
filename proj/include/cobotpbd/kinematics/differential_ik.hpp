#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <limits>

#include "cobotpbd/error.hpp"
#include "cobotpbd/kinematics/forward_kinematics.hpp"

namespace cobotpbd::kinematics {

/// λ = 0: Moore–Penrose inverse through the SVD (singular values below a
/// relative cutoff are dropped). λ > 0: damped least squares Jᵀ(JJᵀ + λ²I)⁻¹.
inline Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& jac, double damping = 0.0) {
  if (damping > 0.0) {
    const Eigen::MatrixXd jjt = jac * jac.transpose() +
                                damping * damping * Eigen::MatrixXd::Identity(jac.rows(), jac.rows());
    return jac.transpose() * jjt.ldlt().solve(Eigen::MatrixXd::Identity(jac.rows(), jac.rows()));
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  const double cutoff = std::numeric_limits<double>::epsilon() * static_cast<double>(std::max(jac.rows(), jac.cols())) *
                        (s.size() > 0 ? s[0] : 0.0);
  Eigen::VectorXd s_inv = Eigen::VectorXd::Zero(s.size());
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s[i] > cutoff) s_inv[i] = 1.0 / s[i];
  }
  return svd.matrixV() * s_inv.asDiagonal() * svd.matrixU().transpose();
}

/// Smallest of the min(rows, cols) singular values.
inline double smallest_singular_value(const Eigen::MatrixXd& jac) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  const auto& s = svd.singularValues();
  return s.size() > 0 ? s[s.size() - 1] : 0.0;
}

struct DiffIkOptions {
  double damping = 0.0;              // explicit λ; 0 means exact pseudo-inverse
  double singular_threshold = 0.05;  // σ_min below this enables automatic damping
  double auto_damping = 0.05;
  double nullspace_gain = 1.0;
  bool clamp_velocities = true;
};

enum class DiffIkStatus { ok, degraded };

struct DiffIkResult {
  Eigen::VectorXd velocities;  // after limit scaling
  Eigen::VectorXd unclamped;
  Eigen::VectorXd nullspace_term;
  DiffIkStatus status = DiffIkStatus::ok;
  double damping_used = 0.0;
  double sigma_min = 0.0;
  double scale = 1.0;  // uniform factor applied to reach velocity limits
};

/// Uniformly scales `v` so no joint exceeds its velocity limit. Returns the scale.
inline double scale_to_velocity_limits(Eigen::VectorXd& v, const Eigen::VectorXd& limits) {
  double scale = 1.0;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double a = std::abs(v[i]);
    if (a > limits[i]) scale = std::min(scale, limits[i] / a);
  }
  if (scale < 1.0) v *= scale;
  return scale;
}

/// θ̇ = J†ẋ + (I − J†J)(θ_sec − θ), then scaled into the velocity limits.
inline DiffIkResult diff_ik(const RobotModel& model, const Eigen::VectorXd& q, const Twist& twist_cmd,
                            const Eigen::VectorXd& secondary_target, const DiffIkOptions& opts = {}) {
  detail::check_dimension(model, q);
  detail::check_dimension(model, secondary_target);

  const Jacobian jac = jacobian(model, q);
  DiffIkResult out;
  out.sigma_min = smallest_singular_value(jac);
  out.damping_used = opts.damping;
  if (opts.damping <= 0.0 && out.sigma_min < opts.singular_threshold) {
    out.status = DiffIkStatus::degraded;
    out.damping_used = opts.auto_damping;
  }

  const Eigen::MatrixXd jinv = pseudo_inverse(jac, out.damping_used);
  const Eigen::Index n = static_cast<Eigen::Index>(model.dof());
  const Eigen::MatrixXd projector = Eigen::MatrixXd::Identity(n, n) - jinv * jac;

  out.nullspace_term = projector * (opts.nullspace_gain * (secondary_target - q));
  out.unclamped = jinv * twist_cmd.as_vector() + out.nullspace_term;
  out.velocities = out.unclamped;
  if (!out.velocities.allFinite()) {
    out.velocities.setZero();
    out.status = DiffIkStatus::degraded;
  }
  if (opts.clamp_velocities) {
    out.scale = scale_to_velocity_limits(out.velocities, model.velocity_limits());
  }
  return out;
}

}  // namespace cobotpbd::kinematics
