#pragma once

// Template fitting: recover (beta, pose) minimizing squared L2 vertex and
// joint residuals. The scalar objective carries analytic gradients (reverse
// accumulation through LBS and FK); the optimizer is Levenberg-Marquardt on
// the stacked residual vector with a finite-difference Jacobian, accepting
// only steps that decrease the objective.

#include "gsav/anim/skinning.hpp"

namespace gsav {

struct FitOptions {
  int max_iterations = 200;
  double rel_tolerance = 1e-12;   // stop on relative objective decrease
  double jacobian_step = 1e-7;    // forward-difference step for the Jacobian
  double initial_damping = 1e-4;
};

struct FitResult {
  Eigen::VectorXd beta;
  Pose pose;
  double objective = 0;
  double vertex_rms = 0;   // meters
  double joint_rms = 0;    // meters
  int iterations = 0;
  bool converged = false;  // hit the relative-decrease tolerance
};

namespace detail {

struct FitProblem {
  const SkinnedTemplate& tmpl;
  const Eigen::MatrixXd& target_v;  // N x 3
  const Eigen::MatrixXd& target_j;  // J x 3
  double lambda;

  int S() const { return tmpl.shape_dim(); }
  int J() const { return tmpl.joint_count(); }
  int dim() const { return S() + 3 + 3 * J(); }

  Eigen::VectorXd pack(const Eigen::VectorXd& beta, const Pose& pose) const {
    Eigen::VectorXd x(dim());
    x.head(S()) = beta;
    x.segment<3>(S()) = pose.root_translation;
    for (int j = 0; j < J(); ++j) x.segment<3>(S() + 3 + 3 * j) = pose.joint_rotations[j];
    return x;
  }

  void unpack(const Eigen::VectorXd& x, Eigen::VectorXd& beta, Pose& pose) const {
    beta = x.head(S());
    pose.root_translation = x.segment<3>(S());
    pose.joint_rotations.resize(J());
    for (int j = 0; j < J(); ++j) pose.joint_rotations[j] = x.segment<3>(S() + 3 + 3 * j);
  }

  double objective(const Eigen::VectorXd& x, Eigen::VectorXd* grad = nullptr) const {
    Eigen::VectorXd beta;
    Pose pose;
    unpack(x, beta, pose);
    const int nj = J(), ns = S();
    const auto offsets = tmpl.shaped_offsets(beta);
    const auto world = forward_kinematics(tmpl.skeleton, offsets, pose);
    const auto rest = rest_joint_positions(tmpl.skeleton, offsets);
    const Eigen::MatrixXd V = tmpl.shaped_vertices(beta);

    double F = 0;
    std::vector<Mat3> gR(nj, Mat3::Zero());
    std::vector<Vec3> gt(nj, Vec3::Zero());
    std::vector<Vec3> g_rest(nj, Vec3::Zero());
    Eigen::MatrixXd gV;
    if (grad) gV = Eigen::MatrixXd::Zero(V.rows(), 3);

    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      const Vec3 vi = V.row(i).transpose();
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < nj; ++j) {
        const double w = tmpl.weights(i, j);
        if (w == 0.0) continue;
        p += w * (world[j].rotation * (vi - rest[j]) + world[j].translation);
      }
      const Vec3 r = p - target_v.row(i).transpose();
      F += r.squaredNorm();
      if (!grad) continue;
      for (int j = 0; j < nj; ++j) {
        const double w = tmpl.weights(i, j);
        if (w == 0.0) continue;
        gR[j] += 2 * w * r * (vi - rest[j]).transpose();
        gt[j] += 2 * w * r;
        g_rest[j] -= 2 * w * world[j].rotation.transpose() * r;
        gV.row(i) += 2 * w * (world[j].rotation.transpose() * r).transpose();
      }
    }
    for (int j = 0; j < nj; ++j) {
      const Vec3 rj = world[j].translation - target_j.row(j).transpose();
      F += lambda * rj.squaredNorm();
      if (grad) gt[j] += 2 * lambda * rj;
    }
    if (!grad) return F;

    // Reverse pass through the kinematic chain.
    Eigen::VectorXd g = Eigen::VectorXd::Zero(dim());
    std::vector<Vec3> g_offset(nj, Vec3::Zero());
    for (int j = nj - 1; j >= 0; --j) {
      const int par = tmpl.skeleton.joints[j].parent;
      const Mat3 Rparent = (par >= 0) ? world[par].rotation : Mat3::Identity();
      if (par >= 0) {
        gR[par] += gR[j] * rodrigues(pose.joint_rotations[j]).transpose();
        gR[par] += gt[j] * offsets[j].transpose();
        gt[par] += gt[j];
        g_rest[par] += g_rest[j];
      }
      const Mat3 g_local = Rparent.transpose() * gR[j];
      const auto dR = rodrigues_jacobian(pose.joint_rotations[j]);
      for (int k = 0; k < 3; ++k)
        g[ns + 3 + 3 * j + k] = g_local.cwiseProduct(dR[k]).sum();
      g_offset[j] = Rparent.transpose() * gt[j] + g_rest[j];
      if (j == 0) g.segment<3>(ns) = gt[0];
    }
    for (int s = 0; s < ns; ++s) {
      double gs = gV.cwiseProduct(tmpl.vertex_blend[s]).sum();
      for (int j = 0; j < nj; ++j)
        gs += g_offset[j].dot(tmpl.offset_blend[s].row(j).transpose());
      g[s] = gs;
    }
    *grad = g;
    return F;
  }

  Eigen::Index residual_dim() const { return 3 * tmpl.vertex_count() + 3 * J(); }

  // Stacked residual vector: posed vertices minus targets, then
  // sqrt(lambda)-scaled joint positions minus targets. Its squared norm
  // equals objective().
  Eigen::VectorXd residual(const Eigen::VectorXd& x) const {
    Eigen::VectorXd beta;
    Pose pose;
    unpack(x, beta, pose);
    const auto offsets = tmpl.shaped_offsets(beta);
    const auto world = forward_kinematics(tmpl.skeleton, offsets, pose);
    const auto rest = rest_joint_positions(tmpl.skeleton, offsets);
    const Eigen::MatrixXd V = tmpl.shaped_vertices(beta);
    Eigen::VectorXd r(residual_dim());
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      const Vec3 vi = V.row(i).transpose();
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < J(); ++j) {
        const double w = tmpl.weights(i, j);
        if (w == 0.0) continue;
        p += w * (world[j].rotation * (vi - rest[j]) + world[j].translation);
      }
      r.segment<3>(3 * i) = p - target_v.row(i).transpose();
    }
    const double sl = std::sqrt(lambda);
    for (int j = 0; j < J(); ++j)
      r.segment<3>(3 * tmpl.vertex_count() + 3 * j) =
          sl * (world[j].translation - target_j.row(j).transpose());
    return r;
  }
};

}  // namespace detail

inline FitResult fit_template(const SkinnedTemplate& tmpl, const Eigen::MatrixXd& target_vertices,
                              const Eigen::MatrixXd& target_joints, double lambda,
                              const FitOptions& opts = {}) {
  if (target_vertices.rows() != tmpl.vertex_count() || target_vertices.cols() != 3)
    throw std::invalid_argument("fit_template: target vertex array dimension mismatch");
  if (target_joints.rows() != tmpl.joint_count() || target_joints.cols() != 3)
    throw std::invalid_argument("fit_template: target joint array dimension mismatch");
  if (lambda < 0) throw std::invalid_argument("fit_template: lambda must be non-negative");

  detail::FitProblem prob{tmpl, target_vertices, target_joints, lambda};
  Eigen::VectorXd x = prob.pack(Eigen::VectorXd::Zero(tmpl.shape_dim()),
                                Pose::identity(tmpl.joint_count()));
  const Eigen::Index n = prob.dim();
  Eigen::VectorXd r = prob.residual(x);
  double F = r.squaredNorm();
  double damping = opts.initial_damping;
  int it = 0;
  bool converged = false;
  auto wrap = [&](Eigen::VectorXd& xv) {  // axis-angle magnitudes into (-pi, pi]
    Eigen::VectorXd beta;
    Pose pose;
    prob.unpack(xv, beta, pose);
    pose.wrap();
    xv = prob.pack(beta, pose);
  };
  for (; it < opts.max_iterations; ++it) {
    Eigen::MatrixXd Jac(r.size(), n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const double h = opts.jacobian_step * std::max(1.0, std::abs(x[k]));
      Eigen::VectorXd xk = x;
      xk[k] += h;
      Jac.col(k) = (prob.residual(xk) - r) / h;
    }
    const Eigen::MatrixXd JtJ = Jac.transpose() * Jac;
    const Eigen::VectorXd Jtr = Jac.transpose() * r;
    if (Jtr.lpNorm<Eigen::Infinity>() < 1e-14) {
      converged = true;
      break;
    }
    bool accepted = false;
    for (int attempt = 0; attempt < 40 && !accepted; ++attempt) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += damping * JtJ.diagonal().cwiseMax(1e-12);
      Eigen::VectorXd x_new = x + A.ldlt().solve(-Jtr);
      wrap(x_new);
      const Eigen::VectorXd r_new = prob.residual(x_new);
      const double F_new = r_new.squaredNorm();
      if (F_new < F) {
        const double decrease = F - F_new;
        x = x_new;
        r = r_new;
        F = F_new;
        damping = std::max(damping * 0.3, 1e-14);
        accepted = true;
        if (decrease < opts.rel_tolerance * std::max(1.0, F)) converged = true;
      } else {
        damping *= 4.0;
      }
    }
    if (!accepted) break;  // no decreasing step at machine precision
    if (converged) {
      ++it;
      break;
    }
  }

  FitResult res;
  prob.unpack(x, res.beta, res.pose);
  res.objective = F;
  res.iterations = it;
  res.converged = converged;
  const Eigen::MatrixXd V = lbs_vertices(
      [&] {
        SkinnedTemplate t2 = tmpl;
        t2.beta = res.beta;
        return t2;
      }(),
      res.pose);
  res.vertex_rms = std::sqrt((V - target_vertices).rowwise().squaredNorm().mean());
  const auto world = forward_kinematics(tmpl.skeleton, tmpl.shaped_offsets(res.beta), res.pose);
  double jacc = 0;
  for (int j = 0; j < tmpl.joint_count(); ++j)
    jacc += (world[j].translation - target_joints.row(j).transpose()).squaredNorm();
  res.joint_rms = std::sqrt(jacc / tmpl.joint_count());
  return res;
}

}  // namespace gsav
