#include "gsav/anim/skinning.hpp"
#include "gsav/anim/template_model.hpp"

#include "test_util.hpp"

#include <Eigen/Geometry>

using namespace gsav;
using gsav::test::check_grad;

namespace {

Pose random_pose(Rng& rng, int joint_count, double amp = 0.8) {
  Pose p = Pose::identity(joint_count);
  p.root_translation = Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3));
  for (auto& aa : p.joint_rotations)
    aa = Vec3(rng.uniform(-amp, amp), rng.uniform(-amp, amp), rng.uniform(-amp, amp));
  return p;
}

}  // namespace

TEST_CASE("rodrigues matches Eigen's angle-axis rotation") {
  Rng rng(41);
  for (int t = 0; t < 100; ++t) {
    const Vec3 aa(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Mat3 R = rodrigues(aa);
    const double theta = aa.norm();
    const Mat3 ref = theta < 1e-14
                         ? Mat3::Identity()
                         : Eigen::AngleAxisd(theta, Vec3(aa / theta)).toRotationMatrix();
    CHECK((R - ref).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK((rodrigues(Vec3::Zero()) - Mat3::Identity()).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("rodrigues jacobian matches finite differences") {
  Rng rng(42);
  for (int t = 0; t < 40; ++t) {
    Vec3 aa(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
    if (t == 0) aa.setZero();  // small-angle branch
    const auto d = rodrigues_jacobian(aa);
    for (int k = 0; k < 3; ++k)
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          const double fd = gsav::test::central_diff(
              [&](double v) {
                Vec3 a = aa;
                a[k] = v;
                return rodrigues(a)(r, c);
              },
              aa[k], 1e-6);
          check_grad(d[k](r, c), fd, 1e-6, 1e-9);
        }
  }
}

TEST_CASE("forward kinematics: identity pose reproduces rest positions") {
  const SkinnedTemplate tmpl = build_puppet();
  const auto offsets = tmpl.shaped_offsets();
  const auto world = forward_kinematics(tmpl.skeleton, offsets, Pose::identity(tmpl.joint_count()));
  const auto rest = rest_joint_positions(tmpl.skeleton, offsets);
  for (int j = 0; j < tmpl.joint_count(); ++j) {
    CHECK((world[j].rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((world[j].translation - rest[j]).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("forward kinematics: root rotation rotates every joint") {
  const SkinnedTemplate tmpl = build_puppet();
  const auto offsets = tmpl.shaped_offsets();
  Rng rng(43);
  Pose pose = random_pose(rng, tmpl.joint_count());
  const Pose base_pose = [&] {
    Pose p = pose;
    p.joint_rotations[0].setZero();
    p.root_translation.setZero();
    return p;
  }();
  const Mat3 R0 = rodrigues(pose.joint_rotations[0]);
  const auto world = forward_kinematics(tmpl.skeleton, offsets, pose);
  const auto base = forward_kinematics(tmpl.skeleton, offsets, base_pose);
  // Root joint sits at offsets[0]; the root rotation spins the body about it.
  for (int j = 0; j < tmpl.joint_count(); ++j) {
    const Mat3 Rref = R0 * base[j].rotation;
    const Vec3 tref = pose.root_translation + offsets[0] + R0 * (base[j].translation - offsets[0]);
    CHECK((world[j].rotation - Rref).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((world[j].translation - tref).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("skinning transforms are the identity at the identity pose") {
  const SkinnedTemplate tmpl = build_puppet();
  const auto A = skinning_transforms(tmpl.skeleton, tmpl.shaped_offsets(),
                                     Pose::identity(tmpl.joint_count()));
  for (const auto& a : A) {
    CHECK((a.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(a.translation.cwiseAbs().maxCoeff() < 1e-12);
  }
}

// Independent LBS oracle: blend full 4x4-style transforms per vertex.
namespace {
Eigen::MatrixXd oracle_lbs(const SkinnedTemplate& tmpl, const Pose& pose) {
  const auto A = skinning_transforms(tmpl.skeleton, tmpl.shaped_offsets(), pose);
  const Eigen::MatrixXd V = tmpl.shaped_vertices();
  Eigen::MatrixXd out(V.rows(), 3);
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    Vec3 acc = Vec3::Zero();
    for (int j = 0; j < tmpl.joint_count(); ++j) {
      const double w = tmpl.weights(i, j);
      if (w == 0) continue;
      acc += w * (A[j].rotation * V.row(i).transpose() + A[j].translation);
    }
    out.row(i) = acc.transpose();
  }
  return out;
}
}  // namespace

TEST_CASE("gaussian skinning matches the per-vertex LBS oracle") {
  SkinnedTemplate tmpl = build_puppet();
  Rng rng(44);
  tmpl.beta = Eigen::VectorXd::NullaryExpr(tmpl.shape_dim(), [&](Eigen::Index) {
    return rng.uniform(-0.5, 0.5);
  });
  // One primitive per mesh vertex, inheriting that vertex's weights.
  GaussianSet set;
  set.sh_degree = 0;
  const Eigen::MatrixXd V = tmpl.shaped_vertices();
  for (Eigen::Index i = 0; i < V.rows(); ++i) {
    GaussianPrimitive g;
    g.mean = V.row(i).transpose();
    g.color_coeffs = Eigen::VectorXd::Zero(3);
    set.push_back(g, SourceTag::body);
  }
  for (int t = 0; t < 20; ++t) {
    const Pose pose = random_pose(rng, tmpl.joint_count());
    const auto A = skinning_transforms(tmpl.skeleton, tmpl.shaped_offsets(), pose);
    const GaussianSet posed = skin_gaussians(set, tmpl.weights, A);
    const Eigen::MatrixXd ref = oracle_lbs(tmpl, pose);
    const Eigen::MatrixXd mesh = lbs_vertices(tmpl, pose);
    for (Eigen::Index i = 0; i < V.rows(); ++i) {
      CHECK((posed.primitives[static_cast<std::size_t>(i)].mean - ref.row(i).transpose())
                .cwiseAbs()
                .maxCoeff() < 1e-8);
      CHECK((mesh.row(i) - ref.row(i)).cwiseAbs().maxCoeff() < 1e-8);
    }
  }
}

TEST_CASE("identity pose skinning is exact") {
  SkinnedTemplate tmpl = build_puppet();
  Rng rng(45);
  GaussianSet set = gsav::test::random_set(rng, 20);
  const Eigen::MatrixXd W = bind_gaussians_to_surface(set, tmpl);
  const auto A = skinning_transforms(tmpl.skeleton, tmpl.shaped_offsets(),
                                     Pose::identity(tmpl.joint_count()));
  const GaussianSet posed = skin_gaussians(set, W, A);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK((posed.primitives[i].mean - set.primitives[i].mean).cwiseAbs().maxCoeff() < 1e-12);
    const Vec4 q0 = quat_normalize(set.primitives[i].rotation);
    const Vec4 q1 = quat_normalize(posed.primitives[i].rotation);
    CHECK(std::min((q0 - q1).cwiseAbs().maxCoeff(), (q0 + q1).cwiseAbs().maxCoeff()) < 1e-10);
  }
}

TEST_CASE("polar rotation is the nearest orthonormal matrix") {
  Rng rng(46);
  for (int t = 0; t < 50; ++t) {
    Mat3 M;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) M(r, c) = rng.normal();
    M += 2.0 * Mat3::Identity();  // keep det positive most of the time
    const Mat3 R = polar_rotation(M);
    CHECK((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(R.determinant() == Catch::Approx(1.0).margin(1e-10));
    // Rotation inputs are fixed points.
    const Mat3 Q = rodrigues(Vec3(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)));
    CHECK((polar_rotation(Q) - Q).cwiseAbs().maxCoeff() < 1e-10);
    // Optimality: no small rotation perturbation gets closer to M in Frobenius norm.
    const double base = (R - M).squaredNorm();
    for (int k = 0; k < 6; ++k) {
      const Vec3 d = 1e-3 * Vec3(rng.normal(), rng.normal(), rng.normal());
      CHECK((Mat3(rodrigues(d) * R) - M).squaredNorm() >= base - 1e-12);
    }
  }
}

TEST_CASE("skinned covariance is conjugated by the polar rotation") {
  SkinnedTemplate tmpl = build_puppet();
  Rng rng(47);
  GaussianSet set = gsav::test::random_set(rng, 10);
  const Eigen::MatrixXd W = bind_gaussians_to_surface(set, tmpl);
  const Pose pose = random_pose(rng, tmpl.joint_count());
  const auto A = skinning_transforms(tmpl.skeleton, tmpl.shaped_offsets(), pose);
  const GaussianSet posed = skin_gaussians(set, W, A);
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto x = blend_skinning_transforms(W.row(static_cast<Eigen::Index>(i)), A);
    const Mat3 cov0 = build_covariance(set.primitives[i].scale(), set.primitives[i].rotation);
    const Mat3 cov1 =
        build_covariance(posed.primitives[i].scale(), posed.primitives[i].rotation);
    CHECK((cov1 - x.rotation * cov0 * x.rotation.transpose()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("surface binding matches an exhaustive closest-point oracle") {
  SkinnedTemplate tmpl = build_puppet();
  Rng rng(48);
  GaussianSet set = gsav::test::random_set(rng, 15);
  const Eigen::MatrixXd W = bind_gaussians_to_surface(set, tmpl);
  const Eigen::MatrixXd V = tmpl.shaped_vertices();
  for (std::size_t i = 0; i < set.size(); ++i) {
    const auto row = W.row(static_cast<Eigen::Index>(i));
    CHECK(row.minCoeff() >= 0.0);
    CHECK(row.sum() == Catch::Approx(1.0).margin(1e-12));
    // Oracle: dense sampling of every triangle's barycentric interior.
    const Vec3 p = set.primitives[i].mean;
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index f = 0; f < tmpl.faces.rows(); ++f) {
      const Vec3 a = V.row(tmpl.faces(f, 0)), b = V.row(tmpl.faces(f, 1)),
                 c = V.row(tmpl.faces(f, 2));
      const int S = 24;
      for (int u = 0; u <= S; ++u)
        for (int v = 0; v <= S - u; ++v) {
          const double bu = double(u) / S, bv = double(v) / S;
          best = std::min(best, (p - ((1 - bu - bv) * a + bu * b + bv * c)).squaredNorm());
        }
    }
    // The analytic closest point can only be at most a sampling step better.
    double lib_best = std::numeric_limits<double>::infinity();
    for (Eigen::Index f = 0; f < tmpl.faces.rows(); ++f) {
      const Vec3 q = closest_point_on_triangle(p, V.row(tmpl.faces(f, 0)).transpose(),
                                               V.row(tmpl.faces(f, 1)).transpose(),
                                               V.row(tmpl.faces(f, 2)).transpose());
      lib_best = std::min(lib_best, (p - q).squaredNorm());
    }
    CHECK(lib_best <= best + 1e-12);
    CHECK(std::sqrt(best) - std::sqrt(lib_best) < 5e-2);
  }
}

TEST_CASE("vertex-coincident primitives inherit that vertex's weights") {
  SkinnedTemplate tmpl = build_puppet();
  const Eigen::MatrixXd V = tmpl.shaped_vertices();
  GaussianSet set;
  set.sh_degree = 0;
  Rng rng(49);
  std::vector<Eigen::Index> picks;
  for (int t = 0; t < 10; ++t) {
    const Eigen::Index i = static_cast<Eigen::Index>(rng.uniform_index(V.rows()));
    picks.push_back(i);
    GaussianPrimitive g;
    g.mean = V.row(i).transpose();
    g.color_coeffs = Eigen::VectorXd::Zero(3);
    set.push_back(g, SourceTag::body);
  }
  const Eigen::MatrixXd W = bind_gaussians_to_surface(set, tmpl);
  for (std::size_t t = 0; t < picks.size(); ++t) {
    const Eigen::RowVectorXd expect = tmpl.weights.row(picks[t]) / tmpl.weights.row(picks[t]).sum();
    CHECK((W.row(static_cast<Eigen::Index>(t)) - expect).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("invalid skinning weights are rejected") {
  const auto A = std::vector<RigidTransform>(3);
  Eigen::RowVectorXd bad(3);
  bad << 0.5, 0.6, -0.1;
  CHECK_THROWS(blend_skinning_transforms(bad, A));
  bad << 0.2, 0.2, 0.2;  // does not sum to one
  CHECK_THROWS(blend_skinning_transforms(bad, A));
}
