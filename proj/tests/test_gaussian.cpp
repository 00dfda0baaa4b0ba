#include "gsav/core/checkpoint.hpp"
#include "gsav/core/gaussian.hpp"
#include "gsav/core/rng.hpp"

#include "test_util.hpp"

#include <Eigen/Geometry>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace gsav;

TEST_CASE("covariance matches eigen-decomposition oracle") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    if (q.norm() < 0.2) q = Vec4(1, 0, 0, 0);
    const Vec3 s(rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0));
    const Mat3 cov = build_covariance(s, q);

    // Independent oracle via Eigen's quaternion normalization.
    const Eigen::Quaterniond eq(q[0], q[1], q[2], q[3]);
    const Mat3 R = eq.normalized().toRotationMatrix();
    const Mat3 expected = R * s.array().square().matrix().asDiagonal() * R.transpose();
    CHECK((cov - expected).norm() < 1e-12 * expected.norm());

    // Eigenvalues are the squared scales regardless of rotation.
    Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
    Vec3 ev = es.eigenvalues();
    Vec3 ss = s.array().square();
    std::sort(ev.data(), ev.data() + 3);
    std::sort(ss.data(), ss.data() + 3);
    CHECK((ev - ss).cwiseAbs().maxCoeff() < 1e-10 * ss.maxCoeff());
  }
}

TEST_CASE("covariance is rotation-equivariant") {
  Rng rng(12);
  const Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
  const Vec3 s(0.6, 1.1, 2.0);
  const Mat3 cov = build_covariance(s, q);

  const Eigen::Quaterniond extra =
      Eigen::Quaterniond(Eigen::AngleAxisd(0.83, Vec3(1, 2, -1).normalized()));
  const Vec4 qn = quat_normalize(q);
  const Eigen::Quaterniond composed = extra * Eigen::Quaterniond(qn[0], qn[1], qn[2], qn[3]);
  const Vec4 q2(composed.w(), composed.x(), composed.y(), composed.z());
  const Mat3 cov2 = build_covariance(s, q2);
  const Mat3 R = extra.toRotationMatrix();
  CHECK((cov2 - R * cov * R.transpose()).norm() < 1e-12);
}

TEST_CASE("density matches the normalized Gaussian formula") {
  Rng rng(13);
  const Vec3 mean(0.3, -0.2, 0.5);
  const Vec3 scale(std::exp(-1.0), std::exp(-0.7), std::exp(-1.3));
  const Vec4 q(0.9, 0.2, -0.3, 0.1);
  const Mat3 cov = build_covariance(scale, q);

  // Hand-rolled density with explicit inverse/determinant.
  for (int i = 0; i < 20; ++i) {
    const Vec3 x = mean + 0.5 * Vec3(rng.normal(), rng.normal(), rng.normal());
    const Vec3 d = x - mean;
    const double expected = std::pow(2 * M_PI, -1.5) / std::sqrt(cov.determinant()) *
                            std::exp(-0.5 * d.dot(cov.inverse() * d));
    CHECK(eval_density(x, mean, cov) == Catch::Approx(expected).epsilon(1e-12));
  }
  // Monte-Carlo integral of the density is 1 (loose check).
  double acc = 0;
  const double half = 1.2, vol = std::pow(2 * half, 3);
  const int samples = 200000;
  for (int i = 0; i < samples; ++i) {
    const Vec3 x =
        mean + Vec3(rng.uniform(-half, half), rng.uniform(-half, half), rng.uniform(-half, half));
    acc += eval_density(x, mean, cov);
  }
  CHECK(acc * vol / samples == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("degenerate covariance is rejected") {
  const Mat3 cov = build_covariance(Vec3(1e-12, 1.0, 1.0), Vec4(1, 0, 0, 0));
  CHECK_THROWS(eval_density(Vec3::Zero(), Vec3::Zero(), cov));
}

TEST_CASE("SH color: degree 0 is isotropic, degree 1 varies linearly in direction") {
  Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(12);
  coeffs[0] = 0.5 / kSH0;  // red DC
  coeffs[3 + 1] = 0.2;     // green, y basis

  const Vec3 c1 = eval_color(coeffs, Vec3(0, 1, 0), 1);
  const Vec3 c2 = eval_color(coeffs, Vec3(0, -1, 0), 1);
  CHECK(c1.x() == Catch::Approx(0.5).margin(1e-12));
  CHECK(c1.x() == Catch::Approx(c2.x()).margin(1e-12));
  CHECK(c1.y() == Catch::Approx(kSH1 * 0.2).margin(1e-12));
  CHECK(c2.y() == Catch::Approx(-kSH1 * 0.2).margin(1e-12));

  const Vec3 c0 = eval_color(coeffs.head<3>(), Vec3(0, 1, 0), 0);
  CHECK(c0.y() == Catch::Approx(0.0).margin(1e-12));
  CHECK_THROWS(eval_color(coeffs, Vec3(0, 1, 0), 0));  // wrong coefficient count
}

TEST_CASE("quaternion helpers agree with Eigen") {
  Rng rng(14);
  for (int i = 0; i < 30; ++i) {
    const Vec4 a(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    const Vec4 b(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    const Eigen::Quaterniond ea(a[0], a[1], a[2], a[3]), eb(b[0], b[1], b[2], b[3]);
    const Eigen::Quaterniond eab = ea * eb;
    const Vec4 ab = quat_multiply(a, b);
    CHECK((ab - Vec4(eab.w(), eab.x(), eab.y(), eab.z())).norm() < 1e-12);

    const Mat3 R = quat_to_rotmat(quat_normalize(a));
    CHECK((R - ea.normalized().toRotationMatrix()).norm() < 1e-12);
    const Vec4 back = rotmat_to_quat(R);
    // Same rotation up to sign.
    CHECK(std::min((back - quat_normalize(a)).norm(), (back + quat_normalize(a)).norm()) < 1e-9);
  }
}

TEST_CASE("rng is deterministic and uniform() stays in [0,1)") {
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const double x = a.uniform();
    CHECK(x == b.uniform());
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
  // normal() has roughly zero mean / unit variance
  Rng c(8);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = c.normal();
    sum += v;
    sq += v * v;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(21);
  Checkpoint ckpt;
  ckpt.set = gsav::test::random_set(rng, 17);
  ckpt.set.tags[3] = SourceTag::face;
  ckpt.step = 12345;
  ckpt.blobs["decoder"] = {1.0, -2.5, 3.25e-17, 0.0};
  ckpt.blobs["empty"] = {};

  const std::string path = (std::filesystem::temp_directory_path() / "gsav_ckpt_test.bin").string();
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path);

  REQUIRE(back.set.size() == ckpt.set.size());
  CHECK(back.step == ckpt.step);
  CHECK(back.set.sh_degree == ckpt.set.sh_degree);
  for (std::size_t i = 0; i < ckpt.set.size(); ++i) {
    const auto& a = ckpt.set.primitives[i];
    const auto& b = back.set.primitives[i];
    CHECK(a.mean == b.mean);
    CHECK(a.log_scale == b.log_scale);
    CHECK(a.rotation == b.rotation);
    CHECK(a.opacity_logit == b.opacity_logit);
    CHECK(a.opacity_mult == b.opacity_mult);
    CHECK(a.color_coeffs == b.color_coeffs);
    CHECK(ckpt.set.tags[i] == back.set.tags[i]);
  }
  REQUIRE(back.blobs.size() == 2);
  CHECK(back.blobs.at("decoder") == ckpt.blobs.at("decoder"));
  CHECK(back.blobs.at("empty").empty());
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint rejects bad magic, bad version and truncation") {
  namespace fs = std::filesystem;
  Rng rng(22);
  Checkpoint ckpt;
  ckpt.set = gsav::test::random_set(rng, 3);
  const std::string path = (fs::temp_directory_path() / "gsav_ckpt_neg.bin").string();
  save_checkpoint(path, ckpt);

  auto mutate = [&](std::size_t offset, char value) {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(offset));
    f.put(value);
  };

  mutate(0, 'X');
  CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("magic"));
  save_checkpoint(path, ckpt);
  mutate(8, 99);  // version field
  CHECK_THROWS_WITH(load_checkpoint(path), Catch::Matchers::ContainsSubstring("version"));

  save_checkpoint(path, ckpt);
  fs::resize_file(path, fs::file_size(path) / 2);
  CHECK_THROWS(load_checkpoint(path));
  CHECK_THROWS(load_checkpoint((fs::temp_directory_path() / "does_not_exist.bin").string()));
  fs::remove(path);
}
