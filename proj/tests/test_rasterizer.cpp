#include "gsav/render/rasterizer.hpp"

#include "oracle_raster.hpp"
#include "test_util.hpp"

using namespace gsav;
using gsav::test::check_grad;
using gsav::test::oracle_render;
using gsav::test::random_set;
using gsav::test::smooth_config;
using gsav::test::test_camera;

TEST_CASE("camera validate rejects bad rotation and focal lengths") {
  CameraModel cam = test_camera();
  CHECK_NOTHROW(cam.validate());
  cam.rotation(0, 0) = 2.0;
  CHECK_THROWS(cam.validate());
  cam = test_camera();
  cam.fx = -1;
  CHECK_THROWS(cam.validate());
}

TEST_CASE("projection jacobian matches finite differences") {
  for (const auto mode : {CameraMode::perspective, CameraMode::orthographic}) {
    CameraModel cam = test_camera();
    cam.mode = mode;
    Rng rng(31);
    for (int trial = 0; trial < 25; ++trial) {
      const Vec3 pc(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(1.0, 4.0));
      const auto J = cam.projection_jacobian(pc);
      for (int k = 0; k < 3; ++k) {
        for (int r = 0; r < 2; ++r) {
          const double fd = gsav::test::central_diff(
              [&](double v) {
                Vec3 p = pc;
                p[k] = v;
                return cam.project_cam(p)[r];
              },
              pc[k], 1e-6);
          check_grad(J(r, k), fd, 1e-6, 1e-9);
        }
      }
    }
  }
}

TEST_CASE("empty scene renders the background with zero alpha") {
  GaussianSet set;
  set.sh_degree = 1;
  const CameraModel cam = test_camera(8);
  const Vec3 bg(0.2, 0.4, 0.6);
  const auto out = rasterize(set, cam, bg);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      CHECK(out.color.at(y, x, 0) == Catch::Approx(0.2));
      CHECK(out.color.at(y, x, 2) == Catch::Approx(0.6));
      CHECK(out.alpha.at(y, x) == 0.0);
    }
}

TEST_CASE("primitives behind the camera are culled") {
  Rng rng(32);
  GaussianSet set = random_set(rng, 1);
  set.primitives[0].mean = Vec3(0, 0, -2.0);
  const auto out = rasterize(set, test_camera(16), Vec3::Zero());
  for (double v : out.alpha.data) CHECK(v == 0.0);
}

TEST_CASE("single gaussian: center pixel alpha equals clamped opacity") {
  GaussianSet set;
  set.sh_degree = 0;
  GaussianPrimitive g;
  const CameraModel cam = test_camera(33);  // odd size: center pixel at 16.5 px
  g.mean = Vec3((16.5 - cam.cx) * 2.0 / cam.fx, (16.5 - cam.cy) * 2.0 / cam.fy, 2.0);
  g.log_scale = Vec3::Constant(std::log(0.08));
  g.opacity_logit = logit(0.6);
  g.color_coeffs = Eigen::VectorXd::Zero(3);
  g.color_coeffs[0] = 0.8 / kSH0;
  set.push_back(g, SourceTag::body);
  const auto out = rasterize(set, cam, Vec3::Zero());
  CHECK(out.alpha.at(16, 16) == Catch::Approx(0.6).margin(1e-9));
  CHECK(out.color.at(16, 16, 0) == Catch::Approx(0.6 * 0.8).margin(1e-9));
}

TEST_CASE("tiled renderer equals the brute-force oracle") {
  Rng rng(33);
  for (int scene = 0; scene < 10; ++scene) {
    const int n = 1 + static_cast<int>(rng.uniform_index(60));
    GaussianSet set = random_set(rng, n);
    CameraModel cam = test_camera(24 + 8 * static_cast<int>(rng.uniform_index(3)));
    const Vec3 bg(rng.uniform(), rng.uniform(), rng.uniform());
    const auto tiled = rasterize(set, cam, bg);
    const auto ref = oracle_render(set, cam, bg);
    double max_err = 0;
    for (std::size_t i = 0; i < tiled.color.data.size(); ++i)
      max_err = std::max(max_err, std::abs(tiled.color.data[i] - ref.color.data[i]));
    for (std::size_t i = 0; i < tiled.alpha.data.size(); ++i)
      max_err = std::max(max_err, std::abs(tiled.alpha.data[i] - ref.alpha.data[i]));
    INFO("scene " << scene << " n " << n);
    CHECK(max_err < 1e-5);
  }
}

TEST_CASE("depth ordering: nearer gaussian dominates the composite") {
  GaussianSet set;
  set.sh_degree = 0;
  auto make = [&](double z, double red) {
    GaussianPrimitive g;
    g.mean = Vec3(0, 0, z);
    g.log_scale = Vec3::Constant(std::log(0.2));
    g.opacity_logit = logit(0.95);
    g.color_coeffs = Eigen::VectorXd::Zero(3);
    g.color_coeffs[0] = red / kSH0;
    set.push_back(g, SourceTag::body);
  };
  make(3.0, 0.8);  // far, bright — pushed first
  make(1.5, 0.1);  // near, dark
  const CameraModel cam = test_camera(16);
  const auto out = rasterize(set, cam, Vec3::Zero());
  // Near-dark occludes far-bright: the center stays dark.
  CHECK(out.color.at(8, 8, 0) < 0.2);
}

// Scalar probe loss: fixed random weights over color and alpha images.
namespace {
double probe_loss(const GaussianSet& set, const CameraModel& cam, const Vec3& bg,
                  const RenderConfig& cfg, const ImageF& wc, const ImageF& wa) {
  const auto out = rasterize(set, cam, bg, cfg);
  double acc = 0;
  for (std::size_t i = 0; i < out.color.data.size(); ++i) acc += wc.data[i] * out.color.data[i];
  for (std::size_t i = 0; i < out.alpha.data.size(); ++i) acc += wa.data[i] * out.alpha.data[i];
  return acc;
}
}  // namespace

TEST_CASE("rasterize_backward matches finite differences") {
  Rng rng(34);
  const CameraModel cam = test_camera(16);
  const Vec3 bg(0.1, 0.2, 0.3);
  const RenderConfig cfg = smooth_config();
  GaussianSet set = random_set(rng, 6);

  ImageF wc(cam.width, cam.height, 3), wa(cam.width, cam.height, 1);
  for (auto& v : wc.data) v = rng.uniform(-1, 1);
  for (auto& v : wa.data) v = rng.uniform(-1, 1);

  const auto grads = rasterize_backward(set, cam, bg, wc, wa, cfg);

  int checked = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    auto fd_param = [&](double* slot, double analytic, double h) {
      const double x0 = *slot;
      const double fd = gsav::test::central_diff(
          [&](double v) {
            *slot = v;
            const double L = probe_loss(set, cam, bg, cfg, wc, wa);
            *slot = x0;
            return L;
          },
          x0, h);
      check_grad(analytic, fd, 2e-4, 1e-7);
      ++checked;
    };
    auto& g = set.primitives[i];
    for (int k = 0; k < 3; ++k) fd_param(&g.mean[k], grads.d_mean[i][k], 1e-6);
    for (int k = 0; k < 3; ++k) fd_param(&g.log_scale[k], grads.d_log_scale[i][k], 1e-6);
    for (int k = 0; k < 4; ++k) fd_param(&g.rotation[k], grads.d_rotation[i][k], 1e-6);
    fd_param(&g.opacity_logit, grads.d_opacity_logit[i], 1e-6);
    for (Eigen::Index k = 0; k < g.color_coeffs.size(); ++k)
      fd_param(&g.color_coeffs[k], grads.d_color_coeffs[i][k], 1e-6);
  }
  CHECK(checked == 6 * (3 + 3 + 4 + 1 + 12));
}

TEST_CASE("backward works with the orthographic camera") {
  Rng rng(35);
  CameraModel cam = test_camera(12);
  cam.mode = CameraMode::orthographic;
  cam.fx = cam.fy = 12.0;  // pixels per meter
  GaussianSet set = random_set(rng, 4);
  for (auto& g : set.primitives) g.mean.head<2>() *= 0.4;
  const RenderConfig cfg = smooth_config();

  ImageF wc(cam.width, cam.height, 3), wa(cam.width, cam.height, 1);
  for (auto& v : wc.data) v = rng.uniform(-1, 1);
  for (auto& v : wa.data) v = rng.uniform(-1, 1);
  const auto grads = rasterize_backward(set, cam, Vec3(0.05, 0.05, 0.05), wc, wa, cfg);

  Rng pick(36);
  for (int t = 0; t < 30; ++t) {
    const std::size_t i = pick.uniform_index(set.size());
    const int k = static_cast<int>(pick.uniform_index(3));
    auto& g = set.primitives[i];
    const double x0 = g.mean[k];
    const double fd = gsav::test::central_diff(
        [&](double v) {
          g.mean[k] = v;
          const double L = probe_loss(set, cam, Vec3(0.05, 0.05, 0.05), cfg, wc, wa);
          g.mean[k] = x0;
          return L;
        },
        x0, 1e-6);
    check_grad(grads.d_mean[i][k], fd, 2e-4, 1e-7);
  }
}
