#include "gsav/io/config.hpp"
#include "gsav/io/dataset.hpp"
#include "gsav/io/image.hpp"
#include "gsav/pipeline/avatar.hpp"
#include "gsav/pipeline/avatar_io.hpp"
#include "gsav/pipeline/synth.hpp"
#include "gsav/train/adam.hpp"
#include "gsav/train/loss.hpp"
#include "gsav/train/metrics.hpp"
#include "gsav/train/trainer.hpp"

#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

using namespace gsav;
namespace fs = std::filesystem;

namespace {

AvatarConfig tiny_avatar_config() {
  AvatarConfig cfg;
  cfg.body_map_res = 14;
  cfg.face_map_res = 7;
  cfg.densify_factor = 2;
  cfg.n_mlp = 1;
  cfg.cm = 1;
  cfg.pe_bands = 2;
  cfg.pose_embed_dim = 8;
  return cfg;
}

TrainingData tiny_dataset(int views = 2, int frames = 2, int size = 32) {
  Rng rng(90);
  const TeacherScene teacher = build_teacher_scene(Eigen::VectorXd::Zero(4), 14, rng);
  const auto cams = make_circle_cameras(views, size);
  const auto poses = make_pose_sequence(frames, teacher.tmpl.joint_count());
  return render_teacher_dataset(teacher, cams, poses);
}

}  // namespace

TEST_CASE("psnr against a closed-form oracle") {
  ImageF a(8, 8, 3, 0.25), b(8, 8, 3, 0.25);
  CHECK(psnr(a, b) == kPsnrCap);
  b.data[0] = 0.75;  // single pixel differs by 0.5
  const double m = 0.25 / (8.0 * 8.0 * 3.0);
  CHECK(psnr(a, b) == Catch::Approx(10.0 * std::log10(1.0 / m)).margin(1e-12));
  CHECK_THROWS(mse(a, ImageF(4, 4, 3)));
}

namespace {

// Independent SSIM implementation: direct nested loops, no separable blur.
double oracle_ssim(const ImageF& a, const ImageF& b) {
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> w(11);
  double wsum = 0;
  for (int i = 0; i < 11; ++i) {
    w[static_cast<std::size_t>(i)] = std::exp(-((i - 5.0) * (i - 5.0)) / (2.0 * 1.5 * 1.5));
    wsum += w[static_cast<std::size_t>(i)];
  }
  for (auto& v : w) v /= wsum;
  double acc = 0;
  for (int c = 0; c < a.channels; ++c) {
    double chan = 0;
    for (int y = 0; y < a.height; ++y)
      for (int x = 0; x < a.width; ++x) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int dy = -5; dy <= 5; ++dy)
          for (int dx = -5; dx <= 5; ++dx) {
            const int yy = std::clamp(y + dy, 0, a.height - 1);
            const int xx = std::clamp(x + dx, 0, a.width - 1);
            const double wt = w[static_cast<std::size_t>(dy + 5)] * w[static_cast<std::size_t>(dx + 5)];
            const double va = a.at(yy, xx, c), vb = b.at(yy, xx, c);
            mu_a += wt * va;
            mu_b += wt * vb;
            aa += wt * va * va;
            bb += wt * vb * vb;
            ab += wt * va * vb;
          }
        const double var_a = aa - mu_a * mu_a, var_b = bb - mu_b * mu_b, cov = ab - mu_a * mu_b;
        chan += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      }
    acc += chan / (a.width * a.height);
  }
  return acc / a.channels;
}

}  // namespace

TEST_CASE("ssim matches an independent implementation to 1e-6") {
  Rng rng(91);
  ImageF a(16, 16, 3), b(16, 16, 3);
  for (auto& v : a.data) v = rng.uniform();
  for (std::size_t i = 0; i < b.data.size(); ++i)
    b.data[i] = std::clamp(a.data[i] + 0.1 * rng.normal(), 0.0, 1.0);
  CHECK(ssim(a, a) == Catch::Approx(1.0).margin(1e-12));
  CHECK(std::abs(ssim(a, b) - oracle_ssim(a, b)) < 1e-6);
  CHECK(ssim(a, b) < 1.0);
}

TEST_CASE("loss matches a closed form and its gradient is exact") {
  const int S = 4;
  RenderOutput out;
  out.color = ImageF(S, S, 3);
  out.alpha = ImageF(S, S, 1);
  ImageF target(S, S, 3), mask(S, S, 1);
  Rng rng(92);
  for (auto& v : out.color.data) v = rng.uniform();
  for (auto& v : out.alpha.data) v = rng.uniform();
  for (auto& v : target.data) v = rng.uniform();
  for (auto& v : mask.data) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

  LossWeights w;
  w.l1 = 0.7;
  const LossResult r = compute_loss(out, target, mask, {}, w);

  double l1c = 0, l1m = 0;
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x) {
      for (int c = 0; c < 3; ++c)
        l1c += mask.at(y, x, 0) * std::abs(out.color.at(y, x, c) - target.at(y, x, c));
      l1m += std::abs(out.alpha.at(y, x, 0) - mask.at(y, x, 0));
    }
  l1c /= S * S * 3;
  l1m /= S * S;
  CHECK(r.l1_color == Catch::Approx(l1c).margin(1e-14));
  CHECK(r.l1_mask == Catch::Approx(l1m).margin(1e-14));
  CHECK(r.total == Catch::Approx(0.7 * (l1c + l1m)).margin(1e-14));

  // Gradient by finite differences (safe: no kink crossing at h=1e-7).
  for (int t = 0; t < 40; ++t) {
    const std::size_t i = rng.uniform_index(out.color.data.size());
    const double x0 = out.color.data[i];
    const double fd = gsav::test::central_diff(
        [&](double v) {
          out.color.data[i] = v;
          const double L = compute_loss(out, target, mask, {}, w).total;
          out.color.data[i] = x0;
          return L;
        },
        x0, 1e-7);
    CHECK(std::abs(r.grad_color.data[i] - fd) < 1e-6);
  }
  // Pixels outside the mask contribute no color gradient.
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      if (mask.at(y, x, 0) == 0.0)
        for (int c = 0; c < 3; ++c) CHECK(r.grad_color.at(y, x, c) == 0.0);
}

TEST_CASE("offset regularizer value and gradient") {
  Rng rng(93);
  std::vector<std::uint8_t> cov(6, 1);
  auto m1 = ResidualAttributeMap::zeros(3, 2, cov);
  auto m2 = ResidualAttributeMap::zeros(3, 2, cov);
  for (auto* m : {&m1, &m2})
    for (Eigen::Index i = 0; i < m->channels.size(); ++i)
      m->channels.data()[i] = rng.uniform(-1, 1);
  const double lambda = 0.37;
  Eigen::MatrixXd d1 = Eigen::MatrixXd::Zero(6, kResChannels);
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(6, kResChannels);
  const double val = offset_regularizer({&m1, &m2}, lambda, {&d1, &d2});

  double acc = 0;
  for (auto* m : {&m1, &m2})
    for (Eigen::Index r = 0; r < 6; ++r)
      for (int c = 0; c < 3; ++c) acc += m->channels(r, kResPosition + c) * m->channels(r, kResPosition + c);
  CHECK(val == Catch::Approx(lambda * acc / 12.0).margin(1e-14));
  for (Eigen::Index r = 0; r < 6; ++r)
    for (int c = 0; c < 3; ++c) {
      CHECK(d1(r, kResPosition + c) ==
            Catch::Approx(2.0 * lambda * m1.channels(r, kResPosition + c) / 12.0).margin(1e-14));
      CHECK(d1(r, kResColor + c) == 0.0);
    }
}

TEST_CASE("adam: cosine decay endpoints and masked entries stay frozen") {
  CHECK(AdamOptimizer::cosine_decay(0, 100) == 1.0);
  CHECK(AdamOptimizer::cosine_decay(50, 100) == Catch::Approx(0.5));
  CHECK(AdamOptimizer::cosine_decay(100, 100) == Catch::Approx(0.0).margin(1e-15));

  Eigen::VectorXd lr = Eigen::VectorXd::Constant(4, 0.1);
  AdamOptimizer opt(lr);
  Eigen::VectorXd p = Eigen::VectorXd::Ones(4);
  Eigen::VectorXd g(4);
  g << 1.0, -2.0, 3.0, 0.5;
  Eigen::VectorXd mask(4);
  mask << 1, 0, 1, 0;
  opt.step(p, g, 1.0, &mask);
  CHECK(p[1] == 1.0);
  CHECK(p[3] == 1.0);
  CHECK(p[0] < 1.0);   // moves against the gradient sign
  CHECK(p[2] < 1.0);
  CHECK(opt.first_moment()[1] == 0.0);
  // First unmasked Adam step has magnitude ~lr.
  CHECK(std::abs(p[0] - (1.0 - 0.1)) < 1e-6);
  CHECK_THROWS(opt.step(p, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("a fresh avatar is transparent: decoders add nothing") {
  const SkinnedTemplate tmpl = build_puppet();
  Rng rng(94);
  AvatarModel model = build_avatar(tmpl, tiny_avatar_config(), rng);
  const Pose pose = make_pose_sequence(5, tmpl.joint_count())[3];
  const CameraModel cam = make_circle_cameras(1, 32)[0];

  AvatarForwardCache cache;
  const GaussianSet fused = pose_avatar(model, pose, cam, &cache);
  // Zero-initialized decoder output layers -> all residual channels are zero.
  CHECK(cache.res_front.channels.cwiseAbs().maxCoeff() == 0.0);
  CHECK(cache.res_back.channels.cwiseAbs().maxCoeff() == 0.0);

  // So the posed avatar equals plain skinning of the canonical body.
  const auto xforms = skinning_transforms(tmpl.skeleton, tmpl.shaped_offsets(), pose);
  const GaussianSet skinned = skin_gaussians(model.body_canonical, model.body_weights, xforms);
  for (std::size_t i = 0; i < skinned.size(); ++i) {
    CHECK((fused.primitives[i].mean - skinned.primitives[i].mean).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((fused.primitives[i].color_coeffs - skinned.primitives[i].color_coeffs)
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
}

TEST_CASE("avatar parameter flatten/unflatten round trip") {
  const SkinnedTemplate tmpl = build_puppet();
  Rng rng(95);
  AvatarModel model = build_avatar(tmpl, tiny_avatar_config(), rng);
  const Eigen::VectorXd p = flatten_avatar_params(model);
  AvatarModel copy = model;
  Eigen::VectorXd q = p;
  for (Eigen::Index i = 0; i < q.size(); ++i) q[i] += 1e-3 * rng.normal();
  unflatten_avatar_params(copy, q);
  CHECK(flatten_avatar_params(copy) == q);
  unflatten_avatar_params(copy, p);
  CHECK(flatten_avatar_params(copy) == p);
  CHECK_THROWS(unflatten_avatar_params(copy, Eigen::VectorXd::Zero(p.size() - 1)));
}

TEST_CASE("full avatar backward matches finite differences on parameters") {
  const SkinnedTemplate tmpl = build_puppet();
  Rng rng(96);
  AvatarConfig acfg = tiny_avatar_config();
  acfg.body_map_res = 10;
  acfg.face_map_res = 5;
  AvatarModel model = build_avatar(tmpl, acfg, rng);
  // Give the decoders non-zero output layers so every path carries gradient.
  Eigen::VectorXd params = flatten_avatar_params(model);
  const auto layout = avatar_param_layout(model);
  for (std::size_t i = layout.body_attr; i < layout.total(); ++i)
    params[static_cast<Eigen::Index>(i)] += 0.05 * rng.normal();
  unflatten_avatar_params(model, params);

  const Pose pose = make_pose_sequence(4, tmpl.joint_count())[1];
  const CameraModel cam = make_circle_cameras(1, 16)[0];
  const Vec3 bg(0.1, 0.1, 0.1);
  const RenderConfig rcfg = gsav::test::smooth_config();

  ImageF wc(cam.width, cam.height, 3), wa(cam.width, cam.height, 1);
  for (auto& v : wc.data) v = rng.uniform(-1, 1);
  for (auto& v : wa.data) v = rng.uniform(-1, 1);

  auto loss = [&](AvatarModel& m) {
    const GaussianSet fused = pose_avatar(m, pose, cam);
    const RenderOutput out = rasterize(fused, cam, bg, rcfg);
    double acc = 0;
    for (std::size_t i = 0; i < out.color.data.size(); ++i) acc += wc.data[i] * out.color.data[i];
    for (std::size_t i = 0; i < out.alpha.data.size(); ++i) acc += wa.data[i] * out.alpha.data[i];
    return acc;
  };

  AvatarForwardCache cache;
  pose_avatar(model, pose, cam, &cache);
  AvatarGrads grads = AvatarGrads::zeros_like(model);
  render_avatar_backward(model, pose, cam, bg, cache, wc, wa, grads, rcfg);
  const Eigen::VectorXd gflat = flatten_avatar_grads(model, grads);

  Rng pick(97);
  int checked = 0;
  for (int t = 0; t < 120; ++t) {
    const Eigen::Index k = static_cast<Eigen::Index>(pick.uniform_index(params.size()));
    const double x0 = params[k];
    const double fd = gsav::test::central_diff(
        [&](double v) {
          Eigen::VectorXd p = params;
          p[k] = v;
          AvatarModel m = model;
          unflatten_avatar_params(m, p);
          return loss(m);
        },
        x0, 1e-5);
    if (std::abs(fd) < 1e-12 && std::abs(gflat[k]) < 1e-12) continue;
    gsav::test::check_grad(gflat[k], fd, 2e-3, 1e-6);
    ++checked;
  }
  CHECK(checked > 30);
}

TEST_CASE("dataset save/load round trip preserves everything") {
  const fs::path dir = fs::temp_directory_path() / "gsav_test_dataset";
  fs::remove_all(dir);
  const TrainingData data = tiny_dataset();
  save_dataset(dir, data);
  const TrainingData loaded = load_dataset(dir);
  REQUIRE(loaded.frame_count() == data.frame_count());
  REQUIRE(loaded.view_count() == data.view_count());
  for (int f = 0; f < data.frame_count(); ++f) {
    CHECK((loaded.poses[static_cast<std::size_t>(f)].flatten() -
           data.poses[static_cast<std::size_t>(f)].flatten())
              .cwiseAbs()
              .maxCoeff() < 1e-12);
    for (int v = 0; v < data.view_count(); ++v) {
      const auto& a = data.images[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)];
      const auto& b = loaded.images[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)];
      double max_err = 0;
      for (std::size_t i = 0; i < a.data.size(); ++i)
        max_err = std::max(max_err, std::abs(a.data[i] - b.data[i]));
      CHECK(max_err <= 0.5 / 255.0 + 1e-12);  // 8-bit quantization only
      const auto& ma = data.masks[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)];
      const auto& mb = loaded.masks[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)];
      double mask_err = 0;
      for (std::size_t i = 0; i < ma.data.size(); ++i)
        mask_err = std::max(mask_err, std::abs(ma.data[i] - mb.data[i]));
      CHECK(mask_err <= 0.5 / 255.0 + 1e-12);
    }
  }
  for (int v = 0; v < data.view_count(); ++v) {
    CHECK(loaded.cameras[static_cast<std::size_t>(v)].fx ==
          Catch::Approx(data.cameras[static_cast<std::size_t>(v)].fx).margin(1e-9));
    CHECK((loaded.cameras[static_cast<std::size_t>(v)].rotation -
           data.cameras[static_cast<std::size_t>(v)].rotation)
              .cwiseAbs()
              .maxCoeff() < 1e-9);
  }

  SECTION("corrupting a file fails the checksum") {
    std::ofstream f(dir / "images" / "f0000_v00.ppm", std::ios::binary | std::ios::app);
    f << "x";
    f.close();
    CHECK_THROWS(load_dataset(dir));
  }
  SECTION("a missing file is reported") {
    fs::remove(dir / "images" / "f0001_v01.ppm");
    CHECK_THROWS(load_dataset(dir));
  }
  fs::remove_all(dir);
}

TEST_CASE("pnm image io round trips 8-bit data") {
  const fs::path p = fs::temp_directory_path() / "gsav_test.ppm";
  ImageF img(5, 4, 3);
  Rng rng(98);
  for (auto& v : img.data) v = rng.uniform();
  write_ppm(p, img);
  const ImageF back = read_pnm(p);
  REQUIRE(back.width == 5);
  REQUIRE(back.height == 4);
  REQUIRE(back.channels == 3);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
  fs::remove(p);
}

TEST_CASE("config round trip and unknown-key rejection") {
  Config c;
  c.dataset = "some/dir";
  c.seed = 1234;
  c.beta2 = -0.25;
  c.body_map_res = 32;
  c.joint_steps = 777;
  c.w_offset = 1e-2;
  c.synth_views = 5;
  std::ostringstream os;
  save_config(c, os);
  std::istringstream is(os.str());
  const Config back = parse_config(is);
  CHECK(back.dataset == "some/dir");
  CHECK(back.seed == 1234);
  CHECK(back.beta2 == Catch::Approx(-0.25));
  CHECK(back.body_map_res == 32);
  CHECK(back.joint_steps == 777);
  CHECK(back.w_offset == Catch::Approx(1e-2));
  CHECK(back.synth_views == 5);

  std::istringstream bad("[schedule]\nnot_a_key = 3\n");
  CHECK_THROWS_WITH(parse_config(bad), Catch::Matchers::ContainsSubstring("not_a_key"));
  std::istringstream bad2("[nosection]\njoint_steps = 3\n");
  CHECK_THROWS(parse_config(bad2));
}

TEST_CASE("avatar checkpoint round trip is bit exact") {
  const SkinnedTemplate tmpl = build_puppet();
  Rng rng(99);
  AvatarModel model = build_avatar(tmpl, tiny_avatar_config(), rng);
  Eigen::VectorXd p = flatten_avatar_params(model);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.01 * rng.normal();
  unflatten_avatar_params(model, p);

  const fs::path path = fs::temp_directory_path() / "gsav_test_avatar.ckpt";
  save_checkpoint(path, avatar_to_checkpoint(model, 42));
  const AvatarModel back = avatar_from_checkpoint(load_checkpoint(path));
  CHECK(flatten_avatar_params(back) == flatten_avatar_params(model));
  CHECK(back.body_canonical.size() == model.body_canonical.size());
  CHECK(back.face_canonical.size() == model.face_canonical.size());
  fs::remove(path);

  // A checkpoint carries the decoder architecture hash; loading it after
  // tampering with the stored architecture must fail.
  Checkpoint tampered = avatar_to_checkpoint(model, 42);
  tampered.blobs["arch_hash"][1] += 1.0;
  CHECK_THROWS_WITH(avatar_from_checkpoint(tampered),
                    Catch::Matchers::ContainsSubstring("architecture hash"));
}

TEST_CASE("a zero-step schedule leaves the model untouched") {
  const SkinnedTemplate tmpl = build_puppet();
  Rng rng(100);
  AvatarModel model = build_avatar(tmpl, tiny_avatar_config(), rng);
  const Eigen::VectorXd before = flatten_avatar_params(model);
  const TrainingData data = tiny_dataset();
  TrainSchedule sched;
  sched.pretrain_steps = sched.joint_steps = sched.face_steps = 0;
  const TrainResult res = train(model, data, sched, LossWeights{});
  CHECK(res.steps_run == 0);
  CHECK(res.curve.empty());
  CHECK(flatten_avatar_params(model) == before);
}

TEST_CASE("training is deterministic and reduces the loss") {
  const SkinnedTemplate tmpl = build_puppet();
  const TrainingData data = tiny_dataset(2, 2, 32);
  TrainSchedule sched;
  sched.pretrain_steps = 2;
  sched.joint_steps = 12;
  sched.face_steps = 2;
  sched.crop_size = 16;
  sched.seed = 7;

  auto run = [&] {
    Rng rng(101);
    AvatarModel model = build_avatar(tmpl, tiny_avatar_config(), rng);
    const TrainResult res = train(model, data, sched, LossWeights{});
    return std::pair{flatten_avatar_params(model), res};
  };
  const auto [p1, r1] = run();
  const auto [p2, r2] = run();
  CHECK(p1 == p2);  // bit-identical
  REQUIRE(r1.curve.size() == r2.curve.size());
  for (std::size_t i = 0; i < r1.curve.size(); ++i)
    CHECK(r1.curve[i].total == r2.curve[i].total);
  CHECK(r1.steps_run == 16);

  // Loss trends down over the joint stage (compare first/last thirds).
  std::vector<double> joint_losses;
  for (const auto& e : r1.curve)
    if (e.stage == 2) joint_losses.push_back(e.total);
  REQUIRE(joint_losses.size() == 12);
  const double head = std::accumulate(joint_losses.begin(), joint_losses.begin() + 4, 0.0);
  const double tail = std::accumulate(joint_losses.end() - 4, joint_losses.end(), 0.0);
  CHECK(tail < head);
}

TEST_CASE("stage 3 only updates the face decoders") {
  const SkinnedTemplate tmpl = build_puppet();
  const TrainingData data = tiny_dataset(1, 1, 32);
  Rng rng(102);
  AvatarModel model = build_avatar(tmpl, tiny_avatar_config(), rng);
  // Non-zero face decoder outputs so face gradients are not trivially zero.
  Eigen::VectorXd p = flatten_avatar_params(model);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.02 * rng.normal();
  unflatten_avatar_params(model, p);
  const Eigen::VectorXd before = flatten_avatar_params(model);

  TrainSchedule sched;
  sched.pretrain_steps = 0;
  sched.joint_steps = 0;
  sched.face_steps = 3;
  sched.crop_size = 16;
  train(model, data, sched, LossWeights{});

  const Eigen::VectorXd after = flatten_avatar_params(model);
  const auto layout = avatar_param_layout(model);
  const std::size_t face_dec_begin = layout.face_dec_off;
  bool face_changed = false;
  for (std::size_t i = 0; i < layout.total(); ++i) {
    if (i < face_dec_begin) {
      CHECK(after[static_cast<Eigen::Index>(i)] == before[static_cast<Eigen::Index>(i)]);
    } else if (after[static_cast<Eigen::Index>(i)] != before[static_cast<Eigen::Index>(i)]) {
      face_changed = true;
    }
  }
  CHECK(face_changed);
}

TEST_CASE("evaluate produces per-view metrics and validates input") {
  const SkinnedTemplate tmpl = build_puppet();
  const TrainingData data = tiny_dataset(2, 2, 32);
  Rng rng(103);
  const AvatarModel model = build_avatar(tmpl, tiny_avatar_config(), rng);
  const MetricsReport report = evaluate(model, data, {0, 1}, 16);
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    CHECK(row.psnr > 0);
    CHECK(row.ssim > -1.0);
    CHECK(row.ssim <= 1.0);
  }
  CHECK_THROWS(evaluate(model, data, {}));
  CHECK_THROWS(evaluate(model, data, {5}));
}

TEST_CASE("training data validation reports all problems at once") {
  TrainingData data = tiny_dataset(2, 2, 16);
  data.images[0].pop_back();                 // missing a view image
  data.masks[1][0] = ImageF(3, 3, 1);        // wrong mask resolution
  try {
    data.validate();
    FAIL("expected validate() to throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("view") != std::string::npos);
    CHECK(msg.find("mask") != std::string::npos);
  }
}
