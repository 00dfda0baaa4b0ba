#pragma once

// Three-stage training loop (decoder pretrain, joint, face-only fine-tune)
// and evaluation over held-out views. Operates on in-memory data; file I/O
// lives in the io layer.

#include "gsav/core/rng.hpp"
#include "gsav/pipeline/avatar.hpp"
#include "gsav/train/adam.hpp"
#include "gsav/train/loss.hpp"
#include "gsav/train/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace gsav {

struct TrainingData {
  std::vector<Pose> poses;            // one per frame
  std::vector<CameraModel> cameras;   // one per view
  std::vector<std::vector<ImageF>> images;  // [frame][view], 3-channel
  std::vector<std::vector<ImageF>> masks;   // [frame][view], 1-channel
  Vec3 background = Vec3::Zero();

  int frame_count() const { return static_cast<int>(poses.size()); }
  int view_count() const { return static_cast<int>(cameras.size()); }

  void validate() const {
    std::ostringstream problems;
    if (poses.empty()) problems << "no frames; ";
    if (cameras.empty()) problems << "no cameras; ";
    if (images.size() != poses.size() || masks.size() != poses.size())
      problems << "frame count mismatch between poses/images/masks; ";
    for (std::size_t f = 0; f < images.size() && f < masks.size(); ++f) {
      if (images[f].size() != cameras.size()) problems << "frame " << f << ": missing images; ";
      if (masks[f].size() != cameras.size()) problems << "frame " << f << ": missing masks; ";
      for (std::size_t v = 0; v < images[f].size() && v < cameras.size(); ++v) {
        const auto& cam = cameras[v];
        if (images[f][v].width != cam.width || images[f][v].height != cam.height)
          problems << "frame " << f << " view " << v << ": image/camera size mismatch; ";
        if (v < masks[f].size() &&
            (masks[f][v].width != cam.width || masks[f][v].height != cam.height ||
             masks[f][v].channels != 1))
          problems << "frame " << f << " view " << v << ": bad mask; ";
      }
    }
    const std::string s = problems.str();
    if (!s.empty()) throw std::invalid_argument("dataset validation: " + s);
  }
};

struct TrainSchedule {
  int pretrain_steps = 500;
  int joint_steps = 5000;
  int face_steps = 500;
  double lr_decoders = 5e-4;
  double lr_attrs = 5e-3;
  std::uint64_t seed = 0;
  int crop_size = 64;  // face supervision crop resolution
};

struct LossCurveEntry {
  int step = 0;
  int stage = 0;  // 1..3
  double total = 0, l1_color = 0, l1_mask = 0, offset_reg = 0, hook_terms = 0;
};

inline void write_loss_curve_csv(std::ostream& os, const std::vector<LossCurveEntry>& curve) {
  os << "step,stage,total,l1_color,l1_mask,offset_reg,hook_terms\n";
  os << std::setprecision(17);
  for (const auto& e : curve)
    os << e.step << ',' << e.stage << ',' << e.total << ',' << e.l1_color << ',' << e.l1_mask
       << ',' << e.offset_reg << ',' << e.hook_terms << '\n';
}

namespace detail {

inline double bilinear(const ImageF& img, double x, double y, int c) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = x - x0, fy = y - y0;
  return (1 - fx) * (1 - fy) * img.at(y0, x0, c) + fx * (1 - fy) * img.at(y0, x1, c) +
         (1 - fx) * fy * img.at(y1, x0, c) + fx * fy * img.at(y1, x1, c);
}

// Resample a source-resolution image onto the crop pixel grid (pixel centers
// map as u_src = (u_crop + 0.5)/scale + x_c - 0.5).
inline ImageF resample_crop(const ImageF& img, const CropSpec& crop) {
  ImageF out(crop.output_size, crop.output_size, img.channels);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x) {
      const double sx = (x + 0.5) / crop.scale + crop.x_c - 0.5;
      const double sy = (y + 0.5) / crop.scale + crop.y_c - 0.5;
      for (int c = 0; c < img.channels; ++c) out.at(y, x, c) = bilinear(img, sx, sy, c);
    }
  return out;
}

// Per-block base learning rates in flat-parameter order.
inline Eigen::VectorXd base_learning_rates(const AvatarModel& m, const TrainSchedule& sched) {
  const auto layout = avatar_param_layout(m);
  Eigen::VectorXd lr(static_cast<Eigen::Index>(layout.total()));
  lr.segment(static_cast<Eigen::Index>(layout.body_attr_off),
             static_cast<Eigen::Index>(layout.body_attr)).setConstant(sched.lr_attrs);
  lr.segment(static_cast<Eigen::Index>(layout.face_attr_off),
             static_cast<Eigen::Index>(layout.face_attr)).setConstant(sched.lr_attrs);
  lr.segment(static_cast<Eigen::Index>(layout.body_dec_off),
             static_cast<Eigen::Index>(layout.body_dec)).setConstant(sched.lr_decoders);
  lr.segment(static_cast<Eigen::Index>(layout.face_dec_off),
             static_cast<Eigen::Index>(layout.face_dec)).setConstant(sched.lr_decoders);
  return lr;
}

inline Eigen::VectorXd block_mask(const AvatarModel& m, bool attrs, bool body_dec, bool face_dec) {
  const auto layout = avatar_param_layout(m);
  Eigen::VectorXd mask = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.total()));
  if (attrs)
    mask.segment(0, static_cast<Eigen::Index>(layout.body_attr + layout.face_attr)).setOnes();
  if (body_dec)
    mask.segment(static_cast<Eigen::Index>(layout.body_dec_off),
                 static_cast<Eigen::Index>(layout.body_dec)).setOnes();
  if (face_dec)
    mask.segment(static_cast<Eigen::Index>(layout.face_dec_off),
                 static_cast<Eigen::Index>(layout.face_dec)).setOnes();
  return mask;
}

// Pretrain objective: decoders reproduce the canonical model, i.e. the mean
// squared residual over all channels is driven to zero across poses/views.
inline double pretrain_step(AvatarModel& m, const Pose& pose, const CameraModel& camera,
                            AvatarGrads& grads) {
  AvatarForwardCache cache;
  pose_avatar(m, pose, camera, &cache);
  std::vector<const ResidualAttributeMap*> maps{&cache.res_front, &cache.res_back};
  if (m.face_count() > 0) {
    maps.push_back(&cache.res_face);
    maps.push_back(&cache.res_face_back);
  }
  std::size_t n = 0;
  for (auto* mp : maps) n += mp->covered.size() * kResChannels;
  double loss = 0;
  Eigen::MatrixXd d_front = (2.0 / n) * cache.res_front.channels;
  Eigen::MatrixXd d_back = (2.0 / n) * cache.res_back.channels;
  for (auto* mp : maps) loss += mp->channels.squaredNorm() / static_cast<double>(n);
  decode_body_backward(m.body_decoder, cache.body_front, d_front, grads.body_decoder);
  decode_body_backward(m.body_decoder, cache.body_back, d_back, grads.body_decoder);
  if (m.face_count() > 0) {
    Eigen::MatrixXd d_face = (2.0 / n) * cache.res_face.channels;
    Eigen::MatrixXd d_face_back = (2.0 / n) * cache.res_face_back.channels;
    decode_face_backward(m.face_decoder, cache.face, d_face, grads.face_decoder);
    decode_face_backward(m.face_decoder, cache.face_back, d_face_back, grads.face_decoder);
  }
  return loss;
}

}  // namespace detail

struct TrainResult {
  std::vector<LossCurveEntry> curve;
  std::int64_t steps_run = 0;
};

// Runs all three stages in place on `model`. `perceptual` attaches to the
// full-image path, `adversarial` to the face-crop path; both may be empty.
inline TrainResult train(AvatarModel& model, const TrainingData& data,
                         const TrainSchedule& sched, const LossWeights& weights,
                         const LossHook& perceptual = {}, const LossHook& adversarial = {},
                         std::ostream* progress = nullptr) {
  data.validate();
  TrainResult result;
  Rng rng(sched.seed);

  Eigen::VectorXd params = flatten_avatar_params(model);
  AdamOptimizer opt(detail::base_learning_rates(model, sched));
  const Eigen::VectorXd mask_dec = detail::block_mask(model, false, true, true);
  const Eigen::VectorXd mask_all = detail::block_mask(model, true, true, true);
  const Eigen::VectorXd mask_face = detail::block_mask(model, false, false, true);

  auto sample_fv = [&](int& frame, int& view) {
    frame = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(data.frame_count())));
    view = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(data.view_count())));
  };

  int global_step = 0;
  auto log_entry = [&](int stage, const LossCurveEntry& e) {
    result.curve.push_back(e);
    if (progress && (global_step % 100 == 0 || global_step == 1))
      (*progress) << "stage " << stage << " step " << global_step << " loss " << e.total << "\n";
  };

  // Stage 1: decoder pretrain (reproduce the canonical model).
  for (int s = 0; s < sched.pretrain_steps; ++s) {
    int frame, view;
    sample_fv(frame, view);
    AvatarGrads grads = AvatarGrads::zeros_like(model);
    const double loss = detail::pretrain_step(model, data.poses[static_cast<std::size_t>(frame)],
                                              data.cameras[static_cast<std::size_t>(view)], grads);
    opt.step(params, flatten_avatar_grads(model, grads),
             AdamOptimizer::cosine_decay(s, sched.pretrain_steps), &mask_dec);
    unflatten_avatar_params(model, params);
    ++global_step;
    log_entry(1, {global_step, 1, loss, 0, 0, 0, 0});
  }

  // Stage 2 (all parameters) and stage 3 (face decoders only).
  const RenderConfig rcfg;
  for (int stage = 2; stage <= 3; ++stage) {
    const int steps = stage == 2 ? sched.joint_steps : sched.face_steps;
    const Eigen::VectorXd& mask = stage == 2 ? mask_all : mask_face;
    for (int s = 0; s < steps; ++s) {
      int frame, view;
      sample_fv(frame, view);
      const Pose& pose = data.poses[static_cast<std::size_t>(frame)];
      const CameraModel& camera = data.cameras[static_cast<std::size_t>(view)];
      const ImageF& target = data.images[static_cast<std::size_t>(frame)][static_cast<std::size_t>(view)];
      const ImageF& mask_img = data.masks[static_cast<std::size_t>(frame)][static_cast<std::size_t>(view)];

      AvatarGrads grads = AvatarGrads::zeros_like(model);
      LossCurveEntry entry{0, stage, 0, 0, 0, 0, 0};

      if (stage == 2) {
        AvatarForwardCache cache;
        const GaussianSet fused = pose_avatar(model, pose, camera, &cache);
        const RenderOutput out = rasterize(fused, camera, data.background, rcfg);
        std::vector<const ResidualAttributeMap*> maps{&cache.res_front, &cache.res_back};
        if (model.face_count() > 0) {
          maps.push_back(&cache.res_face);
          maps.push_back(&cache.res_face_back);
        }
        const LossResult lr = compute_loss(out, target, mask_img, maps, weights, perceptual);
        std::size_t n_res = 0;
        for (auto* mp : maps) n_res += mp->covered.size();
        const double coeff = n_res > 0 ? 2.0 * weights.offset / static_cast<double>(n_res) : 0.0;
        render_avatar_backward(model, pose, camera, data.background, cache, lr.grad_color,
                               lr.grad_alpha, grads, rcfg, nullptr, coeff);
        entry.total += lr.total;
        entry.l1_color += lr.l1_color;
        entry.l1_mask += lr.l1_mask;
        entry.offset_reg += lr.offset_reg;
        entry.hook_terms += weights.perceptual * lr.hook_perceptual;
      }

      // Face-crop supervision (both stages; the only term in stage 3).
      if (model.face_count() > 0) {
        const CropSpec crop = compute_face_crop(model.tmpl, pose, camera, sched.crop_size);
        const CameraModel crop_cam = crop_intrinsics(camera, crop);
        AvatarForwardCache ccache;
        const GaussianSet fused_c = pose_avatar(model, pose, crop_cam, &ccache);
        const RenderOutput out_c = rasterize(fused_c, crop_cam, data.background, rcfg);
        const ImageF tgt_c = detail::resample_crop(target, crop);
        const ImageF msk_c = detail::resample_crop(mask_img, crop);
        LossResult lr = compute_loss(out_c, tgt_c, msk_c, {}, weights, {}, adversarial);
        const double cw = stage == 2 ? weights.face_crop : 1.0;
        for (auto& v : lr.grad_color.data) v *= cw;
        for (auto& v : lr.grad_alpha.data) v *= cw;
        render_avatar_backward(model, pose, crop_cam, data.background, ccache, lr.grad_color,
                               lr.grad_alpha, grads, rcfg);
        entry.total += cw * lr.total;
        entry.l1_color += cw * lr.l1_color;
        entry.l1_mask += cw * lr.l1_mask;
        entry.hook_terms += cw * weights.adversarial * lr.hook_adversarial;
      }

      opt.step(params, flatten_avatar_grads(model, grads),
               AdamOptimizer::cosine_decay(s, steps), &mask);
      unflatten_avatar_params(model, params);
      ++global_step;
      entry.step = global_step;
      log_entry(stage, entry);
    }
  }

  result.steps_run = global_step;
  return result;
}

// --- evaluation ---

struct MetricsRow {
  int view = 0;
  double psnr = 0, ssim = 0, head_psnr = 0, head_ssim = 0;
};

struct MetricsReport {
  std::vector<MetricsRow> rows;
  double psnr = 0, ssim = 0, head_psnr = 0, head_ssim = 0;  // means over rows

  void write_csv(std::ostream& os) const {
    os << "view,psnr,ssim,head_psnr,head_ssim\n" << std::setprecision(17);
    for (const auto& r : rows)
      os << r.view << ',' << r.psnr << ',' << r.ssim << ',' << r.head_psnr << ',' << r.head_ssim
         << '\n';
    os << "mean," << psnr << ',' << ssim << ',' << head_psnr << ',' << head_ssim << '\n';
  }

  void write_table(std::ostream& os) const {
    os << std::fixed << std::setprecision(3);
    os << "view    PSNR     SSIM     head PSNR  head SSIM\n";
    for (const auto& r : rows)
      os << std::setw(4) << r.view << "  " << std::setw(7) << r.psnr << "  " << std::setw(7)
         << r.ssim << "  " << std::setw(9) << r.head_psnr << "  " << std::setw(9) << r.head_ssim
         << '\n';
    os << "mean  " << std::setw(7) << psnr << "  " << std::setw(7) << ssim << "  " << std::setw(9)
       << head_psnr << "  " << std::setw(9) << head_ssim << '\n';
  }
};

// Per-view metrics averaged over all frames; head metrics on the
// compute_face_crop region rendered with crop intrinsics.
inline MetricsReport evaluate(const AvatarModel& model, const TrainingData& data,
                              const std::vector<int>& views, int crop_size = 64,
                              const RenderConfig& rcfg = {}) {
  if (views.empty()) throw std::invalid_argument("evaluate: empty view list");
  data.validate();
  MetricsReport report;
  for (int v : views) {
    if (v < 0 || v >= data.view_count()) throw std::out_of_range("evaluate: bad view index");
    MetricsRow row;
    row.view = v;
    for (int f = 0; f < data.frame_count(); ++f) {
      const Pose& pose = data.poses[static_cast<std::size_t>(f)];
      const CameraModel& cam = data.cameras[static_cast<std::size_t>(v)];
      const ImageF& target = data.images[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)];
      const RenderOutput out = rasterize(pose_avatar(model, pose, cam), cam, data.background, rcfg);
      row.psnr += psnr(out.color, target);
      row.ssim += ssim(out.color, target);

      const CropSpec crop = compute_face_crop(model.tmpl, pose, cam, crop_size);
      const CameraModel crop_cam = crop_intrinsics(cam, crop);
      const RenderOutput out_c =
          rasterize(pose_avatar(model, pose, crop_cam), crop_cam, data.background, rcfg);
      const ImageF tgt_c = detail::resample_crop(target, crop);
      row.head_psnr += psnr(out_c.color, tgt_c);
      row.head_ssim += ssim(out_c.color, tgt_c);
    }
    const double inv = 1.0 / data.frame_count();
    row.psnr *= inv;
    row.ssim *= inv;
    row.head_psnr *= inv;
    row.head_ssim *= inv;
    report.rows.push_back(row);
    report.psnr += row.psnr;
    report.ssim += row.ssim;
    report.head_psnr += row.head_psnr;
    report.head_ssim += row.head_ssim;
  }
  const double inv = 1.0 / static_cast<double>(report.rows.size());
  report.psnr *= inv;
  report.ssim *= inv;
  report.head_psnr *= inv;
  report.head_ssim *= inv;
  return report;
}

}  // namespace gsav
