// gsav: synthetic data generation, template fitting, training, rendering and
// evaluation for the Gaussian avatar pipeline.
//
// Exit codes: 0 success, 1 validation failure, 2 runtime failure.

#include "gsav/anim/fit.hpp"
#include "gsav/io/config.hpp"
#include "gsav/io/dataset.hpp"
#include "gsav/pipeline/avatar_io.hpp"
#include "gsav/pipeline/synth.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace gsav;

namespace {

Config load_cli_config(const std::string& config_path, const std::string& out_override,
                       std::int64_t seed_override) {
  Config cfg = config_path.empty() ? Config{} : load_config(config_path);
  if (!out_override.empty()) cfg.out = out_override;
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (cfg.out.empty()) throw std::invalid_argument("no output directory (--out or run.out)");
  return cfg;
}

void prepare_out_dir(const Config& cfg, bool force) {
  if (fs::exists(cfg.out) && !fs::is_empty(cfg.out) && !force)
    throw std::invalid_argument("output directory " + cfg.out +
                                " is not empty (use --force to overwrite)");
  fs::create_directories(cfg.out);
  save_config(cfg, fs::path(cfg.out) / "config.ini");
}

std::vector<int> parse_views(const std::string& spec, int view_count) {
  std::vector<int> views;
  if (spec.empty()) {
    for (int v = 0; v < view_count; ++v) views.push_back(v);
    return views;
  }
  std::istringstream is(spec);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    const int v = std::stoi(tok);
    if (v < 0 || v >= view_count)
      throw std::invalid_argument("view index " + tok + " out of range");
    views.push_back(v);
  }
  if (views.empty()) throw std::invalid_argument("empty view list");
  return views;
}

int cmd_synth(const Config& cfg) {
  Rng rng(cfg.seed);
  const TeacherScene teacher = build_teacher_scene(cfg.beta(), cfg.body_map_res, rng);
  const auto cameras = make_circle_cameras(cfg.synth_views, cfg.synth_image_size);
  const auto poses = make_pose_sequence(cfg.synth_frames, teacher.tmpl.joint_count());
  std::cout << "teacher: " << teacher.set.size() << " gaussians, " << cfg.synth_frames
            << " frames x " << cfg.synth_views << " views\n";
  TrainingData data = render_teacher_dataset(teacher, cameras, poses);
  save_dataset(cfg.out, data);

  Checkpoint t;
  t.set = teacher.set;
  save_checkpoint((fs::path(cfg.out) / "teacher.ckpt").string(), t);
  std::cout << "wrote dataset to " << cfg.out << "\n";
  return 0;
}

int cmd_fit(const Config& cfg, const std::string& target_path, double lambda, double tolerance) {
  std::ifstream is(target_path);
  if (!is) throw std::invalid_argument("cannot open target file " + target_path);
  int n = 0, j = 0;
  is >> n >> j;
  Eigen::MatrixXd vertices(n, 3), joints(j, 3);
  for (int i = 0; i < n; ++i) is >> vertices(i, 0) >> vertices(i, 1) >> vertices(i, 2);
  for (int i = 0; i < j; ++i) is >> joints(i, 0) >> joints(i, 1) >> joints(i, 2);
  if (!is) throw std::invalid_argument("malformed target file " + target_path);

  const SkinnedTemplate tmpl = build_puppet(cfg.beta());
  const FitResult fit = fit_template(tmpl, vertices, joints, lambda);
  std::cout << "fit: " << fit.iterations << " iterations, objective " << fit.objective
            << ", vertex RMS " << fit.vertex_rms << " m, joint RMS " << fit.joint_rms << " m\n";

  std::ofstream os(fs::path(cfg.out) / "fit.txt");
  os << std::setprecision(17) << "beta";
  for (Eigen::Index k = 0; k < fit.beta.size(); ++k) os << ' ' << fit.beta[k];
  os << "\nroot_translation " << fit.pose.root_translation.transpose() << "\n";
  for (const auto& aa : fit.pose.joint_rotations) os << "joint " << aa.transpose() << "\n";
  os << "vertex_rms " << fit.vertex_rms << "\njoint_rms " << fit.joint_rms << "\n";
  if (fit.vertex_rms > tolerance) {
    std::cerr << "fit residual " << fit.vertex_rms << " exceeds tolerance " << tolerance << "\n";
    return 2;
  }
  return 0;
}

int cmd_train(const Config& cfg, const std::string& views_spec, int stage_limit) {
  const TrainingData full = load_dataset(cfg.dataset);
  const auto train_views = parse_views(views_spec, full.view_count());

  // Restrict to the requested training views.
  TrainingData data;
  data.poses = full.poses;
  data.background = full.background;
  for (int v : train_views) data.cameras.push_back(full.cameras[static_cast<std::size_t>(v)]);
  for (int f = 0; f < full.frame_count(); ++f) {
    data.images.emplace_back();
    data.masks.emplace_back();
    for (int v : train_views) {
      data.images.back().push_back(full.images[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)]);
      data.masks.back().push_back(full.masks[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)]);
    }
  }

  Rng rng(cfg.seed);
  AvatarModel model = build_avatar(build_puppet(cfg.beta()), cfg.avatar_config(), rng);
  std::cout << "avatar: " << model.body_count() << " body + " << model.face_count()
            << " face gaussians, " << avatar_param_layout(model).total() << " parameters\n";

  TrainSchedule sched = cfg.schedule();
  if (stage_limit < 2) sched.joint_steps = 0;
  if (stage_limit < 3) sched.face_steps = 0;

  const TrainResult result = train(model, data, sched, cfg.loss_weights(), {}, {}, &std::cout);
  save_checkpoint((fs::path(cfg.out) / "model.ckpt").string(),
                  avatar_to_checkpoint(model, static_cast<std::uint64_t>(result.steps_run)));
  std::ofstream curve(fs::path(cfg.out) / "loss_curve.csv");
  write_loss_curve_csv(curve, result.curve);
  std::cout << "wrote checkpoint and loss curve to " << cfg.out << "\n";
  return 0;
}

int cmd_render(const std::string& ckpt_path, const std::string& dataset_dir, int frame, int view,
               const std::string& out_path) {
  const AvatarModel model = avatar_from_checkpoint(load_checkpoint(ckpt_path));
  const TrainingData data = load_dataset(dataset_dir);
  if (frame < 0 || frame >= data.frame_count()) throw std::invalid_argument("bad frame index");
  if (view < 0 || view >= data.view_count()) throw std::invalid_argument("bad view index");
  const auto& cam = data.cameras[static_cast<std::size_t>(view)];
  const RenderOutput out = rasterize(
      pose_avatar(model, data.poses[static_cast<std::size_t>(frame)], cam), cam, data.background);
  write_ppm(out_path, out.color);
  const double p = psnr(out.color, data.images[static_cast<std::size_t>(frame)][static_cast<std::size_t>(view)]);
  std::cout << "rendered frame " << frame << " view " << view << " -> " << out_path << " (PSNR "
            << p << " dB vs ground truth)\n";
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_dir,
             const std::string& views_spec, const std::string& out_path) {
  const AvatarModel model = avatar_from_checkpoint(load_checkpoint(ckpt_path));
  const TrainingData data = load_dataset(dataset_dir);
  const auto views = parse_views(views_spec, data.view_count());
  const MetricsReport report = evaluate(model, data, views);
  report.write_table(std::cout);
  if (!out_path.empty()) {
    std::ofstream os(out_path);
    report.write_csv(os);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian avatar toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_override, views_spec, ckpt_path, dataset_dir, target_path,
      out_path;
  std::int64_t seed_override = -1;
  bool force = false;
  int stage = 3, frame = 0, view = 0;
  double lambda = 1.0, tolerance = 1e-3;

  auto* synth = app.add_subcommand("synth", "generate a synthetic teacher dataset");
  synth->add_option("--config", config_path);
  synth->add_option("--out", out_override);
  synth->add_option("--seed", seed_override);
  synth->add_flag("--force", force);

  auto* fit = app.add_subcommand("fit", "fit puppet shape/pose to target vertices+joints");
  fit->add_option("--config", config_path);
  fit->add_option("--target", target_path)->required();
  fit->add_option("--lambda", lambda);
  fit->add_option("--tolerance", tolerance);
  fit->add_option("--out", out_override);
  fit->add_option("--seed", seed_override);
  fit->add_flag("--force", force);

  auto* train_cmd = app.add_subcommand("train", "train an avatar on a dataset");
  train_cmd->add_option("--config", config_path);
  train_cmd->add_option("--out", out_override);
  train_cmd->add_option("--seed", seed_override);
  train_cmd->add_option("--views", views_spec, "training view indices, comma separated");
  train_cmd->add_option("--stage", stage, "last stage to run (1-3)");
  train_cmd->add_flag("--force", force);

  auto* render = app.add_subcommand("render", "render one frame/view from a checkpoint");
  render->add_option("--checkpoint", ckpt_path)->required();
  render->add_option("--dataset", dataset_dir)->required();
  render->add_option("--frame", frame);
  render->add_option("--view", view);
  render->add_option("--out", out_path)->required();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on dataset views");
  eval_cmd->add_option("--checkpoint", ckpt_path)->required();
  eval_cmd->add_option("--dataset", dataset_dir)->required();
  eval_cmd->add_option("--views", views_spec, "view indices, comma separated");
  eval_cmd->add_option("--out", out_path, "metrics CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const Config cfg = load_cli_config(config_path, out_override, seed_override);
      prepare_out_dir(cfg, force);
      return cmd_synth(cfg);
    }
    if (fit->parsed()) {
      const Config cfg = load_cli_config(config_path, out_override, seed_override);
      prepare_out_dir(cfg, force);
      return cmd_fit(cfg, target_path, lambda, tolerance);
    }
    if (train_cmd->parsed()) {
      const Config cfg = load_cli_config(config_path, out_override, seed_override);
      if (cfg.dataset.empty()) throw std::invalid_argument("no dataset directory (run.dataset)");
      if (stage < 1 || stage > 3) throw std::invalid_argument("--stage must be 1..3");
      prepare_out_dir(cfg, force);
      return cmd_train(cfg, views_spec, stage);
    }
    if (render->parsed()) return cmd_render(ckpt_path, dataset_dir, frame, view, out_path);
    if (eval_cmd->parsed()) return cmd_eval(ckpt_path, dataset_dir, views_spec, out_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
