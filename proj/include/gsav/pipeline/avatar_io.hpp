#pragma once

// Avatar <-> checkpoint mapping. The avatar's structure (maps, binding,
// correspondence) is a deterministic function of the puppet shape and the
// avatar config, so a checkpoint stores only (beta, config, flat parameter
// vector, step) plus the canonical body set for direct inspection.

#include "gsav/anim/template_model.hpp"
#include "gsav/core/checkpoint.hpp"
#include "gsav/pipeline/avatar.hpp"

namespace gsav {

inline Checkpoint avatar_to_checkpoint(const AvatarModel& m, std::uint64_t step) {
  Checkpoint c;
  c.step = step;
  c.set = m.body_canonical;
  const auto& cfg = m.config;
  c.blobs["beta"] = {m.tmpl.beta.data(), m.tmpl.beta.data() + m.tmpl.beta.size()};
  c.blobs["avatar_config"] = {
      static_cast<double>(cfg.body_map_res),  static_cast<double>(cfg.face_map_res),
      static_cast<double>(cfg.densify_factor), static_cast<double>(cfg.n_mlp),
      static_cast<double>(cfg.cm),            static_cast<double>(cfg.pe_bands),
      static_cast<double>(cfg.pose_embed_dim), cfg.head_weight_threshold,
      cfg.head_attenuation,                   cfg.init_opacity,
      cfg.init_scale_mult,                    cfg.enable_face ? 1.0 : 0.0};
  const std::uint64_t hash = m.body_decoder.arch_hash() ^ (m.face_decoder.arch_hash() << 1);
  c.blobs["arch_hash"] = {static_cast<double>(hash >> 32),
                          static_cast<double>(hash & 0xffffffffull)};
  const Eigen::VectorXd params = flatten_avatar_params(m);
  c.blobs["params"] = {params.data(), params.data() + params.size()};
  return c;
}

inline AvatarModel avatar_from_checkpoint(const Checkpoint& c) {
  const auto beta_it = c.blobs.find("beta");
  const auto cfg_it = c.blobs.find("avatar_config");
  const auto par_it = c.blobs.find("params");
  if (beta_it == c.blobs.end() || cfg_it == c.blobs.end() || par_it == c.blobs.end())
    throw std::runtime_error("checkpoint does not contain an avatar (missing blobs)");
  const auto& v = cfg_it->second;
  if (v.size() != 12) throw std::runtime_error("checkpoint: bad avatar_config blob");
  AvatarConfig cfg;
  cfg.body_map_res = static_cast<int>(v[0]);
  cfg.face_map_res = static_cast<int>(v[1]);
  cfg.densify_factor = static_cast<int>(v[2]);
  cfg.n_mlp = static_cast<int>(v[3]);
  cfg.cm = static_cast<int>(v[4]);
  cfg.pe_bands = static_cast<int>(v[5]);
  cfg.pose_embed_dim = static_cast<int>(v[6]);
  cfg.head_weight_threshold = v[7];
  cfg.head_attenuation = v[8];
  cfg.init_opacity = v[9];
  cfg.init_scale_mult = v[10];
  cfg.enable_face = v[11] != 0.0;

  const Eigen::VectorXd beta =
      Eigen::Map<const Eigen::VectorXd>(beta_it->second.data(),
                                        static_cast<Eigen::Index>(beta_it->second.size()));
  Rng rng(0);  // init values are fully overwritten by the stored parameters
  AvatarModel m = build_avatar(build_puppet(beta), cfg, rng);
  const auto hash_it = c.blobs.find("arch_hash");
  if (hash_it != c.blobs.end()) {
    if (hash_it->second.size() != 2)
      throw std::runtime_error("checkpoint: bad arch_hash blob");
    const std::uint64_t stored = (static_cast<std::uint64_t>(hash_it->second[0]) << 32) |
                                 static_cast<std::uint64_t>(hash_it->second[1]);
    const std::uint64_t built = m.body_decoder.arch_hash() ^ (m.face_decoder.arch_hash() << 1);
    if (stored != built)
      throw std::runtime_error("checkpoint: decoder architecture hash mismatch");
  }
  const auto layout = avatar_param_layout(m);
  if (par_it->second.size() != layout.total())
    throw std::runtime_error("checkpoint: parameter vector size mismatch");
  unflatten_avatar_params(m, Eigen::Map<const Eigen::VectorXd>(
                                 par_it->second.data(),
                                 static_cast<Eigen::Index>(par_it->second.size())));
  return m;
}

}  // namespace gsav
