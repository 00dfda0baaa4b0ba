#pragma once

// Binary checkpoint: GaussianSet arrays, named float64 parameter blobs and a
// training step counter. Little-endian, bit-exact round trip.
// Layout is documented byte-by-byte in docs/checkpoint_format.md.

#include "gsav/core/gaussian.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace gsav {

inline constexpr char kCheckpointMagic[8] = {'G', 'S', 'A', 'V', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  GaussianSet set;
  std::map<std::string, std::vector<double>> blobs;  // decoder parameters etc.
  std::uint64_t step = 0;
};

namespace detail {

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void write_f64_array(std::ostream& os, const std::vector<double>& a) {
  write_pod<std::uint64_t>(os, a.size());
  os.write(reinterpret_cast<const char*>(a.data()),
           static_cast<std::streamsize>(a.size() * sizeof(double)));
}

inline std::vector<double> read_f64_array(std::istream& is) {
  const auto n = read_pod<std::uint64_t>(is);
  std::vector<double> a(n);
  is.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated array");
  return a;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write(kCheckpointMagic, 8);
  detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  detail::write_pod<std::uint64_t>(os, ckpt.step);

  const GaussianSet& s = ckpt.set;
  detail::write_pod<std::uint64_t>(os, s.size());
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.sh_degree));
  const std::size_t csize = s.size() ? static_cast<std::size_t>(s.primitives[0].color_coeffs.size()) : 0;
  detail::write_pod<std::uint64_t>(os, csize);
  std::vector<double> buf;
  buf.reserve(s.size() * (12 + csize));
  for (const auto& g : s.primitives) {
    if (static_cast<std::size_t>(g.color_coeffs.size()) != csize)
      throw std::runtime_error("checkpoint: inconsistent color coefficient sizes");
    for (int i = 0; i < 3; ++i) buf.push_back(g.mean[i]);
    for (int i = 0; i < 3; ++i) buf.push_back(g.log_scale[i]);
    for (int i = 0; i < 4; ++i) buf.push_back(g.rotation[i]);
    buf.push_back(g.opacity_logit);
    buf.push_back(g.opacity_mult);
    for (Eigen::Index i = 0; i < g.color_coeffs.size(); ++i) buf.push_back(g.color_coeffs[i]);
  }
  detail::write_f64_array(os, buf);
  for (std::size_t i = 0; i < s.size(); ++i)
    detail::write_pod<std::uint8_t>(os, static_cast<std::uint8_t>(s.tags[i]));

  detail::write_pod<std::uint64_t>(os, ckpt.blobs.size());
  for (const auto& [name, data] : ckpt.blobs) {
    detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_f64_array(os, data);
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  save_checkpoint(os, ckpt);
  if (!os) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline Checkpoint load_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic bytes (not a checkpoint file)");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version mismatch: file has " +
                             std::to_string(version) + ", reader supports " +
                             std::to_string(kCheckpointVersion));
  Checkpoint ckpt;
  ckpt.step = detail::read_pod<std::uint64_t>(is);

  const auto count = detail::read_pod<std::uint64_t>(is);
  ckpt.set.sh_degree = static_cast<int>(detail::read_pod<std::uint32_t>(is));
  const auto csize = detail::read_pod<std::uint64_t>(is);
  const auto buf = detail::read_f64_array(is);
  if (buf.size() != count * (12 + csize))
    throw std::runtime_error("checkpoint: gaussian array size mismatch");
  ckpt.set.primitives.resize(count);
  std::size_t k = 0;
  for (auto& g : ckpt.set.primitives) {
    for (int i = 0; i < 3; ++i) g.mean[i] = buf[k++];
    for (int i = 0; i < 3; ++i) g.log_scale[i] = buf[k++];
    for (int i = 0; i < 4; ++i) g.rotation[i] = buf[k++];
    g.opacity_logit = buf[k++];
    g.opacity_mult = buf[k++];
    g.color_coeffs.resize(static_cast<Eigen::Index>(csize));
    for (std::size_t i = 0; i < csize; ++i) g.color_coeffs[static_cast<Eigen::Index>(i)] = buf[k++];
  }
  ckpt.set.tags.resize(count);
  for (auto& t : ckpt.set.tags) t = static_cast<SourceTag>(detail::read_pod<std::uint8_t>(is));

  const auto nblobs = detail::read_pod<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < nblobs; ++i) {
    const auto len = detail::read_pod<std::uint32_t>(is);
    std::string name(len, '\0');
    is.read(name.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated blob name");
    ckpt.blobs[name] = detail::read_f64_array(is);
  }
  return ckpt;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open for read: " + path);
  return load_checkpoint(is);
}

}  // namespace gsav
