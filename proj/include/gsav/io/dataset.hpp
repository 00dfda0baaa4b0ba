#pragma once

// On-disk dataset layout:
//   <dir>/images/f####_v##.ppm   8-bit RGB ground truth
//   <dir>/masks/f####_v##.pgm    8-bit gray masks
//   <dir>/cameras.txt            one view per line
//   <dir>/poses.txt              one frame per line
//   <dir>/manifest.txt           metadata + FNV-1a checksums of every file
//
// cameras.txt line: fx fy cx cy width height mode(persp|ortho) R[9] t[3]
// poses.txt line:   tx ty tz  then 3 axis-angle values per joint
// manifest.txt:     "gsav-dataset 1", counts, background, then
//                   "<fnv1a64 hex> <relative path>" per file.

#include "gsav/io/image.hpp"
#include "gsav/train/trainer.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace gsav {

inline std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t fnv1a64_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checksum: cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ull;
  char buf[1 << 16];
  while (is.read(buf, sizeof(buf)) || is.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(is.gcount()), h);
  return h;
}

namespace detail {

inline std::string frame_view_name(int frame, int view, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "f%04d_v%02d.%s", frame, view, ext);
  return buf;
}

}  // namespace detail

inline void write_cameras_txt(const std::filesystem::path& path,
                              const std::vector<CameraModel>& cameras) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << std::setprecision(17);
  for (const auto& c : cameras) {
    os << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.width << ' ' << c.height
       << ' ' << (c.mode == CameraMode::perspective ? "persp" : "ortho");
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) os << ' ' << c.rotation(r, k);
    for (int k = 0; k < 3; ++k) os << ' ' << c.translation[k];
    os << '\n';
  }
}

inline std::vector<CameraModel> read_cameras_txt(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<CameraModel> cameras;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    CameraModel c;
    std::string mode;
    ls >> c.fx >> c.fy >> c.cx >> c.cy >> c.width >> c.height >> mode;
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) ls >> c.rotation(r, k);
    for (int k = 0; k < 3; ++k) ls >> c.translation[k];
    if (!ls) throw std::runtime_error("cameras.txt: malformed line " +
                                      std::to_string(cameras.size() + 1));
    if (mode == "persp")
      c.mode = CameraMode::perspective;
    else if (mode == "ortho")
      c.mode = CameraMode::orthographic;
    else
      throw std::runtime_error("cameras.txt: unknown mode '" + mode + "'");
    cameras.push_back(c);
  }
  return cameras;
}

inline void write_poses_txt(const std::filesystem::path& path, const std::vector<Pose>& poses) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string());
  os << std::setprecision(17);
  for (const auto& p : poses) {
    os << p.root_translation.x() << ' ' << p.root_translation.y() << ' '
       << p.root_translation.z();
    for (const auto& aa : p.joint_rotations) os << ' ' << aa.x() << ' ' << aa.y() << ' ' << aa.z();
    os << '\n';
  }
}

inline std::vector<Pose> read_poses_txt(const std::filesystem::path& path, int joint_count) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::vector<Pose> poses;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    Pose p = Pose::identity(joint_count);
    ls >> p.root_translation.x() >> p.root_translation.y() >> p.root_translation.z();
    for (auto& aa : p.joint_rotations) ls >> aa.x() >> aa.y() >> aa.z();
    double extra;
    if (!ls || (ls >> extra))
      throw std::runtime_error("poses.txt: line " + std::to_string(poses.size() + 1) +
                               " does not match joint count " + std::to_string(joint_count));
    poses.push_back(p);
  }
  return poses;
}

inline void save_dataset(const std::filesystem::path& dir, const TrainingData& data) {
  namespace fs = std::filesystem;
  data.validate();
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  std::vector<std::string> files;
  for (int f = 0; f < data.frame_count(); ++f)
    for (int v = 0; v < data.view_count(); ++v) {
      const std::string img = "images/" + detail::frame_view_name(f, v, "ppm");
      const std::string msk = "masks/" + detail::frame_view_name(f, v, "pgm");
      write_ppm((dir / img).string(), data.images[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)]);
      write_pgm((dir / msk).string(), data.masks[static_cast<std::size_t>(f)][static_cast<std::size_t>(v)]);
      files.push_back(img);
      files.push_back(msk);
    }
  write_cameras_txt(dir / "cameras.txt", data.cameras);
  write_poses_txt(dir / "poses.txt", data.poses);
  files.emplace_back("cameras.txt");
  files.emplace_back("poses.txt");

  std::ofstream mf(dir / "manifest.txt");
  if (!mf) throw std::runtime_error("cannot open manifest.txt");
  mf << "gsav-dataset 1\n";
  mf << "frames " << data.frame_count() << "\nviews " << data.view_count() << "\njoints "
     << data.poses[0].joint_rotations.size() << "\n";
  mf << std::setprecision(17) << "background " << data.background.x() << ' '
     << data.background.y() << ' ' << data.background.z() << "\n";
  for (const auto& f : files)
    mf << std::hex << std::setw(16) << std::setfill('0') << fnv1a64_file(dir / f) << std::dec
       << std::setfill(' ') << ' ' << f << '\n';
}

// Loads and fully validates a dataset directory; every problem (missing
// file, checksum mismatch, camera mismatch) is collected and reported at
// once.
inline TrainingData load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(dir / "manifest.txt");
  if (!mf) throw std::runtime_error("dataset: missing manifest.txt in " + dir.string());
  std::string magic;
  int version = 0;
  mf >> magic >> version;
  if (magic != "gsav-dataset" || version != 1)
    throw std::runtime_error("dataset: unrecognized manifest header");
  TrainingData data;
  int frames = 0, views = 0, joints = 0;
  std::string key;
  mf >> key >> frames >> key >> views >> key >> joints >> key >> data.background.x() >>
      data.background.y() >> data.background.z();
  if (!mf || frames <= 0 || views <= 0 || joints <= 0)
    throw std::runtime_error("dataset: malformed manifest metadata");

  std::ostringstream problems;
  std::string hash_hex, rel;
  while (mf >> hash_hex >> rel) {
    const fs::path p = dir / rel;
    if (!fs::exists(p)) {
      problems << "missing file " << rel << "; ";
      continue;
    }
    if (fnv1a64_file(p) != std::stoull(hash_hex, nullptr, 16))
      problems << "checksum mismatch " << rel << "; ";
  }
  if (!problems.str().empty()) throw std::runtime_error("dataset: " + problems.str());

  data.cameras = read_cameras_txt(dir / "cameras.txt");
  data.poses = read_poses_txt(dir / "poses.txt", joints);
  if (static_cast<int>(data.cameras.size()) != views)
    throw std::runtime_error("dataset: cameras.txt count does not match manifest");
  if (static_cast<int>(data.poses.size()) != frames)
    throw std::runtime_error("dataset: poses.txt count does not match manifest");
  for (int f = 0; f < frames; ++f) {
    data.images.emplace_back();
    data.masks.emplace_back();
    for (int v = 0; v < views; ++v) {
      data.images.back().push_back(
          read_pnm((dir / "images" / detail::frame_view_name(f, v, "ppm")).string()));
      data.masks.back().push_back(
          read_pnm((dir / "masks" / detail::frame_view_name(f, v, "pgm")).string()));
    }
  }
  data.validate();
  return data;
}

}  // namespace gsav
