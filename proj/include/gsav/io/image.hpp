#pragma once

// Binary PPM (P6) / PGM (P5) 8-bit image I/O for ImageF in [0,1].

#include "gsav/render/image.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace gsav {

namespace detail {

inline int read_pnm_token(std::istream& is) {
  // Skips whitespace and '#' comments.
  for (;;) {
    int ch = is.peek();
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  int v;
  if (!(is >> v)) throw std::runtime_error("pnm: malformed header");
  return v;
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

inline void write_ppm(const std::string& path, const ImageF& img) {
  if (img.channels != 3) throw std::invalid_argument("write_ppm: 3 channels required");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_ppm: cannot open " + path);
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.data) os.put(static_cast<char>(detail::to_byte(v)));
  if (!os) throw std::runtime_error("write_ppm: write failed for " + path);
}

inline void write_pgm(const std::string& path, const ImageF& img) {
  if (img.channels != 1) throw std::invalid_argument("write_pgm: 1 channel required");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("write_pgm: cannot open " + path);
  os << "P5\n" << img.width << " " << img.height << "\n255\n";
  for (double v : img.data) os.put(static_cast<char>(detail::to_byte(v)));
  if (!os) throw std::runtime_error("write_pgm: write failed for " + path);
}

inline ImageF read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("read_pnm: cannot open " + path);
  std::string magic;
  is >> magic;
  int channels;
  if (magic == "P6")
    channels = 3;
  else if (magic == "P5")
    channels = 1;
  else
    throw std::runtime_error("read_pnm: unsupported magic '" + magic + "' in " + path);
  const int w = detail::read_pnm_token(is);
  const int h = detail::read_pnm_token(is);
  const int maxval = detail::read_pnm_token(is);
  if (maxval != 255) throw std::runtime_error("read_pnm: only 8-bit files supported: " + path);
  is.get();  // single whitespace after maxval
  ImageF img(w, h, channels);
  std::vector<char> buf(img.data.size());
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!is) throw std::runtime_error("read_pnm: truncated pixel data in " + path);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    img.data[i] = static_cast<double>(static_cast<std::uint8_t>(buf[i])) / 255.0;
  return img;
}

}  // namespace gsav
