#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "amdn/error.hpp"

namespace amdn {

/// 8-bit grayscale image, row-major.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  std::uint8_t at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }

  bool operator==(const GrayImage&) const = default;
};

namespace detail {

inline void skip_pgm_space(std::istream& in) {
  for (;;) {
    const int c = in.peek();
    if (c == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
    } else {
      return;
    }
  }
}

inline std::size_t read_pgm_int(std::istream& in, const std::string& path) {
  skip_pgm_space(in);
  std::size_t v = 0;
  if (!(in >> v)) throw FormatError(path + ": malformed PGM header");
  return v;
}

}  // namespace detail

/// Reads a binary (P5) PGM with maxval 255.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '5') throw FormatError(path.string() + ": not a binary P5 PGM");
  const std::size_t w = detail::read_pgm_int(in, path.string());
  const std::size_t h = detail::read_pgm_int(in, path.string());
  const std::size_t maxval = detail::read_pgm_int(in, path.string());
  if (maxval != 255) {
    throw FormatError(path.string() + ": maxval " + std::to_string(maxval) + " unsupported (8-bit only)");
  }
  if (w == 0 || h == 0) throw FormatError(path.string() + ": empty image");
  // Exactly one whitespace byte separates the header from the raster.
  const int sep = in.get();
  if (sep != ' ' && sep != '\t' && sep != '\n' && sep != '\r') throw FormatError(path.string() + ": malformed PGM header");
  GrayImage img(w, h);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) throw FormatError(path.string() + ": truncated raster");
  return img;
}

inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace amdn
