#pragma once

// Dense optical flow: an in-repo Horn-Schunck solver plus Middlebury .flo I/O.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "amdn/error.hpp"
#include "amdn/image.hpp"
#include "amdn/linalg.hpp"

namespace amdn {

/// Per-pixel displacement in pixels/frame. `u` and `v` are height x width.
struct FlowField {
  std::size_t width = 0;
  std::size_t height = 0;
  Matrix u;
  Matrix v;

  FlowField() = default;
  FlowField(std::size_t w, std::size_t h) : width(w), height(h), u(h, w), v(h, w) {}
  FlowField(Matrix u_, Matrix v_) : width(u_.cols()), height(u_.rows()), u(std::move(u_)), v(std::move(v_)) {
    if (v.rows() != height || v.cols() != width) throw ShapeError("FlowField: u and v differ in shape");
  }

  bool operator==(const FlowField&) const = default;
};

enum class FlowBoundary { Replicate, Wrap };

struct HornSchunckOptions {
  double alpha = 1.0;
  int iters = 200;
  FlowBoundary boundary = FlowBoundary::Replicate;
};

namespace detail {

class FlowGrid {
 public:
  FlowGrid(std::size_t w, std::size_t h, FlowBoundary b) : w_(w), h_(h), b_(b) {}

  /// Index of (x+dx, y+dy); nullopt past the border in replicate mode.
  std::optional<std::size_t> neighbor(std::size_t x, std::size_t y, int dx, int dy) const {
    const long nx = static_cast<long>(x) + dx;
    const long ny = static_cast<long>(y) + dy;
    if (b_ == FlowBoundary::Wrap) {
      const long W = static_cast<long>(w_), H = static_cast<long>(h_);
      const std::size_t idx = static_cast<std::size_t>(((ny % H) + H) % H) * w_ + static_cast<std::size_t>(((nx % W) + W) % W);
      if (idx == y * w_ + x) return std::nullopt;
      return idx;
    }
    if (nx < 0 || ny < 0 || nx >= static_cast<long>(w_) || ny >= static_cast<long>(h_)) return std::nullopt;
    return static_cast<std::size_t>(ny) * w_ + static_cast<std::size_t>(nx);
  }

  /// Pixel lookup for derivative stencils: clamp (replicate) or wrap.
  double sample(const GrayImage& img, long x, long y) const {
    const long W = static_cast<long>(w_), H = static_cast<long>(h_);
    if (b_ == FlowBoundary::Wrap) {
      x = ((x % W) + W) % W;
      y = ((y % H) + H) % H;
    } else {
      x = std::clamp(x, 0L, W - 1);
      y = std::clamp(y, 0L, H - 1);
    }
    return img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  }

 private:
  std::size_t w_, h_;
  FlowBoundary b_;
};

struct FlowDerivatives {
  std::vector<double> ix, iy, it;
};

inline FlowDerivatives flow_derivatives(const GrayImage& prev, const GrayImage& next, const FlowGrid& grid) {
  const std::size_t n = prev.width * prev.height;
  FlowDerivatives d{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t y = 0; y < prev.height; ++y) {
    for (std::size_t x = 0; x < prev.width; ++x) {
      const long lx = static_cast<long>(x), ly = static_cast<long>(y);
      const std::size_t i = y * prev.width + x;
      // Central differences averaged over both frames.
      d.ix[i] = 0.25 * (grid.sample(prev, lx + 1, ly) - grid.sample(prev, lx - 1, ly) +
                        grid.sample(next, lx + 1, ly) - grid.sample(next, lx - 1, ly));
      d.iy[i] = 0.25 * (grid.sample(prev, lx, ly + 1) - grid.sample(prev, lx, ly - 1) +
                        grid.sample(next, lx, ly + 1) - grid.sample(next, lx, ly - 1));
      d.it[i] = static_cast<double>(next.pixels[i]) - static_cast<double>(prev.pixels[i]);
    }
  }
  return d;
}

inline double flow_energy(const FlowDerivatives& d, std::span<const double> u, std::span<const double> v,
                          std::size_t w, std::size_t h, const FlowGrid& grid, double alpha) {
  double data = 0.0, smooth = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      const double r = d.ix[i] * u[i] + d.iy[i] * v[i] + d.it[i];
      data += r * r;
      for (auto [dx, dy] : {std::pair{1, 0}, std::pair{0, 1}}) {
        if (auto j = grid.neighbor(x, y, dx, dy)) {
          const double du = u[i] - u[*j], dv = v[i] - v[*j];
          smooth += du * du + dv * dv;
        }
      }
    }
  }
  return data + alpha * alpha * smooth;
}

}  // namespace detail

/// Horn-Schunck energy of a candidate field:
/// sum (Ix u + Iy v + It)^2 + alpha^2 * sum over 4-neighbour edges of |grad|^2.
inline double horn_schunck_energy(const GrayImage& prev, const GrayImage& next, const FlowField& flow,
                                  const HornSchunckOptions& opts = {}) {
  detail::FlowGrid grid(prev.width, prev.height, opts.boundary);
  const auto d = detail::flow_derivatives(prev, next, grid);
  return detail::flow_energy(d, flow.u.data(), flow.v.data(), prev.width, prev.height, grid, opts.alpha);
}

/// Dense flow from `prev` to `next`. Each iteration visits the two
/// checkerboard colours in turn and sets every pixel to the exact minimiser
/// of the energy with its neighbours held fixed, which is the classic
/// Horn-Schunck update and makes the energy non-increasing. If
/// `energy_trace` is given it receives the initial energy followed by the
/// energy after every iteration.
inline FlowField horn_schunck(const GrayImage& prev, const GrayImage& next, const HornSchunckOptions& opts = {},
                              std::vector<double>* energy_trace = nullptr) {
  if (prev.width != next.width || prev.height != next.height) throw ShapeError("horn_schunck: frame size mismatch");
  if (!(opts.alpha > 0.0)) throw DomainError("horn_schunck: alpha must be positive");
  if (opts.iters < 1) throw DomainError("horn_schunck: iters must be >= 1");

  const std::size_t w = prev.width, h = prev.height;
  detail::FlowGrid grid(w, h, opts.boundary);
  const auto d = detail::flow_derivatives(prev, next, grid);
  const double a2 = opts.alpha * opts.alpha;

  // Neighbour lists are fixed; precompute them once.
  std::vector<std::array<std::size_t, 4>> nbr(w * h);
  std::vector<std::uint8_t> nbr_count(w * h, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t i = y * w + x;
      for (auto [dx, dy] : {std::pair{1, 0}, std::pair{-1, 0}, std::pair{0, 1}, std::pair{0, -1}}) {
        if (auto j = grid.neighbor(x, y, dx, dy)) nbr[i][nbr_count[i]++] = *j;
      }
    }
  }

  std::vector<double> u(w * h, 0.0), v(w * h, 0.0);
  if (energy_trace) {
    energy_trace->clear();
    energy_trace->push_back(detail::flow_energy(d, u, v, w, h, grid, opts.alpha));
  }
  for (int it = 0; it < opts.iters; ++it) {
    for (std::size_t color = 0; color < 2; ++color) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = (y + color) % 2; x < w; x += 2) {
          const std::size_t i = y * w + x;
          const std::size_t n = nbr_count[i];
          if (n == 0) continue;
          double ubar = 0.0, vbar = 0.0;
          for (std::size_t k = 0; k < n; ++k) {
            ubar += u[nbr[i][k]];
            vbar += v[nbr[i][k]];
          }
          ubar /= static_cast<double>(n);
          vbar /= static_cast<double>(n);
          const double ix = d.ix[i], iy = d.iy[i];
          const double num = ix * ubar + iy * vbar + d.it[i];
          const double den = a2 * static_cast<double>(n) + ix * ix + iy * iy;
          u[i] = ubar - ix * num / den;
          v[i] = vbar - iy * num / den;
        }
      }
    }
    if (energy_trace) energy_trace->push_back(detail::flow_energy(d, u, v, w, h, grid, opts.alpha));
  }
  return FlowField(Matrix(h, w, std::move(u)), Matrix(h, w, std::move(v)));
}

/// Flow for every frame of a clip: frame t pairs with t+1 and the final
/// frame reuses the last computed field.
inline std::vector<FlowField> sequence_flow(const std::vector<GrayImage>& frames, const HornSchunckOptions& opts = {}) {
  if (frames.size() < 2) throw DomainError("sequence_flow: need at least two frames");
  std::vector<FlowField> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t + 1 < frames.size(); ++t) out.push_back(horn_schunck(frames[t], frames[t + 1], opts));
  out.push_back(out.back());
  return out;
}

inline constexpr float kFloMagic = 202021.25f;

namespace detail {

inline std::uint32_t to_little_endian(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((x & 0xffU) << 24) | ((x & 0xff00U) << 8) | ((x >> 8) & 0xff00U) | (x >> 24);
  }
  return x;
}

inline void put_u32(std::ostream& out, std::uint32_t x) {
  x = to_little_endian(x);
  out.write(reinterpret_cast<const char*>(&x), 4);
}

inline bool get_u32(std::istream& in, std::uint32_t& x) {
  if (!in.read(reinterpret_cast<char*>(&x), 4)) return false;
  x = to_little_endian(x);
  return true;
}

}  // namespace detail

/// Reads a Middlebury .flo file (little-endian float32 payload, widened).
inline FlowField load_flo(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint32_t magic_bits = 0, w = 0, h = 0;
  if (!detail::get_u32(in, magic_bits)) throw FormatError(path.string() + ": truncated header");
  if (std::bit_cast<float>(magic_bits) != kFloMagic) throw FormatError(path.string() + ": bad .flo magic");
  if (!detail::get_u32(in, w) || !detail::get_u32(in, h)) throw FormatError(path.string() + ": truncated header");
  const auto width = static_cast<std::int32_t>(w), height = static_cast<std::int32_t>(h);
  if (width <= 0 || height <= 0 || width > (1 << 16) || height > (1 << 16)) {
    throw FormatError(path.string() + ": implausible .flo dimensions");
  }
  FlowField flow(static_cast<std::size_t>(width), static_cast<std::size_t>(height));
  for (std::size_t y = 0; y < flow.height; ++y) {
    for (std::size_t x = 0; x < flow.width; ++x) {
      std::uint32_t ub = 0, vb = 0;
      if (!detail::get_u32(in, ub) || !detail::get_u32(in, vb)) throw FormatError(path.string() + ": truncated payload");
      const float fu = std::bit_cast<float>(ub), fv = std::bit_cast<float>(vb);
      if (!std::isfinite(fu) || !std::isfinite(fv)) throw FormatError(path.string() + ": non-finite flow value");
      flow.u(y, x) = fu;
      flow.v(y, x) = fv;
    }
  }
  return flow;
}

/// Writes a Middlebury .flo file; values are narrowed to float32.
inline void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  detail::put_u32(out, std::bit_cast<std::uint32_t>(kFloMagic));
  detail::put_u32(out, static_cast<std::uint32_t>(flow.width));
  detail::put_u32(out, static_cast<std::uint32_t>(flow.height));
  for (std::size_t y = 0; y < flow.height; ++y) {
    for (std::size_t x = 0; x < flow.width; ++x) {
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.u(y, x))));
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(flow.v(y, x))));
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace amdn
