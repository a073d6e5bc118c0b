#pragma once

// Synthetic surveillance-like scenes. A fixed textured background is shared
// by every clip; normal activity is a few small dark squares drifting at
// most 1 px/frame. Test clips contain one anomalous interval in which a
// large bright square moves 4-6 px/frame. Output follows the dataset layout
// read by load_sequence / load_ground_truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "amdn/error.hpp"
#include "amdn/image.hpp"
#include "amdn/ingest.hpp"
#include "amdn/linalg.hpp"

namespace amdn {

struct SynthConfig {
  std::size_t train_clips = 4;
  std::size_t test_clips = 4;
  std::size_t frames = 100;
  std::size_t width = 64;
  std::size_t height = 64;
  std::size_t normal_objects = 3;
  double anomaly_rate = 0.3;  ///< fraction of each test clip's frames inside the anomalous interval
  std::uint64_t seed = 7;

  void validate() const {
    if (frames < 2) throw ConfigError("synth: need at least two frames per clip");
    if (width < 24 || height < 24) throw ConfigError("synth: frames must be at least 24x24");
    if (!(anomaly_rate >= 0.0 && anomaly_rate <= 1.0)) throw ConfigError("synth: anomaly_rate must be in [0,1]");
  }
};

struct SynthClip {
  FrameSequence seq;
  GroundTruth gt;
};

namespace detail {

struct Mover {
  double x, y, vx, vy;
  std::size_t size;
  std::uint8_t gray;

  void step(std::size_t w, std::size_t h) {
    x += vx;
    y += vy;
    const double xmax = static_cast<double>(w - size), ymax = static_cast<double>(h - size);
    if (x < 0.0) x = -x, vx = -vx;
    if (x > xmax) x = 2.0 * xmax - x, vx = -vx;
    if (y < 0.0) y = -y, vy = -vy;
    if (y > ymax) y = 2.0 * ymax - y, vy = -vy;
    x = std::clamp(x, 0.0, xmax);
    y = std::clamp(y, 0.0, ymax);
  }

  /// Paints the square; marks covered pixels in `mask` when given.
  void paint(GrayImage& img, GrayImage* mask) const {
    const auto x0 = static_cast<std::size_t>(std::lround(x)), y0 = static_cast<std::size_t>(std::lround(y));
    for (std::size_t yy = y0; yy < std::min(y0 + size, img.height); ++yy)
      for (std::size_t xx = x0; xx < std::min(x0 + size, img.width); ++xx) {
        img.at(xx, yy) = gray;
        if (mask) mask->at(xx, yy) = 255;
      }
  }
};

inline Mover random_mover(Rng& rng, std::size_t w, std::size_t h, std::size_t size, double speed_lo, double speed_hi,
                          std::uint8_t gray) {
  const double angle = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
  const double speed = rng.uniform(speed_lo, speed_hi);
  return {rng.uniform(0.0, static_cast<double>(w - size)), rng.uniform(0.0, static_cast<double>(h - size)),
          speed * std::cos(angle), speed * std::sin(angle), size, gray};
}

}  // namespace detail

/// Static background texture shared by all clips of a dataset.
inline GrayImage synth_background(std::size_t w, std::size_t h, Rng rng) {
  GrayImage bg(w, h);
  const double px = rng.uniform(0.0, 6.28), py = rng.uniform(0.0, 6.28);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double v = 135.0 + 30.0 * std::sin(0.39 * static_cast<double>(x) + px) * std::cos(0.52 * static_cast<double>(y) + py) +
                       rng.uniform(-12.0, 12.0);
      bg.at(x, y) = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
    }
  return bg;
}

/// One clip. `anomalous_frames` frames starting at a random offset carry
/// the anomaly; masks are produced only when `with_masks` is set.
inline SynthClip synth_clip(const std::string& clip_id, const SynthConfig& cfg, const GrayImage& background,
                            std::size_t anomalous_frames, bool with_masks, Rng rng) {
  const std::size_t w = cfg.width, h = cfg.height;
  std::vector<detail::Mover> normals;
  for (std::size_t i = 0; i < cfg.normal_objects; ++i) {
    normals.push_back(detail::random_mover(rng, w, h, 4 + rng.uniform_index(3), 0.3, 1.0, 40));
  }
  const std::size_t start = anomalous_frames == 0 ? cfg.frames : rng.uniform_index(cfg.frames - anomalous_frames + 1);
  auto anomaly = detail::random_mover(rng, w, h, 12, 4.0, 6.0, 230);

  SynthClip clip;
  clip.seq.clip_id = clip_id;
  clip.seq.width = w;
  clip.seq.height = h;
  clip.gt.frame_labels.assign(cfg.frames, 0);
  std::vector<GrayImage> masks;
  for (std::size_t f = 0; f < cfg.frames; ++f) {
    GrayImage img = background;
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>(std::clamp(static_cast<long>(p) + static_cast<long>(rng.uniform_index(5)) - 2, 0L, 255L));
    }
    for (const auto& m : normals) m.paint(img, nullptr);
    GrayImage mask(w, h);
    if (f >= start && f < start + anomalous_frames) {
      anomaly.paint(img, &mask);
      anomaly.step(w, h);
      clip.gt.frame_labels[f] = 1;
    }
    for (auto& m : normals) m.step(w, h);
    clip.seq.frames.push_back(std::move(img));
    masks.push_back(std::move(mask));
  }
  if (with_masks) clip.gt.pixel_masks = std::move(masks);
  return clip;
}

inline void write_clip(const std::filesystem::path& clip_dir, const SynthClip& clip) {
  namespace fs = std::filesystem;
  fs::create_directories(clip_dir / "frames");
  fs::create_directories(clip_dir / "gt");
  for (std::size_t i = 0; i < clip.seq.frames.size(); ++i) write_pgm(clip_dir / "frames" / frame_filename(i), clip.seq.frames[i]);
  std::ofstream labels(clip_dir / "gt" / "frame_labels.csv");
  if (!labels) throw IoError("cannot write " + (clip_dir / "gt" / "frame_labels.csv").string());
  labels << "frame_index,label\n";
  for (std::size_t i = 0; i < clip.gt.frame_labels.size(); ++i) labels << i << ',' << int(clip.gt.frame_labels[i]) << '\n';
  if (clip.gt.pixel_masks) {
    for (std::size_t i = 0; i < clip.gt.pixel_masks->size(); ++i)
      write_pgm(clip_dir / "gt" / mask_filename(i), (*clip.gt.pixel_masks)[i]);
  }
}

inline std::string synth_clip_id(const char* split, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", split, i);
  return buf;
}

/// Writes `<root>/train/<clip>` (anomaly-free) and `<root>/test/<clip>`.
inline void generate_dataset(const std::filesystem::path& root, const SynthConfig& cfg) {
  cfg.validate();
  const Rng master(cfg.seed);
  const GrayImage bg = synth_background(cfg.width, cfg.height, master.fork(0));
  const auto anomalous = static_cast<std::size_t>(std::lround(cfg.anomaly_rate * static_cast<double>(cfg.frames)));
  try {
    std::filesystem::create_directories(root);
  } catch (const std::filesystem::filesystem_error& e) {
    throw IoError(std::string("cannot create output directory: ") + e.what());
  }
  for (std::size_t i = 0; i < cfg.train_clips; ++i) {
    const auto id = synth_clip_id("train", i);
    write_clip(root / "train" / id, synth_clip(id, cfg, bg, 0, false, master.fork(1000 + i)));
  }
  for (std::size_t i = 0; i < cfg.test_clips; ++i) {
    const auto id = synth_clip_id("test", i);
    write_clip(root / "test" / id, synth_clip(id, cfg, bg, anomalous, true, master.fork(2000 + i)));
  }
}

}  // namespace amdn
