#include <gtest/gtest.h>

#include <fstream>

#include "amdn/image.hpp"
#include "amdn/ingest.hpp"
#include "amdn/optflow.hpp"
#include "support.hpp"

using namespace amdn;
using amdn::testing::TempDir;

namespace {

GrayImage ramp(std::size_t w, std::size_t h, int offset = 0) {
  GrayImage img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img.at(x, y) = static_cast<std::uint8_t>((x * 7 + y * 3 + offset) % 256);
  return img;
}

FrameSequence ramp_clip(const std::string& id, std::size_t frames, std::size_t w, std::size_t h) {
  FrameSequence s{id, w, h, {}};
  for (std::size_t f = 0; f < frames; ++f) s.frames.push_back(ramp(w, h, static_cast<int>(f)));
  return s;
}

void write_clip_frames(const std::filesystem::path& dir, const FrameSequence& seq) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < seq.frames.size(); ++i) write_pgm(dir / frame_filename(i), seq.frames[i]);
}

}  // namespace

TEST(Pgm, RoundTrip) {
  TempDir tmp;
  const auto img = ramp(13, 7);
  write_pgm(tmp / "a.pgm", img);
  EXPECT_EQ(read_pgm(tmp / "a.pgm"), img);
}

TEST(Pgm, RejectsTruncatedAndWrongMagic) {
  TempDir tmp;
  {
    std::ofstream(tmp / "bad.pgm", std::ios::binary) << "P2\n2 2\n255\n0 0 0 0\n";
  }
  EXPECT_THROW(read_pgm(tmp / "bad.pgm"), FormatError);
  {
    std::ofstream(tmp / "short.pgm", std::ios::binary) << "P5\n4 4\n255\nab";
  }
  EXPECT_THROW(read_pgm(tmp / "short.pgm"), FormatError);
  EXPECT_THROW(read_pgm(tmp / "missing.pgm"), IoError);
}

TEST(LoadSequence, ReadsClipAndNamesIt) {
  TempDir tmp;
  const auto clip = ramp_clip("x", 4, 20, 16);
  write_clip_frames(tmp / "clip07" / "frames", clip);
  const auto seq = load_sequence(tmp / "clip07" / "frames");
  EXPECT_EQ(seq.clip_id, "clip07");
  EXPECT_EQ(seq.width, 20u);
  EXPECT_EQ(seq.height, 16u);
  ASSERT_EQ(seq.frames.size(), 4u);
  EXPECT_EQ(seq.frames[3], clip.frames[3]);
}

TEST(LoadSequence, LayoutErrors) {
  TempDir tmp;
  EXPECT_THROW(load_sequence(tmp / "nope"), LayoutError);
  std::filesystem::create_directories(tmp / "empty");
  EXPECT_THROW(load_sequence(tmp / "empty"), LayoutError);

  auto clip = ramp_clip("x", 3, 8, 8);
  write_clip_frames(tmp / "gap", clip);
  std::filesystem::rename(tmp / "gap" / frame_filename(2), tmp / "gap" / frame_filename(5));
  EXPECT_THROW(load_sequence(tmp / "gap"), LayoutError);

  write_clip_frames(tmp / "single", ramp_clip("x", 1, 8, 8));
  EXPECT_THROW(load_sequence(tmp / "single"), LayoutError);

  write_clip_frames(tmp / "mixed", clip);
  write_pgm(tmp / "mixed" / frame_filename(1), ramp(9, 8));
  EXPECT_THROW(load_sequence(tmp / "mixed"), FormatError);
}

TEST(GroundTruth, LabelsAndMasks) {
  TempDir tmp;
  const auto dir = tmp / "gt";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "frame_labels.csv") << "frame_index,label\n0,0\n2,1\n1,1\n";
  GrayImage m(4, 4);
  m.at(1, 1) = 255;
  m.at(2, 2) = 100;
  for (std::size_t i = 0; i < 3; ++i) write_pgm(dir / mask_filename(i), m);
  const auto gt = load_ground_truth(dir, 3);
  EXPECT_EQ(gt.frame_labels, (std::vector<std::uint8_t>{0, 1, 1}));
  ASSERT_TRUE(gt.pixel_masks.has_value());
  EXPECT_EQ((*gt.pixel_masks)[0].at(1, 1), 1);
  EXPECT_EQ((*gt.pixel_masks)[0].at(2, 2), 0);  // below the binarization level
}

TEST(GroundTruth, MalformedLabelFiles) {
  TempDir tmp;
  auto check = [&](const std::string& body, std::size_t n) {
    std::filesystem::create_directories(tmp / "gt");
    std::ofstream(tmp / "gt" / "frame_labels.csv") << body;
    return load_ground_truth(tmp / "gt", n);
  };
  EXPECT_THROW(check("0,0\n1,2\n", 2), FormatError);
  EXPECT_THROW(check("0,0\n0,1\n", 2), FormatError);
  EXPECT_THROW(check("0,0\n", 2), LayoutError);
  EXPECT_THROW(check("0;0\n1;0\n", 2), FormatError);
  EXPECT_THROW(check("0,0\n5,0\n", 2), FormatError);
  EXPECT_THROW(load_ground_truth(tmp / "absent", 2), LayoutError);
}

TEST(Windows, CountMatchesEnumeration) {
  for (std::size_t w : {15u, 16u, 40u, 64u})
    for (std::size_t stride : {1u, 4u, 15u}) {
      const std::size_t scales[] = {15};
      EXPECT_EQ(enumerate_windows("c", 1, w, 33, scales, stride).size(), window_count(w, 33, 15, stride));
    }
  EXPECT_EQ(window_count(10, 40, 15, 1), 0u);
  const std::size_t scales[] = {10, 20};
  const auto o = enumerate_windows("c", 2, 30, 30, scales, 10);
  EXPECT_EQ(o.size(), 2 * (9 + 4));
  for (const auto& p : o) {
    EXPECT_LE(p.x + p.scale, 30u);
    EXPECT_LE(p.y + p.scale, 30u);
  }
}

TEST(Windows, SubsampleIsExactDeterministicAndOrdered) {
  const std::size_t scales[] = {4};
  const auto all = enumerate_windows("c", 5, 20, 20, scales, 2);
  Rng a(1), b(1);
  const auto s1 = subsample_origins(all, 37, a);
  const auto s2 = subsample_origins(all, 37, b);
  EXPECT_EQ(s1.size(), 37u);
  EXPECT_EQ(s1, s2);
  auto pos = all.begin();
  for (const auto& o : s1) {
    pos = std::find(pos, all.end(), o);
    ASSERT_NE(pos, all.end()) << "order not preserved";
  }
  Rng c(1);
  EXPECT_EQ(subsample_origins(all, all.size() + 5, c).size(), all.size());
}

TEST(AppearancePatches, ExactCopyAtTargetScale) {
  const auto clip = ramp_clip("c", 2, 30, 20);
  const std::vector<PatchOrigin> origins{{"c", 1, 4, 3, 10}};
  const auto b = appearance_patches_at(std::span<const FrameSequence>(&clip, 1), origins, PatchSpec{{10}, 5, 10, 10, 1});
  ASSERT_EQ(b.dim, 100u);
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 10; ++x)
      EXPECT_DOUBLE_EQ(b.vectors(0, y * 10 + x), clip.frames[1].at(4 + x, 3 + y) / 255.0);
}

TEST(AppearancePatches, WarpedValuesStayInRangeAndConstantsSurvive) {
  FrameSequence flat{"f", 40, 40, {GrayImage(40, 40, 51), GrayImage(40, 40, 51)}};
  Rng rng(2);
  const auto b = extract_appearance_patches(flat, PatchSpec{{15, 20, 30}, 5, 15, 15, 1}, rng, 100);
  EXPECT_EQ(b.size(), 100u);
  for (double v : b.vectors.data()) EXPECT_NEAR(v, 0.2, 1e-12);
  EXPECT_THROW(appearance_patches_at(std::span<const FrameSequence>(&flat, 1), {{"g", 0, 0, 0, 15}},
                                     PatchSpec{{15}, 5, 15, 15, 1}),
               AlignmentError);
  EXPECT_THROW(appearance_patches_at(std::span<const FrameSequence>(&flat, 1), {{"f", 0, 30, 0, 15}},
                                     PatchSpec{{15}, 5, 15, 15, 1}),
               DomainError);
}

TEST(MotionPatches, NormalizedLayoutAndEarlyFusionRoundTrip) {
  FlowField f(6, 6);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      f.u(y, x) = static_cast<double>(x) - 2.0;  // [-2, 3]
      f.v(y, x) = static_cast<double>(y);        // [0, 5]
    }
  const FlowSequence flows{"c", {f, f}};
  const PatchSpec spec{{3}, 3, 3, 3, 2};
  const auto mot = extract_motion_patches(flows, spec);
  ASSERT_TRUE(mot.motion_norm.has_value());
  EXPECT_DOUBLE_EQ(mot.motion_norm->u.min, -2.0);
  EXPECT_DOUBLE_EQ(mot.motion_norm->v.max, 5.0);
  EXPECT_EQ(mot.size(), 8u);
  EXPECT_EQ(mot.dim, 18u);
  // origin (3,3) in frame 0 is the 4th window
  EXPECT_EQ(mot.origins[3], (PatchOrigin{"c", 0, 3, 3, 3}));
  EXPECT_DOUBLE_EQ(mot.vectors(3, 0), (3.0 - 2.0 + 2.0) / 5.0);
  EXPECT_DOUBLE_EQ(mot.vectors(3, 9), 3.0 / 5.0);
  for (double v : mot.vectors.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }

  const FrameSequence clip = ramp_clip("c", 2, 6, 6);
  const auto app = appearance_patches_at(std::span<const FrameSequence>(&clip, 1), mot.origins, PatchSpec{{3}, 3, 3, 3, 1});
  const auto joint = fuse_early(app, mot);
  EXPECT_EQ(joint.dim, 27u);
  EXPECT_EQ(joint.kind, PipelineKind::Joint);
  const auto [a2, m2] = split_joint(joint, app.dim);
  EXPECT_EQ(a2.vectors, app.vectors);
  EXPECT_EQ(m2.vectors, mot.vectors);

  auto shifted = mot;
  shifted.origins[0].x = 1;
  EXPECT_THROW(fuse_early(app, shifted), AlignmentError);
  EXPECT_THROW(fuse_early(mot, app), DomainError);
}

TEST(MotionPatches, OutOfRangeValuesClampAndDegenerateChannelIsHalf) {
  FlowField f(3, 3);
  for (auto& x : f.u.data()) x = 10.0;
  const FlowSequence flows{"c", {f}};
  const MotionNormalization norm{{-1.0, 1.0}, {0.0, 0.0}};
  const auto b = extract_motion_patches(std::span<const FlowSequence>(&flows, 1), PatchSpec{{3}, 3, 3, 3, 2}, norm);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_DOUBLE_EQ(b.vectors(0, i), 1.0);
    EXPECT_DOUBLE_EQ(b.vectors(0, 9 + i), 0.5);
  }
  EXPECT_THROW(extract_motion_patches(flows, PatchSpec{{4}, 3, 3, 3, 2}), DomainError);
}

TEST(ListClips, SortedAndRequiresFramesDir) {
  TempDir tmp;
  for (auto id : {"b", "a", "c"}) std::filesystem::create_directories(tmp / id / "frames");
  std::filesystem::create_directories(tmp / "junk");
  EXPECT_EQ(list_clips(tmp.path()), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_THROW(list_clips(tmp / "junk"), LayoutError);
}
