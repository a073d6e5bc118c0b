// Config, synthetic data, test-time scoring and the train/score/eval glue,
// exercised in-process on a tiny configuration.

#include <gtest/gtest.h>

#include <fstream>

#include "amdn/app.hpp"
#include "support.hpp"

using namespace amdn;
using amdn::testing::TempDir;

namespace {

RunConfig tiny_config() {
  RunConfig c;
  c.seed = 3;
  c.flow.iters = 30;
  c.appearance = {{8, 12}, 4, 8, 300};
  c.motion = {8, 4, 300};
  c.test_grid = {8, 8};
  const std::size_t in[] = {64, 128, 192};
  for (std::size_t k = 0; k < 3; ++k) {
    c.sdae[k].layer_dims = {in[k], 16, 8};
    c.sdae[k].pretrain_epochs = c.sdae[k].finetune_epochs = 3;
    c.sdae[k].batch_size = 32;
    c.ocsvm[k].train_cap = 200;
  }
  c.fusion.subspace_dim = 4;
  return c;
}

SynthConfig tiny_synth() {
  SynthConfig s;
  s.train_clips = 2;
  s.test_clips = 2;
  s.frames = 12;
  s.width = 32;
  s.height = 32;
  s.anomaly_rate = 0.5;
  return s;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

// ----------------------------------------------------------------- config

TEST(Config, DefaultsValidateAndRoundTripThroughJson) {
  RunConfig c;
  c.validate();
  const auto back = parse_run_config(to_json(c).dump());
  EXPECT_EQ(to_json(back), to_json(c));
  c.use_full_architecture();
  EXPECT_EQ(c.sdae[0].layer_dims, (std::vector<std::size_t>{225, 1024, 512, 256, 128}));
  EXPECT_EQ(c.sdae[2].layer_dims, (std::vector<std::size_t>{675, 2048, 1024, 512, 256}));
  c.validate();
}

TEST(Config, PartialOverridesKeepOtherDefaults) {
  const auto c = parse_run_config(R"({"seed": 9, "ocsvm": {"motion": {"nu": 0.2, "rbf_sigma": 0.5}},
                                      "threshold": {"eta": 1.5}})");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_DOUBLE_EQ(c.ocsvm[1].svm.nu, 0.2);
  EXPECT_FALSE(c.ocsvm[1].sigma_from_median);
  EXPECT_DOUBLE_EQ(c.ocsvm[1].svm.rbf_sigma, 0.5);
  EXPECT_TRUE(c.ocsvm[0].sigma_from_median);
  EXPECT_EQ(c.threshold.eta, 1.5);
  EXPECT_EQ(c.sdae[0].layer_dims, RunConfig{}.sdae[0].layer_dims);
}

TEST(Config, UnknownKeysAndBadValuesAreRejected) {
  EXPECT_THROW(parse_run_config(R"({"sede": 1})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"sdae": {"appearance": {"epochs": 3}}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"patches": {"motion": {"size": 15, "sride": 2}}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"ocsvm": {"joint": {"rbf_sigma": "auto"}}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"ocsvm": {"joint": {"nu": 0}}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"seed": "x"})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"flow": {"source": "farneback"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"fusion": {"calibration": "minmax"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"sdae": {"motion": {"layer_dims": [450, 256, 100]}}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"patches": {"motion": {"size": 10}}})"), ConfigError);  // dims no longer match
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
}

TEST(Config, TinyConfigIsValid) { EXPECT_NO_THROW(tiny_config().validate()); }

// ------------------------------------------------------------------ synth

TEST(Synth, DeterministicAndLabelled) {
  TempDir a, b;
  generate_dataset(a.path(), tiny_synth());
  generate_dataset(b.path(), tiny_synth());
  for (const auto* split : {"train", "test"}) {
    for (const auto& id : list_clips(a / split)) {
      for (std::size_t f = 0; f < 12; ++f) {
        const auto p = std::filesystem::path(split) / id / "frames" / frame_filename(f);
        ASSERT_EQ(slurp(a.path() / p), slurp(b.path() / p)) << p;
      }
    }
  }
  const auto test_clips = list_clips(a / "test");
  ASSERT_EQ(test_clips.size(), 2u);
  for (const auto& id : test_clips) {
    const auto gt = load_ground_truth(a / "test" / id / "gt", 12);
    ASSERT_TRUE(gt.pixel_masks);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < 12; ++f) {
      pos += gt.frame_labels[f];
      EXPECT_EQ(gt.frame_labels[f] == 1, !mask_empty((*gt.pixel_masks)[f])) << id << " frame " << f;
    }
    EXPECT_EQ(pos, 6u);
  }
  for (const auto& id : list_clips(a / "train")) {
    const auto gt = load_ground_truth(a / "train" / id / "gt", 12);
    EXPECT_FALSE(gt.pixel_masks);
    for (auto l : gt.frame_labels) EXPECT_EQ(l, 0);
  }
}

TEST(Synth, SeedChangesOutputAndBadConfigRejected) {
  TempDir a, b;
  auto s = tiny_synth();
  generate_dataset(a.path(), s);
  s.seed = 8;
  generate_dataset(b.path(), s);
  const auto p = std::filesystem::path("test") / "test000" / "frames" / frame_filename(0);
  EXPECT_NE(slurp(a.path() / p), slurp(b.path() / p));
  s.frames = 1;
  EXPECT_THROW(s.validate(), ConfigError);
  s = tiny_synth();
  s.anomaly_rate = 1.5;
  EXPECT_THROW(s.validate(), ConfigError);
}

// ------------------------------------------------------------------ detect

class TinyPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("amdn-pipe");
    generate_dataset(dir_->path(), tiny_synth());
    cfg_ = new RunConfig(tiny_config());
    train_ = new Split(load_split(dir_->path() / "train", cfg_->flow));
    bundle_ = new TrainedBundle(train_pipeline(*train_, *cfg_));
  }
  static void TearDownTestSuite() {
    delete bundle_;
    delete train_;
    delete cfg_;
    delete dir_;
  }
  static TempDir* dir_;
  static RunConfig* cfg_;
  static Split* train_;
  static TrainedBundle* bundle_;
};

TempDir* TinyPipeline::dir_ = nullptr;
RunConfig* TinyPipeline::cfg_ = nullptr;
Split* TinyPipeline::train_ = nullptr;
TrainedBundle* TinyPipeline::bundle_ = nullptr;

TEST_F(TinyPipeline, ScoreMapGeometryAndFusion) {
  const auto& models = bundle_->models;
  const auto& seq = train_->clips[0];
  const auto map = score_frame(seq.frames[2], train_->flows[0].fields[2], models, cfg_->test_grid, seq.clip_id, 2);
  EXPECT_EQ(map.grid_rows, grid_extent(32, 8, 8));
  EXPECT_EQ(map.grid_cols, 4u);
  EXPECT_EQ(map.frame_index, 2u);
  for (std::size_t r = 0; r < map.grid_rows; ++r)
    for (std::size_t c = 0; c < map.grid_cols; ++c) {
      const double expect = fused_score(models.weights, {map.pipelines[0](r, c), map.pipelines[1](r, c), map.pipelines[2](r, c)});
      EXPECT_DOUBLE_EQ(map.scores(r, c), expect);
    }
  // the per-pipeline score at a cell equals the SVM applied to that window's features
  const auto gf = grid_features(seq.frames[2], train_->flows[0].fields[2], models, cfg_->test_grid);
  EXPECT_DOUBLE_EQ(map.pipelines[1](1, 2), score_raw(models.ocsvm[1], gf.features[1].row(1 * 4 + 2)));
}

TEST_F(TinyPipeline, DecideUsesMaxPatchScoreAndPaintsFootprints) {
  const auto& seq = train_->clips[0];
  auto maps = score_sequence(seq, train_->flows[0].fields, bundle_->models, cfg_->test_grid);
  ASSERT_EQ(maps.size(), seq.frames.size());
  const double eta = maps[0].max_score() - 1e-9;
  const auto res = decide(maps, eta);
  EXPECT_EQ(res.frame_scores[0], maps[0].max_score());
  EXPECT_EQ(res.frame_flags[0], 1);
  std::size_t painted = 0;
  for (auto p : res.pixel_masks[0].pixels) painted += p;
  EXPECT_GE(painted, 64u);
  const auto none = decide(maps, 1e300);
  for (auto f : none.frame_flags) EXPECT_EQ(f, 0);

  // a shorter flow list skips the trailing frames
  std::vector<FlowField> fewer(train_->flows[0].fields.begin(), train_->flows[0].fields.begin() + 5);
  EXPECT_EQ(score_sequence(seq, fewer, bundle_->models, cfg_->test_grid).size(), 5u);
}

TEST_F(TinyPipeline, ShapeMismatchesAreReported) {
  const auto& seq = train_->clips[0];
  EXPECT_THROW(score_frame(seq.frames[0], FlowField(16, 16), bundle_->models, cfg_->test_grid), ShapeError);
  EXPECT_THROW(score_frame(seq.frames[0], train_->flows[0].fields[0], bundle_->models, GridSpec{10, 8}), ShapeError);
  EXPECT_THROW(score_frame(GrayImage(6, 6), FlowField(6, 6), bundle_->models, cfg_->test_grid), DomainError);
  auto models = bundle_->models;
  std::swap(models.ocsvm[0], models.ocsvm[1]);
  EXPECT_THROW(models.validate(), DomainError);
}

TEST_F(TinyPipeline, FusionWeightsAreOnTheSimplex) {
  const auto& w = bundle_->models.weights;
  double s = 0.0;
  for (double a : w.alpha) {
    EXPECT_GE(a, kSimplexFloor);
    s += a;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST_F(TinyPipeline, TrainingIsDeterministic) {
  const auto again = train_pipeline(*train_, *cfg_);
  EXPECT_EQ(again.eta, bundle_->eta);
  EXPECT_EQ(again.models.weights.alpha, bundle_->models.weights.alpha);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(again.models.sdae[k].encoder, bundle_->models.sdae[k].encoder);
    EXPECT_EQ(again.models.ocsvm[k].rho, bundle_->models.ocsvm[k].rho);
  }
}

TEST_F(TinyPipeline, BundleScoreEvalRoundTrip) {
  TempDir work("amdn-run");
  save_bundle(work / "bundle", *bundle_, *cfg_);
  const auto loaded = load_models(work / "bundle");
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(loaded.sdae[k].encoder, bundle_->models.sdae[k].encoder);
  EXPECT_EQ(load_bundle_config(work / "bundle").threshold.eta, bundle_->eta);

  run_score(work / "bundle", dir_->path() / "test", work / "scores", ScoreOptions{});
  const auto rep = evaluate_scores(work / "scores", dir_->path() / "test");
  EXPECT_EQ(rep.summary.at("frames").get<std::size_t>(), 24u);
  EXPECT_EQ(rep.summary.at("anomalous_frames").get<std::size_t>(), 12u);
  ASSERT_TRUE(rep.pixel);
  EXPECT_GE(rep.frame.auc, 0.0);
  EXPECT_LE(rep.frame.auc, 1.0);

  // the scores read back from CSV reproduce the in-memory frame scores
  const auto test = load_split(dir_->path() / "test", cfg_->flow);
  const auto maps = score_sequence(test.clips[0], test.flows[0].fields, loaded, cfg_->test_grid);
  const auto back = detail::read_score_maps(work / "scores" / test.clips[0].clip_id, test.clips[0].clip_id, 32, 32, 8, 8);
  ASSERT_EQ(back.size(), maps.size());
  for (std::size_t i = 0; i < maps.size(); ++i) EXPECT_EQ(back[i].max_score(), maps[i].max_score());
}

TEST(FlowFiles, FloDirectoryWithOneFieldShortReusesLast) {
  TempDir tmp;
  const auto clip = tmp / "c";
  std::filesystem::create_directories(clip / "flow");
  FrameSequence seq{"c", 4, 4, {GrayImage(4, 4), GrayImage(4, 4), GrayImage(4, 4)}};
  FlowField f(4, 4);
  f.u(1, 1) = 0.5;
  write_flo(clip / "flow" / flo_filename(0), FlowField(4, 4));
  write_flo(clip / "flow" / flo_filename(1), f);
  FlowConfig cfg;
  cfg.source = FlowSource::FloDir;
  const auto flows = clip_flow(seq, clip, cfg);
  ASSERT_EQ(flows.size(), 3u);
  EXPECT_EQ(flows[2], f);
  std::filesystem::remove(clip / "flow" / flo_filename(1));
  EXPECT_THROW(clip_flow(seq, clip, cfg), LayoutError);
  write_flo(clip / "flow" / flo_filename(1), FlowField(5, 4));
  EXPECT_THROW(clip_flow(seq, clip, cfg), ShapeError);
}

TEST(Percentile, LinearInterpolation) {
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 0), 1.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 100), 4.0);
  EXPECT_DOUBLE_EQ(percentile({4, 1, 3, 2}, 50), 2.5);
}
