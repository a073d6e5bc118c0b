// amdn: command-line front-end for the anomaly detection pipeline.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amdn/app.hpp"

namespace {

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(amdn::textio::parse_double(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw amdn::ConfigError("empty nu list");
  return out;
}

int fail(const std::string& category, const std::string& msg) {
  std::cerr << "error[" << category << "]: " << msg << '\n';
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Appearance and motion deep nets for video anomaly detection"};
  app.require_subcommand(1);

  // synth
  amdn::SynthConfig synth;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "generate a synthetic dataset (train/ and test/ splits)");
  s->add_option("--out", synth_out, "output directory")->required();
  s->add_option("--seed", synth.seed, "random seed")->capture_default_str();
  s->add_option("--train-clips", synth.train_clips)->capture_default_str();
  s->add_option("--test-clips", synth.test_clips)->capture_default_str();
  s->add_option("--frames", synth.frames, "frames per clip")->capture_default_str();
  s->add_option("--width", synth.width)->capture_default_str();
  s->add_option("--height", synth.height)->capture_default_str();
  s->add_option("--anomaly-rate", synth.anomaly_rate, "fraction of anomalous frames per test clip")->capture_default_str();

  // train
  std::string train_data, train_out, config_path, flow_flag;
  std::optional<std::uint64_t> seed;
  bool full_arch = false;
  auto* t = app.add_subcommand("train", "train the three pipelines and the fusion weights");
  t->add_option("--data", train_data, "training split root (<root>/<clip>/frames)")->required();
  t->add_option("--out", train_out, "model bundle directory")->required();
  t->add_option("--config", config_path, "JSON run configuration");
  t->add_option("--seed", seed, "random seed (overrides the config)");
  t->add_option("--flow", flow_flag, "flow source: hs or flo-dir");
  t->add_flag("--full-arch", full_arch, "1024/2048-unit first layers instead of the 256-unit desk defaults");

  // score
  std::string score_model, score_data, score_out, score_flow;
  std::optional<double> score_eta;
  bool score_masks = false;
  auto* sc = app.add_subcommand("score", "score a test split with a trained bundle");
  sc->add_option("--model", score_model, "model bundle directory")->required();
  sc->add_option("--data", score_data, "test split root")->required();
  sc->add_option("--out", score_out, "output directory")->required();
  sc->add_option("--flow", score_flow, "flow source: hs or flo-dir (default: as trained)");
  sc->add_option("--eta", score_eta, "decision threshold (default: from the bundle)");
  sc->add_flag("--masks", score_masks, "write detection masks as PGM");

  // eval
  std::string eval_scores, eval_data, eval_out;
  auto* e = app.add_subcommand("eval", "frame- and pixel-level ROC of scored clips");
  e->add_option("--scores", eval_scores, "output directory of `score`")->required();
  e->add_option("--data", eval_data, "test split root with ground truth")->required();
  e->add_option("--out", eval_out, "report directory (default: the scores directory)");

  // nu-grid
  std::string grid_model, grid_data, grid_out, grid_nus = "0.01,0.05,0.1,0.2,0.3";
  auto* g = app.add_subcommand("nu-grid", "refit the one-class SVMs over a grid of nu values");
  g->add_option("--model", grid_model, "model bundle directory")->required();
  g->add_option("--data", grid_data, "labelled test split for per-nu AUC");
  g->add_option("--nus", grid_nus, "comma-separated nu values")->capture_default_str();
  g->add_option("--out", grid_out, "CSV output (default: <model>/nu_grid.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }

  try {
    if (*s) {
      amdn::run_synth(synth_out, synth);
    } else if (*t) {
      amdn::RunConfig cfg = config_path.empty() ? amdn::RunConfig{} : amdn::load_run_config(config_path);
      if (full_arch) cfg.use_full_architecture();
      if (seed) cfg.seed = *seed;
      if (!flow_flag.empty()) cfg.flow.source = amdn::parse_flow_source(flow_flag);
      amdn::run_train(train_data, train_out, cfg);
    } else if (*sc) {
      amdn::ScoreOptions opts;
      if (!score_flow.empty()) opts.flow = amdn::parse_flow_source(score_flow);
      opts.eta = score_eta;
      opts.masks = score_masks;
      amdn::run_score(score_model, score_data, score_out, opts);
    } else if (*e) {
      amdn::run_eval(eval_scores, eval_data, eval_out.empty() ? eval_scores : eval_out);
    } else if (*g) {
      std::optional<std::filesystem::path> data;
      if (!grid_data.empty()) data = grid_data;
      const std::filesystem::path out = grid_out.empty() ? std::filesystem::path(grid_model) / "nu_grid.csv" : std::filesystem::path(grid_out);
      amdn::run_nu_grid(grid_model, data, parse_list(grid_nus), out);
    }
  } catch (const amdn::Error& err) {
    return fail(err.category(), err.what());
  } catch (const std::filesystem::filesystem_error& err) {
    return fail("io", err.what());
  } catch (const nlohmann::json::exception& err) {
    return fail("format", err.what());
  } catch (const std::exception& err) {
    return fail("internal", err.what());
  }
  return 0;
}
