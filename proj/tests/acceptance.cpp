// Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "amdn/app.hpp"
#include "support.hpp"

using namespace amdn;
using amdn::testing::TempDir;
using amdn::testing::random_matrix;
using amdn::testing::rel_err;
using amdn::testing::pairwise_auc;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass;
  std::string detail;
};

// ------------------------------------------------------------ criterion 1

LayerParams random_layer(Rng& rng, std::size_t out, std::size_t in) {
  std::vector<double> b(out);
  for (auto& v : b) v = rng.uniform(-0.5, 0.5);
  return LayerParams(random_matrix(rng, out, in, -0.8, 0.8), Vector(std::move(b)));
}

template <typename Loss>
double fd_error(std::vector<LayerParams>& params, const std::vector<LayerParams>& grad, Loss loss) {
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < params.size(); ++l) {
    auto probe = [&](double& theta, double analytic) {
      const double keep = theta;
      theta = keep + h;
      const double fp = loss();
      theta = keep - h;
      const double fm = loss();
      theta = keep;
      worst = std::max(worst, rel_err((fp - fm) / (2 * h), analytic));
    };
    for (std::size_t i = 0; i < params[l].W.data().size(); ++i) probe(params[l].W.data()[i], grad[l].W.data()[i]);
    for (std::size_t i = 0; i < params[l].b.size(); ++i) probe(params[l].b[i], grad[l].b[i]);
  }
  return worst;
}

Outcome fd_gradients() {
  const auto t0 = Clock::now();
  Rng rng(101);
  double worst = 0.0;
  // layer-wise objective with weight decay and sparsity, both layers of a 6-4-2 net
  for (auto [in, hid] : {std::pair{6, 4}, std::pair{4, 2}}) {
    std::vector<LayerParams> p{random_layer(rng, hid, in), random_layer(rng, in, hid)};
    const Matrix clean = random_matrix(rng, 10, in, 0, 1);
    const Matrix noisy = corrupt(clean, 0.01, rng);
    const DaeObjective obj{1e-3, 0.05, 0.5};
    std::vector<LayerParams> grad;
    dae_loss(p[0], p[1], clean, noisy, obj, &grad);
    worst = std::max(worst, fd_error(p, grad, [&] { return dae_loss(p[0], p[1], clean, noisy, obj); }));
  }
  // fine-tuning objective of the unrolled 6-4-2-4-6 net
  std::vector<LayerParams> net{random_layer(rng, 4, 6), random_layer(rng, 2, 4), random_layer(rng, 4, 2),
                               random_layer(rng, 6, 4)};
  const Matrix x = random_matrix(rng, 10, 6, 0, 1);
  std::vector<LayerParams> grad;
  finetune_loss(net, x, 1e-3, &grad);
  worst = std::max(worst, fd_error(net, grad, [&] { return finetune_loss(net, x, 1e-3); }));
  const double secs = since(t0);
  std::ostringstream os;
  os << "max rel err " << worst << ", " << secs << " s";
  return {worst <= 1e-5 && secs < 5.0, os.str()};
}

// ------------------------------------------------------------ criterion 2

// 500 smooth 8x8 patches: a random oriented ramp plus a blob, in [0, 1]
Matrix synthetic_patches(Rng& rng) {
  Matrix m(500, 64);
  for (std::size_t i = 0; i < 500; ++i) {
    const double gx = rng.uniform(-1, 1), gy = rng.uniform(-1, 1), cx = rng.uniform(0, 7), cy = rng.uniform(0, 7);
    const double amp = rng.uniform(0, 0.4), base = rng.uniform(0.2, 0.5);
    for (std::size_t y = 0; y < 8; ++y)
      for (std::size_t x = 0; x < 8; ++x) {
        const double r2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        const double v = base + 0.03 * (gx * x + gy * y) + amp * std::exp(-r2 / 4.0);
        m(i, y * 8 + x) = std::clamp(v, 0.0, 1.0);
      }
  }
  return m;
}

Outcome pretraining() {
  const auto t0 = Clock::now();
  Rng rng(102);
  PatchBatch batch{PipelineKind::Appearance, 64, synthetic_patches(rng), {}, std::nullopt};
  batch.origins.resize(500);
  SdaeConfig cfg;
  cfg.layer_dims = {64, 32, 16};
  cfg.pretrain_epochs = 50;
  cfg.finetune_epochs = 1;
  cfg.batch_size = 256;
  cfg.learning_rate = 0.01;
  Rng r(5);
  const auto model = stack_and_finetune(batch, cfg, r);
  bool ok = true;
  std::ostringstream os;
  for (std::size_t l = 0; l < model.trace.pretrain.size(); ++l) {
    const auto& t = model.trace.pretrain[l];
    const double ratio = t.back() / t.front();
    ok = ok && t.size() == 51 && ratio <= 0.5;
    os << "layer " << l + 1 << " final/initial " << ratio << ", ";
  }
  const double secs = since(t0);
  os << secs << " s";
  return {ok && secs < 60.0, os.str()};
}

// ------------------------------------------------------------ criterion 3

Outcome nu_property() {
  const auto t0 = Clock::now();
  Rng rng(103);
  Matrix x(200, 2);
  for (auto& v : x.data()) v = rng.normal();
  OcsvmTrainInfo info;
  const double nu = 0.1;
  const auto m = train_ocsvm(x, PipelineKind::Appearance, {nu, 1.0}, &info);
  const double C = 1.0 / (nu * 200);
  double sum = 0.0, viol = 0.0;
  std::size_t outliers = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    sum += info.alpha[i];
    viol = std::max({viol, -info.alpha[i], info.alpha[i] - C});
    if (score_raw(m, x.row(i)) > 1e-9) ++outliers;
  }
  viol = std::max(viol, std::abs(sum - 1.0));
  const double out_frac = outliers / 200.0, sv_frac = m.dual_coeffs.size() / 200.0, secs = since(t0);
  std::ostringstream os;
  os << "outliers " << out_frac << ", SVs " << sv_frac << ", feasibility " << viol << ", " << secs << " s";
  return {out_frac <= 0.15 && sv_frac >= 0.09 && viol <= 1e-9 && secs < 10.0, os.str()};
}

// ------------------------------------------------------------ criterion 4

double grid_min(const Matrix& K, double C, int steps) {
  const std::size_t n = K.rows();
  std::vector<double> a(n, 0.0);
  double best = std::numeric_limits<double>::infinity();
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int left) {
    if (i + 1 == n) {
      a[i] = static_cast<double>(left) / steps;
      if (a[i] > C + 1e-12) return;
      double f = 0.0;
      for (std::size_t p = 0; p < n; ++p)
        for (std::size_t q = 0; q < n; ++q) f += a[p] * a[q] * K(p, q);
      best = std::min(best, 0.5 * f);
      return;
    }
    for (int k = 0; k <= left && k <= C * steps + 1e-9; ++k) {
      a[i] = static_cast<double>(k) / steps;
      rec(i + 1, left - k);
    }
  };
  rec(0, steps);
  return best;
}

Outcome ocsvm_oracle() {
  Rng rng(104);
  double worst = 0.0;
  bool below = true;
  for (std::size_t n : {4u, 5u, 6u}) {
    const Matrix x = random_matrix(rng, n, 2, -1.5, 1.5);
    // nu chosen so that C = 1/(nu n) lies on the grid for every n
    for (double nu : {0.5, 0.75}) {
      OcsvmTrainInfo info;
      train_ocsvm(x, PipelineKind::Appearance, {nu, 1.0, 1e-10}, &info);
      Matrix K(n, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) K(i, j) = rbf_kernel(x.row(i), x.row(j), 1.0);
      const double smo = ocsvm_dual_objective(KernelMatrix(x, 1.0), info.alpha);
      const double grid = grid_min(K, 1.0 / (nu * n), n == 6 ? 72 : 120);
      worst = std::max(worst, std::abs(smo - grid));
      below = below && smo <= grid + 1e-12;
    }
  }
  std::ostringstream os;
  os << "max |SMO - grid| " << worst << (below ? "" : ", SMO above grid minimum");
  return {worst <= 1e-3 && below, os.str()};
}

// ------------------------------------------------------------ criterion 5

Outcome simplex_projection() {
  Rng rng(105);
  double worst_coord = 0.0, worst_sum = 0.0, min_entry = 1.0;
  for (int t = 0; t < 100; ++t) {
    const Vector c{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
    const auto p = project_simplex(c);
    double best = std::numeric_limits<double>::infinity();
    double g[3] = {0, 0, 0};
    for (int i = 0; i <= 1000; ++i)
      for (int j = 0; i + j <= 1000; ++j) {
        const double a[3] = {i / 1000.0, j / 1000.0, (1000 - i - j) / 1000.0};
        const double d = (a[0] - c[0]) * (a[0] - c[0]) + (a[1] - c[1]) * (a[1] - c[1]) + (a[2] - c[2]) * (a[2] - c[2]);
        if (d < best) best = d, g[0] = a[0], g[1] = a[1], g[2] = a[2];
      }
    for (std::size_t k = 0; k < 3; ++k) {
      worst_coord = std::max(worst_coord, std::abs(p[k] - g[k]));
      min_entry = std::min(min_entry, p[k]);
    }
    worst_sum = std::max(worst_sum, std::abs(p[0] + p[1] + p[2] - 1.0));
  }
  std::ostringstream os;
  os << "max coord diff " << worst_coord << ", max |sum-1| " << worst_sum << ", min " << min_entry;
  return {worst_coord <= 2e-3 && worst_sum <= 1e-12 && min_entry >= 1e-6, os.str()};
}

// ------------------------------------------------------------ criterion 6

Outcome trace_identity() {
  Rng rng(106);
  const std::size_t dim = 10;
  const Matrix s = random_matrix(rng, dim, 80);
  const auto eig = sym_eig(matmul_abt(s, s), dim);
  double worst = 0.0;
  for (std::size_t d : {std::size_t{1}, std::size_t{4}, dim}) {
    const Matrix ws = matmul(learn_subspace(s, d), s);
    const double lhs = trace(matmul_abt(ws, ws));
    double top = 0.0;
    for (std::size_t k = 0; k < d; ++k) top += eig.values[k];
    worst = std::max(worst, std::abs(lhs - top) / top);
  }
  std::ostringstream os;
  os << "max rel diff " << worst;
  return {worst <= 1e-8, os.str()};
}

// ------------------------------------------------------------ criterion 7

GrayImage texture(std::size_t w, std::size_t h, double dx) {
  GrayImage img(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double X = static_cast<double>(x) - dx, Y = static_cast<double>(y);
      img.at(x, y) = static_cast<std::uint8_t>(
          std::lround(128.0 + 50.0 * std::sin(X * 0.31) * std::cos(Y * 0.23) + 30.0 * std::sin((X + Y) * 0.17)));
    }
  return img;
}

Outcome optical_flow() {
  const auto a = texture(48, 48, 0), b = texture(48, 48, 1);
  std::vector<double> energy;
  const auto f = horn_schunck(a, b, {1.0, 300}, &energy);
  double epe = 0.0;
  std::size_t n = 0;
  for (std::size_t y = 4; y + 4 < 48; ++y)
    for (std::size_t x = 4; x + 4 < 48; ++x, ++n) epe += std::hypot(f.u(y, x) - 1.0, f.v(y, x));
  epe /= static_cast<double>(n);
  bool monotone = true;
  for (std::size_t i = 1; i < energy.size(); ++i) monotone = monotone && energy[i] <= energy[i - 1] * (1 + 1e-12);
  std::ostringstream os;
  os << "mean interior EPE " << epe << ", energy " << (monotone ? "non-increasing" : "increased");
  return {epe <= 0.2 && monotone, os.str()};
}

// ------------------------------------------------------------ criterion 8

Outcome evaluation() {
  Rng rng(107);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 2 + rng.uniform_index(80);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = t % 2 ? rng.uniform() : static_cast<double>(rng.uniform_index(6));
      y[i] = static_cast<std::uint8_t>(rng.uniform_index(2));
    }
    y[0] = 0;
    y[1] = 1;
    worst = std::max(worst, std::abs(frame_roc(s, y).auc - pairwise_auc(s, y)));
  }
  // 100-pixel truth region; 40 detected pixels is a miss, 41 a hit
  GrayImage truth(20, 20), det(20, 20);
  for (std::size_t i = 0; i < 100; ++i) truth.at(5 + i % 10, 5 + i / 10) = 1;
  for (std::size_t i = 0; i < 40; ++i) det.at(5 + i % 10, 5 + i / 10) = 1;
  const bool at40 = localization_hit(det, truth);
  det.at(5, 9) = 1;
  const bool at41 = localization_hit(det, truth);
  std::ostringstream os;
  os << "max |trapezoid - pairwise| " << worst << ", hit at 40% " << at40 << ", at 41% " << at41;
  return {worst <= 1e-9 && !at40 && at41, os.str()};
}

// ------------------------------------------------------------ criteria 9, 10

int sh(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string(AMDN_CLI) + " " + args + " >> '" + log.string() + "' 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct EndToEnd {
  bool ok = false;
  double seconds = 0.0;
  std::string summary;
};

EndToEnd end_to_end(const TempDir& dir) {
  const auto t0 = Clock::now();
  const auto q = [&](const char* sub) { return "'" + (dir / sub).string() + "'"; };
  const auto log = dir / "run.log";
  EndToEnd r;
  r.ok = sh("synth --out " + q("data"), log) == 0 &&
         sh("train --data " + q("data") + "/train --out " + q("model"), log) == 0 &&
         sh("score --model " + q("model") + " --data " + q("data") + "/test --out " + q("scores"), log) == 0 &&
         sh("eval --scores " + q("scores") + " --data " + q("data") + "/test", log) == 0;
  r.seconds = since(t0);
  if (!r.ok) std::cerr << slurp(log);
  r.summary = slurp(dir / "scores" / "summary.json");
  return r;
}

void report(int n, const Outcome& o, bool& all) {
  std::cout << "criterion " << n << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  all = all && o.pass;
}

template <typename F>
Outcome guarded(F f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return {false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  set_log_sink([](LogLevel, const std::string&) {});
  bool all = true;
  report(1, guarded(fd_gradients), all);
  report(2, guarded(pretraining), all);
  report(3, guarded(nu_property), all);
  report(4, guarded(ocsvm_oracle), all);
  report(5, guarded(simplex_projection), all);
  report(6, guarded(trace_identity), all);
  report(7, guarded(optical_flow), all);
  report(8, guarded(evaluation), all);

  TempDir first("amdn-accept"), second("amdn-accept");
  const auto a = end_to_end(first);
  report(9, guarded([&]() -> Outcome {
           if (!a.ok) return {false, "pipeline run failed"};
           const auto s = nlohmann::json::parse(a.summary);
           const double fused = s.at("frame_level").at("auc").get<double>();
           double best_single = 0.0;
           std::ostringstream os;
           os << "frame AUC " << fused;
           for (const auto& [k, v] : s.at("pipelines").items()) {
             best_single = std::max(best_single, v.at("auc").get<double>());
             os << ", " << k << " " << v.at("auc").get<double>();
           }
           os << ", " << a.seconds << " s";
           return {fused >= 0.90 && fused >= best_single - 0.02 && a.seconds <= 900.0, os.str()};
         }),
         all);
  const auto b = end_to_end(second);
  report(10, {a.ok && b.ok && !a.summary.empty() && a.summary == b.summary,
              a.summary == b.summary ? "summary.json identical across runs" : "summary.json differs"},
         all);
  return all ? 0 : 1;
}
