// Acceptance run: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes. `--only 1,3` restricts the run to listed criteria.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "csal/attention.hpp"
#include "csal/checkpoint.hpp"
#include "csal/cli.hpp"
#include "csal/data.hpp"
#include "csal/gradcheck.hpp"
#include "csal/loss.hpp"
#include "csal/metrics.hpp"
#include "csal/morphology.hpp"
#include "csal/parallel.hpp"
#include "csal/trainer.hpp"
#include "metric_oracles.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace csal;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// 1. Gradient suite.
Outcome gradients() {
  const auto t0 = Clock::now();
  const auto rows = run_gradient_suite();
  const double secs = seconds_since(t0);
  Outcome o;
  double worst = 0;
  std::string worst_name;
  bool has_model = false;
  for (const auto& r : rows) {
    if (r.max_rel_error > worst || worst_name.empty()) {
      worst = r.max_rel_error;
      worst_name = r.name;
    }
    if (r.checked == 0 || !(r.max_rel_error < 1e-4)) o.pass = false;
    has_model = has_model || r.name == "model end-to-end";
  }
  o.pass = o.pass && has_model && secs < 120.0;
  o.detail = std::to_string(rows.size()) + " checks, worst " + fmt("%.3g", worst) + " (" + worst_name + "), " +
             fmt("%.2f s", secs);
  return o;
}

// 2. Contour loss against BCE.
Outcome contour_reduction() {
  std::mt19937_64 rng(2);
  const WeightMapConfig cfg;
  double worst_eq = 0;
  std::size_t below = 0, banded = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto y = trial % 2 ? test::disc_mask(16, 16, test::uniform(rng, 3, 13), test::uniform(rng, 3, 13),
                                               test::uniform(rng, 2, 7))
                             : test::random_mask(16, 16, rng, test::uniform(rng, 0.1, 0.6));
    const auto p = test::random_saliency(16, 16, rng);
    const double b = bce(p, y);
    worst_eq = std::max(worst_eq, std::abs(contour_loss(p, y, RealMap(16, 16, 1.0)) - b));
    const auto m = contour_weight_map(y, cfg);
    bool band = false;
    for (std::size_t i = 0; i < m.values.size(); ++i) band = band || (m.values[i] > 1.0 && p.values[i] != y.values[i]);
    banded += band;
    if (band && contour_loss(p, y, m) < b) ++below;
  }
  Outcome o;
  o.pass = worst_eq <= 1e-12 && below == 0 && banded > 0;
  o.detail = "max |contour(ones) - bce| " + fmt("%.2g", worst_eq) + ", contour < bce on " + std::to_string(below) +
             " of " + std::to_string(banded) + " banded instances";
  return o;
}

// Transition pixels: 3x3 neighbourhood holds both labels.
std::vector<std::pair<long, long>> transitions(const BinaryMask& m) {
  const long H = static_cast<long>(m.height), W = static_cast<long>(m.width);
  std::vector<std::pair<long, long>> out;
  for (long a = 0; a < H; ++a)
    for (long b = 0; b < W; ++b) {
      bool edge = false;
      for (long dy = -1; dy <= 1; ++dy)
        for (long dx = -1; dx <= 1; ++dx) {
          const long y = a + dy, x = b + dx;
          if (y >= 0 && y < H && x >= 0 && x < W && m(y, x) != m(a, b)) edge = true;
        }
      if (edge) out.emplace_back(a, b);
    }
  return out;
}

// 3. Weight-map properties on synthetic masks.
Outcome weight_maps() {
  DatasetSpec spec;
  spec.seed = 3;
  spec.count = 100;
  const auto samples = generate(spec, Split::train);
  const WeightMapConfig cfg;
  const auto t0 = Clock::now();
  std::vector<RealMap> maps;
  for (const auto& s : samples) maps.push_back(contour_weight_map(s.mask, cfg));
  const double secs = seconds_since(t0);
  std::size_t bad_min = 0, bad_max = 0, bad_far = 0;
  double hi = 0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const auto& y = samples[k].mask;
    const auto& w = maps[k];
    const auto [lo_it, hi_it] = std::minmax_element(w.values.begin(), w.values.end());
    bad_min += *lo_it != 1.0;
    bad_max += *hi_it > 6.0;
    hi = std::max(hi, *hi_it);
    const auto edges = transitions(y);
    for (long i = 0; i < static_cast<long>(y.height); ++i)
      for (long j = 0; j < static_cast<long>(y.width); ++j) {
        long d = 1L << 20;
        for (const auto& [a, b] : edges) d = std::min(d, std::max(std::abs(a - i), std::abs(b - j)));
        if (d > 4 && w(i, j) != 1.0) ++bad_far;
      }
  }
  Outcome o;
  o.pass = bad_min == 0 && bad_max == 0 && bad_far == 0 && secs < 1.0;
  o.detail = std::to_string(samples.size()) + " masks " + std::to_string(samples[0].mask.height) + "x" +
             std::to_string(samples[0].mask.width) + ": min!=1 on " + std::to_string(bad_min) + ", max " +
             fmt("%.4f", hi) + ", non-1 beyond distance 4: " + std::to_string(bad_far) + ", " + fmt("%.3f s", secs);
  return o;
}

// 4. Global-contrast attention properties.
Outcome attention_properties() {
  std::mt19937_64 rng(4);
  const AttentionConfig cfg;
  double lo = 1e300, affine = 0;
  std::size_t not_lambda = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t C = 1 + rng() % 8, H = 2 + rng() % 15, W = 2 + rng() % 15;
    auto f = test::random_tensor({2, C, H, W}, rng, -20, 20, false);
    Graph<double> g(false);
    const auto a = global_contrast_attention(g, f, cfg);
    for (double v : a->data()) lo = std::min(lo, v);
    const double scale = test::uniform(rng, 0.5, 5.0), shift = test::uniform(rng, -10, 10);
    auto f2 = make_tensor<double>(f->shape());
    for (std::size_t i = 0; i < f->size(); ++i) (*f2)[i] = scale * (*f)[i] + shift;
    const auto a2 = global_contrast_attention(g, f2, cfg);
    for (std::size_t i = 0; i < a->size(); ++i) affine = std::max(affine, std::abs((*a)[i] - (*a2)[i]));
    const auto c = global_contrast_attention(g, make_tensor<double>({1, C, H, W}, test::uniform(rng, -5, 5)), cfg);
    for (double v : c->data()) not_lambda += v != cfg.lambda;
  }
  Outcome o;
  o.pass = lo >= 0.1 && affine <= 1e-6 && not_lambda == 0;
  o.detail = "min " + fmt("%.6g", lo) + ", max affine drift " + fmt("%.2g", affine) + ", constant-input pixels != lambda: " +
             std::to_string(not_lambda);
  return o;
}

// 5. Metrics against brute-force oracles.
Outcome metrics_oracles() {
  std::mt19937_64 rng(5);
  const MetricsConfig cfg;
  double worst_f = 0, worst_mae = 0;
  std::size_t thr_mismatch = 0, non_monotone = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto b = oracle::random_batch(rng, 1 + rng() % 6, 8, 8);
    const auto [t, f] = max_fbeta(b.preds, b.gts, cfg);
    const auto [ot, of] = oracle::fbeta_oracle(b, cfg.beta_sq);
    worst_f = std::max(worst_f, std::abs(f - of));
    thr_mismatch += t != ot;
    worst_mae = std::max(worst_mae, std::abs(mae(b.preds, b.gts) - oracle::mae_oracle(b)));
    const auto curve = pr_curve(b.preds, b.gts, cfg);
    for (std::size_t i = 1; i < curve.size(); ++i) non_monotone += curve[i].recall > curve[i - 1].recall;
  }
  Outcome o;
  o.pass = worst_f <= 1e-12 && worst_mae <= 1e-12 && thr_mismatch == 0 && non_monotone == 0;
  o.detail = "max |dF| " + fmt("%.2g", worst_f) + ", max |dMAE| " + fmt("%.2g", worst_mae) +
             ", threshold mismatches " + std::to_string(thr_mismatch) + ", recall increases " +
             std::to_string(non_monotone);
  return o;
}

struct RunSummary {
  double final_f = 0, final_bmae = 0, best_f = 0;
  double first_loss = 0, final_loss = 0;
  double seconds = 0;
};

struct AblationData {
  std::map<Ablation, std::vector<RunSummary>> runs;
  std::optional<TrainResult> bch_seed1;
  DatasetSpec spec;
  Dataset data;
};

constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr Ablation kGrid[] = {Ablation::B, Ablation::BC, Ablation::BH, Ablation::BCH};

void run_ablation(AblationData& ab, const fs::path& dir) {
  ab.spec.seed = 11;
  ab.spec.count = 500;
  ab.data.train = generate(ab.spec, Split::train);
  ab.spec.count = 100;
  ab.data.test = generate(ab.spec, Split::test);
  fs::create_directories(dir);
  for (auto seed : kSeeds) {
    for (auto a : kGrid) {
      TrainConfig cfg = TrainConfig::desk_scale();
      cfg.ablation = a;
      cfg.seed = seed;
      const auto t0 = Clock::now();
      auto result = train(ModelConfig{}, ab.data, ab.spec, cfg);
      RunSummary s;
      s.seconds = seconds_since(t0);
      s.final_f = result.history.back().max_fbeta;
      s.final_bmae = result.history.back().boundary_mae;
      s.best_f = result.history[result.best_epoch - 1].max_fbeta;
      s.first_loss = result.history.front().loss;
      s.final_loss = result.history.back().loss;
      const std::string tag = to_string(a) + "_seed" + std::to_string(seed);
      write_history(dir / (tag + ".csv"), result.history);
      write_checkpoint(dir / (tag + ".ckpt"), to_records(result.model, result.final));
      std::cout << "  run " << tag << ": final F " << fmt("%.4f", s.final_f) << ", boundary_mae "
                << fmt("%.4f", s.final_bmae) << ", best F " << fmt("%.4f", s.best_f) << ", "
                << fmt("%.0f s", s.seconds) << std::endl;
      ab.runs[a].push_back(s);
      if (a == Ablation::BCH && seed == 1) ab.bch_seed1 = std::move(result);
    }
  }
}

double mean_f(const std::vector<RunSummary>& v) {
  double t = 0;
  for (const auto& r : v) t += r.final_f;
  return t / static_cast<double>(v.size());
}

// 6. Ablation directions.
Outcome ablation(const AblationData& ab) {
  const double b = mean_f(ab.runs.at(Ablation::B)), bc = mean_f(ab.runs.at(Ablation::BC)),
               bh = mean_f(ab.runs.at(Ablation::BH)), bch = mean_f(ab.runs.at(Ablation::BCH));
  std::size_t bmae_wins = 0;
  for (std::size_t s = 0; s < std::size(kSeeds); ++s)
    bmae_wins += ab.runs.at(Ablation::BC)[s].final_bmae < ab.runs.at(Ablation::B)[s].final_bmae;
  const unsigned cores = std::max(1u, std::thread::hardware_concurrency());
  const double budget = 30.0 * 60.0 * 8.0 / static_cast<double>(std::min(cores, 8u));
  double slowest = 0;
  for (const auto& [a, runs] : ab.runs) {
    double t = 0;
    for (const auto& r : runs) t += r.seconds;
    slowest = std::max(slowest, t);
  }
  Outcome o;
  o.pass = bc > b && bh > b && bch >= std::max(bc, bh) - 0.005 && bmae_wins == std::size(kSeeds) && slowest <= budget;
  o.detail = "mean final F: B " + fmt("%.4f", b) + ", B+C " + fmt("%.4f", bc) + ", B+H " + fmt("%.4f", bh) +
             ", B+C+H " + fmt("%.4f", bch) + "; B+C boundary_mae below B on " + std::to_string(bmae_wins) +
             "/3 seeds; slowest configuration " + fmt("%.1f min", slowest / 60) + " on " + std::to_string(cores) +
             " core(s), budget " + fmt("%.0f min", budget / 60);
  return o;
}

// Companion check on the same runs: toy B+C training loss halves.
Outcome loss_reduction(const AblationData& ab) {
  Outcome o;
  double worst = 0;
  for (const auto& r : ab.runs.at(Ablation::BC)) {
    const double ratio = r.final_loss / r.first_loss;
    worst = std::max(worst, ratio);
    if (!(ratio <= 0.5)) o.pass = false;
  }
  o.detail = "largest final/epoch-1 loss ratio over B+C seeds " + fmt("%.3f", worst);
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "csal");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cout << "  csal " << args[1] << " exited " << code << ": " << err.str();
  return code;
}

std::map<std::string, std::string> read_report(const fs::path& p) {
  std::map<std::string, std::string> kv;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

bool same_value(const std::string& text, double v) {
  double parsed = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), parsed);
  return res.ec == std::errc{} && parsed == v;
}

// 7. CLI determinism and file/in-memory evaluation agreement.
Outcome determinism(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto d = (dir / "data").string();
  Outcome o;
  if (cli({"gen-data", "--count", "40", "--test-count", "12", "--seed", "21", "--out", d}) != 0) return {false, "gen-data failed"};
  const std::vector<std::string> flags{"train", "--data", d, "--ablation", "B+C+H", "--epochs", "2", "--seed", "5"};
  for (const char* run : {"run1", "run2"}) {
    auto args = flags;
    args.insert(args.end(), {"--out", (dir / run).string()});
    if (cli(args) != 0) return {false, std::string("train ") + run + " failed"};
  }
  const auto h1 = slurp(dir / "run1" / "history.csv"), h2 = slurp(dir / "run2" / "history.csv");
  const bool same_history = !h1.empty() && h1 == h2;

  const auto ckpt = dir / "run1" / "best.ckpt";
  if (cli({"infer", "--checkpoint", ckpt.string(), "--data", d, "--out", (dir / "maps").string()}) != 0 ||
      cli({"eval", "--data", d, "--predictions", (dir / "maps").string(), "--out", (dir / "eval").string()}) != 0) {
    return {false, "infer/eval failed"};
  }
  ModelConfig mcfg;
  const auto params = from_records<float>(read_checkpoint(ckpt), mcfg);
  const Dataset data = read_dataset(d);
  DatasetSpec view;
  view.crop_size = mcfg.input_size;
  view.base_size = mcfg.input_size;
  std::mt19937_64 unused(0);
  std::vector<Sample> eval;
  std::vector<BinaryMask> masks;
  for (const auto& s : data.test) {
    eval.push_back(augment(s, false, unused, view));
    masks.push_back(eval.back().mask);
  }
  const auto report = evaluate(predict(params, mcfg, std::span<const Sample>(eval)), masks);
  auto kv = read_report(dir / "eval" / "report.txt");
  const bool same_eval = same_value(kv["max_fbeta"], report.max_fbeta) && same_value(kv["mae"], report.mae) &&
                         same_value(kv["boundary_mae"], report.boundary_mae) &&
                         kv["best_threshold"] == std::to_string(report.best_threshold);
  o.pass = same_history && same_eval;
  o.detail = std::string("history.csv ") + (same_history ? "identical" : "differs") + "; file eval " +
             (same_eval ? "equals" : "differs from") + " in-memory (max_fbeta " + fmt("%.6f", report.max_fbeta) +
             ", mae " + fmt("%.6f", report.mae) + ")";
  return o;
}

// 8. Finest attention map concentrates on the object.
Outcome attention_sanity(const AblationData& ab) {
  const auto& r = *ab.bch_seed1;
  DatasetSpec view = ab.spec;
  std::mt19937_64 unused(0);
  std::vector<std::size_t> wins(r.model.levels, 0);
  std::ostringstream ratios;
  for (std::size_t k = 0; k < 10; ++k) {
    const auto s = augment(ab.data.test[k], false, unused, view);
    const auto maps = attention_maps(r.final, r.model, s);
    for (std::size_t level = 0; level < maps.size(); ++level) {
      double fg = 0, bg = 0;
      std::size_t nf = 0, nb = 0;
      for (std::size_t i = 0; i < s.mask.values.size(); ++i) {
        if (s.mask.values[i]) {
          fg += maps[level].values[i];
          ++nf;
        } else {
          bg += maps[level].values[i];
          ++nb;
        }
      }
      const double mf = fg / static_cast<double>(std::max<std::size_t>(nf, 1));
      const double mb = bg / static_cast<double>(std::max<std::size_t>(nb, 1));
      wins[level] += nf > 0 && mf > mb;
      if (level == 0) ratios << (k ? " " : "") << fmt("%.2f", mf / mb);
    }
  }
  std::string coarser;
  for (std::size_t level = 1; level < wins.size(); ++level)
    coarser += (level > 1 ? ", " : "") + std::string("level ") + std::to_string(level + 1) + " " +
               std::to_string(wins[level]) + "/10";
  Outcome o;
  o.pass = wins[0] >= 8;
  o.detail = "level 1 foreground mean above background on " + std::to_string(wins[0]) + "/10 (fg/bg: " +
             ratios.str() + "); " + coarser;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = "acceptance_runs";
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) only.insert(std::stoi(tok));
    } else if (arg == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: csal_acceptance [--only 1,2,...] [--work DIR]\n";
      return 1;
    }
  }
  const auto wanted = [&](int c) { return only.empty() || only.count(c); };
  set_num_threads(static_cast<int>(std::max(1u, std::thread::hardware_concurrency())));

  int failures = 0;
  const auto report = [&](const std::string& label, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << label << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << std::endl;
  };

  if (wanted(1)) report("criterion 1 gradient suite", gradients);
  if (wanted(2)) report("criterion 2 contour loss reduction", contour_reduction);
  if (wanted(3)) report("criterion 3 weight map properties", weight_maps);
  if (wanted(4)) report("criterion 4 attention properties", attention_properties);
  if (wanted(5)) report("criterion 5 metrics oracles", metrics_oracles);

  AblationData ab;
  if (wanted(6) || wanted(8)) {
    std::cout << "training the ablation grid (4 configurations x 3 seeds)" << std::endl;
    try {
      run_ablation(ab, work / "ablation");
    } catch (const std::exception& e) {
      std::cout << "  ablation aborted: " << e.what() << std::endl;
    }
  }
  const bool grid_done = ab.runs.size() == std::size(kGrid) && ab.bch_seed1;
  const auto needs_grid = [&](auto fn) {
    return [&, fn]() -> Outcome { return grid_done ? fn(ab) : Outcome{false, "ablation runs incomplete"}; };
  };
  if (wanted(6)) {
    report("criterion 6 ablation", needs_grid(ablation));
    report("criterion 6 companion: B+C loss halves", needs_grid(loss_reduction));
  }
  if (wanted(7)) report("criterion 7 determinism", [&] { return determinism(work / "determinism"); });
  if (wanted(8)) report("criterion 8 attention sanity", needs_grid(attention_sanity));

  std::cout << (failures ? std::to_string(failures) + " check(s) failed" : std::string("all checks passed"))
            << std::endl;
  return failures ? 1 : 0;
}
