#include "csal/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "csal/checkpoint.hpp"
#include "csal/data.hpp"
#include "csal/gradcheck.hpp"
#include "csal/image_io.hpp"
#include "csal/metrics.hpp"
#include "csal/model.hpp"
#include "csal/morphology.hpp"
#include "csal/parallel.hpp"
#include "csal/trainer.hpp"

namespace csal::cli {

namespace fs = std::filesystem;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Resolved configuration, printed before a command acts.
class Settings {
 public:
  explicit Settings(std::string command) : command_(std::move(command)) {}

  template <typename V>
  Settings& add(const std::string& key, const V& value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    rows_.emplace_back(key, os.str());
    return *this;
  }

  void print(std::ostream& out) const {
    out << "[" << command_ << "]\n";
    for (const auto& [k, v] : rows_) out << k << " = " << v << '\n';
    out.flush();
  }

 private:
  std::string command_;
  std::vector<std::pair<std::string, std::string>> rows_;
};

std::string join(const std::vector<double>& v) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string join(const std::vector<std::size_t>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir) && !force) {
      throw std::runtime_error("output directory " + dir.string() + " is not empty; pass --force to overwrite");
    }
  }
  fs::create_directories(dir);
}

ModelConfig preset(const std::string& name) {
  if (name == "toy") return ModelConfig{};
  if (name == "tiny") return ModelConfig::tiny();
  if (name == "paper") return ModelConfig::paper_scale();
  throw UsageError("unknown model preset '" + name + "' (expected toy, tiny or paper)");
}

// key=value lines; CLI flags win over file entries.
void apply_config_file(CLI::App& cmd, const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::string line;
  std::size_t lineno = 0;
  const auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "config") throw UsageError(path.string() + ": config files cannot nest");
    CLI::Option* opt = cmd.get_option_no_throw("--" + key);
    if (!opt) throw UsageError(path.string() + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (opt->count() > 0) continue;
    if (opt->get_type_size() == 0) {
      opt->add_result(value == "true" || value == "1" ? "true" : "false");
    } else if (opt->get_expected_max() > 1) {
      std::istringstream parts(value);
      std::string item;
      while (std::getline(parts, item, ',')) opt->add_result(trim(item));
    } else {
      opt->add_result(value);
    }
    opt->run_callback();
  }
}

std::vector<Sample> split_samples(const Dataset& d, const std::string& split) {
  if (split == "train") return d.train;
  if (split == "test") return d.test;
  throw UsageError("unknown split '" + split + "' (expected train or test)");
}

std::size_t first_id(const Dataset& d, const std::string& split) { return split == "train" ? 0 : d.train.size(); }

struct LoadedModel {
  ModelConfig cfg;
  ModelParams<float> params;
};

LoadedModel load_model(const fs::path& path) {
  LoadedModel m;
  m.params = from_records<float>(read_checkpoint(path), m.cfg);
  return m;
}

std::vector<Sample> eval_view(const std::vector<Sample>& samples, std::size_t size) {
  DatasetSpec spec;
  spec.crop_size = size;
  spec.base_size = std::max<std::size_t>(size, 16);
  std::mt19937_64 unused(0);
  std::vector<Sample> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(augment(s, false, unused, spec));
  return out;
}

void print_report(std::ostream& out, const EvalReport& r) {
  out << std::setprecision(6) << "max_fbeta " << r.max_fbeta << " at threshold " << r.best_threshold << ", mae "
      << r.mae << ", boundary_mae " << r.boundary_mae << " over " << r.sample_count << " samples\n";
}

// ---------------------------------------------------------------- commands

struct GenDataArgs {
  std::size_t count = 100;
  std::size_t test_count = 0;
  std::uint64_t seed = 1;
  std::size_t size = 72;
  double min_contrast = 0.2;
  double max_contrast = 0.8;
  fs::path out;
  bool force = false;
};

void gen_data(const GenDataArgs& a, std::ostream& out) {
  Settings("gen-data")
      .add("count", a.count)
      .add("test-count", a.test_count)
      .add("seed", a.seed)
      .add("size", a.size)
      .add("min-contrast", a.min_contrast)
      .add("max-contrast", a.max_contrast)
      .add("out", a.out.string())
      .print(out);
  DatasetSpec spec;
  spec.seed = a.seed;
  spec.base_size = a.size;
  spec.crop_size = std::min(spec.crop_size, a.size);
  spec.min_contrast = a.min_contrast;
  spec.max_contrast = a.max_contrast;
  spec.count = a.count;
  spec.validate();
  Dataset d;
  d.train = generate(spec, Split::train);
  if (a.test_count > 0) {
    spec.count = a.test_count;
    d.test = generate(spec, Split::test);
  }
  prepare_out(a.out, a.force);
  write_dataset(a.out, d);
  out << "wrote " << d.train.size() << " train and " << d.test.size() << " test samples to " << a.out.string()
      << '\n';
}

struct TrainArgs {
  TrainConfig cfg;
  std::string ablation = "B";
  std::vector<double> loss_weights;
  double final_weight = 1.0;
  bool paper_schedule = false;
  std::string model = "toy";
  double attn_lambda = 0.1;
  std::optional<double> lr;
  std::optional<double> encoder_lr_scale;
  std::optional<std::size_t> base_size;
  fs::path data;
  fs::path out;
  bool force = false;
};

void train_cmd(TrainArgs a, std::ostream& out) {
  if (a.paper_schedule) a.cfg.lr_decay = 0.05;
  a.cfg.ablation = parse_ablation(a.ablation);
  ModelConfig mcfg = configure_for(preset(a.model), a.cfg.ablation);
  const TrainConfig defaults = a.model == "paper" ? TrainConfig{} : TrainConfig::desk_scale();
  a.cfg.lr = a.lr.value_or(defaults.lr);
  a.cfg.encoder_lr_scale = a.encoder_lr_scale.value_or(defaults.encoder_lr_scale);
  mcfg.attention.lambda = a.attn_lambda;
  if (!a.loss_weights.empty()) a.cfg.loss_weights = LossWeights{a.loss_weights, a.final_weight};
  const LossWeights lw = a.cfg.loss_weights.value_or(LossWeights::for_levels(mcfg.levels));
  DatasetSpec dspec;
  dspec.base_size = a.base_size.value_or(mcfg.input_size + mcfg.input_size / 8);
  dspec.crop_size = mcfg.input_size;

  Settings("train")
      .add("data", a.data.string())
      .add("out", a.out.string())
      .add("model", a.model)
      .add("levels", mcfg.levels)
      .add("input-size", mcfg.input_size)
      .add("encoder-channels", join(mcfg.encoder_channels))
      .add("decoder-channels", join(mcfg.decoder_channels))
      .add("head-channels", mcfg.head_channels)
      .add("msg-channels", mcfg.msg_channels)
      .add("attn-lambda", mcfg.attention.lambda)
      .add("attn-epsilon", mcfg.attention.epsilon)
      .add("base-size", dspec.base_size)
      .add("ablation", to_string(a.cfg.ablation))
      .add("lr", a.cfg.lr)
      .add("momentum", a.cfg.momentum)
      .add("weight-decay", a.cfg.weight_decay)
      .add("encoder-lr-scale", a.cfg.encoder_lr_scale)
      .add("batch-size", a.cfg.batch_size)
      .add("epochs", a.cfg.epochs)
      .add("lr-step-epochs", a.cfg.lr_step_epochs)
      .add("lr-decay", a.cfg.lr_decay)
      .add("seed", a.cfg.seed)
      .add("loss-weights", join(lw.per_level))
      .add("final-weight", lw.final_p)
      .add("threads", num_threads())
      .print(out);

  const Dataset data = read_dataset(a.data);
  prepare_out(a.out, a.force);
  const auto result = train(mcfg, data, dspec, a.cfg, [&out](const HistoryRow& r) {
    out << std::setprecision(6) << "epoch " << r.epoch << " loss " << r.loss << " max_fbeta " << r.max_fbeta
        << " mae " << r.mae << " boundary_mae " << r.boundary_mae << '\n'
        << std::flush;
  });
  write_history(a.out / "history.csv", result.history);
  write_checkpoint(a.out / "best.ckpt", to_records(result.model, result.best));
  write_checkpoint(a.out / "final.ckpt", to_records(result.model, result.final));
  out << "best epoch " << result.best_epoch << "; wrote history.csv, best.ckpt, final.ckpt to " << a.out.string()
      << '\n';
}

struct InferArgs {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  std::vector<fs::path> images;
  fs::path out;
  bool force = false;
};

void infer_cmd(const InferArgs& a, std::ostream& out) {
  Settings("infer")
      .add("checkpoint", a.checkpoint.string())
      .add("data", a.data.string())
      .add("split", a.split)
      .add("images", a.images.size())
      .add("out", a.out.string())
      .print(out);
  if (a.data.empty() == a.images.empty()) throw UsageError("infer needs exactly one of --data or --image");
  const auto model = load_model(a.checkpoint);
  std::vector<Sample> samples;
  std::vector<std::string> names;
  if (!a.data.empty()) {
    const Dataset d = read_dataset(a.data);
    samples = split_samples(d, a.split);
    for (std::size_t i = 0; i < samples.size(); ++i) names.push_back(sample_id(first_id(d, a.split) + i));
  } else {
    for (const auto& p : a.images) {
      Sample s;
      s.image = read_rgb(p);
      s.mask = BinaryMask(s.image.height, s.image.width);
      samples.push_back(std::move(s));
      names.push_back(p.stem().string());
    }
  }
  const auto view = eval_view(samples, model.cfg.input_size);
  const auto preds = predict(model.params, model.cfg, std::span<const Sample>(view));
  prepare_out(a.out, a.force);
  for (std::size_t i = 0; i < preds.size(); ++i) write_saliency(a.out / (names[i] + ".pgm"), preds[i]);
  out << "wrote " << preds.size() << " saliency maps to " << a.out.string() << '\n';
}

struct EvalArgs {
  fs::path data;
  std::string split = "test";
  fs::path predictions;
  fs::path checkpoint;
  MetricsConfig metrics;
  fs::path out;
  bool force = false;
};

void eval_cmd(const EvalArgs& a, std::ostream& out) {
  Settings("eval")
      .add("data", a.data.string())
      .add("split", a.split)
      .add("predictions", a.predictions.string())
      .add("checkpoint", a.checkpoint.string())
      .add("beta-sq", a.metrics.beta_sq)
      .add("band-radius", a.metrics.boundary_band_radius)
      .add("out", a.out.string())
      .print(out);
  if (a.predictions.empty() == a.checkpoint.empty()) {
    throw UsageError("eval needs exactly one of --predictions or --checkpoint");
  }
  const Dataset d = read_dataset(a.data);
  const auto samples = split_samples(d, a.split);
  if (samples.empty()) throw std::runtime_error("split '" + a.split + "' is empty");
  std::vector<SaliencyMap> preds;
  std::vector<BinaryMask> masks;
  if (!a.checkpoint.empty()) {
    const auto model = load_model(a.checkpoint);
    const auto view = eval_view(samples, model.cfg.input_size);
    preds = predict(model.params, model.cfg, std::span<const Sample>(view));
    for (const auto& s : view) masks.push_back(s.mask);
  } else {
    const std::size_t base = first_id(d, a.split);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      preds.push_back(read_saliency(a.predictions / (sample_id(base + i) + ".pgm")));
      const auto& m = samples[i].mask;
      const auto& p = preds.back();
      masks.push_back(m.height == p.height && m.width == p.width ? m : resize_nearest(m, p.height, p.width));
    }
  }
  const auto report = evaluate(preds, masks, a.metrics);
  prepare_out(a.out, a.force);
  write_report(a.out, report);
  print_report(out, report);
}

struct WeightmapArgs {
  fs::path mask;
  WeightMapConfig cfg;
  fs::path out;
  bool force = false;
};

void weightmap_cmd(const WeightmapArgs& a, std::ostream& out) {
  Settings("weightmap")
      .add("mask", a.mask.string())
      .add("k", a.cfg.k)
      .add("se-size", a.cfg.se_size)
      .add("gauss-size", a.cfg.gauss_size)
      .add("gauss-sigma", a.cfg.gauss_sigma)
      .add("out", a.out.string())
      .print(out);
  a.cfg.validate();
  const BinaryMask m = read_mask(a.mask);
  const RealMap w = contour_weight_map(m, a.cfg);
  prepare_out(a.out, a.force);
  std::ofstream csv(a.out / "weight.csv");
  if (!csv) throw std::runtime_error("cannot write weight.csv");
  csv << std::setprecision(17);
  for (std::size_t r = 0; r < w.height; ++r) {
    for (std::size_t c = 0; c < w.width; ++c) csv << (c ? "," : "") << w(r, c);
    csv << '\n';
  }
  // 1 maps to black and k + 1 to white.
  SaliencyMap scaled(w.height, w.width);
  for (std::size_t i = 0; i < w.values.size(); ++i) scaled.values[i] = (w.values[i] - 1.0) / a.cfg.k;
  write_saliency(a.out / "weight.pgm", scaled);
  const auto [lo, hi] = std::minmax_element(w.values.begin(), w.values.end());
  out << std::setprecision(6) << "weight range [" << *lo << ", " << *hi << "]; wrote weight.csv and weight.pgm\n";
}

struct AttnArgs {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  std::size_t count = 10;
  fs::path out;
  bool force = false;
};

void attn_cmd(const AttnArgs& a, std::ostream& out) {
  Settings("attn")
      .add("checkpoint", a.checkpoint.string())
      .add("data", a.data.string())
      .add("split", a.split)
      .add("count", a.count)
      .add("out", a.out.string())
      .print(out);
  const auto model = load_model(a.checkpoint);
  if (!model.cfg.hgam_enabled) throw std::runtime_error("checkpoint was trained without attention");
  const Dataset d = read_dataset(a.data);
  auto samples = split_samples(d, a.split);
  const std::size_t n = std::min(a.count, samples.size());
  const auto view = eval_view(std::vector<Sample>(samples.begin(), samples.begin() + n), model.cfg.input_size);
  prepare_out(a.out, a.force);
  std::ofstream stats(a.out / "attention_stats.csv");
  stats << "id,level,foreground_mean,background_mean\n" << std::setprecision(17);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = sample_id(first_id(d, a.split) + i);
    const auto maps = attention_maps(model.params, model.cfg, view[i]);
    for (std::size_t level = 0; level < maps.size(); ++level) {
      const auto& m = maps[level];
      const auto [lo, hi] = std::minmax_element(m.values.begin(), m.values.end());
      SaliencyMap norm(m.height, m.width);
      for (std::size_t k = 0; k < m.values.size(); ++k) {
        norm.values[k] = *hi > *lo ? (m.values[k] - *lo) / (*hi - *lo) : 0.0;
      }
      write_saliency(a.out / (id + "_attn" + std::to_string(level + 1) + ".pgm"), norm);
      double fg = 0, bg = 0;
      std::size_t nf = 0, nb = 0;
      for (std::size_t k = 0; k < m.values.size(); ++k) {
        if (view[i].mask.values[k]) {
          fg += m.values[k];
          ++nf;
        } else {
          bg += m.values[k];
          ++nb;
        }
      }
      stats << id << ',' << level + 1 << ',' << (nf ? fg / nf : 0.0) << ',' << (nb ? bg / nb : 0.0) << '\n';
    }
  }
  out << "wrote attention maps for " << n << " samples to " << a.out.string() << '\n';
}

struct GradCheckArgs {
  GradCheckOptions opts;
  double tolerance = 1e-4;
};

int grad_check_cmd(const GradCheckArgs& a, std::ostream& out) {
  Settings("grad-check")
      .add("seed", a.opts.seed)
      .add("step", a.opts.step)
      .add("coords", a.opts.coords_per_input)
      .add("model-params", a.opts.model_params)
      .add("tolerance", a.tolerance)
      .print(out);
  const auto rows = run_gradient_suite(a.opts);
  std::size_t width = 2;
  for (const auto& r : rows) width = std::max(width, r.name.size());
  out << std::left << std::setw(static_cast<int>(width)) << "op" << "  checked  max_rel_error\n";
  bool ok = true;
  for (const auto& r : rows) {
    const bool pass = r.max_rel_error < a.tolerance;
    ok = ok && pass;
    out << std::left << std::setw(static_cast<int>(width)) << r.name << "  " << std::right << std::setw(7)
        << r.checked << "  " << std::scientific << std::setprecision(3) << r.max_rel_error << std::defaultfloat
        << (pass ? "" : "  FAIL") << '\n';
  }
  out << (ok ? "all gradients within tolerance\n" : "gradient mismatch\n");
  return ok ? 0 : 2;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Contour-loss salient object detection toolkit", "csal"};
  app.set_version_flag("--version", std::string("csal ") + kVersion + " (checkpoint format " +
                                        std::to_string(kCheckpointVersion) + ")");
  app.require_subcommand(1);
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  const auto out_options = [](CLI::App* cmd, fs::path& dir, bool& force) {
    cmd->add_option("--out", dir, "Output directory")->required();
    cmd->add_flag("--force", force, "Allow writing into a non-empty output directory");
  };

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--count", gen.count, "Training samples")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--test-count", gen.test_count, "Held-out samples");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--size", gen.size, "Side length of stored images")->check(CLI::Range(16, 4096));
  gen_cmd->add_option("--min-contrast", gen.min_contrast);
  gen_cmd->add_option("--max-contrast", gen.max_contrast);
  out_options(gen_cmd, gen.out, gen.force);

  TrainArgs tr;
  std::string config_file;
  auto* train_cmd_app = app.add_subcommand("train", "Train a model on a generated dataset");
  train_cmd_app->add_option("--config", config_file, "key=value file; command-line flags take precedence");
  train_cmd_app->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd_app->add_option("--model", tr.model, "toy, tiny or paper");
  train_cmd_app->add_option("--ablation", tr.ablation, "B, B+C, B+H or B+C+H");
  train_cmd_app->add_option("--lr", tr.lr, "Base learning rate (default depends on --model)");
  train_cmd_app->add_option("--momentum", tr.cfg.momentum);
  train_cmd_app->add_option("--weight-decay", tr.cfg.weight_decay);
  train_cmd_app->add_option("--encoder-lr-scale", tr.encoder_lr_scale);
  train_cmd_app->add_option("--batch-size", tr.cfg.batch_size);
  train_cmd_app->add_option("--epochs", tr.cfg.epochs);
  train_cmd_app->add_option("--lr-step-epochs", tr.cfg.lr_step_epochs);
  train_cmd_app->add_option("--lr-decay", tr.cfg.lr_decay);
  train_cmd_app->add_flag("--paper-schedule", tr.paper_schedule, "Multiply the lr by 0.05 every step");
  train_cmd_app->add_option("--seed", tr.cfg.seed);
  train_cmd_app->add_option("--loss-weights", tr.loss_weights, "Per-level weights, coarsest first")
      ->delimiter(',');
  train_cmd_app->add_option("--final-weight", tr.final_weight);
  train_cmd_app->add_option("--attn-lambda", tr.attn_lambda);
  train_cmd_app->add_option("--base-size", tr.base_size, "Resize before random cropping (default: input size + 1/8)");
  out_options(train_cmd_app, tr.out, tr.force);

  InferArgs inf;
  auto* infer_app = app.add_subcommand("infer", "Write saliency maps from a checkpoint");
  infer_app->add_option("--checkpoint", inf.checkpoint)->required()->check(CLI::ExistingFile);
  infer_app->add_option("--data", inf.data, "Dataset directory");
  infer_app->add_option("--split", inf.split);
  infer_app->add_option("--image", inf.images, "PPM image(s)")->check(CLI::ExistingFile);
  out_options(infer_app, inf.out, inf.force);

  EvalArgs ev;
  auto* eval_app = app.add_subcommand("eval", "Evaluate saved saliency maps or a checkpoint");
  eval_app->add_option("--data", ev.data, "Dataset directory")->required();
  eval_app->add_option("--split", ev.split);
  eval_app->add_option("--predictions", ev.predictions, "Directory of NNNNNN.pgm maps");
  eval_app->add_option("--checkpoint", ev.checkpoint)->check(CLI::ExistingFile);
  eval_app->add_option("--beta-sq", ev.metrics.beta_sq);
  eval_app->add_option("--band-radius", ev.metrics.boundary_band_radius);
  out_options(eval_app, ev.out, ev.force);

  WeightmapArgs wm;
  auto* wm_app = app.add_subcommand("weightmap", "Contour weight map of a mask");
  wm_app->add_option("--mask", wm.mask)->required()->check(CLI::ExistingFile);
  wm_app->add_option("--k", wm.cfg.k);
  wm_app->add_option("--se-size", wm.cfg.se_size);
  wm_app->add_option("--gauss-size", wm.cfg.gauss_size);
  wm_app->add_option("--gauss-sigma", wm.cfg.gauss_sigma);
  out_options(wm_app, wm.out, wm.force);

  AttnArgs at;
  auto* attn_app = app.add_subcommand("attn", "Write per-level attention maps");
  attn_app->add_option("--checkpoint", at.checkpoint)->required()->check(CLI::ExistingFile);
  attn_app->add_option("--data", at.data)->required();
  attn_app->add_option("--split", at.split);
  attn_app->add_option("--count", at.count);
  out_options(attn_app, at.out, at.force);

  GradCheckArgs gc;
  auto* gc_app = app.add_subcommand("grad-check", "Compare analytic gradients with finite differences");
  gc_app->add_option("--seed", gc.opts.seed);
  gc_app->add_option("--step", gc.opts.step);
  gc_app->add_option("--coords", gc.opts.coords_per_input);
  gc_app->add_option("--model-params", gc.opts.model_params);
  gc_app->add_option("--tolerance", gc.tolerance);

  try {
    app.parse(argc, argv);
    if (!config_file.empty()) apply_config_file(*train_cmd_app, config_file);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return 1;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }

  try {
    set_num_threads(threads);
    if (*gen_cmd) gen_data(gen, out);
    else if (*train_cmd_app) train_cmd(tr, out);
    else if (*infer_app) infer_cmd(inf, out);
    else if (*eval_app) eval_cmd(ev, out);
    else if (*wm_app) weightmap_cmd(wm, out);
    else if (*attn_app) attn_cmd(at, out);
    else if (*gc_app) return grad_check_cmd(gc, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

int run(int argc, const char* const* argv) { return run(argc, argv, std::cout, std::cerr); }

}  // namespace csal::cli
