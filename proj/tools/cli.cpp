#include "cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "unigan/config.hpp"
#include "unigan/evaluate.hpp"
#include "unigan/image_io.hpp"
#include "unigan/training.hpp"

namespace unigan::cli {
namespace fs = std::filesystem;

namespace {

// Root for derived run directories.
fs::path output_root() {
  const char* env = std::getenv("UNIGAN_OUTPUT_ROOT");
  return env != nullptr && *env != '\0' ? fs::path(env) : fs::path("runs");
}

// `<root>/<cmd>-<UTC timestamp>-seed<seed>`; a numeric suffix avoids reusing a directory.
fs::path run_directory(const std::string& command, std::uint64_t seed) {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = command + "-" + stamp + "-seed" + std::to_string(seed);
  fs::path dir = output_root() / base;
  for (int i = 1; fs::exists(dir); ++i) dir = output_root() / (base + "-" + std::to_string(i));
  return dir;
}

fs::path resolve_out(const std::string& flag, const std::string& command, std::uint64_t seed) {
  fs::path dir = flag.empty() ? run_directory(command, seed) : fs::path(flag);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f.flush()) throw IoError("cannot write " + path.string());
}

void require_file(const fs::path& path, const char* what) {
  if (!fs::is_regular_file(path)) throw LoadError(std::string(what) + " not found: " + path.string());
}

// ---------------------------------------------------------------------------

struct ToydataArgs {
  int pairs = 16;
  int test_pairs = 8;
  int size = 64;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_toydata(const ToydataArgs& a, std::ostream& out) {
  ToyDatasetSpec spec;
  spec.num_pairs = a.pairs;
  spec.num_test_pairs = a.test_pairs;
  spec.image_size = a.size;
  spec.rng_seed = a.seed;
  spec.validate();
  const fs::path dir = resolve_out(a.out, "toydata", a.seed);
  generate_toy_dataset(spec, dir);
  out << dir.string() << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string resume;
  std::optional<std::string> preset, ablation;
  std::optional<int> epochs, batch;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  RunConfigFile run = a.config.empty() ? RunConfigFile{} : RunConfigFile::load(a.config);
  TrainConfig& cfg = run.train;
  // Flags override the file, which overrides defaults.
  if (a.preset) {
    cfg.preset = preset_from_string(*a.preset);
    cfg.apply_preset();
  }
  if (a.ablation) cfg.ablation = ablation_row_from_string(*a.ablation);
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch) cfg.batch_size = *a.batch;
  if (a.lr) cfg.lr = *a.lr;
  if (a.seed) cfg.seed = *a.seed;
  if (a.steps) cfg.max_steps = *a.steps;
  if (!a.data.empty()) run.data = a.data;
  if (run.data.empty()) throw ConfigError("no dataset given (use --data or the config key \"data\")");
  cfg.validate();

  const auto samples = load_paired_dataset(run.data, Split::train, cfg.structure_channels);
  TrainState state = a.resume.empty() ? TrainState(cfg) : TrainState::load(a.resume);
  if (!a.resume.empty() && to_json(state.config()) != to_json(cfg)) {
    throw ConfigError("checkpoint " + a.resume + " was written with a different configuration");
  }
  const fs::path dir = resolve_out(a.out.empty() ? run.out : a.out, "train", cfg.seed);
  run.out = dir.string();
  write_text(dir / "config.json", run.to_json().dump(2) + "\n");

  TrainOptions options;
  options.out_dir = dir;
  const std::int64_t total = total_steps(cfg, samples.size());
  if (!a.quiet) {
    options.on_step = [&](std::int64_t step, const LossReport& r) {
      if (step == 1 || step == total || step % 50 == 0) {
        out << "step " << step << "/" << total << " total_g " << r.total_g << " total_d " << r.total_d << '\n';
      }
    };
  }
  const TrainResult result = train(samples, state, options);
  out << "steps " << result.steps << "\ncheckpoint " << result.final_checkpoint.string() << '\n';
  return kExitOk;
}

struct TranslateArgs {
  std::string checkpoint;
  std::string image;
  std::vector<std::string> structures;
  std::string out;
};

int cmd_translate(const TranslateArgs& a, std::ostream& out) {
  require_file(a.checkpoint, "checkpoint");
  require_file(a.image, "image");
  for (const auto& s : a.structures) require_file(s, "structure file");
  const TrainState state = TrainState::load(a.checkpoint);
  const Tensor image = raster_to_tensor(read_png(a.image), 3);
  std::vector<Tensor> structures;
  for (const auto& s : a.structures) {
    structures.push_back(raster_to_tensor(read_png(s), state.config().structure_channels));
  }
  const auto outputs = translate(state, image, structures);
  const fs::path dir = resolve_out(a.out, "translate", state.config().seed);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    char prefix[16];
    std::snprintf(prefix, sizeof prefix, "%03zu_", i);
    const fs::path path = dir / (prefix + fs::path(a.structures[i]).stem().string() + ".png");
    write_png(path, tensor_to_raster(outputs[i]));
    out << path.string() << '\n';
  }
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "test";
  std::string metrics = "psnr,ssim,sd,fid,frd";
  std::string extractor = "toy";
  std::string layer;
  std::string out;
  std::string real_features, gen_features;
  bool self = false;
  bool grid = false;
  bool per_pair = false;
  bool dump_features = false;
  double data_range = 255.0;
  std::int64_t pool_grid = 4;
};

MetricReport features_only_report(const EvalArgs& a, const EvalOptions& o) {
  const FeatureMatrix real = read_features(a.real_features);
  const FeatureMatrix gen = read_features(a.gen_features);
  MetricReport report;
  for (const auto& m : o.metrics) {
    if (m == "fid") {
      if (real.size() < real.front().size()) {
        report.warnings.push_back("fid: " + std::to_string(real.size()) + " samples for " +
                                  std::to_string(real.front().size()) +
                                  "-dimensional features; covariance is rank deficient");
      }
      report.rows.emplace_back(m, fid(GaussianStats::from_features(real), GaussianStats::from_features(gen)));
    } else if (m == "frd") {
      report.rows.emplace_back(m, frd(real, gen));
    } else {
      throw ConfigError("metric '" + m + "' needs images; feature files only support fid and frd");
    }
  }
  return report;
}

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  EvalOptions options;
  options.metrics = parse_metric_list(a.metrics);
  options.data_range = a.data_range;
  options.layer = a.layer;
  options.pool_grid = a.pool_grid;
  if (a.data_range <= 0) throw ConfigError("--data-range must be positive");

  MetricReport report;
  fs::path dir;
  if (!a.real_features.empty() || !a.gen_features.empty()) {
    if (a.real_features.empty() || a.gen_features.empty()) {
      throw ConfigError("--real-features and --gen-features go together");
    }
    report = features_only_report(a, options);
    dir = resolve_out(a.out, "eval", 0);
  } else {
    if (a.data.empty()) throw ConfigError("eval needs --data");
    if (a.self == !a.checkpoint.empty()) throw ConfigError("eval needs exactly one of --checkpoint and --self");
    const Split split = a.split == "train" ? Split::train
                        : a.split == "test" ? Split::test
                                            : throw ConfigError("--split must be train or test");
    std::optional<TrainState> state;
    if (!a.checkpoint.empty()) {
      require_file(a.checkpoint, "checkpoint");
      state.emplace(TrainState::load(a.checkpoint));
    }
    const int channels = state ? state->config().structure_channels : 3;
    const auto samples = load_paired_dataset(a.data, split, channels);
    const auto extractor = make_extractor(a.extractor);

    std::vector<Tensor> real, generated;
    for (const auto& s : samples) real.push_back(s.y.tensor());
    generated = state ? generate_targets(*state, samples) : real;
    report = evaluate_images(real, generated, extractor.get(), options);

    dir = resolve_out(a.out, "eval", state ? state->config().seed : 0);
    if (a.grid) write_png(dir / "grid.png", make_grid(samples, generated));
    if (a.dump_features) {
      const std::string layer = a.layer.empty() ? extractor->default_layer() : a.layer;
      FeatureMatrix fr, fg;
      for (std::size_t i = 0; i < real.size(); ++i) {
        for (auto& row : embed(*extractor, real[i], layer, a.pool_grid)) fr.push_back(std::move(row));
        for (auto& row : embed(*extractor, generated[i], layer, a.pool_grid)) fg.push_back(std::move(row));
      }
      write_features(dir / "real.ugft", fr);
      write_features(dir / "gen.ugft", fg);
    }
  }
  for (const auto& w : report.warnings) err << "warning: " << w << '\n';
  const std::string csv = report.to_csv();
  write_text(dir / "metrics.csv", csv);
  if (a.per_pair && !report.pair_columns.empty()) write_text(dir / "pairs.csv", report.pairs_to_csv());
  out << csv;
  return kExitOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Structure-guided image-to-image translation"};
  app.require_subcommand(1);

  ToydataArgs td;
  auto* toydata = app.add_subcommand("toydata", "Render the synthetic shape dataset");
  toydata->add_option("--pairs", td.pairs, "Training pairs")->capture_default_str();
  toydata->add_option("--test-pairs", td.test_pairs, "Held-out pairs")->capture_default_str();
  toydata->add_option("--size", td.size, "Image side, a multiple of 4")->capture_default_str();
  toydata->add_option("--seed", td.seed, "Random seed")->capture_default_str();
  toydata->add_option("--out", td.out, "Output directory (default: a fresh run directory)");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", tr.config, "JSON run configuration");
  train_cmd->add_option("--data", tr.data, "Dataset root");
  train_cmd->add_option("--preset", tr.preset, "gesture | crossview | custom");
  train_cmd->add_option("--ablation", tr.ablation, "Ablation row (B..F14)");
  train_cmd->add_option("--epochs", tr.epochs);
  train_cmd->add_option("--batch", tr.batch);
  train_cmd->add_option("--lr", tr.lr);
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--steps", tr.steps, "Stop after this many steps");
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from");
  train_cmd->add_option("--out", tr.out, "Output directory");
  train_cmd->add_flag("--quiet", tr.quiet, "No progress lines");

  TranslateArgs tl;
  auto* translate_cmd = app.add_subcommand("translate", "Render an image under new structures");
  translate_cmd->add_option("--checkpoint", tl.checkpoint)->required();
  translate_cmd->add_option("--image", tl.image)->required();
  translate_cmd->add_option("--structure", tl.structures, "One or more structure rasters")->required();
  translate_cmd->add_option("--out", tl.out, "Output directory");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Compute quality metrics");
  eval_cmd->add_option("--checkpoint", ev.checkpoint);
  eval_cmd->add_flag("--self", ev.self, "Score the ground truth against itself");
  eval_cmd->add_option("--data", ev.data, "Dataset root");
  eval_cmd->add_option("--split", ev.split)->capture_default_str();
  eval_cmd->add_option("--metrics", ev.metrics)->capture_default_str();
  eval_cmd->add_option("--extractor", ev.extractor, "toy | identity | exported extractor file")->capture_default_str();
  eval_cmd->add_option("--layer", ev.layer, "Feature tap for fid/frd");
  eval_cmd->add_option("--pool-grid", ev.pool_grid)->capture_default_str();
  eval_cmd->add_option("--data-range", ev.data_range)->capture_default_str();
  eval_cmd->add_flag("--grid", ev.grid, "Write grid.png");
  eval_cmd->add_flag("--per-pair", ev.per_pair, "Write pairs.csv");
  eval_cmd->add_flag("--dump-features", ev.dump_features, "Write real.ugft and gen.ugft");
  eval_cmd->add_option("--real-features", ev.real_features, "Feature file for fid/frd without images");
  eval_cmd->add_option("--gen-features", ev.gen_features);
  eval_cmd->add_option("--out", ev.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (toydata->parsed()) return cmd_toydata(td, out);
    if (train_cmd->parsed()) return cmd_train(tr, out);
    if (translate_cmd->parsed()) return cmd_translate(tl, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}

}  // namespace unigan::cli
