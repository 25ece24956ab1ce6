#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <thread>

#include "ssdr/ssdr.hpp"

using namespace ssdr;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct Globals {
  std::string data = "synthetic";
  std::string weights;
  std::vector<std::uint64_t> seeds;
  std::string out = "out";
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  std::size_t updates = 0;
  std::size_t scratch_updates = 0;
  std::vector<std::size_t> n;
  std::size_t split_train = 150;
  std::size_t split_test = 150;
  std::uint64_t split_seed = 0;
  std::uint64_t data_seed = 0;
  bool verbose = false;
};

struct RunOptions {
  std::string mode = "transfer";
  std::string augment = "none";
  std::string init = "gaussian";
  double snr = 0.0;
  std::string noise_sides = "both";
};

AugmentationPlan parse_plan(const std::string& s) {
  if (s == "none") return AugmentationPlan::none();
  if (s == "combined") return AugmentationPlan::combined();
  AugmentationPlan p;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto end = std::min(s.find(',', start), s.size());
    const auto part = s.substr(start, end - start);
    if (part == "brightness") p.brightness = true;
    else if (part == "flips") p.flips = true;
    else if (part == "rotations") p.rotations = true;
    else throw ConfigError("unknown augmentation '" + part + "' (none|combined|brightness,flips,rotations)");
    start = end + 1;
  }
  return p;
}

NoiseSpec parse_sides(const std::string& s) {
  if (s == "both") return {30.0, true, true};
  if (s == "train") return {30.0, true, false};
  if (s == "test") return {30.0, false, true};
  throw ConfigError("unknown noise side '" + s + "' (both|train|test)");
}

ExperimentConfig base_config(const Globals& g) {
  ExperimentConfig cfg;
  cfg.data = g.data;
  cfg.weights = g.weights;
  if (!g.seeds.empty()) cfg.seeds = g.seeds;
  if (!g.n.empty()) {
    cfg.n_values = g.n;
    cfg.small_n = g.n.front();
  }
  cfg.out_dir = g.out;
  if (g.updates) cfg.updates = g.updates;
  if (g.scratch_updates) cfg.scratch_updates = g.scratch_updates;
  cfg.split.seed = g.split_seed;
  cfg.split.per_class_train = g.split_train;
  cfg.split.per_class_test = g.split_test;
  cfg.data_seed = g.data_seed;
  cfg.verbose = g.verbose;
  return cfg;
}

void apply_run_options(ExperimentConfig& cfg, const RunOptions& r, bool snr_given) {
  if (r.mode != "transfer" && r.mode != "scratch") throw ConfigError("mode must be transfer or scratch");
  cfg.transfer = r.mode == "transfer";
  cfg.plan = parse_plan(r.augment);
  cfg.init = InitMethod::parse(r.init);
  if (snr_given) cfg.snr_db = r.snr;
  cfg.noise_sides = parse_sides(r.noise_sides);
}

void print_records(const std::vector<ResultRecord>& recs, ExperimentKind kind, const std::filesystem::path& out) {
  std::cout << csv_line(csv_header(kind));
  for (const auto& r : recs) std::cout << csv_row(r);
  std::cout << "wrote " << (out / (std::string(to_string(kind)) + ".csv")).string() << "\n";
}

int cmd_check(std::size_t samples) {
  bool ok = true;
  for (const auto& [name, report] : standard_gradient_checks(1, samples)) {
    for (const auto& [layer, err] : report.by_layer()) {
      std::printf("%-10s %-16s max_rel_error %.3e\n", name.c_str(), layer.c_str(), err);
      ok = ok && err < kGradCheckTolerance;
    }
  }
  std::printf("%s (tolerance %.0e)\n", ok ? "PASS" : "FAIL", kGradCheckTolerance);
  return ok ? kOk : kNumeric;
}

int cmd_eval(const Globals& g, const RunOptions& r, const std::string& model_path) {
  auto cfg = base_config(g);
  cfg.transfer = r.mode == "transfer";
  ExperimentContext ctx(cfg);
  Model model;
  model.transfer = cfg.transfer;
  const NetworkSpec* specs[] = {&model.extractor, &model.classifier};
  if (cfg.transfer) {
    model.params = load_weights(model_path, model.classifier);
  } else {
    model.params = load_weights(model_path, std::span<const NetworkSpec* const>(specs));
  }
  EvalResult e;
  if (cfg.transfer) {
    e = evaluate(model, ctx.test_features(std::nullopt));
  } else {
    const auto test = ctx.test_images(std::nullopt);
    e = evaluate(model, ImageSource(test), 8);
  }
  nlohmann::json j = {{"model", model_path}, {"accuracy", e.accuracy}, {"confusion", e.confusion},
                      {"test_images", e.predictions.size()}, {"build_id", kBuildId}};
  write_text(cfg.out_dir / "eval.json", j.dump(2) + "\n");
  std::cout << "accuracy " << format_number(e.accuracy) << "\n";
  return kOk;
}

int cmd_featmaps(const Globals& g, const std::string& image, int pool) {
  const auto ext = build_feature_extractor();
  ParamStore params;
  if (g.weights == "random") {
    params = random_extractor_params(ext, g.data_seed);
  } else if (g.weights.empty()) {
    throw WeightsError(WeightsError::Kind::Io, "featmaps needs extractor weights: pass --weights FILE");
  } else {
    params = load_weights(g.weights, ext, true);
  }
  const auto img = read_gray_image(image);
  const auto files = dump_feature_maps(ext, params, preprocess(img), pool, g.out);
  std::cout << "wrote " << files.size() << " feature maps to " << g.out << "\n";
  return kOk;
}

int cmd_extract(const Globals& g) {
  auto cfg = base_config(g);
  cfg.n_values = {1};
  ExperimentContext ctx(cfg);
  const auto& train = ctx.train_features();
  const auto& test = ctx.test_features(std::nullopt);
  std::cout << "cached " << train.size() << " train and " << test.size() << " test feature maps in "
            << (cfg.out_dir / "cache").string() << "\n";
  return kOk;
}

int cmd_synth(const Globals& g, std::size_t per_class) {
  const auto ds = synth_dataset(per_class, g.data_seed);
  save_dataset(ds, g.out);
  std::cout << "wrote " << ds.size() << " images to " << g.out << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Steel surface defect recognition with a frozen VGG16 prefix"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--data", g.data, "Dataset root with one directory per class, or 'synthetic'");
  app.add_option("--weights", g.weights, "Extractor weight container, or 'random'");
  app.add_option("--seed", g.seeds, "Run seed (repeatable)")->allow_extra_args(false);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--updates", g.updates, "Training updates per transfer run")->check(CLI::PositiveNumber);
  app.add_option("--scratch-updates", g.scratch_updates, "Training updates per scratch run")
      ->check(CLI::PositiveNumber);
  app.add_option("--n", g.n, "Images per class (repeatable)")->allow_extra_args(false);
  app.add_option("--split-train", g.split_train, "Training images per class in the fixed split");
  app.add_option("--split-test", g.split_test, "Test images per class in the fixed split");
  app.add_option("--split-seed", g.split_seed, "Seed of the fixed train/test split");
  app.add_option("--data-seed", g.data_seed, "Seed of the synthetic data and the random extractor");
  app.add_flag("-v,--verbose", g.verbose, "Progress messages on standard error");

  RunOptions run;
  bool snr_given = false;
  double snr = 0.0;
  auto add_run_flags = [&](CLI::App* c, bool all) {
    c->add_option("--init", run.init, "gaussian|uniform|xavier|msra");
    if (!all) return;
    c->add_option("--mode", run.mode, "transfer|scratch");
    c->add_option("--augment", run.augment, "none|combined|comma list of brightness,flips,rotations");
    c->add_option("--snr", snr, "Gaussian noise SNR in dB");
    c->add_option("--noise-on", run.noise_sides, "both|train|test");
  };

  auto* extract = app.add_subcommand("extract", "Cache extractor features of the train and test sets");
  auto* train = app.add_subcommand("train", "Train and evaluate one configuration");
  add_run_flags(train, true);
  auto* eval = app.add_subcommand("eval", "Evaluate saved weights on the test set");
  std::string model_path;
  eval->add_option("--model", model_path, "Weights written by 'train'")->required();
  eval->add_option("--mode", run.mode, "transfer|scratch");
  auto* table1 = app.add_subcommand("table1", "Transfer vs scratch across training set sizes");
  add_run_flags(table1, false);
  auto* table3 = app.add_subcommand("table3", "Augmentation conditions at small n");
  add_run_flags(table3, false);
  auto* table4 = app.add_subcommand("table4", "Initialization methods with combined augmentation");
  auto* noise = app.add_subcommand("noise", "Noise robustness grid");
  auto* featmaps = app.add_subcommand("featmaps", "Dump feature maps of one image as PNG");
  std::string image;
  int pool = 3;
  featmaps->add_option("--image", image, "Input image (200x200 grayscale)")->required()->check(CLI::ExistingFile);
  featmaps->add_option("--pool", pool, "Pool layer 1, 2 or 3");
  auto* gradhist = app.add_subcommand("gradhist", "Gradient histograms during a scratch run");
  add_run_flags(gradhist, false);
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset");
  std::size_t per_class = 300;
  synth->add_option("--per-class", per_class, "Images per class")->check(CLI::PositiveNumber);
  auto* check = app.add_subcommand("check", "Gradient check suite");
  std::size_t samples = 50;
  check->add_option("--samples", samples, "Entries sampled per classifier parameter")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  snr_given = std::any_of(app.get_subcommands().begin(), app.get_subcommands().end(),
                          [](const CLI::App* c) { return c->count("--snr") > 0; });
  run.snr = snr;
  set_num_threads(g.threads);

  try {
    if (check->parsed()) return cmd_check(samples);
    if (extract->parsed()) return cmd_extract(g);
    if (synth->parsed()) return cmd_synth(g, per_class);
    if (featmaps->parsed()) return cmd_featmaps(g, image, pool);
    if (eval->parsed()) return cmd_eval(g, run, model_path);
    auto cfg = base_config(g);
    if (train->parsed() || gradhist->parsed()) {
      apply_run_options(cfg, run, snr_given);
      if (gradhist->parsed()) {
        cfg.transfer = false;
        cfg.record_grad_hist = true;
      }
      const auto rec = run_single(cfg);
      std::cout << "accuracy " << format_number(rec.accuracy) << "\n"
                << "wrote " << (cfg.out_dir / "single.json").string() << "\n";
      if (cfg.record_grad_hist) std::cout << "wrote " << (cfg.out_dir / "gradhist.csv").string() << "\n";
      return kOk;
    }
    cfg.init = InitMethod::parse(run.init);
    if (table1->parsed()) print_records(run_table1(cfg), ExperimentKind::Table1, cfg.out_dir);
    if (table3->parsed()) print_records(run_table3(cfg), ExperimentKind::Table3, cfg.out_dir);
    if (table4->parsed()) print_records(run_table4(cfg), ExperimentKind::Table4, cfg.out_dir);
    if (noise->parsed()) print_records(run_noise(cfg), ExperimentKind::Noise, cfg.out_dir);
    return kOk;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
}
