#pragma once

#include <array>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "ssdr/augment.hpp"
#include "ssdr/image_io.hpp"
#include "ssdr/init.hpp"
#include "ssdr/model.hpp"
#include "ssdr/noise.hpp"
#include "ssdr/parallel.hpp"
#include "ssdr/split.hpp"
#include "ssdr/synth.hpp"
#include "ssdr/train.hpp"

#ifndef SSDR_BUILD_ID
#define SSDR_BUILD_ID "unknown"
#endif

namespace ssdr {

inline constexpr std::string_view kBuildId = SSDR_BUILD_ID;
inline constexpr std::array<std::size_t, 8> kDefaultNValues = {10, 30, 50, 70, 90, 110, 130, 150};
inline constexpr std::size_t kSmallSampleN = 10;

enum class ExperimentKind { Table1, Table3, Table4, Noise, Single };

inline std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Table1: return "table1";
    case ExperimentKind::Table3: return "table3";
    case ExperimentKind::Table4: return "table4";
    case ExperimentKind::Noise: return "noise";
    case ExperimentKind::Single: return "single";
  }
  return "?";
}

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::Single;
  std::string data = "synthetic";  // dataset root or "synthetic"
  std::string weights;             // extractor container, "random", or empty
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<std::size_t> n_values{kDefaultNValues.begin(), kDefaultNValues.end()};
  std::size_t small_n = kSmallSampleN;  // images per class for table3 and table4
  AugmentationPlan plan;                // single runs
  InitMethod init = InitMethod::gaussian();
  std::optional<double> snr_db;         // single runs; none = clean
  NoiseSpec noise_sides;                // which side(s) receive noise
  bool transfer = true;                 // single runs
  std::filesystem::path out_dir = "out";
  std::size_t updates = 6000;           // transfer runs
  std::size_t scratch_updates = 3000;   // scratch runs
  std::size_t batch_size = 3;
  SplitSpec split;                      // fixed train/test split
  std::uint64_t data_seed = 0;          // synthetic generation and random extractor
  std::size_t spill_threshold_mb = 512; // larger feature banks are file-backed
  bool record_grad_hist = false;        // capture |gradient| histograms while training
  bool verbose = false;

  void validate() const {
    if (seeds.empty()) throw ConfigError("at least one seed is required");
    if (n_values.empty()) throw ConfigError("at least one n value is required");
    std::vector<std::size_t> all_n = n_values;
    if (kind == ExperimentKind::Table3 || kind == ExperimentKind::Table4) all_n = {small_n};
    for (auto n : all_n) {
      if (n == 0) throw ConfigError("n must be at least 1 image per class");
      if (n > split.per_class_train) {
        throw ConfigError("n=" + std::to_string(n) + " exceeds the " + std::to_string(split.per_class_train) +
                          " training images per class");
      }
    }
    if (updates == 0 || scratch_updates == 0) throw ConfigError("update count must be positive");
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (split.per_class_train == 0 || split.per_class_test == 0) throw ConfigError("split counts must be positive");
  }

  nlohmann::json to_json() const {
    return {{"experiment", to_string(kind)},
            {"data", data},
            {"weights", weights},
            {"seeds", seeds},
            {"n_values", n_values},
            {"small_n", small_n},
            {"augmentation", {{"brightness", plan.brightness}, {"flips", plan.flips}, {"rotations", plan.rotations}}},
            {"init", init.name()},
            {"snr_db", snr_db ? nlohmann::json(*snr_db) : nlohmann::json(nullptr)},
            {"noise_train", noise_sides.apply_to_train},
            {"noise_test", noise_sides.apply_to_test},
            {"transfer", transfer},
            {"out_dir", out_dir.string()},
            {"updates", updates},
            {"scratch_updates", scratch_updates},
            {"batch_size", batch_size},
            {"split", {{"seed", split.seed}, {"train", split.per_class_train}, {"test", split.per_class_test}}},
            {"data_seed", data_seed}};
  }
};

/// One point of an experiment grid.
struct Cell {
  std::string id;
  std::vector<std::pair<std::string, std::string>> columns;  // CSV key columns before seed
  std::size_t n = 10;
  bool transfer = true;
  AugmentationPlan plan;
  InitMethod init;
  std::optional<double> snr_db;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"id", id},
            {"n", n},
            {"mode", transfer ? "transfer" : "scratch"},
            {"augmentation", {{"brightness", plan.brightness}, {"flips", plan.flips}, {"rotations", plan.rotations}}},
            {"init", init.name()},
            {"snr_db", snr_db ? nlohmann::json(*snr_db) : nlohmann::json(nullptr)},
            {"seed", seed}};
  }
};

using Confusion = std::array<std::array<std::uint64_t, kNumClasses>, kNumClasses>;

struct ResultRecord {
  nlohmann::json config;  // ExperimentConfig echo
  Cell cell;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  Confusion confusion{};
  double wall_seconds = 0.0;
  std::string build_id{kBuildId};
  std::size_t train_samples = 0;
  double final_loss = 0.0;  // mean of the last min(100, updates) updates
  TrainHistory history;
  ParamStore trained;  // trainable networks after training

  static double accuracy_of(const Confusion& c) {
    std::uint64_t trace = 0, total = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      for (std::size_t j = 0; j < c[i].size(); ++j) total += c[i][j], trace += i == j ? c[i][j] : 0;
    }
    return total ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
  }

  nlohmann::json to_json() const {
    return {{"config", config},         {"cell", cell.to_json()},          {"seed", seed},
            {"accuracy", accuracy},     {"confusion", confusion},          {"wall_seconds", wall_seconds},
            {"build_id", build_id},     {"train_samples", train_samples},  {"final_loss", final_loss},
            {"updates", history.rows.size()}};
  }
};

/// Shortest decimal that round-trips.
inline std::string format_number(double v) {
  std::array<char, 32> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

inline std::string format_snr(const std::optional<double>& snr) { return snr ? format_number(*snr) : "none"; }

inline std::vector<std::string> csv_header(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::Table1: return {"n", "mode", "seed", "accuracy"};
    case ExperimentKind::Table3: return {"condition", "seed", "accuracy"};
    case ExperimentKind::Table4: return {"method", "seed", "accuracy"};
    case ExperimentKind::Noise: return {"n", "snr", "seed", "accuracy"};
    case ExperimentKind::Single: return {"seed", "accuracy"};
  }
  return {};
}

inline std::string csv_line(const std::vector<std::string>& fields) {
  std::string s;
  for (std::size_t i = 0; i < fields.size(); ++i) s += (i ? "," : "") + fields[i];
  return s + "\n";
}

inline std::string csv_row(const ResultRecord& r) {
  std::vector<std::string> f;
  for (const auto& [key, value] : r.cell.columns) f.push_back(value);
  f.push_back(std::to_string(r.seed));
  f.push_back(format_number(r.accuracy));
  return csv_line(f);
}

inline std::string history_csv(const TrainHistory& h) {
  std::string s = "update,loss,lr\n";
  for (const auto& r : h.rows) s += std::to_string(r.update) + "," + format_number(r.loss) + "," + format_number(r.lr) + "\n";
  return s;
}

inline std::string histogram_csv(const TrainHistory& h) {
  std::string s = "update,layer,bin_lo,bin_hi,count\n";
  for (const auto& g : h.histograms) {
    for (std::size_t b = 0; b < g.counts.size(); ++b) {
      s += std::to_string(g.update) + "," + g.layer + "," + format_number(g.edges[b]) + "," +
           format_number(g.edges[b + 1]) + "," + std::to_string(g.counts[b]) + "\n";
    }
  }
  return s;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) throw DataError(path.string() + ": cannot write");
}

/// Subset of another source, by index.
class IndexedSource final : public SampleSource {
 public:
  IndexedSource(const SampleSource& base, std::vector<std::size_t> idx) : base_(&base), idx_(std::move(idx)) {}
  std::size_t size() const override { return idx_.size(); }
  int label(std::size_t i) const override { return base_->label(idx_[i]); }
  Shape sample_shape() const override { return base_->sample_shape(); }
  void copy_sample(std::size_t i, std::span<float> dst) const override { base_->copy_sample(idx_[i], dst); }

 private:
  const SampleSource* base_;
  std::vector<std::size_t> idx_;
};

/// Each image receives independent noise from stream (seed, purpose, index).
inline Dataset add_noise(const Dataset& ds, double snr_db, std::uint64_t seed, std::string_view purpose) {
  Dataset out{std::vector<LabeledImage>(ds.size()), ds.provenance + "[snr=" + format_number(snr_db) + "]"};
  parallel_for(ds.size(), [&](std::size_t i) {
    Rng rng = make_rng(seed, purpose, i);
    out.images[i] = add_gaussian_noise(ds.images[i], snr_db, rng).image;
  });
  return out;
}

/// Frozen extractor with MSRA-initialized weights, for runs without pretrained weights.
inline ParamStore random_extractor_params(const NetworkSpec& extractor, std::uint64_t seed) {
  Rng rng = make_rng(seed, "random-extractor");
  auto p = init_params(extractor, InitMethod::msra(), rng);
  p.set_trainable(false);
  return p;
}

/// Shared data of one experiment: the fixed split, the extractor weights and
/// cached extractor features of the clean train pool and of each test variant.
class ExperimentContext {
 public:
  explicit ExperimentContext(const ExperimentConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Dataset all = cfg_.data == "synthetic"
                      ? synth_dataset(cfg_.split.per_class_train + cfg_.split.per_class_test, cfg_.data_seed)
                      : load_dataset(cfg_.data);
    auto s = split(all, cfg_.split);
    train_ = std::move(s.train);
    test_ = std::move(s.test);
  }

  const ExperimentConfig& config() const { return cfg_; }
  const Dataset& train_pool() const { return train_; }
  const Dataset& test_set() const { return test_; }
  const NetworkSpec& extractor() const { return extractor_spec_; }

  void log(const std::string& msg) const {
    if (!cfg_.verbose) return;
    std::lock_guard lock(log_mutex_);
    std::clog << "[ssdr] " << msg << std::endl;
  }

  /// Loads the extractor weights; throws WeightsError when they are missing.
  const ParamStore& extractor_params() {
    std::lock_guard lock(mutex_);
    if (!extractor_params_) {
      if (cfg_.weights == "random") {
        extractor_params_ = random_extractor_params(extractor_spec_, cfg_.data_seed);
      } else if (cfg_.weights.empty()) {
        throw WeightsError(WeightsError::Kind::Io,
                           "transfer runs need extractor weights: pass --weights FILE (or --weights random)");
      } else {
        extractor_params_ = load_weights(cfg_.weights, extractor_spec_, true);
      }
    }
    return *extractor_params_;
  }

  std::filesystem::path spill_dir_for(std::size_t images) const {
    const std::size_t bytes = images * extractor_spec_.output_shape(1).numel() * sizeof(float);
    return bytes > cfg_.spill_threshold_mb * (std::size_t{1} << 20) ? cfg_.out_dir / "spill" : std::filesystem::path{};
  }

  FeatureBank extract(const Dataset& ds) {
    const auto& p = extractor_params();
    return extract_features(extractor_spec_, p, ds.images, spill_dir_for(ds.size()));
  }

  /// Features of the clean training pool, computed once and cached on disk.
  const FeatureBank& train_features() { return cached("train", std::nullopt, train_, "noise-train"); }

  /// Features of the test set, with noise when snr is set.
  const FeatureBank& test_features(const std::optional<double>& snr) { return cached("test", snr, test_, "noise-test"); }

  /// Registers the clean augmented transfer cells of a grid. Cells with the
  /// same (n, seed) share one feature bank expanded with the union of their
  /// plans; the bank is freed after its last registered user releases it.
  void register_cells(const std::vector<Cell>& cells) {
    std::lock_guard lock(mutex_);
    for (const auto& c : cells) {
      if (!uses_shared_bank(c)) continue;
      auto& e = shared_[shared_key(c)];
      if (!e) e = std::make_shared<SharedBank>();
      e->plan = e->plan.united(c.plan);
      ++e->users;
    }
  }

  /// Features of the augmented training sample of a clean transfer cell and
  /// the positions of the cell's own images within them.
  std::pair<std::shared_ptr<const FeatureBank>, std::vector<std::size_t>> shared_features(const Cell& c) {
    std::shared_ptr<SharedBank> e;
    {
      std::lock_guard lock(mutex_);
      auto& slot = shared_[shared_key(c)];
      if (!slot) {
        slot = std::make_shared<SharedBank>();
        slot->plan = c.plan;
        slot->users = 1;
      }
      e = slot;
    }
    std::lock_guard build(e->build);
    if (!e->bank) {
      const Dataset ds = expand(sample_n_per_class(train_, c.n, c.seed), e->plan);
      log("extracting " + std::to_string(ds.size()) + " augmented feature maps for " + shared_key(c));
      e->bank = std::make_shared<const FeatureBank>(extract(ds));
    }
    return {e->bank, expansion_subset(c.n * kClassNames.size(), e->plan, c.plan)};
  }

  void release_shared(const Cell& c) {
    std::lock_guard lock(mutex_);
    auto it = shared_.find(shared_key(c));
    if (it != shared_.end() && --it->second->users == 0) shared_.erase(it);
  }

  bool uses_shared_bank(const Cell& c) const {
    return c.transfer && !(c.snr_db && cfg_.noise_sides.apply_to_train) && c.plan.expansion_factor() > 1;
  }

  static std::string shared_key(const Cell& c) { return "n" + std::to_string(c.n) + "-s" + std::to_string(c.seed); }

  /// Test images as seen by the model of a cell.
  Dataset test_images(const std::optional<double>& snr) const {
    return snr && cfg_.noise_sides.apply_to_test ? add_noise(test_, *snr, cfg_.split.seed, "noise-test") : test_;
  }

 private:
  const FeatureBank& cached(const std::string& part, const std::optional<double>& requested, const Dataset& ds,
                            std::string_view purpose) {
    const bool noisy = requested.has_value() && cfg_.noise_sides.apply_to_test;
    const double level = noisy ? *requested : 0.0;
    const std::string key = part + (noisy ? "_snr" + format_number(level) : "");
    {
      std::lock_guard lock(mutex_);
      if (auto it = banks_.find(key); it != banks_.end()) return *it->second;
    }
    const auto dir = cfg_.out_dir / "cache";
    const auto bank_path = dir / (key + ".ssdr");
    const auto key_path = dir / (key + ".json");
    const std::string fingerprint = cache_fingerprint(key);
    std::unique_ptr<FeatureBank> bank;
    if (std::filesystem::exists(bank_path) && read_file(key_path) == fingerprint) {
      log("loading cached features " + bank_path.string());
      bank = std::make_unique<FeatureBank>(FeatureBank::load(bank_path, spill_dir_for(ds.size())));
    } else {
      log("extracting " + key + " features for " + std::to_string(ds.size()) + " images");
      bank = std::make_unique<FeatureBank>(extract(noisy ? add_noise(ds, level, cfg_.split.seed, purpose) : ds));
      std::filesystem::create_directories(dir);
      bank->save(bank_path);
      write_text(key_path, fingerprint);
    }
    std::lock_guard lock(mutex_);
    return *banks_.emplace(key, std::move(bank)).first->second;
  }

  std::string cache_fingerprint(const std::string& key) const {
    nlohmann::json j = {{"key", key},
                        {"data", cfg_.data},
                        {"weights", cfg_.weights},
                        {"split", {cfg_.split.seed, cfg_.split.per_class_train, cfg_.split.per_class_test}},
                        {"data_seed", cfg_.data_seed},
                        {"build_id", kBuildId}};
    if (!cfg_.weights.empty() && cfg_.weights != "random" && std::filesystem::exists(cfg_.weights)) {
      j["weights_bytes"] = std::filesystem::file_size(cfg_.weights);
      j["weights_mtime"] = std::filesystem::last_write_time(cfg_.weights).time_since_epoch().count();
    }
    if (cfg_.data != "synthetic" && std::filesystem::exists(cfg_.data)) {
      j["data_mtime"] = std::filesystem::last_write_time(cfg_.data).time_since_epoch().count();
    }
    return j.dump();
  }

  static std::string read_file(const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
  }

  ExperimentConfig cfg_;
  NetworkSpec extractor_spec_ = build_feature_extractor();
  Dataset train_, test_;
  std::optional<ParamStore> extractor_params_;
  struct SharedBank {
    std::mutex build;
    AugmentationPlan plan;
    std::shared_ptr<const FeatureBank> bank;
    std::size_t users = 0;
  };

  std::map<std::string, std::unique_ptr<FeatureBank>> banks_;
  std::map<std::string, std::shared_ptr<SharedBank>> shared_;
  std::mutex mutex_;
  mutable std::mutex log_mutex_;
};

/// Trains and evaluates one cell. Randomness comes from streams keyed by the
/// cell seed and purpose ("sample", "init", "train", "noise-train", ...), so a
/// cell gives the same result in any grid and at any thread count.
inline ResultRecord run_cell(ExperimentContext& ctx, const Cell& cell) {
  const auto& cfg = ctx.config();
  const auto start = std::chrono::steady_clock::now();
  ResultRecord rec;
  rec.config = cfg.to_json();
  rec.cell = cell;
  rec.seed = cell.seed;

  const bool noisy_train = cell.snr_db && cfg.noise_sides.apply_to_train;
  const bool clean_train = !noisy_train && cell.plan.expansion_factor() == 1;
  auto train_images = [&] {
    Dataset ds = expand(sample_n_per_class(ctx.train_pool(), cell.n, cell.seed), cell.plan);
    return noisy_train ? add_noise(ds, *cell.snr_db, cell.seed, "noise-train") : ds;
  };

  Model model;
  model.transfer = cell.transfer;
  Rng init_rng = make_rng(cell.seed, "init");
  model.params = init_params(model.classifier, cell.init, init_rng);
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.max_updates = cell.transfer ? cfg.updates : cfg.scratch_updates;
  tc.seed = cell.seed;
  tc.transfer = cell.transfer;
  tc.init = cell.init;
  tc.record_grad_hist = cfg.record_grad_hist;
  Rng train_rng = make_rng(cell.seed, "train");

  EvalResult eval;
  if (cell.transfer) {
    std::unique_ptr<SampleSource> data;
    std::optional<FeatureBank> own;
    std::shared_ptr<const FeatureBank> shared;
    if (clean_train) {
      data = std::make_unique<IndexedSource>(ctx.train_features(),
                                             sample_indices_per_class(ctx.train_pool(), cell.n, cell.seed));
    } else if (ctx.uses_shared_bank(cell)) {
      auto [bank, idx] = ctx.shared_features(cell);
      shared = std::move(bank);
      data = std::make_unique<IndexedSource>(*shared, std::move(idx));
    } else {
      own.emplace(ctx.extract(train_images()));
      data = std::make_unique<IndexedSource>(*own, [&] {
        std::vector<std::size_t> all(own->size());
        std::iota(all.begin(), all.end(), 0);
        return all;
      }());
    }
    rec.train_samples = data->size();
    ctx.log(cell.id + ": training on " + std::to_string(data->size()) + " feature maps");
    rec.history = train(model, *data, tc, train_rng);
    if (shared) {
      data.reset();
      shared.reset();
      ctx.release_shared(cell);
    }
    eval = evaluate(model, ctx.test_features(cell.snr_db));
  } else {
    Rng ext_rng = make_rng(cell.seed, "init-extractor");
    model.params.merge(init_params(model.extractor, cell.init, ext_rng));
    const Dataset train_ds = train_images();
    rec.train_samples = train_ds.size();
    ctx.log(cell.id + ": training from scratch on " + std::to_string(train_ds.size()) + " images");
    rec.history = train(model, ImageSource(train_ds), tc, train_rng);
    const Dataset test_ds = ctx.test_images(cell.snr_db);
    eval = evaluate(model, ImageSource(test_ds), 8);
  }
  rec.confusion = eval.confusion;
  rec.accuracy = ResultRecord::accuracy_of(rec.confusion);
  const std::size_t u = rec.history.rows.size();
  rec.final_loss = rec.history.mean_loss(u > 100 ? u - 99 : 1, u);
  rec.trained = std::move(model.params);
  rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.log(cell.id + ": accuracy " + format_number(rec.accuracy));
  return rec;
}

inline std::vector<Cell> table1_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (auto n : cfg.n_values) {
    for (bool transfer : {true, false}) {
      for (auto seed : cfg.seeds) {
        const std::string mode = transfer ? "transfer" : "scratch";
        Cell c{"n" + std::to_string(n) + "-" + mode + "-s" + std::to_string(seed),
               {{"n", std::to_string(n)}, {"mode", mode}}, n, transfer, AugmentationPlan::none(), cfg.init,
               std::nullopt, seed};
        cells.push_back(std::move(c));
      }
    }
  }
  return cells;
}

inline std::vector<Cell> table3_cells(const ExperimentConfig& cfg) {
  const std::array<std::pair<const char*, AugmentationPlan>, 5> conditions = {{
      {"original", AugmentationPlan::none()},
      {"brightness", {true, false, false}},
      {"flips", {false, true, false}},
      {"rotations", {false, false, true}},
      {"combined", AugmentationPlan::combined()},
  }};
  std::vector<Cell> cells;
  for (const auto& [name, plan] : conditions) {
    for (auto seed : cfg.seeds) {
      cells.push_back({std::string(name) + "-s" + std::to_string(seed), {{"condition", name}}, cfg.small_n, true,
                       plan, cfg.init, std::nullopt, seed});
    }
  }
  return cells;
}

inline std::vector<Cell> table4_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (auto method : {InitMethod::gaussian(), InitMethod::uniform(), InitMethod::xavier(), InitMethod::msra()}) {
    for (auto seed : cfg.seeds) {
      const std::string name(method.name());
      cells.push_back({name + "-s" + std::to_string(seed), {{"method", name}}, cfg.small_n, true,
                       AugmentationPlan::combined(), method, std::nullopt, seed});
    }
  }
  return cells;
}

inline constexpr std::array<std::optional<double>, 3> kNoiseLevels = {std::nullopt, 30.0, 5.0};

inline std::vector<Cell> noise_cells(const ExperimentConfig& cfg) {
  std::vector<Cell> cells;
  for (auto n : cfg.n_values) {
    for (const auto& snr : kNoiseLevels) {
      for (auto seed : cfg.seeds) {
        const std::string s = format_snr(snr);
        cells.push_back({"n" + std::to_string(n) + "-snr" + s + "-s" + std::to_string(seed),
                         {{"n", std::to_string(n)}, {"snr", s}}, n, true, AugmentationPlan::combined(),
                         InitMethod::xavier(), snr, seed});
      }
    }
  }
  return cells;
}

inline std::vector<Cell> cells_for(const ExperimentConfig& cfg) {
  switch (cfg.kind) {
    case ExperimentKind::Table1: return table1_cells(cfg);
    case ExperimentKind::Table3: return table3_cells(cfg);
    case ExperimentKind::Table4: return table4_cells(cfg);
    case ExperimentKind::Noise: return noise_cells(cfg);
    case ExperimentKind::Single: break;
  }
  std::vector<Cell> cells;
  for (auto seed : cfg.seeds) {
    cells.push_back({"single-s" + std::to_string(seed), {}, cfg.n_values.front(), cfg.transfer, cfg.plan, cfg.init,
                     cfg.snr_db, seed});
  }
  return cells;
}

/// Runs every cell of the configured grid in parallel, writing
/// out/<experiment>/<cell>.{csv,json,history.csv} per cell and the merged
/// out/<experiment>.csv in grid order.
inline std::vector<ResultRecord> run_experiment(const ExperimentConfig& cfg) {
  ExperimentContext ctx(cfg);
  const auto cells = cells_for(cfg);
  const bool any_transfer = std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return c.transfer; });
  if (any_transfer) {
    ctx.extractor_params();  // fail fast on missing weights
    ctx.train_features();
    for (const auto& c : cells) {
      if (c.transfer) ctx.test_features(c.snr_db);
    }
  }
  const auto name = std::string(to_string(cfg.kind));
  const auto dir = cfg.out_dir / name;
  const auto header = csv_line(csv_header(cfg.kind));
  ctx.register_cells(cells);
  // Cells sharing an augmented feature bank run back to back so that it can
  // be released early; results stay in grid order.
  std::vector<std::size_t> order(cells.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const bool sa = ctx.uses_shared_bank(cells[a]), sb = ctx.uses_shared_bank(cells[b]);
    if (sa != sb) return sa < sb;
    return sa && ExperimentContext::shared_key(cells[a]) < ExperimentContext::shared_key(cells[b]);
  });
  std::vector<ResultRecord> records(cells.size());
  parallel_for(cells.size(), [&](std::size_t k) {
    const std::size_t i = order[k];
    records[i] = run_cell(ctx, cells[i]);
    write_text(dir / (cells[i].id + ".csv"), header + csv_row(records[i]));
    write_text(dir / (cells[i].id + ".json"), records[i].to_json().dump(2) + "\n");
    write_text(dir / (cells[i].id + ".history.csv"), history_csv(records[i].history));
  });
  std::string merged = header;
  for (const auto& r : records) merged += csv_row(r);
  write_text(cfg.out_dir / (name + ".csv"), merged);
  return records;
}

inline std::vector<ResultRecord> run_table1(ExperimentConfig cfg) {
  cfg.kind = ExperimentKind::Table1;
  return run_experiment(cfg);
}
inline std::vector<ResultRecord> run_table3(ExperimentConfig cfg) {
  cfg.kind = ExperimentKind::Table3;
  return run_experiment(cfg);
}
inline std::vector<ResultRecord> run_table4(ExperimentConfig cfg) {
  cfg.kind = ExperimentKind::Table4;
  return run_experiment(cfg);
}
inline std::vector<ResultRecord> run_noise(ExperimentConfig cfg) {
  cfg.kind = ExperimentKind::Noise;
  return run_experiment(cfg);
}

/// One train + evaluate for the first seed and n; writes single.json and the
/// trained weights as single.ssdr.
inline ResultRecord run_single(ExperimentConfig cfg) {
  cfg.kind = ExperimentKind::Single;
  cfg.validate();
  cfg.seeds.resize(1);
  cfg.n_values.resize(1);
  ExperimentContext ctx(cfg);
  auto cell = cells_for(cfg).front();
  if (cell.transfer) ctx.extractor_params();
  auto rec = run_cell(ctx, cell);
  write_text(cfg.out_dir / "single.json", rec.to_json().dump(2) + "\n");
  write_text(cfg.out_dir / "single.history.csv", history_csv(rec.history));
  if (cfg.record_grad_hist) write_text(cfg.out_dir / "gradhist.csv", histogram_csv(rec.history));
  save_weights(rec.trained, cfg.out_dir / "single.ssdr");
  return rec;
}

}  // namespace ssdr
