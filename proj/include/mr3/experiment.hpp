#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mr3/data_model.hpp"
#include "mr3/inference.hpp"
#include "mr3/ingestion.hpp"
#include "mr3/model_core.hpp"
#include "mr3/social_context.hpp"

namespace mr3 {

// ---------------------------------------------------------------------------
// Flat `key = value` configuration files. '#' starts a comment.

class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& in, const std::string& source = "config");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return values_.contains(key); }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;

  /// Keys never read through a getter; used to reject typos.
  std::vector<std::string> unused_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
};

// ---------------------------------------------------------------------------
// Model variants

/// Named model configurations: Mean, PMF, HFT, LOCABAL, eSMF, MR3 and the
/// ablations MR3\content, MR3\social, MR3\content\social.
struct VariantPreset {
  std::string name;
  bool mean_only = false;
  VariantConfig config;
};

struct PresetDefaults {
  double lambda = 0.5;
  double mr3_lambda_rel = 0.001;
  double mr3_lambda_rev = 0.05;
  double social_lambda_rel = 0.1;  // LOCABAL, eSMF
  double hft_lambda_rev = 0.1;
};

/// Throws std::invalid_argument for an unknown name.
VariantPreset variant_preset(const std::string& name, const PresetDefaults& defaults = {});
std::vector<std::string> known_variants();

/// Applies config keys (variant, F, lambda, ...) on top of defaults.
TrainConfig train_config_from(const KeyValueConfig& cfg, TrainConfig base = {});

// ---------------------------------------------------------------------------
// Splitting and evaluation

/// Uniform random partition: floor(n * percent / 100) ratings go to training.
/// Throws std::invalid_argument for percent outside [1, 99] and DataError if
/// either side is empty.
std::pair<SparseRatings, SparseRatings> split(const SparseRatings& ratings, double percent,
                                              std::uint64_t seed);

/// Root-mean-square error of predict() over raw-scale test ratings.
/// Throws std::invalid_argument for an empty test set.
double rmse(const ModelParams& params, const SparseRatings& test);

/// Everything needed to fit and score one train/test split.
struct SplitData {
  TrainingData train;
  SparseRatings test;
  SocialContext context;
};

/// Splits the ratings, centers the training side, builds the corpus from
/// training reviews only and the social constants from training ratings.
SplitData prepare_split(const Dataset& data, double percent, std::uint64_t seed);

/// Same preparation without a held-out side (percent = 100).
SplitData prepare_full(const Dataset& data);

/// Mean baseline: all-zero parameters with mu from the training split.
ModelParams mean_model(const TrainingData& train);

struct CellResult {
  double percent = 0.0;
  std::uint64_t seed = 0;
  std::string variant;
  std::string sweep;        // "" for the main grid, else "F", "lambda_rel" or "lambda_rev"
  double sweep_value = 0.0;
  double best_rmse = 0.0;
  std::size_t best_pass = 0;
  std::vector<double> curve;  // test RMSE after each pass
  std::optional<std::string> error;
};

/// Trains one variant and tracks test RMSE after every pass.
CellResult run_cell(const SplitData& split, const VariantPreset& preset, const TrainConfig& base);

// ---------------------------------------------------------------------------
// Experiment harness

struct ExperimentSpec {
  std::string dataset;     // binary dataset, or
  std::string ratings;     // TSV inputs
  std::string relations;
  std::string stoplist;
  std::size_t vocab_size = kDefaultVocabularySize;
  bool prune = true;

  std::vector<double> train_percents{80};
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::string> variants{"Mean", "PMF", "HFT", "LOCABAL", "eSMF", "MR3"};
  std::vector<double> sweep_factors;
  std::vector<double> sweep_lambda_rel;
  std::vector<double> sweep_lambda_rev;
  std::string output = "report";

  TrainConfig train;
  PresetDefaults presets;

  void validate() const;
  static ExperimentSpec from_config(const KeyValueConfig& cfg);
};

struct ExperimentReport {
  ExperimentSpec spec;
  std::vector<CellResult> cells;
};

ExperimentReport run_experiment(const ExperimentSpec& spec, const Dataset& data,
                                std::ostream* progress = nullptr);

/// Loads the dataset named by the spec, runs it and writes the report files.
ExperimentReport run(const ExperimentSpec& spec, std::ostream* progress = nullptr);

/// cells.tsv, curves.tsv, table.txt and sweep_*.dat under `dir`.
void write_report(const ExperimentReport& report, const std::string& dir);

/// Aligned text table: one row per training percent, one column per variant
/// (mean over seeds) and MR3's relative improvement over PMF, HFT and LOCABAL.
std::string format_table(const ExperimentReport& report);

/// (baseline - model) / baseline * 100.
double improvement_percent(double baseline, double model);

// ---------------------------------------------------------------------------
// Synthetic data drawn from the model's own generative recipe

struct SynthConfig {
  std::size_t users = 200;
  std::size_t items = 300;
  std::size_t factors = 5;
  double density = 0.05;
  std::size_t tokens_per_doc = 30;
  std::size_t vocab = 250;
  double mean = 3.5;
  double factor_stddev = 0.8;
  double bias_stddev = 0.3;
  double noise_stddev = 0.4;
  double avg_out_degree = 6.0;
  double homophily = 6.0;   // edge preference exp(homophily * cos(U_i, U_k))
  double kappa = 2.0;       // theta_j = softmax(kappa V_j)
  double topic_peak = 3.0;  // psi boost for each topic's own words
  std::uint64_t seed = 1;
};

struct SynthTruth {
  ModelParams params;
  std::vector<double> noise_stddev;  // per user
};

/// Ratings with user-specific noise sd = noise_stddev / sqrt(W_i) where W_i
/// comes from the trust graph's PageRank ranks, trust edges drawn with
/// preference for similar users, and review tokens drawn from theta_j phi.
Dataset synthesize(const SynthConfig& cfg, SynthTruth* truth = nullptr);

/// Writes the dataset as ratings / relations TSV files readable by read_raw_dataset.
void write_tsv(const Dataset& data, const std::string& ratings_path, const std::string& relations_path);

}  // namespace mr3
