#include "mr3/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace mr3 {

// ---------------------------------------------------------------------------
// Variants

std::vector<std::string> known_variants() {
  return {"Mean", "PMF",         "HFT",        "LOCABAL",
          "eSMF", "MR3",         "MR3\\content", "MR3\\social",
          "MR3\\content\\social"};
}

VariantPreset variant_preset(const std::string& name, const PresetDefaults& d) {
  VariantPreset p{name, false, {}};
  p.config.lambda = d.lambda;
  const auto set = [&](double rel, double rev, bool weights, bool trust) {
    p.config.lambda_rel = rel;
    p.config.lambda_rev = rev;
    p.config.use_social_weights = weights;
    p.config.use_trust_values = trust;
  };
  if (name == "Mean") {
    p.mean_only = true;
    set(0.0, 0.0, false, false);
  } else if (name == "PMF" || name == "MR3\\content\\social") {
    set(0.0, 0.0, false, false);
  } else if (name == "HFT") {
    set(0.0, d.hft_lambda_rev, false, false);
  } else if (name == "MR3\\social") {
    set(0.0, d.mr3_lambda_rev, false, false);
  } else if (name == "LOCABAL") {
    set(d.social_lambda_rel, 0.0, true, false);
  } else if (name == "eSMF") {
    set(d.social_lambda_rel, 0.0, true, true);
  } else if (name == "MR3\\content") {
    set(d.mr3_lambda_rel, 0.0, true, true);
  } else if (name == "MR3") {
    set(d.mr3_lambda_rel, d.mr3_lambda_rev, true, true);
  } else {
    throw std::invalid_argument("unknown variant '" + name + "'");
  }
  return p;
}

TrainConfig train_config_from(const KeyValueConfig& cfg, TrainConfig base) {
  if (cfg.has("variant")) {
    const auto preset = variant_preset(cfg.get_string("variant", ""),
                                       PresetDefaults{.lambda = base.variant.lambda});
    if (preset.mean_only) throw std::invalid_argument("the Mean variant is not trainable");
    base.variant = preset.config;
  }
  base.factors = cfg.get_size("F", base.factors);
  base.variant.lambda = cfg.get_double("lambda", base.variant.lambda);
  base.variant.lambda_rel = cfg.get_double("lambda_rel", base.variant.lambda_rel);
  base.variant.lambda_rev = cfg.get_double("lambda_rev", base.variant.lambda_rev);
  base.variant.use_social_weights = cfg.get_bool("use_social_weights", base.variant.use_social_weights);
  base.variant.use_trust_values = cfg.get_bool("use_trust_values", base.variant.use_trust_values);
  base.learning_rate = cfg.get_double("learning_rate", base.learning_rate);
  base.momentum = cfg.get_double("momentum", base.momentum);
  base.passes = cfg.get_size("passes", base.passes);
  base.epochs_per_pass = cfg.get_size("epochs_per_pass", base.epochs_per_pass);
  base.seed = cfg.get_size("seed", base.seed);
  if (cfg.has("sampling_seed")) base.sampling_seed = cfg.get_size("sampling_seed", 0);
  base.init_stddev = cfg.get_double("init_stddev", base.init_stddev);
  base.init_kappa = cfg.get_double("init_kappa", base.init_kappa);
  if (cfg.has("lr_policy")) base.lr_policy = parse_lr_policy(cfg.get_string("lr_policy", ""));
  base.validate();
  return base;
}

// ---------------------------------------------------------------------------
// Splitting and evaluation

std::pair<SparseRatings, SparseRatings> split(const SparseRatings& ratings, double percent,
                                              std::uint64_t seed) {
  if (!(percent >= 1.0 && percent <= 99.0))
    throw std::invalid_argument("training percent must lie in [1, 99]");
  const std::size_t n = ratings.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit modulus draw keeps the split identical across
  // standard library implementations.
  for (std::size_t k = n; k > 1; --k) std::swap(order[k - 1], order[rng() % k]);

  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(n) * percent / 100.0 + 1e-9));
  if (n_train == 0 || n_train == n) throw DataError("split leaves an empty train or test partition");

  std::vector<Rating> train, test;
  train.reserve(n_train);
  test.reserve(n - n_train);
  for (std::size_t k = 0; k < n; ++k) (k < n_train ? train : test).push_back(ratings[order[k]]);
  return {SparseRatings(ratings.n_users(), ratings.n_items(), std::move(train), ratings.global_mean(),
                        ratings.centered()),
          SparseRatings(ratings.n_users(), ratings.n_items(), std::move(test), ratings.global_mean(),
                        ratings.centered())};
}

double rmse(const ModelParams& params, const SparseRatings& test) {
  if (test.empty()) throw std::invalid_argument("rmse of an empty test set");
  double sse = 0.0;
  for (const auto& r : test.triples()) {
    const double e = test.raw_value(r) - predict(params, r.user, r.item);
    sse += e * e;
  }
  return std::sqrt(sse / static_cast<double>(test.size()));
}

namespace {

SplitData prepare(const Dataset& data, SparseRatings train_raw, SparseRatings test) {
  SplitData s;
  s.context = build_social_context(data.graph, train_raw);
  Corpus corpus = data.corpus_for(train_raw);
  auto [centered, mu] = center_ratings(train_raw);
  s.train = TrainingData{std::move(centered), data.graph, std::move(corpus)};
  s.test = std::move(test);
  return s;
}

}  // namespace

SplitData prepare_split(const Dataset& data, double percent, std::uint64_t seed) {
  auto [train, test] = split(data.ratings, percent, seed);
  return prepare(data, std::move(train), std::move(test));
}

SplitData prepare_full(const Dataset& data) { return prepare(data, data.ratings, SparseRatings()); }

ModelParams mean_model(const TrainingData& train) {
  ModelParams p = ModelParams::zeros(train.ratings.n_users(), train.ratings.n_items(), 1,
                                     train.corpus.vocab_size());
  p.mu = train.ratings.global_mean();
  return p;
}

CellResult run_cell(const SplitData& split, const VariantPreset& preset, const TrainConfig& base) {
  CellResult cell;
  cell.variant = preset.name;
  if (preset.mean_only) {
    cell.best_rmse = rmse(mean_model(split.train), split.test);
    cell.curve = {cell.best_rmse};
    return cell;
  }
  TrainConfig cfg = base;
  cfg.variant = preset.config;
  TrainObserver obs;
  obs.on_pass = [&](std::size_t, const ModelParams& p) { cell.curve.push_back(rmse(p, split.test)); };
  const TrainResult result = train(split.train, split.context, cfg, obs);
  if (result.divergence)
    cell.error = "divergence at pass " + std::to_string(result.divergence->pass) + " epoch " +
                 std::to_string(result.divergence->epoch);
  if (cell.curve.empty()) {
    cell.error = cell.error.value_or("no completed pass");
    cell.best_rmse = std::nan("");
    return cell;
  }
  const auto best = std::min_element(cell.curve.begin(), cell.curve.end());
  cell.best_rmse = *best;
  cell.best_pass = static_cast<std::size_t>(best - cell.curve.begin());
  return cell;
}

// ---------------------------------------------------------------------------
// Experiment harness

void ExperimentSpec::validate() const {
  if (dataset.empty() && ratings.empty())
    throw std::invalid_argument("experiment needs either `dataset` or `ratings`");
  if (train_percents.empty()) throw std::invalid_argument("no training percent given");
  for (double x : train_percents)
    if (!(x >= 1.0 && x <= 99.0)) throw std::invalid_argument("training percent must lie in [1, 99]");
  if (seeds.empty()) throw std::invalid_argument("no seeds given");
  if (variants.empty()) throw std::invalid_argument("at least one variant is required");
  for (const auto& v : variants) variant_preset(v, presets);
  for (double f : sweep_factors)
    if (f < 1.0 || f != std::floor(f)) throw std::invalid_argument("sweep_F values must be positive integers");
  train.validate();
}

ExperimentSpec ExperimentSpec::from_config(const KeyValueConfig& cfg) {
  ExperimentSpec s;
  s.dataset = cfg.get_string("dataset", "");
  s.ratings = cfg.get_string("ratings", "");
  s.relations = cfg.get_string("relations", "");
  s.stoplist = cfg.get_string("stoplist", "");
  s.vocab_size = cfg.get_size("vocab_size", s.vocab_size);
  s.prune = cfg.get_bool("prune", s.prune);
  if (cfg.has("train_percents")) s.train_percents = cfg.get_double_list("train_percents");
  if (cfg.has("seeds")) {
    s.seeds.clear();
    for (double x : cfg.get_double_list("seeds")) s.seeds.push_back(static_cast<std::uint64_t>(x));
  }
  if (cfg.has("variants")) s.variants = cfg.get_list("variants");
  s.sweep_factors = cfg.get_double_list("sweep_F");
  s.sweep_lambda_rel = cfg.get_double_list("sweep_lambda_rel");
  s.sweep_lambda_rev = cfg.get_double_list("sweep_lambda_rev");
  s.output = cfg.get_string("output", s.output);

  s.presets.lambda = cfg.get_double("lambda", s.presets.lambda);
  s.presets.mr3_lambda_rel = cfg.get_double("lambda_rel", s.presets.mr3_lambda_rel);
  s.presets.mr3_lambda_rev = cfg.get_double("lambda_rev", s.presets.mr3_lambda_rev);
  s.presets.social_lambda_rel = cfg.get_double("social_lambda_rel", s.presets.social_lambda_rel);
  s.presets.hft_lambda_rev = cfg.get_double("hft_lambda_rev", s.presets.hft_lambda_rev);

  s.train.factors = cfg.get_size("F", s.train.factors);
  s.train.learning_rate = cfg.get_double("learning_rate", s.train.learning_rate);
  s.train.momentum = cfg.get_double("momentum", s.train.momentum);
  s.train.passes = cfg.get_size("passes", s.train.passes);
  s.train.epochs_per_pass = cfg.get_size("epochs_per_pass", s.train.epochs_per_pass);
  s.train.init_stddev = cfg.get_double("init_stddev", s.train.init_stddev);
  if (cfg.has("lr_policy")) s.train.lr_policy = parse_lr_policy(cfg.get_string("lr_policy", ""));
  s.train.variant.lambda = s.presets.lambda;

  if (const auto unused = cfg.unused_keys(); !unused.empty())
    throw std::invalid_argument("unknown experiment key '" + unused.front() + "'");
  s.validate();
  return s;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, const Dataset& data, std::ostream* progress) {
  spec.validate();
  ExperimentReport report{spec, {}};
  const auto record = [&](CellResult cell, double percent, std::uint64_t seed) {
    cell.percent = percent;
    cell.seed = seed;
    if (progress) {
      *progress << percent << "%\tseed " << seed << '\t' << cell.variant;
      if (!cell.sweep.empty()) *progress << '\t' << cell.sweep << '=' << cell.sweep_value;
      *progress << "\trmse " << cell.best_rmse;
      if (cell.error) *progress << "\t(" << *cell.error << ')';
      *progress << std::endl;
    }
    report.cells.push_back(std::move(cell));
  };
  const auto guarded = [&](const SplitData& s, const VariantPreset& preset, const TrainConfig& cfg) {
    try {
      return run_cell(s, preset, cfg);
    } catch (const std::exception& e) {
      CellResult failed;
      failed.variant = preset.name;
      failed.best_rmse = std::nan("");
      failed.error = e.what();
      return failed;
    }
  };

  for (double percent : spec.train_percents) {
    for (std::uint64_t seed : spec.seeds) {
      const SplitData s = prepare_split(data, percent, seed);
      TrainConfig cfg = spec.train;
      cfg.seed = seed;
      for (const auto& name : spec.variants)
        record(guarded(s, variant_preset(name, spec.presets), cfg), percent, seed);

      const auto sweep = [&](const std::string& axis, double value, TrainConfig c, PresetDefaults d) {
        CellResult cell = guarded(s, variant_preset("MR3", d), c);
        cell.sweep = axis;
        cell.sweep_value = value;
        record(std::move(cell), percent, seed);
      };
      for (double f : spec.sweep_factors) {
        TrainConfig c = cfg;
        c.factors = static_cast<std::size_t>(f);
        sweep("F", f, c, spec.presets);
      }
      for (double v : spec.sweep_lambda_rel) {
        PresetDefaults d = spec.presets;
        d.mr3_lambda_rel = v;
        sweep("lambda_rel", v, cfg, d);
      }
      for (double v : spec.sweep_lambda_rev) {
        PresetDefaults d = spec.presets;
        d.mr3_lambda_rev = v;
        sweep("lambda_rev", v, cfg, d);
      }
    }
  }
  return report;
}

ExperimentReport run(const ExperimentSpec& spec, std::ostream* progress) {
  spec.validate();
  Dataset data;
  if (!spec.dataset.empty()) {
    data = load_dataset(spec.dataset);
  } else {
    RawDataset raw = read_raw_dataset(spec.ratings, spec.relations);
    if (spec.prune) raw = prune_rare(drop_duplicate_ratings(raw));
    const Stoplist stop = spec.stoplist.empty() ? Stoplist{} : read_stoplist_file(spec.stoplist);
    data = assemble(raw, spec.vocab_size, stop);
  }
  ExperimentReport report = run_experiment(spec, data, progress);
  write_report(report, spec.output);
  return report;
}

double improvement_percent(double baseline, double model) {
  return (baseline - model) / baseline * 100.0;
}

namespace {

// Mean best RMSE over seeds of the main-grid cells; NaN if none succeeded.
double mean_rmse(const ExperimentReport& r, double percent, const std::string& variant,
                 const std::string& sweep = "", double sweep_value = 0.0) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : r.cells) {
    if (c.percent != percent || c.variant != variant || c.sweep != sweep || c.error) continue;
    if (!sweep.empty() && c.sweep_value != sweep_value) continue;
    sum += c.best_rmse;
    ++n;
  }
  return n ? sum / static_cast<double>(n) : std::nan("");
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace

std::string format_table(const ExperimentReport& report) {
  const auto& spec = report.spec;
  const bool has_mr3 = std::find(spec.variants.begin(), spec.variants.end(), "MR3") != spec.variants.end();
  std::vector<std::string> bases;
  for (const char* b : {"PMF", "HFT", "LOCABAL"})
    if (has_mr3 && std::find(spec.variants.begin(), spec.variants.end(), b) != spec.variants.end())
      bases.emplace_back(b);

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"Training"};
  for (const auto& v : spec.variants) header.push_back(v);
  for (const auto& b : bases) header.push_back("MR3 vs. " + b);
  rows.push_back(header);

  std::vector<double> imp_sum(bases.size(), 0.0);
  std::vector<std::size_t> imp_n(bases.size(), 0);
  for (double percent : spec.train_percents) {
    std::vector<std::string> row{fmt("%g%%", percent)};
    for (const auto& v : spec.variants) {
      const double x = mean_rmse(report, percent, v);
      row.push_back(std::isnan(x) ? "failed" : fmt("%.4f", x));
    }
    const double mr3 = has_mr3 ? mean_rmse(report, percent, "MR3") : std::nan("");
    for (std::size_t b = 0; b < bases.size(); ++b) {
      const double imp = improvement_percent(mean_rmse(report, percent, bases[b]), mr3);
      row.push_back(std::isnan(imp) ? "-" : fmt("%.2f%%", imp));
      if (!std::isnan(imp)) {
        imp_sum[b] += imp;
        ++imp_n[b];
      }
    }
    rows.push_back(row);
  }
  if (!bases.empty()) {
    std::vector<std::string> avg{"Average"};
    avg.resize(1 + spec.variants.size());
    for (std::size_t b = 0; b < bases.size(); ++b)
      avg.push_back(imp_n[b] ? fmt("%.2f%%", imp_sum[b] / static_cast<double>(imp_n[b])) : "-");
    rows.push_back(avg);
  }

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c ? "  " : "");
      out << std::string(width[c] - row[c].size(), ' ') << row[c];
    }
    out << '\n';
  }
  out << "\nRMSE: best test RMSE over passes, mean over seeds " ;
  out << "(" << spec.seeds.size() << " seed" << (spec.seeds.size() == 1 ? "" : "s") << ").\n";
  if (!bases.empty())
    out << "Improvement: (baseline - MR3) / baseline, computed per training split from the "
           "mean RMSE above.\n";
  return out.str();
}

void write_report(const ExperimentReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw DataError("cannot write " + (fs::path(dir) / name).string());
    f.precision(17);
    return f;
  };

  {
    auto f = open("cells.tsv");
    f << "percent\tseed\tvariant\tsweep\tsweep_value\tbest_rmse\tbest_pass\terror\n";
    for (const auto& c : report.cells)
      f << c.percent << '\t' << c.seed << '\t' << c.variant << '\t' << (c.sweep.empty() ? "-" : c.sweep)
        << '\t' << c.sweep_value << '\t' << c.best_rmse << '\t' << c.best_pass << '\t'
        << c.error.value_or("") << '\n';
  }
  {
    auto f = open("curves.tsv");
    f << "percent\tseed\tvariant\tsweep\tsweep_value\tpass\trmse\n";
    for (const auto& c : report.cells)
      for (std::size_t p = 0; p < c.curve.size(); ++p)
        f << c.percent << '\t' << c.seed << '\t' << c.variant << '\t' << (c.sweep.empty() ? "-" : c.sweep)
          << '\t' << c.sweep_value << '\t' << p << '\t' << c.curve[p] << '\n';
  }
  {
    auto f = open("table.txt");
    f << format_table(report);
  }

  const auto write_sweep = [&](const std::string& axis, const std::vector<double>& values) {
    if (values.empty()) return;
    auto f = open("sweep_" + axis + ".dat");
    f << "# MR3 sensitivity to " << axis << "; one gnuplot data block per training percent\n";
    for (double percent : report.spec.train_percents) {
      f << "# percent " << percent << "\n# " << axis << "\trmse\n";
      for (double v : values) f << v << '\t' << mean_rmse(report, percent, "MR3", axis, v) << '\n';
      f << "\n\n";
    }
  };
  write_sweep("F", report.spec.sweep_factors);
  write_sweep("lambda_rel", report.spec.sweep_lambda_rel);
  write_sweep("lambda_rev", report.spec.sweep_lambda_rev);
}

}  // namespace mr3
