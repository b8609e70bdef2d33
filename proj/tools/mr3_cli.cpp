// mr3 command-line front end.
//
//   mr3 ingest     --ratings r.tsv [--relations t.tsv] [--stoplist s.txt] --out data.bin
//   mr3 train      --dataset data.bin [--config train.cfg] --checkpoint model.ckpt
//   mr3 eval       --dataset data.bin --checkpoint model.ckpt [--train-percent 80]
//   mr3 experiment --spec experiment.cfg
//   mr3 synth      --out-dir dir
//   mr3 context    --dataset data.bin --out context.tsv
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 divergence.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "mr3/experiment.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

mr3::SplitData load_split(const std::string& dataset, double percent, std::uint64_t split_seed) {
  const mr3::Dataset data = mr3::load_dataset(dataset);
  return percent > 0.0 ? mr3::prepare_split(data, percent, split_seed) : mr3::prepare_full(data);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MR3: joint matrix factorization over ratings, trust relations and reviews"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse TSV inputs into a binary dataset and manifest");
  std::string ratings_path, relations_path, stoplist_path, dataset_out, manifest_out;
  std::size_t vocab_size = mr3::kDefaultVocabularySize, min_count = mr3::kMinOccurrences;
  bool no_prune = false;
  ingest->add_option("--ratings", ratings_path, "user<TAB>item<TAB>score[<TAB>review]")->required();
  ingest->add_option("--relations", relations_path, "truster<TAB>trustee");
  ingest->add_option("--stoplist", stoplist_path, "One stopword per line");
  ingest->add_option("--vocab-size", vocab_size, "Vocabulary size")->capture_default_str();
  ingest->add_option("--min-count", min_count, "Minimum ratings per user and item")->capture_default_str();
  ingest->add_flag("--no-prune", no_prune, "Keep rare users and items");
  ingest->add_option("--out", dataset_out, "Binary dataset output")->required();
  ingest->add_option("--manifest", manifest_out, "Manifest JSON output (default: stdout)");

  // train
  auto* train = app.add_subcommand("train", "Fit a model and write a checkpoint");
  std::string dataset_path, config_path, checkpoint_path, log_path;
  double train_percent = 0.0;
  std::uint64_t split_seed = 1;
  bool verbose = false;
  train->add_option("--dataset", dataset_path, "Binary dataset from `ingest` or `synth`")->required();
  train->add_option("--config", config_path, "Flat key=value training config");
  train->add_option("--checkpoint", checkpoint_path, "Checkpoint output")->required();
  train->add_option("--train-percent", train_percent, "Hold out ratings; 0 trains on everything");
  train->add_option("--split-seed", split_seed, "Seed of the train/test split")->capture_default_str();
  train->add_option("--log", log_path, "Write `pass epoch objective lr` lines to this file");
  train->add_flag("-v,--verbose", verbose, "Write the progress log to stdout");

  // eval
  auto* eval = app.add_subcommand("eval", "RMSE of a checkpoint on the held-out split");
  eval->add_option("--dataset", dataset_path)->required();
  eval->add_option("--checkpoint", checkpoint_path)->required();
  eval->add_option("--train-percent", train_percent, "Split used at training; 0 scores all ratings");
  eval->add_option("--split-seed", split_seed)->capture_default_str();

  // experiment
  auto* experiment = app.add_subcommand("experiment", "Run a variant / split / seed grid");
  std::string spec_path;
  experiment->add_option("--spec", spec_path, "Flat key=value experiment spec")->required();

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  mr3::SynthConfig sc;
  std::string out_dir;
  synth->add_option("--out-dir", out_dir, "Directory for ratings.tsv, relations.tsv, dataset.bin")->required();
  synth->add_option("--users", sc.users)->capture_default_str();
  synth->add_option("--items", sc.items)->capture_default_str();
  synth->add_option("--factors", sc.factors)->capture_default_str();
  synth->add_option("--density", sc.density)->capture_default_str();
  synth->add_option("--tokens-per-doc", sc.tokens_per_doc)->capture_default_str();
  synth->add_option("--vocab", sc.vocab)->capture_default_str();
  synth->add_option("--noise", sc.noise_stddev)->capture_default_str();
  synth->add_option("--out-degree", sc.avg_out_degree)->capture_default_str();
  synth->add_option("--kappa", sc.kappa)->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();

  // context
  auto* context = app.add_subcommand("context", "Dump PageRank ranks, weights, trust and similarity");
  std::string context_out;
  context->add_option("--dataset", dataset_path)->required();
  context->add_option("--train-percent", train_percent, "Use the training side of this split");
  context->add_option("--split-seed", split_seed)->capture_default_str();
  context->add_option("--out", context_out, "TSV output (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*ingest) {
      mr3::RawDataset raw = mr3::read_raw_dataset(ratings_path, relations_path);
      if (!no_prune) raw = mr3::prune_rare(mr3::drop_duplicate_ratings(raw), min_count);
      const mr3::Stoplist stop = stoplist_path.empty() ? mr3::Stoplist{} : mr3::read_stoplist_file(stoplist_path);
      const mr3::Dataset data = mr3::assemble(raw, vocab_size, stop);
      mr3::save_dataset(dataset_out, data);
      const auto manifest = mr3::manifest_json(data);
      if (manifest_out.empty()) {
        std::cout << manifest << '\n';
      } else {
        std::ofstream(manifest_out) << manifest << '\n';
      }
    } else if (*train) {
      mr3::TrainConfig cfg;
      if (!config_path.empty()) {
        const auto kv = mr3::KeyValueConfig::load(config_path);
        cfg = mr3::train_config_from(kv);
        if (const auto unused = kv.unused_keys(); !unused.empty())
          throw UsageError("unknown config key '" + unused.front() + "'");
      }
      const mr3::SplitData split = load_split(dataset_path, train_percent, split_seed);
      std::ofstream log_file;
      std::ostream* log = verbose ? &std::cout : nullptr;
      if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw mr3::DataError("cannot write " + log_path);
        log = &log_file;
      }
      if (log) *log << "pass\tepoch\tobjective\tlr\n";
      const mr3::TrainResult result = mr3::train(split.train, split.context, cfg, {}, log);
      if (result.divergence) {
        mr3::save_checkpoint(checkpoint_path, result.last_params);
        std::cerr << "divergence at pass " << result.divergence->pass << " epoch "
                  << result.divergence->epoch << "; last finite state written to " << checkpoint_path
                  << '\n';
        return kDivergence;
      }
      mr3::save_checkpoint(checkpoint_path, result.params);
      std::printf("objective\t%.10g\n", result.best_objective);
      if (!split.test.empty()) std::printf("test_rmse\t%.10g\n", mr3::rmse(result.params, split.test));
    } else if (*eval) {
      const mr3::ModelParams params = mr3::load_checkpoint(checkpoint_path);
      const mr3::Dataset data = mr3::load_dataset(dataset_path);
      const mr3::SparseRatings test =
          train_percent > 0.0 ? mr3::split(data.ratings, train_percent, split_seed).second : data.ratings;
      std::printf("rmse\t%.10g\n", mr3::rmse(params, test));
    } else if (*experiment) {
      const auto spec = mr3::ExperimentSpec::from_config(mr3::KeyValueConfig::load(spec_path));
      const auto report = mr3::run(spec, &std::cerr);
      std::cout << mr3::format_table(report);
    } else if (*synth) {
      namespace fs = std::filesystem;
      fs::create_directories(out_dir);
      const mr3::Dataset data = mr3::synthesize(sc);
      mr3::write_tsv(data, (fs::path(out_dir) / "ratings.tsv").string(),
                     (fs::path(out_dir) / "relations.tsv").string());
      mr3::save_dataset((fs::path(out_dir) / "dataset.bin").string(), data);
      std::cout << mr3::manifest_json(data) << '\n';
    } else if (*context) {
      const mr3::SplitData split = load_split(dataset_path, train_percent, split_seed);
      if (context_out.empty()) {
        mr3::write_social_context(std::cout, split.train.graph, split.context);
      } else {
        std::ofstream out(context_out);
        if (!out) throw mr3::DataError("cannot write " + context_out);
        mr3::write_social_context(out, split.train.graph, split.context);
      }
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const mr3::DivergenceError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kData;
  }
  return kOk;
}
