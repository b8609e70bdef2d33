#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mr3/data_model.hpp"
#include "mr3/model_core.hpp"
#include "mr3/social_context.hpp"

namespace mr3 {

enum class LrPolicy { fixed, halve_on_increase };

LrPolicy parse_lr_policy(const std::string& name);
std::string to_string(LrPolicy policy);

struct TrainConfig {
  std::size_t factors = 10;
  double learning_rate = 0.0007;
  double momentum = 0.8;
  std::size_t passes = 50;
  std::size_t epochs_per_pass = 5;
  std::uint64_t seed = 1;
  /// Seed of the topic-assignment stream; derived from `seed` when unset.
  std::optional<std::uint64_t> sampling_seed;
  /// Standard deviation of the N(0, 0.01) initialization of U, V, H and psi.
  double init_stddev = 0.1;
  double init_kappa = 1.0;
  VariantConfig variant;
  LrPolicy lr_policy = LrPolicy::halve_on_increase;

  /// Throws std::invalid_argument when a field is out of range.
  void validate() const;
};

/// Training inputs. Ratings must be centered; corpus.docs[j] is item j's document.
struct TrainingData {
  SparseRatings ratings;
  SocialGraph graph;
  Corpus corpus;
};

struct OptimizerState {
  ModelParams velocity;
  std::size_t pass = 0;
  std::size_t epoch = 0;
  std::vector<double> history;

  static OptimizerState for_params(const ModelParams& params);
};

/// v <- momentum v - lr g;  p <- p + v  over every fitted block.
/// Throws DivergenceError("divergence") if a parameter becomes non-finite.
void gd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr,
             double momentum);

/// Draws z_{d,n} = f with probability proportional to theta_{d,f} phi_{f,w_{d,n}};
/// theta and phi stay fixed for the whole sweep.
std::vector<std::vector<Index>> sample_assignments(const Matrix& theta, const Matrix& phi,
                                                   const Corpus& corpus, std::mt19937_64& rng);

/// Uniform random topic for every token.
std::vector<std::vector<Index>> random_assignments(const Corpus& corpus, std::size_t factors,
                                                   std::mt19937_64& rng);

/// Random N(0, stddev^2) U, V, H, psi; zero biases; mu from the ratings.
ModelParams initial_params(const TrainingData& data, const TrainConfig& cfg, std::mt19937_64& rng);

struct DivergenceInfo {
  std::size_t pass = 0;
  std::size_t epoch = 0;
  std::string message;
};

struct TrainResult {
  ModelParams params;         // best recorded objective
  ModelParams last_params;    // last finite state
  std::vector<std::vector<Index>> assignments;
  std::vector<double> history;       // one objective per epoch
  std::vector<double> lr_history;    // learning rate used per epoch
  double best_objective = 0.0;
  std::optional<DivergenceInfo> divergence;
};

/// Optional hooks, called in training order.
struct TrainObserver {
  /// After the GD epochs of a pass, before resampling.
  std::function<void(std::size_t pass, const ModelParams&)> on_pass;
  /// After each resampling sweep and counts rebuild.
  std::function<void(std::size_t pass, const Corpus&, const TopicCounts&)> on_sweep;
};

/// Alternates `epochs_per_pass` full-batch GD epochs with one resampling sweep,
/// for `passes` passes. Writes `pass epoch objective lr` lines to `log` if given.
TrainResult train(const TrainingData& data, const SocialContext& context, const TrainConfig& cfg,
                  const TrainObserver& observer = {}, std::ostream* log = nullptr);

}  // namespace mr3
