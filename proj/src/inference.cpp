#include "mr3/inference.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace mr3 {

LrPolicy parse_lr_policy(const std::string& name) {
  if (name == "fixed") return LrPolicy::fixed;
  if (name == "halve-on-increase") return LrPolicy::halve_on_increase;
  throw std::invalid_argument("unknown lr policy '" + name + "'");
}

std::string to_string(LrPolicy policy) {
  return policy == LrPolicy::fixed ? "fixed" : "halve-on-increase";
}

void TrainConfig::validate() const {
  if (factors < 1) throw std::invalid_argument("F must be at least 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must lie in [0, 1)");
  if (passes < 1) throw std::invalid_argument("passes must be at least 1");
  if (epochs_per_pass < 1) throw std::invalid_argument("epochs_per_pass must be at least 1");
  if (variant.lambda < 0.0 || variant.lambda_rel < 0.0 || variant.lambda_rev < 0.0)
    throw std::invalid_argument("regularization weights must be non-negative");
}

OptimizerState OptimizerState::for_params(const ModelParams& params) {
  OptimizerState s;
  s.velocity = ModelParams::zeros(params.n_users(), params.n_items(), params.factors(),
                                  params.vocab_size());
  return s;
}

void gd_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, double lr,
             double momentum) {
  std::vector<std::span<double>> p_blocks, v_blocks;
  std::vector<std::span<const double>> g_blocks;
  for_each_block(params, [&](std::span<double> b) { p_blocks.push_back(b); });
  for_each_block(state.velocity, [&](std::span<double> b) { v_blocks.push_back(b); });
  for_each_block(grads, [&](std::span<const double> b) { g_blocks.push_back(b); });

  bool finite = true;
  for (std::size_t b = 0; b < p_blocks.size(); ++b) {
    if (p_blocks[b].size() != g_blocks[b].size() || p_blocks[b].size() != v_blocks[b].size())
      throw std::invalid_argument("gradient / velocity shape does not match parameters");
    auto p = p_blocks[b];
    auto v = v_blocks[b];
    auto g = g_blocks[b];
    for (std::size_t x = 0; x < p.size(); ++x) {
      v[x] = momentum * v[x] - lr * g[x];
      p[x] += v[x];
      finite = finite && std::isfinite(p[x]);
    }
  }
  if (!finite) throw DivergenceError("divergence");
}

std::vector<std::vector<Index>> sample_assignments(const Matrix& theta, const Matrix& phi,
                                                   const Corpus& corpus, std::mt19937_64& rng) {
  const std::size_t F = phi.rows();
  if (theta.cols() != F || theta.rows() < corpus.n_docs())
    throw std::invalid_argument("theta / phi shapes do not match the corpus");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> cum(F);
  std::vector<std::vector<Index>> z(corpus.n_docs());
  for (std::size_t d = 0; d < corpus.n_docs(); ++d) {
    const auto& words = corpus.docs[d];
    z[d].resize(words.size());
    for (std::size_t n = 0; n < words.size(); ++n) {
      double total = 0.0;
      for (std::size_t f = 0; f < F; ++f) {
        total += theta(d, f) * phi(f, words[n]);
        cum[f] = total;
      }
      if (!(total > 0.0) || !std::isfinite(total))
        throw std::domain_error("degenerate token distribution");
      const double u = unif(rng) * total;
      std::size_t f = 0;
      while (f + 1 < F && !(u < cum[f])) ++f;
      // Never land on a zero-mass topic when u rounds onto a boundary.
      while (f > 0 && theta(d, f) * phi(f, words[n]) == 0.0) --f;
      z[d][n] = static_cast<Index>(f);
    }
  }
  return z;
}

std::vector<std::vector<Index>> random_assignments(const Corpus& corpus, std::size_t factors,
                                                   std::mt19937_64& rng) {
  std::uniform_int_distribution<Index> topic(0, static_cast<Index>(factors - 1));
  std::vector<std::vector<Index>> z(corpus.n_docs());
  for (std::size_t d = 0; d < corpus.n_docs(); ++d) {
    z[d].resize(corpus.docs[d].size());
    for (auto& t : z[d]) t = topic(rng);
  }
  return z;
}

ModelParams initial_params(const TrainingData& data, const TrainConfig& cfg, std::mt19937_64& rng) {
  ModelParams p = ModelParams::zeros(data.ratings.n_users(), data.ratings.n_items(), cfg.factors,
                                     data.corpus.vocab_size());
  p.mu = data.ratings.global_mean();
  p.kappa = cfg.init_kappa;
  std::normal_distribution<double> normal(0.0, cfg.init_stddev);
  for (auto* m : {&p.U, &p.V, &p.H, &p.psi})
    for (double& x : m->flat()) x = normal(rng);
  return p;
}

namespace {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

}  // namespace

TrainResult train(const TrainingData& data, const SocialContext& context, const TrainConfig& cfg,
                  const TrainObserver& observer, std::ostream* log) {
  cfg.validate();
  if (!data.ratings.centered()) throw DataError("training ratings must be centered");
  if (data.corpus.n_docs() != data.ratings.n_items())
    throw DataError("corpus must hold exactly one document per item");

  std::mt19937_64 init_rng(derive_seed(cfg.seed, 1));
  std::mt19937_64 sample_rng(derive_seed(cfg.sampling_seed.value_or(cfg.seed), 2));

  Corpus corpus = data.corpus;
  corpus.assignments = random_assignments(corpus, cfg.factors, sample_rng);
  corpus.validate();
  TopicCounts counts = rebuild_counts(corpus, cfg.factors);

  TrainResult result;
  ModelParams params = initial_params(data, cfg, init_rng);
  OptimizerState state = OptimizerState::for_params(params);
  double lr = cfg.learning_rate;

  const auto eval = [&](const ModelParams& p) {
    return objective(p, ModelInputs{data.ratings, data.graph, context, counts}, cfg.variant);
  };

  result.params = params;
  result.last_params = params;
  try {
    result.best_objective = eval(params);
  } catch (const DivergenceError& e) {
    result.divergence = DivergenceInfo{0, 0, e.what()};
    return result;
  }

  for (std::size_t pass = 0; pass < cfg.passes; ++pass) {
    state.pass = pass;
    double current = eval(params);
    for (std::size_t epoch = 0; epoch < cfg.epochs_per_pass; ++epoch) {
      state.epoch = epoch;
      ModelParams trial = params;
      OptimizerState trial_state = state;
      double trial_obj = 0.0;
      bool finite = true;
      try {
        const ModelParams g =
            gradients(params, ModelInputs{data.ratings, data.graph, context, counts}, cfg.variant);
        gd_step(trial, g, trial_state, lr, cfg.momentum);
        trial_obj = eval(trial);
      } catch (const DivergenceError& e) {
        if (cfg.lr_policy == LrPolicy::fixed) {
          result.divergence = DivergenceInfo{pass, epoch, e.what()};
          result.last_params = params;
          result.history = std::move(state.history);
          result.assignments = std::move(corpus.assignments);
          return result;
        }
        finite = false;
      }

      const double used_lr = lr;
      if (cfg.lr_policy == LrPolicy::halve_on_increase && (!finite || trial_obj > current)) {
        // Reject the step and restart momentum from rest.
        lr *= 0.5;
        for_each_block(state.velocity, [](std::span<double> b) { std::fill(b.begin(), b.end(), 0.0); });
      } else {
        params = std::move(trial);
        state = std::move(trial_state);
        current = trial_obj;
      }
      state.history.push_back(current);
      result.lr_history.push_back(used_lr);
      if (log) *log << pass << '\t' << epoch << '\t' << current << '\t' << used_lr << '\n';

      if (current < result.best_objective) {
        result.best_objective = current;
        result.params = params;
      }
    }

    if (observer.on_pass) observer.on_pass(pass, params);

    const Matrix theta = topic_proportions(params);
    const Matrix phi = word_distributions(params);
    corpus.assignments = sample_assignments(theta, phi, corpus, sample_rng);
    counts = rebuild_counts(corpus, cfg.factors);
    if (observer.on_sweep) observer.on_sweep(pass, corpus, counts);
  }

  result.last_params = params;
  result.history = std::move(state.history);
  result.assignments = std::move(corpus.assignments);
  return result;
}

}  // namespace mr3
