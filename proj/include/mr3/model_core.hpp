#pragma once

/**
 * Prediction rule, factor -> topic transform, the joint objective and its
 * analytic gradients.
 *
 *   L = sum_{R != 0} W_i (R_ij - Rhat_ij)^2
 *     - lambda_rev sum_d sum_n (log theta_{d,z} + log phi_{z,w})
 *     + lambda_rel sum_{T != 0} C_ik (S_ik - U_i' H U_k)^2
 *     + lambda (|U|^2 + |V|^2 + |H|^2)
 *
 *   Rhat_ij    = mu + b_i + b_j + U_i' V_j
 *   theta_j    = softmax(kappa V_j)
 *   phi_f      = softmax(psi_f)
 *
 * Setting lambda_rel / lambda_rev to zero or replacing W, C by ones recovers
 * PMF, HFT, LOCABAL and eSMF exactly. Biases are fitted but not penalized.
 */

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mr3/data_model.hpp"
#include "mr3/social_context.hpp"

namespace mr3 {

struct VariantConfig {
  double lambda = 0.5;
  double lambda_rel = 0.001;
  double lambda_rev = 0.05;
  bool use_social_weights = true;
  bool use_trust_values = true;

  bool operator==(const VariantConfig&) const = default;
};

/// Everything the objective reads besides the parameters.
struct ModelInputs {
  const SparseRatings& ratings;  // centered training ratings
  const SocialGraph& graph;
  const SocialContext& context;
  const TopicCounts& counts;
};

/// mu + b_i + b_j + U_i'V_j. Ids beyond the parameter tables drop the
/// unknown side's bias and the interaction term.
double predict(const ModelParams& params, Index user, Index item);

/// softmax(kappa * v), max-shifted.
std::vector<double> topic_transform(std::span<const double> v, double kappa);

/// softmax(psi_f), max-shifted.
std::vector<double> word_dist(std::span<const double> psi_f);

/// log-sum-exp, max-shifted.
double log_sum_exp(std::span<const double> x);

/// theta for every item (J x F).
Matrix topic_proportions(const ModelParams& params);
/// phi for every topic (F x L).
Matrix word_distributions(const ModelParams& params);

struct ObjectiveTerms {
  double rating = 0.0;   // weighted squared error
  double review = 0.0;   // already multiplied by lambda_rev (>= 0)
  double social = 0.0;   // already multiplied by lambda_rel
  double penalty = 0.0;  // already multiplied by lambda
  double total() const { return rating + review + social + penalty; }
};

/// Objective split into its four parts. Throws DivergenceError("divergence")
/// if the total is not finite.
ObjectiveTerms objective_terms(const ModelParams& params, const ModelInputs& in,
                               const VariantConfig& cfg);

double objective(const ModelParams& params, const ModelInputs& in, const VariantConfig& cfg);

/// Gradient of the objective with respect to every fitted block; returned in a
/// ModelParams-shaped container (mu is always 0).
ModelParams gradients(const ModelParams& params, const ModelInputs& in, const VariantConfig& cfg);

/// Versioned little-endian binary dump of every parameter block. Round-trips bit-exactly.
void save_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const ModelParams& params);
ModelParams load_checkpoint(const std::string& path);

}  // namespace mr3
