#include "mr3/model_core.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>

namespace mr3 {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

double predict(const ModelParams& params, Index user, Index item) {
  const bool known_user = user < params.n_users();
  const bool known_item = item < params.n_items();
  double r = params.mu;
  if (known_user) r += params.b_user[user];
  if (known_item) r += params.b_item[item];
  if (known_user && known_item) r += dot(params.U.row(user), params.V.row(item));
  return r;
}

double log_sum_exp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

namespace {

std::vector<double> softmax(std::span<const double> x, double scale) {
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  double m = -std::numeric_limits<double>::infinity();
  for (double v : x) m = std::max(m, scale * v);
  double z = 0.0;
  for (std::size_t f = 0; f < x.size(); ++f) z += (out[f] = std::exp(scale * x[f] - m));
  for (double& v : out) v /= z;
  return out;
}

void check_shapes(const ModelParams& p, const ModelInputs& in) {
  const std::size_t F = p.factors();
  if (p.U.cols() != F || p.V.cols() != F || p.H.cols() != F || p.psi.rows() != F)
    throw DataError("parameter blocks disagree on the number of factors");
  if (in.ratings.n_users() != p.n_users() || in.ratings.n_items() != p.n_items())
    throw DataError("parameters do not match the rating matrix shape");
  if (in.counts.doc_topic.rows() != p.n_items() || in.counts.doc_topic.cols() != F ||
      in.counts.topic_word.rows() != F || in.counts.topic_word.cols() != p.vocab_size())
    throw DataError("topic counts do not match the parameter shapes");
  if (in.context.trust.size() != in.graph.edges().size() ||
      in.context.similarity.size() != in.graph.edges().size() ||
      in.context.weight_per_user.size() != p.n_users())
    throw DataError("social context does not match the graph");
}

double user_weight(const ModelInputs& in, const VariantConfig& cfg, Index u) {
  return cfg.use_social_weights ? in.context.weight_per_user[u] : 1.0;
}

double edge_trust(const ModelInputs& in, const VariantConfig& cfg, std::size_t e) {
  return cfg.use_trust_values ? in.context.trust[e] : 1.0;
}

// U_i' H U_k
double bilinear(const Matrix& H, std::span<const double> ui, std::span<const double> uk) {
  double s = 0.0;
  for (std::size_t a = 0; a < H.rows(); ++a) s += ui[a] * dot(H.row(a), uk);
  return s;
}

}  // namespace

std::vector<double> topic_transform(std::span<const double> v, double kappa) {
  return softmax(v, kappa);
}

std::vector<double> word_dist(std::span<const double> psi_f) { return softmax(psi_f, 1.0); }

Matrix topic_proportions(const ModelParams& params) {
  Matrix theta(params.n_items(), params.factors());
  for (std::size_t j = 0; j < params.n_items(); ++j) {
    const auto t = topic_transform(params.V.row(j), params.kappa);
    std::copy(t.begin(), t.end(), theta.row(j).begin());
  }
  return theta;
}

Matrix word_distributions(const ModelParams& params) {
  Matrix phi(params.factors(), params.vocab_size());
  for (std::size_t f = 0; f < params.factors(); ++f) {
    const auto p = word_dist(params.psi.row(f));
    std::copy(p.begin(), p.end(), phi.row(f).begin());
  }
  return phi;
}

ObjectiveTerms objective_terms(const ModelParams& params, const ModelInputs& in,
                               const VariantConfig& cfg) {
  check_shapes(params, in);
  const std::size_t F = params.factors();
  ObjectiveTerms t;

  // Ratings are centered, so mu cancels from the residual.
  for (const auto& r : in.ratings.triples()) {
    const double e = params.b_user[r.user] + params.b_item[r.item] +
                     dot(params.U.row(r.user), params.V.row(r.item)) - r.value;
    t.rating += user_weight(in, cfg, r.user) * e * e;
  }

  if (cfg.lambda_rev != 0.0) {
    // sum_n log theta_{d,z} = sum_f M_df (kappa V_df - log z_d), likewise for phi.
    double loglik = 0.0;
    std::vector<double> scaled(F);
    for (std::size_t j = 0; j < params.n_items(); ++j) {
      const double m = in.counts.doc_total[j];
      if (m == 0.0) continue;
      const auto v = params.V.row(j);
      for (std::size_t f = 0; f < F; ++f) scaled[f] = params.kappa * v[f];
      const double lz = log_sum_exp(scaled);
      for (std::size_t f = 0; f < F; ++f) loglik += in.counts.doc_topic(j, f) * scaled[f];
      loglik -= m * lz;
    }
    for (std::size_t f = 0; f < F; ++f) {
      const double m = in.counts.topic_total[f];
      if (m == 0.0) continue;
      const auto psi = params.psi.row(f);
      const double lz = log_sum_exp(psi);
      for (std::size_t w = 0; w < psi.size(); ++w) {
        const double c = in.counts.topic_word(f, w);
        if (c != 0.0) loglik += c * psi[w];
      }
      loglik -= m * lz;
    }
    t.review = -cfg.lambda_rev * loglik;
  }

  if (cfg.lambda_rel != 0.0) {
    const auto edges = in.graph.edges();
    double s = 0.0;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double resid = in.context.similarity[e] -
                           bilinear(params.H, params.U.row(edges[e].from), params.U.row(edges[e].to));
      s += edge_trust(in, cfg, e) * resid * resid;
    }
    t.social = cfg.lambda_rel * s;
  }

  t.penalty = cfg.lambda * (squared_norm(params.U.flat()) + squared_norm(params.V.flat()) +
                            squared_norm(params.H.flat()));

  if (!std::isfinite(t.total())) throw DivergenceError("divergence");
  return t;
}

double objective(const ModelParams& params, const ModelInputs& in, const VariantConfig& cfg) {
  return objective_terms(params, in, cfg).total();
}

ModelParams gradients(const ModelParams& params, const ModelInputs& in, const VariantConfig& cfg) {
  check_shapes(params, in);
  const std::size_t F = params.factors();
  ModelParams g = ModelParams::zeros(params.n_users(), params.n_items(), F, params.vocab_size());

  for (const auto& r : in.ratings.triples()) {
    const auto ui = params.U.row(r.user);
    const auto vj = params.V.row(r.item);
    const double e = params.b_user[r.user] + params.b_item[r.item] + dot(ui, vj) - r.value;
    const double c = 2.0 * user_weight(in, cfg, r.user) * e;
    g.b_user[r.user] += c;
    g.b_item[r.item] += c;
    auto gu = g.U.row(r.user);
    auto gv = g.V.row(r.item);
    for (std::size_t f = 0; f < F; ++f) {
      gu[f] += c * vj[f];
      gv[f] += c * ui[f];
    }
  }

  if (cfg.lambda_rel != 0.0) {
    // Each edge i -> k touches U_i through H U_k, U_k through H' U_i, and H
    // through U_i U_k'.
    const auto edges = in.graph.edges();
    std::vector<double> hk(F), hti(F);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const Index i = edges[e].from, k = edges[e].to;
      const auto ui = params.U.row(i);
      const auto uk = params.U.row(k);
      for (std::size_t a = 0; a < F; ++a) {
        hk[a] = dot(params.H.row(a), uk);
        hti[a] = 0.0;
      }
      for (std::size_t a = 0; a < F; ++a)
        for (std::size_t b = 0; b < F; ++b) hti[b] += params.H(a, b) * ui[a];
      const double resid = dot(ui, hk) - in.context.similarity[e];
      const double c = 2.0 * cfg.lambda_rel * edge_trust(in, cfg, e) * resid;
      auto gi = g.U.row(i);
      auto gk = g.U.row(k);
      for (std::size_t a = 0; a < F; ++a) {
        gi[a] += c * hk[a];
        gk[a] += c * hti[a];
        for (std::size_t b = 0; b < F; ++b) g.H(a, b) += c * ui[a] * uk[b];
      }
    }
  }

  if (cfg.lambda_rev != 0.0) {
    for (std::size_t j = 0; j < params.n_items(); ++j) {
      const double m = in.counts.doc_total[j];
      if (m == 0.0) continue;
      const auto v = params.V.row(j);
      const auto theta = topic_transform(v, params.kappa);
      auto gv = g.V.row(j);
      for (std::size_t f = 0; f < F; ++f) {
        const double resid = in.counts.doc_topic(j, f) - m * theta[f];
        gv[f] -= cfg.lambda_rev * params.kappa * resid;
        g.kappa -= cfg.lambda_rev * v[f] * resid;
      }
    }
    for (std::size_t f = 0; f < F; ++f) {
      const double m = in.counts.topic_total[f];
      if (m == 0.0) continue;
      const auto phi = word_dist(params.psi.row(f));
      auto gp = g.psi.row(f);
      for (std::size_t w = 0; w < phi.size(); ++w)
        gp[w] = -cfg.lambda_rev * (in.counts.topic_word(f, w) - m * phi[w]);
    }
  }

  const auto add_penalty = [&](std::span<double> grad, std::span<const double> value) {
    for (std::size_t x = 0; x < grad.size(); ++x) grad[x] += 2.0 * cfg.lambda * value[x];
  };
  add_penalty(g.U.flat(), params.U.flat());
  add_penalty(g.V.flat(), params.V.flat());
  add_penalty(g.H.flat(), params.H.flat());

  bool finite = std::isfinite(g.kappa);
  for_each_block(std::as_const(g), [&](std::span<const double> block) {
    for (double x : block) finite = finite && std::isfinite(x);
  });
  if (!finite) throw DivergenceError("divergence");
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints
//
//   magic "MR3CKPT\0" | u32 version | u64 I, J, F, L | f64 mu, kappa
//   | b_user[I] | b_item[J] | U[I*F] | V[J*F] | H[F*F] | psi[F*L]

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'M', 'R', '3', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError("truncated checkpoint");
  return v;
}

void put_block(std::ostream& out, std::span<const double> block) {
  out.write(reinterpret_cast<const char*>(block.data()),
            static_cast<std::streamsize>(block.size() * sizeof(double)));
}

void get_block(std::istream& in, std::span<double> block) {
  if (!in.read(reinterpret_cast<char*>(block.data()),
               static_cast<std::streamsize>(block.size() * sizeof(double))))
    throw DataError("truncated checkpoint");
}

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, params.n_users());
  put<std::uint64_t>(out, params.n_items());
  put<std::uint64_t>(out, params.factors());
  put<std::uint64_t>(out, params.vocab_size());
  put<double>(out, params.mu);
  put<double>(out, params.kappa);
  put_block(out, params.b_user);
  put_block(out, params.b_item);
  put_block(out, params.U.flat());
  put_block(out, params.V.flat());
  put_block(out, params.H.flat());
  put_block(out, params.psi.flat());
  if (!out) throw DataError("failed to write checkpoint");
}

ModelParams load_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  if (!in.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw DataError("not an MR3 checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  const auto I = get<std::uint64_t>(in);
  const auto J = get<std::uint64_t>(in);
  const auto F = get<std::uint64_t>(in);
  const auto L = get<std::uint64_t>(in);
  ModelParams p = ModelParams::zeros(I, J, F, L);
  p.mu = get<double>(in);
  p.kappa = get<double>(in);
  get_block(in, p.b_user);
  get_block(in, p.b_item);
  get_block(in, p.U.flat());
  get_block(in, p.V.flat());
  get_block(in, p.H.flat());
  get_block(in, p.psi.flat());
  return p;
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  save_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return load_checkpoint(in);
}

}  // namespace mr3
