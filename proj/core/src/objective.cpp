#include "rvae/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rvae/errors.hpp"

namespace rvae {

namespace {

struct Forward {
  EncoderTrace encoder;
  LatentBatch latent;
  DecoderTrace decoder;
  Column loglik;   // log p(x|z)
  Column prior;    // log p(z)
  Column entropy;  // log q(z|x)
  Column kl;
};

Forward run_forward(const VaeParams& params, const Matrix& x, const Matrix& noise) {
  Forward f;
  f.encoder = encode_trace(params, x);
  f.latent = reparametrize(f.encoder.posterior, noise);
  f.decoder = decode_trace(params, f.latent.z);
  f.loglik = bernoulli_loglik(f.decoder.logits, x);
  f.prior = gaussian_logpdf_std(f.latent.z);
  f.entropy = gaussian_logpdf(f.encoder.posterior, f.latent.z);
  f.kl = analytic_kl(f.encoder.posterior);
  return f;
}

Column ratios_of(const Forward& f) {
  Column out(f.loglik.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.loglik[i] + f.prior[i] - f.entropy[i];
  return out;
}

Column analytic_elbos_of(const Forward& f) {
  Column out(f.loglik.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f.loglik[i] - f.kl[i];
  return out;
}

double mean(const Column& c) {
  return std::accumulate(c.begin(), c.end(), 0.0) / static_cast<double>(c.size());
}

// Gradient of Σ_i w_i·objective_i where objective_i is log_ratio_i (sampled)
// or loglik_i - kl_i (analytic).
VaeGradients run_backward(const VaeParams& params, const Matrix& x, const Forward& f,
                          const Column& w, ElboEstimator path) {
  VaeGradients grads = zero_gradients_like(params);
  const std::size_t rows = x.rows();
  const std::size_t latent = f.latent.z.cols();

  Matrix grad_logits(rows, x.cols());
  for (std::size_t i = 0; i < rows; ++i) {
    const auto l = f.decoder.logits.row(i);
    const auto xi = x.row(i);
    auto g = grad_logits.row(i);
    for (std::size_t d = 0; d < l.size(); ++d) g[d] = w[i] * (xi[d] - stable_sigmoid(l[d]));
  }
  Matrix grad_z = decoder_backward(params, f.latent.z, f.decoder, grad_logits, grads);

  const PosteriorParams& post = f.encoder.posterior;
  Matrix grad_mu(rows, latent);
  Matrix grad_logvar(rows, latent);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t l = 0; l < latent; ++l) {
      const double mu = post.mu(i, l);
      const double lv = post.logvar(i, l);
      const double z = f.latent.z(i, l);
      double dz = grad_z(i, l);
      double dmu = 0.0;
      double dlv = 0.0;
      if (path == ElboEstimator::sampled) {
        // log p(z) contributes -z; -log q(z|x) contributes (z - mu)/var to z,
        // its negation to mu, and ½ - ½(z - mu)²/var to logvar.
        const double inv_var = std::exp(-lv);
        const double diff = z - mu;
        dz += w[i] * (-z + diff * inv_var);
        dmu = -w[i] * diff * inv_var;
        dlv = w[i] * (0.5 - 0.5 * diff * diff * inv_var);
      } else {
        dmu = -w[i] * mu;
        dlv = -w[i] * 0.5 * std::expm1(lv);
      }
      // z = mu + exp(lv/2)·noise
      grad_mu(i, l) = dz + dmu;
      grad_logvar(i, l) = dz * 0.5 * std::exp(0.5 * lv) * f.latent.noise(i, l) + dlv;
    }
  }
  encoder_backward(params, x, f.encoder, grad_mu, grad_logvar, grads);
  return grads;
}

void require_finite(double value, const char* what) {
  if (!std::isfinite(value)) {
    throw TrainingDivergence(std::string(what) + ": non-finite objective value");
  }
}

void require_eps(const EpsilonState& eps) {
  if (!eps.initialized()) throw DomainError("robust objective: log_eps is not initialized");
}

BatchObjective robust_from_forward(const VaeParams& params, const Matrix& x, const Forward& f,
                                   const EpsilonState& eps) {
  BatchObjective out;
  out.log_ratio = ratios_of(f);
  const ObjectiveSampleTerms terms = sample_terms(out.log_ratio, eps);
  const double n = static_cast<double>(x.rows());
  Column weights(terms.gate.size());
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = terms.gate[i] / n;

  out.value = mean(terms.robust_term);
  require_finite(out.value, "robust_batch_backward");
  require_finite(mean(out.log_ratio), "robust_batch_backward");
  out.mean_robust = out.value;
  out.mean_gate = mean(terms.gate);
  out.mean_log_ratio = mean(out.log_ratio);
  out.mean_elbo = mean(analytic_elbos_of(f));
  out.gradient = run_backward(params, x, f, weights, ElboEstimator::sampled);
  out.gate = terms.gate;
  return out;
}

BatchObjective elbo_from_forward(const VaeParams& params, const Matrix& x, const Forward& f,
                                 ElboEstimator estimator) {
  BatchObjective out;
  out.log_ratio = ratios_of(f);
  out.mean_log_ratio = mean(out.log_ratio);
  out.mean_elbo = mean(analytic_elbos_of(f));
  out.value = estimator == ElboEstimator::sampled ? out.mean_log_ratio : out.mean_elbo;
  require_finite(out.value, "elbo_batch_backward");
  const Column weights(x.rows(), 1.0 / static_cast<double>(x.rows()));
  out.gradient = run_backward(params, x, f, weights, estimator);
  return out;
}

void require_rows(const Matrix& x) {
  if (x.rows() == 0) throw DomainError("batch objective: empty batch");
}

}  // namespace

bool EpsilonState::initialized() const noexcept { return std::isfinite(log_eps); }

Column log_ratio(const VaeParams& params, const Matrix& x, const LatentBatch& latent,
                 const PosteriorParams& post) {
  const Column loglik = bernoulli_loglik(decode(params, latent.z), x);
  const Column prior = gaussian_logpdf_std(latent.z);
  const Column entropy = gaussian_logpdf(post, latent.z);
  Column out(loglik.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = loglik[i] + prior[i] - entropy[i];
  return out;
}

Column robust_term(const Column& log_ratio, const EpsilonState& eps) {
  Column out(log_ratio.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = log_add_exp(eps.log_eps, log_ratio[i]);
  return out;
}

Column gate(const Column& log_ratio, const EpsilonState& eps) {
  Column out(log_ratio.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(log_ratio[i] - eps.log_eps);
  return out;
}

ObjectiveSampleTerms sample_terms(const Column& log_ratio, const EpsilonState& eps) {
  return {log_ratio, robust_term(log_ratio, eps), gate(log_ratio, eps)};
}

double epsilon_target(const EpsilonState& eps, double mean_elbo_per_object) {
  return eps.log_alpha + mean_elbo_per_object;
}

EpsilonState smooth_update(EpsilonState eps, double target) {
  eps.log_eps = eps.gamma * eps.log_eps + (1.0 - eps.gamma) * target;
  return eps;
}

BatchObjective weighted_log_ratio_backward(const VaeParams& params, const Matrix& x,
                                           const Matrix& noise, const Column& weights) {
  require_rows(x);
  if (weights.size() != x.rows()) {
    throw DimensionError("weighted_log_ratio_backward: " + std::to_string(weights.size()) +
                         " weights for " + std::to_string(x.rows()) + " rows");
  }
  const Forward f = run_forward(params, x, noise);
  BatchObjective out;
  out.log_ratio = ratios_of(f);
  out.mean_log_ratio = mean(out.log_ratio);
  out.mean_elbo = mean(analytic_elbos_of(f));
  out.value = std::inner_product(weights.begin(), weights.end(), out.log_ratio.begin(), 0.0);
  out.gradient = run_backward(params, x, f, weights, ElboEstimator::sampled);
  return out;
}

Matrix tile_rows(const Matrix& x, std::size_t samples) {
  if (samples == 1) return x;
  Matrix out(x.rows() * samples, x.cols());
  for (std::size_t s = 0; s < samples; ++s) {
    std::ranges::copy(x.values(), out.values().begin() + static_cast<std::ptrdiff_t>(s * x.size()));
  }
  return out;
}

BatchObjective robust_batch_backward(const VaeParams& params, const Matrix& x,
                                     const EpsilonState& eps, Rng& rng, std::size_t samples) {
  if (samples == 0) throw DomainError("robust_batch_backward: samples must be >= 1");
  const Matrix tiled = tile_rows(x, samples);
  const Matrix noise = gaussian_sample(rng, tiled.rows(), params.shape().latent);
  return robust_batch_backward(params, tiled, eps, noise);
}

BatchObjective robust_batch_backward(const VaeParams& params, const Matrix& x,
                                     const EpsilonState& eps, const Matrix& noise) {
  require_rows(x);
  require_eps(eps);
  return robust_from_forward(params, x, run_forward(params, x, noise), eps);
}

BatchObjective elbo_batch_backward(const VaeParams& params, const Matrix& x,
                                   ElboEstimator estimator, Rng& rng, std::size_t samples) {
  if (samples == 0) throw DomainError("elbo_batch_backward: samples must be >= 1");
  const Matrix tiled = tile_rows(x, samples);
  const Matrix noise = gaussian_sample(rng, tiled.rows(), params.shape().latent);
  return elbo_batch_backward(params, tiled, estimator, noise);
}

BatchObjective elbo_batch_backward(const VaeParams& params, const Matrix& x,
                                   ElboEstimator estimator, const Matrix& noise) {
  require_rows(x);
  return elbo_from_forward(params, x, run_forward(params, x, noise), estimator);
}

double robust_batch_value(const VaeParams& params, const Matrix& x, const EpsilonState& eps,
                          const Matrix& noise) {
  require_rows(x);
  require_eps(eps);
  const PosteriorParams post = encode(params, x);
  const LatentBatch latent = reparametrize(post, noise);
  return mean(robust_term(log_ratio(params, x, latent, post), eps));
}

double elbo_batch_value(const VaeParams& params, const Matrix& x, ElboEstimator estimator,
                        const Matrix& noise) {
  require_rows(x);
  const PosteriorParams post = encode(params, x);
  const LatentBatch latent = reparametrize(post, noise);
  if (estimator == ElboEstimator::sampled) return mean(log_ratio(params, x, latent, post));
  const Column loglik = bernoulli_loglik(decode(params, latent.z), x);
  const Column kl = analytic_kl(post);
  double acc = 0.0;
  for (std::size_t i = 0; i < loglik.size(); ++i) acc += loglik[i] - kl[i];
  return acc / static_cast<double>(loglik.size());
}

}  // namespace rvae
