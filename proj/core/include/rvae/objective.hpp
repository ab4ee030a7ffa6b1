#pragma once

// Sampled log-ratio, robust evidence bound, gradient gate and the dynamic
// regularizer schedule.
//
// For a sample z ~ q(z|x) the log importance ratio is
//
//   log_ratio = log p(x|z) + log p(z) - log q(z|x)
//
// and the robust per-sample term is log(eps + exp(log_ratio)). All eps
// arithmetic is done in log scale: eps is of order exp(-100) and would
// underflow, so the robust term is log_add_exp(log_eps, log_ratio) and its
// derivative with respect to log_ratio is sigmoid(log_ratio - log_eps) (the
// gate). The gate multiplies the ordinary ELBO gradient of each sample, so
// samples far below eps stop contributing to the update.

#include <cstddef>
#include <limits>

#include "rvae/numerics.hpp"
#include "rvae/vae_model.hpp"

namespace rvae {

struct EpsilonState {
  double log_alpha = -50.0;
  double log_eps = std::numeric_limits<double>::quiet_NaN();
  double gamma = 0.99;

  bool initialized() const noexcept;
};

struct ObjectiveSampleTerms {
  Column log_ratio;
  Column robust_term;
  Column gate;
};

/// Single-sample ELBO integrand per row.
Column log_ratio(const VaeParams& params, const Matrix& x, const LatentBatch& latent,
                 const PosteriorParams& post);

/// log_add_exp(log_eps, log_ratio) per row.
Column robust_term(const Column& log_ratio, const EpsilonState& eps);

/// sigmoid(log_ratio - log_eps) per row: d robust_term / d log_ratio.
Column gate(const Column& log_ratio, const EpsilonState& eps);

ObjectiveSampleTerms sample_terms(const Column& log_ratio, const EpsilonState& eps);

/// log(alpha · exp(mean ELBO)) = log_alpha + mean ELBO.
double epsilon_target(const EpsilonState& eps, double mean_elbo_per_object);

/// log_eps <- gamma·log_eps + (1 - gamma)·target.
EpsilonState smooth_update(EpsilonState eps, double target);

enum class ElboEstimator {
  analytic_kl,  ///< E log p(x|z) - KL(q || p), KL in closed form
  sampled,      ///< the single-sample log_ratio
};

/// Objective value, gradient and telemetry for one minibatch. Gradients are
/// of the mean objective (ascent direction).
struct BatchObjective {
  double value = 0.0;
  VaeGradients gradient;
  double mean_elbo = 0.0;       ///< analytic-KL ELBO per row
  double mean_log_ratio = 0.0;  ///< sampled single-sample ELBO per row
  double mean_robust = std::numeric_limits<double>::quiet_NaN();
  double mean_gate = std::numeric_limits<double>::quiet_NaN();
  Column log_ratio;
  Column gate;  ///< empty for the plain objective
};

/// Gradient of Σ_i weights[i]·log_ratio[i] for frozen noise, plus the
/// forward quantities. `weights` has one entry per row of x.
BatchObjective weighted_log_ratio_backward(const VaeParams& params, const Matrix& x,
                                           const Matrix& noise, const Column& weights);

/// Mean robust term and its gradient, log_eps held constant. Draws one noise
/// row per (row of x, sample); with samples > 1, x is tiled sample-major.
BatchObjective robust_batch_backward(const VaeParams& params, const Matrix& x,
                                     const EpsilonState& eps, Rng& rng, std::size_t samples = 1);
BatchObjective robust_batch_backward(const VaeParams& params, const Matrix& x,
                                     const EpsilonState& eps, const Matrix& noise);

/// Plain ELBO and its gradient.
BatchObjective elbo_batch_backward(const VaeParams& params, const Matrix& x,
                                   ElboEstimator estimator, Rng& rng, std::size_t samples = 1);
BatchObjective elbo_batch_backward(const VaeParams& params, const Matrix& x,
                                   ElboEstimator estimator, const Matrix& noise);

/// Forward-only values, used as finite-difference targets.
double robust_batch_value(const VaeParams& params, const Matrix& x, const EpsilonState& eps,
                          const Matrix& noise);
double elbo_batch_value(const VaeParams& params, const Matrix& x, ElboEstimator estimator,
                        const Matrix& noise);

/// `x` repeated `samples` times, sample-major.
Matrix tile_rows(const Matrix& x, std::size_t samples);

}  // namespace rvae
