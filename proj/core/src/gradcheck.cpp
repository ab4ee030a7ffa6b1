#include "rvae/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "rvae/errors.hpp"

namespace rvae {

GradCheckProblem make_gradcheck_problem(const GradCheckOptions& options) {
  if (options.batch == 0) throw DomainError("gradcheck: batch must be >= 1");
  Rng rng(options.seed);
  GradCheckProblem p{VaeParams::initialize(options.shape, rng), {}, {}, {}};
  for (Matrix* bias : {&p.params.enc1_bias, &p.params.enc2_bias, &p.params.mu_bias,
                       &p.params.logvar_bias, &p.params.dec1_bias, &p.params.dec2_bias,
                       &p.params.out_bias}) {
    for (double& v : bias->values()) v = 0.1 * rng.normal();
  }
  for (Matrix* slope : {&p.params.enc1_slope, &p.params.enc2_slope, &p.params.dec1_slope,
                        &p.params.dec2_slope}) {
    (*slope)(0, 0) = 0.25 + 0.1 * rng.normal();
  }
  p.x = Matrix(options.batch, options.shape.input);
  for (double& v : p.x.values()) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
  p.noise = gaussian_sample(rng, options.batch, options.shape.latent);

  const PosteriorParams post = encode(p.params, p.x);
  const Column ratios = log_ratio(p.params, p.x, reparametrize(post, p.noise), post);
  p.eps.log_alpha = 0.0;
  p.eps.log_eps = std::accumulate(ratios.begin(), ratios.end(), 0.0) /
                  static_cast<double>(ratios.size());
  return p;
}

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kRelativeErrorFloor});
  return std::abs(analytic - numeric) / denom;
}

std::string describe_coordinate(const VaeParams& params, std::size_t flat_index) {
  std::size_t offset = 0;
  const auto tensors = params.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    const Matrix& t = *tensors[k];
    if (flat_index < offset + t.size()) {
      const std::size_t local = flat_index - offset;
      return std::string(VaeParams::tensor_names()[k]) + "[" + std::to_string(local / t.cols()) +
             "," + std::to_string(local % t.cols()) + "]";
    }
    offset += t.size();
  }
  return "out-of-range[" + std::to_string(flat_index) + "]";
}

GradCheckReport run_gradcheck(const GradCheckOptions& options, GradCheckObjective objective) {
  const GradCheckProblem p = make_gradcheck_problem(options);

  BatchObjective analytic;
  switch (objective) {
    case GradCheckObjective::robust:
      analytic = robust_batch_backward(p.params, p.x, p.eps, p.noise);
      break;
    case GradCheckObjective::elbo_sampled:
      analytic = elbo_batch_backward(p.params, p.x, ElboEstimator::sampled, p.noise);
      break;
    case GradCheckObjective::elbo_analytic:
      analytic = elbo_batch_backward(p.params, p.x, ElboEstimator::analytic_kl, p.noise);
      break;
  }
  std::vector<double> analytic_flat = analytic.gradient.flatten();
  if (options.corruption != 0.0 && !analytic_flat.empty()) {
    analytic_flat[analytic_flat.size() / 2] += options.corruption;
  }

  VaeParams scratch = p.params;
  const ScalarFunction f = [&](std::span<const double> flat) {
    scratch.unflatten(flat);
    switch (objective) {
      case GradCheckObjective::robust:
        return robust_batch_value(scratch, p.x, p.eps, p.noise);
      case GradCheckObjective::elbo_sampled:
        return elbo_batch_value(scratch, p.x, ElboEstimator::sampled, p.noise);
      case GradCheckObjective::elbo_analytic:
        break;
    }
    return elbo_batch_value(scratch, p.x, ElboEstimator::analytic_kl, p.noise);
  };
  const std::vector<double> numeric = finite_diff_grad(f, p.params.flatten(), options.h);

  GradCheckReport report;
  report.parameter_count = numeric.size();
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double err = relative_error(analytic_flat[i], numeric[i]);
    if (err > report.max_relative_error || i == 0) {
      report.max_relative_error = err;
      report.worst_index = i;
      report.worst_analytic = analytic_flat[i];
      report.worst_numeric = numeric[i];
    }
  }
  report.worst_coordinate = describe_coordinate(p.params, report.worst_index);
  return report;
}

}  // namespace rvae
