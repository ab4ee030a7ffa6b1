#pragma once

// Finite-difference verification of the hand-written backward passes on a
// tiny VAE with frozen reparametrization noise.

#include <cstddef>
#include <cstdint>
#include <string>

#include "rvae/objective.hpp"

namespace rvae {

enum class GradCheckObjective { robust, elbo_sampled, elbo_analytic };

struct GradCheckOptions {
  VaeShape shape{8, 5, 2};
  std::size_t batch = 3;
  std::uint64_t seed = 0;
  double h = 1e-5;
  /// Added to one analytic coordinate; a negative control for the checker.
  double corruption = 0.0;
};

/// Frozen problem instance shared by both sides of the check.
struct GradCheckProblem {
  VaeParams params;
  Matrix x;
  Matrix noise;
  EpsilonState eps;
};

/// Random parameters (non-zero biases, jittered slopes), a binary batch and
/// frozen noise. log_eps sits at the batch mean log-ratio so gates spread
/// around ½.
GradCheckProblem make_gradcheck_problem(const GradCheckOptions& options);

struct GradCheckReport {
  std::size_t parameter_count = 0;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::string worst_coordinate;  ///< "tensor[row,col]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// |a - n| / max(|a|, |n|, floor). The floor keeps exactly-zero gradients
/// (e.g. a PReLU slope whose inputs are all positive) from dividing by 0.
inline constexpr double kRelativeErrorFloor = 1e-4;
double relative_error(double analytic, double numeric) noexcept;

GradCheckReport run_gradcheck(const GradCheckOptions& options, GradCheckObjective objective);

/// Names a flat parameter index as "tensor[row,col]".
std::string describe_coordinate(const VaeParams& params, std::size_t flat_index);

}  // namespace rvae
