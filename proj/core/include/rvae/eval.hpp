#pragma once

// Importance-sampled test log-likelihood:
//
//   log p(x) ≈ log (1/K) Σ_k p(x, z_k) / q(z_k | x),   z_k ~ q(z | x)
//
// reduced with a max-shifted log-mean-exp (the ratios sit near -100 nats and
// would underflow if exponentiated directly).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "rvae/vae_model.hpp"

namespace rvae {

struct EvalConfig {
  std::size_t k = 200;
  std::uint64_t seed = 0;
  std::optional<std::size_t> subset;
  std::size_t threads = 1;
};

struct EvalResult {
  Column per_example_ll;
  double mean_ll = 0.0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
  std::string model_checkpoint;
};

/// K log-ratios for one binarized example, computed from caller-supplied noise (K×L).
Column importance_log_ratios(const VaeParams& params, std::span<const double> x,
                             const Matrix& noise);

/// K-sample importance-weighted log-likelihood estimate for one example.
double iwae_ll(const VaeParams& params, std::span<const double> x, std::size_t k, Rng& rng);

/// The generator evaluate() uses for example `index`.
Rng eval_rng(std::uint64_t seed, std::size_t index);

/// Per-example iwae_ll over the (sub)set of an already binarized test matrix.
/// Example i draws from eval_rng(seed, i).
EvalResult evaluate(const VaeParams& params, const Matrix& test_binary, const EvalConfig& cfg);

/// Writes `example_index,log_likelihood` rows to csv_path and
/// {mean_ll, K, n, checkpoint, seed} to json_path.
void export_metrics(const EvalResult& result, const std::filesystem::path& csv_path,
                    const std::filesystem::path& json_path);

/// Shortest round-trip decimal form of a double.
std::string format_real(double value);

}  // namespace rvae
