#pragma once

// Two-phase training:
//
//   1. warm-up: one epoch of plain-ELBO Adam updates;
//   2. log_eps is initialized to the warm-up epoch's mean ELBO;
//   3. every following epoch maximizes the robust bound. After each gradient
//      step log_eps is smoothed toward log_alpha + (mean ELBO of the batch
//      just processed); after each epoch it is updated once more from the
//      epoch's mean ELBO.
//
// Training is single-threaded; all randomness is derived from (seed, epoch).

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rvae/data.hpp"
#include "rvae/objective.hpp"
#include "rvae/vae_model.hpp"

namespace rvae {

enum class ObjectiveKind { elbo, robust };

/// How the end-of-epoch update moves log_eps toward the epoch target.
enum class EpochEpsUpdate { smoothed, hard, off };

/// Where log_eps starts after warm-up.
enum class EpsInit {
  mean_elbo,  ///< log_eps = warm-up mean ELBO (alpha not applied)
  target,     ///< log_eps = log_alpha + warm-up mean ELBO
};

struct TrainConfig {
  ObjectiveKind objective = ObjectiveKind::robust;
  double log_alpha = -50.0;
  std::size_t epochs = 1000;
  std::size_t batch_size = 200;
  double lr = 1e-3;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double eps_hat = 1e-4;
  double gamma = 0.99;
  std::uint64_t seed = 0;
  std::size_t hidden = 200;
  std::size_t latent = 50;
  std::size_t samples = 1;
  ElboEstimator elbo_estimator = ElboEstimator::analytic_kl;
  EpsInit eps_init = EpsInit::mean_elbo;
  EpochEpsUpdate epoch_eps_update = EpochEpsUpdate::smoothed;
  bool epoch_eps_alpha = true;
  std::size_t eval_interval = 100;  ///< 0: evaluate only at the end
  std::size_t eval_k = 200;
  std::size_t eval_subset = 0;  ///< 0: whole test set
  std::uint64_t eval_seed = 0;
  std::size_t eval_threads = 1;
  bool record_wall_time = false;

  /// Throws ConfigError on an out-of-range field.
  void validate() const;

  /// Sets one field from its text form. Returns false for unknown keys;
  /// throws ConfigError for malformed values.
  bool set(const std::string& key, const std::string& value);

  /// Every field as (key, value) text, in a fixed order; feeding the pairs
  /// back through set() reproduces the config exactly.
  std::vector<std::pair<std::string, std::string>> to_key_values() const;
};

/// Parses `key=value` lines. Blank lines and lines starting with '#' are
/// skipped; surrounding whitespace is trimmed.
std::vector<std::pair<std::string, std::string>> parse_key_value_text(const std::string& text);

std::string to_string(ObjectiveKind kind);
std::string to_string(EpochEpsUpdate update);
std::string to_string(EpsInit init);
std::string to_string(ElboEstimator estimator);

struct BatchStats {
  double mean_elbo = 0.0;  ///< analytic-KL ELBO per object
  double mean_robust = 0.0;
  double mean_gate = 0.0;
  std::size_t batch_index = 0;
  std::size_t examples = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_elbo = 0.0;
  std::optional<double> mean_robust;
  std::optional<double> mean_gate;
  std::optional<double> log_eps_end;
  std::optional<double> test_ll;
  std::optional<double> gate_original;  ///< mean gate over original examples
  std::optional<double> gate_noise;     ///< mean gate over noise examples
  double wall_time = 0.0;
};

/// Called after every gradient step with the batch telemetry and the
/// post-update regularizer (default-constructed for plain epochs).
using BatchObserver = std::function<void(const BatchStats&, const EpsilonState&)>;

struct TrainingState {
  VaeParams params;
  AdamState adam;
};

/// Fresh parameters for the configured architecture, seeded from config.seed.
TrainingState make_training_state(const TrainConfig& config, std::size_t input_dim);

/// The Rng used for binarization and reparametrization noise in an epoch.
Rng epoch_rng(std::uint64_t seed, std::size_t epoch);

/// One epoch of plain-ELBO updates. Returns the epoch aggregates.
EpochStats train_epoch_elbo(TrainingState& state, const ImageDataset& data,
                            const TrainConfig& config, std::size_t epoch,
                            const BatchObserver& observer = {});

/// Warm-up: the first plain-ELBO epoch. Returns its example-weighted mean ELBO.
double warmup_epoch(TrainingState& state, const ImageDataset& data, const TrainConfig& config,
                    const BatchObserver& observer = {});

/// Initial regularizer from the warm-up mean ELBO.
EpsilonState init_epsilon(double mean_elbo_epoch1, const TrainConfig& config);

/// One robust epoch with per-batch and end-of-epoch log_eps updates.
EpochStats train_epoch_robust(TrainingState& state, const ImageDataset& data, EpsilonState& eps,
                              const TrainConfig& config, std::size_t epoch,
                              const BatchObserver& observer = {});

/// Replays the per-batch and end-of-epoch schedule over recorded batch mean
/// ELBOs and example counts; returns log_eps after each batch, then after
/// the epoch update.
std::vector<double> replay_epsilon_schedule(EpsilonState eps, const TrainConfig& config,
                                            const std::vector<double>& batch_mean_elbos,
                                            const std::vector<std::size_t>& batch_examples);

struct TrainResult {
  VaeParams params;
  std::vector<EpochStats> history;
  std::optional<EpsilonState> eps;
  std::optional<double> final_test_ll;
};

struct TrainIo {
  /// Receives metrics.csv, checkpoint.rvae and eval/ when set.
  std::optional<std::filesystem::path> run_dir;
  /// Binarized clean test set; evaluation is skipped when empty.
  Matrix test_binary;
  std::function<void(const EpochStats&)> on_epoch;
};

/// Full procedure: warm-up, eps initialization, robust epochs (or plain
/// epochs when objective = elbo), periodic evaluation and checkpointing.
TrainResult train(const TrainConfig& config, const ImageDataset& train_data, const TrainIo& io = {});

/// The metrics.csv header.
inline constexpr const char* kMetricsHeader =
    "epoch,mean_elbo,mean_robust,mean_gate,log_eps,test_ll,wall_time";

std::string metrics_row(const EpochStats& stats, bool include_wall_time);

}  // namespace rvae
