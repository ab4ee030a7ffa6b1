#include "rvae/trainer.hpp"

#include <cmath>
#include <fstream>

#include "rvae/checkpoint.hpp"
#include "rvae/errors.hpp"
#include "rvae/eval.hpp"

namespace rvae {

namespace {

constexpr std::uint64_t kTrainStream = 0x545241494eULL;  // "TRAIN"
constexpr std::uint64_t kInitStream = 0x494e4954ULL;     // "INIT"

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void apply_gradient(TrainingState& state, VaeGradients grads, double lr) {
  // Maximization: negate once so Adam descends.
  scale(grads, -1.0);
  auto params = state.params.tensors();
  const auto g = std::as_const(grads).tensors();
  adam_step(params, g, state.adam, lr);
}

struct EpochAccumulator {
  double elbo = 0.0;
  double robust = 0.0;
  double gate = 0.0;
  double gate_original = 0.0;
  double gate_noise = 0.0;
  std::size_t n_original = 0;
  std::size_t n_noise = 0;
  std::size_t examples = 0;

  void add(const BatchStats& b) {
    const double w = static_cast<double>(b.examples);
    elbo += w * b.mean_elbo;
    robust += w * b.mean_robust;
    gate += w * b.mean_gate;
    examples += b.examples;
  }

  double mean(double total) const { return total / static_cast<double>(examples); }
};

double epoch_target(const EpsilonState& eps, const TrainConfig& config, double mean_elbo) {
  return config.epoch_eps_alpha ? epsilon_target(eps, mean_elbo) : mean_elbo;
}

}  // namespace

TrainingState make_training_state(const TrainConfig& config, std::size_t input_dim) {
  Rng rng(derive_seed(config.seed, kInitStream));
  TrainingState state{VaeParams::initialize({input_dim, config.hidden, config.latent}, rng), {}};
  state.adam = AdamState::for_params(std::as_const(state.params).tensors(), config.beta1,
                                     config.beta2, config.eps_hat);
  return state;
}

Rng epoch_rng(std::uint64_t seed, std::size_t epoch) {
  return Rng(derive_seed(seed, kTrainStream, epoch));
}

EpochStats train_epoch_elbo(TrainingState& state, const ImageDataset& data,
                            const TrainConfig& config, std::size_t epoch,
                            const BatchObserver& observer) {
  if (data.count() == 0) throw DomainError("train_epoch_elbo: empty dataset");
  const auto start = Clock::now();
  Rng rng = epoch_rng(config.seed, epoch);
  EpochAccumulator acc;
  const auto batches = minibatches(data.count(), config.batch_size, config.seed, epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const Matrix x = binarize(gather_rows(data.pixels, batches[b]), rng);
    BatchObjective obj =
        elbo_batch_backward(state.params, x, config.elbo_estimator, rng, config.samples);
    apply_gradient(state, std::move(obj.gradient), config.lr);
    const BatchStats stats{obj.mean_elbo, obj.value, 1.0, b, batches[b].size()};
    acc.add(stats);
    if (observer) observer(stats, EpsilonState{});
  }
  EpochStats out;
  out.epoch = epoch;
  out.mean_elbo = acc.mean(acc.elbo);
  out.wall_time = seconds_since(start);
  return out;
}

double warmup_epoch(TrainingState& state, const ImageDataset& data, const TrainConfig& config,
                    const BatchObserver& observer) {
  return train_epoch_elbo(state, data, config, 1, observer).mean_elbo;
}

EpsilonState init_epsilon(double mean_elbo_epoch1, const TrainConfig& config) {
  if (!std::isfinite(mean_elbo_epoch1)) {
    throw ConfigError("init_epsilon: warm-up mean ELBO is not finite");
  }
  EpsilonState eps;
  eps.log_alpha = config.log_alpha;
  eps.gamma = config.gamma;
  eps.log_eps = config.eps_init == EpsInit::mean_elbo ? mean_elbo_epoch1
                                                      : epsilon_target(eps, mean_elbo_epoch1);
  return eps;
}

EpochStats train_epoch_robust(TrainingState& state, const ImageDataset& data, EpsilonState& eps,
                              const TrainConfig& config, std::size_t epoch,
                              const BatchObserver& observer) {
  if (data.count() == 0) throw DomainError("train_epoch_robust: empty dataset");
  if (!eps.initialized()) throw DomainError("train_epoch_robust: log_eps is not initialized");
  const auto start = Clock::now();
  Rng rng = epoch_rng(config.seed, epoch);
  EpochAccumulator acc;
  const auto batches = minibatches(data.count(), config.batch_size, config.seed, epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const auto& idx = batches[b];
    const Matrix x = binarize(gather_rows(data.pixels, idx), rng);
    BatchObjective obj = robust_batch_backward(state.params, x, eps, rng, config.samples);
    apply_gradient(state, std::move(obj.gradient), config.lr);

    for (std::size_t r = 0; r < obj.gate.size(); ++r) {
      if (data.provenance[idx[r % idx.size()]] == Provenance::noise) {
        acc.gate_noise += obj.gate[r];
        ++acc.n_noise;
      } else {
        acc.gate_original += obj.gate[r];
        ++acc.n_original;
      }
    }
    // The batch just processed sets the target for the next step.
    eps = smooth_update(eps, epsilon_target(eps, obj.mean_elbo));

    const BatchStats stats{obj.mean_elbo, obj.mean_robust, obj.mean_gate, b, idx.size()};
    acc.add(stats);
    if (observer) observer(stats, eps);
  }

  EpochStats out;
  out.epoch = epoch;
  out.mean_elbo = acc.mean(acc.elbo);
  out.mean_robust = acc.mean(acc.robust);
  out.mean_gate = acc.mean(acc.gate);
  if (acc.n_original) out.gate_original = acc.gate_original / static_cast<double>(acc.n_original);
  if (acc.n_noise) out.gate_noise = acc.gate_noise / static_cast<double>(acc.n_noise);

  const double target = epoch_target(eps, config, out.mean_elbo);
  switch (config.epoch_eps_update) {
    case EpochEpsUpdate::smoothed: eps = smooth_update(eps, target); break;
    case EpochEpsUpdate::hard: eps.log_eps = target; break;
    case EpochEpsUpdate::off: break;
  }
  out.log_eps_end = eps.log_eps;
  out.wall_time = seconds_since(start);
  return out;
}

std::vector<double> replay_epsilon_schedule(EpsilonState eps, const TrainConfig& config,
                                            const std::vector<double>& batch_mean_elbos,
                                            const std::vector<std::size_t>& batch_examples) {
  if (batch_mean_elbos.size() != batch_examples.size() || batch_mean_elbos.empty()) {
    throw DimensionError("replay_epsilon_schedule: need one example count per batch");
  }
  std::vector<double> trace;
  double weighted = 0.0;
  std::size_t examples = 0;
  for (std::size_t b = 0; b < batch_mean_elbos.size(); ++b) {
    eps = smooth_update(eps, epsilon_target(eps, batch_mean_elbos[b]));
    trace.push_back(eps.log_eps);
    weighted += static_cast<double>(batch_examples[b]) * batch_mean_elbos[b];
    examples += batch_examples[b];
  }
  const double target = epoch_target(eps, config, weighted / static_cast<double>(examples));
  switch (config.epoch_eps_update) {
    case EpochEpsUpdate::smoothed: eps = smooth_update(eps, target); break;
    case EpochEpsUpdate::hard: eps.log_eps = target; break;
    case EpochEpsUpdate::off: break;
  }
  trace.push_back(eps.log_eps);
  return trace;
}

std::string metrics_row(const EpochStats& s, bool include_wall_time) {
  auto opt = [](const std::optional<double>& v) { return v ? format_real(*v) : std::string(); };
  return std::to_string(s.epoch) + ',' + format_real(s.mean_elbo) + ',' + opt(s.mean_robust) + ',' +
         opt(s.mean_gate) + ',' + opt(s.log_eps_end) + ',' + opt(s.test_ll) + ',' +
         (include_wall_time ? format_real(s.wall_time) : std::string());
}

TrainResult train(const TrainConfig& config, const ImageDataset& train_data, const TrainIo& io) {
  config.validate();
  if (train_data.count() == 0) throw DomainError("train: empty training set");

  std::ofstream metrics;
  std::filesystem::path checkpoint_path;
  if (io.run_dir) {
    std::filesystem::create_directories(*io.run_dir / "eval");
    checkpoint_path = *io.run_dir / "checkpoint.rvae";
    const auto metrics_path = *io.run_dir / "metrics.csv";
    metrics.open(metrics_path, std::ios::trunc);
    if (!metrics) throw IoError("cannot open " + metrics_path.string() + " for writing");
    metrics << kMetricsHeader << '\n';
  }

  TrainingState state = make_training_state(config, train_data.dim());
  TrainResult result;
  const bool have_test = !io.test_binary.empty();
  EvalConfig eval_cfg;
  eval_cfg.k = config.eval_k;
  eval_cfg.seed = config.eval_seed;
  eval_cfg.threads = config.eval_threads;
  if (config.eval_subset > 0) eval_cfg.subset = config.eval_subset;

  VaeParams last_good = state.params;
  std::optional<EpsilonState> eps;
  std::optional<EvalResult> last_eval;
  try {
    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
      last_good = state.params;
      EpochStats stats;
      if (epoch == 1 || config.objective == ObjectiveKind::elbo) {
        stats = train_epoch_elbo(state, train_data, config, epoch);
        if (epoch == 1 && config.objective == ObjectiveKind::robust) {
          eps = init_epsilon(stats.mean_elbo, config);
          stats.log_eps_end = eps->log_eps;
        }
      } else {
        stats = train_epoch_robust(state, train_data, *eps, config, epoch);
      }
      if (!state.params.all_finite()) {
        throw TrainingDivergence("epoch " + std::to_string(epoch) + ": non-finite parameters");
      }

      const bool last = epoch == config.epochs;
      const bool periodic = config.eval_interval > 0 && epoch % config.eval_interval == 0;
      if (periodic || last) {
        if (have_test) {
          last_eval = evaluate(state.params, io.test_binary, eval_cfg);
          stats.test_ll = last_eval->mean_ll;
        }
        if (io.run_dir) save_checkpoint(state.params, checkpoint_path);
      }
      if (metrics.is_open()) {
        metrics << metrics_row(stats, config.record_wall_time) << '\n' << std::flush;
      }
      result.history.push_back(stats);
      if (io.on_epoch) io.on_epoch(stats);
    }
  } catch (const TrainingDivergence& e) {
    std::string saved;
    if (io.run_dir) {
      save_checkpoint(last_good, checkpoint_path);
      saved = checkpoint_path.string();
    }
    throw TrainingDivergence(e.what(), saved);
  }

  if (last_eval) {
    result.final_test_ll = last_eval->mean_ll;
    if (io.run_dir) {
      last_eval->model_checkpoint = checkpoint_path.filename().string();
      export_metrics(*last_eval, *io.run_dir / "eval" / "test_ll.csv",
                     *io.run_dir / "eval" / "summary.json");
    }
  }
  result.params = std::move(state.params);
  result.eps = eps;
  return result;
}

}  // namespace rvae
