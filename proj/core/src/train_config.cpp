#include <charconv>
#include <cmath>
#include <sstream>

#include "rvae/errors.hpp"
#include "rvae/eval.hpp"
#include "rvae/trainer.hpp"

namespace rvae {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + expected);
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a real");
  return out;
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    bad_value(key, value, "a non-negative integer");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value, "a boolean (true/false)");
}

}  // namespace

std::string to_string(ObjectiveKind kind) { return kind == ObjectiveKind::elbo ? "elbo" : "robust"; }

std::string to_string(EpochEpsUpdate update) {
  switch (update) {
    case EpochEpsUpdate::smoothed: return "smoothed";
    case EpochEpsUpdate::hard: return "hard";
    case EpochEpsUpdate::off: return "off";
  }
  return "smoothed";
}

std::string to_string(EpsInit init) { return init == EpsInit::mean_elbo ? "mean_elbo" : "target"; }

std::string to_string(ElboEstimator estimator) {
  return estimator == ElboEstimator::analytic_kl ? "analytic_kl" : "sampled";
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("invalid config: " + what); };
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0, 1)");
  if (!(eps_hat > 0.0)) fail("eps_hat must be > 0");
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma must lie in [0, 1]");
  if (!std::isfinite(log_alpha)) fail("log_alpha must be finite");
  if (hidden < 1 || latent < 1) fail("hidden and latent must be >= 1");
  if (samples < 1) fail("samples must be >= 1");
  if (eval_k < 1) fail("eval_k must be >= 1");
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "objective") {
    if (value == "elbo") objective = ObjectiveKind::elbo;
    else if (value == "robust") objective = ObjectiveKind::robust;
    else bad_value(key, value, "elbo|robust");
  } else if (key == "log_alpha") {
    log_alpha = parse_real(key, value);
  } else if (key == "epochs") {
    epochs = parse_u64(key, value);
  } else if (key == "batch_size") {
    batch_size = parse_u64(key, value);
  } else if (key == "lr") {
    lr = parse_real(key, value);
  } else if (key == "beta1") {
    beta1 = parse_real(key, value);
  } else if (key == "beta2") {
    beta2 = parse_real(key, value);
  } else if (key == "eps_hat") {
    eps_hat = parse_real(key, value);
  } else if (key == "gamma") {
    gamma = parse_real(key, value);
  } else if (key == "seed") {
    seed = parse_u64(key, value);
  } else if (key == "hidden") {
    hidden = parse_u64(key, value);
  } else if (key == "latent") {
    latent = parse_u64(key, value);
  } else if (key == "samples") {
    samples = parse_u64(key, value);
  } else if (key == "elbo_estimator") {
    if (value == "analytic_kl") elbo_estimator = ElboEstimator::analytic_kl;
    else if (value == "sampled") elbo_estimator = ElboEstimator::sampled;
    else bad_value(key, value, "analytic_kl|sampled");
  } else if (key == "eps_init") {
    if (value == "mean_elbo") eps_init = EpsInit::mean_elbo;
    else if (value == "target") eps_init = EpsInit::target;
    else bad_value(key, value, "mean_elbo|target");
  } else if (key == "epoch_eps_update") {
    if (value == "smoothed") epoch_eps_update = EpochEpsUpdate::smoothed;
    else if (value == "hard") epoch_eps_update = EpochEpsUpdate::hard;
    else if (value == "off") epoch_eps_update = EpochEpsUpdate::off;
    else bad_value(key, value, "smoothed|hard|off");
  } else if (key == "epoch_eps_alpha") {
    epoch_eps_alpha = parse_bool(key, value);
  } else if (key == "eval_interval") {
    eval_interval = parse_u64(key, value);
  } else if (key == "eval_k") {
    eval_k = parse_u64(key, value);
  } else if (key == "eval_subset") {
    eval_subset = parse_u64(key, value);
  } else if (key == "eval_seed") {
    eval_seed = parse_u64(key, value);
  } else if (key == "eval_threads") {
    eval_threads = parse_u64(key, value);
  } else if (key == "record_wall_time") {
    record_wall_time = parse_bool(key, value);
  } else {
    return false;
  }
  return true;
}

std::vector<std::pair<std::string, std::string>> TrainConfig::to_key_values() const {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  return {
      {"objective", to_string(objective)},
      {"log_alpha", format_real(log_alpha)},
      {"epochs", std::to_string(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"lr", format_real(lr)},
      {"beta1", format_real(beta1)},
      {"beta2", format_real(beta2)},
      {"eps_hat", format_real(eps_hat)},
      {"gamma", format_real(gamma)},
      {"seed", std::to_string(seed)},
      {"hidden", std::to_string(hidden)},
      {"latent", std::to_string(latent)},
      {"samples", std::to_string(samples)},
      {"elbo_estimator", to_string(elbo_estimator)},
      {"eps_init", to_string(eps_init)},
      {"epoch_eps_update", to_string(epoch_eps_update)},
      {"epoch_eps_alpha", b(epoch_eps_alpha)},
      {"eval_interval", std::to_string(eval_interval)},
      {"eval_k", std::to_string(eval_k)},
      {"eval_subset", std::to_string(eval_subset)},
      {"eval_seed", std::to_string(eval_seed)},
      {"eval_threads", std::to_string(eval_threads)},
      {"record_wall_time", b(record_wall_time)},
  };
}

std::vector<std::pair<std::string, std::string>> parse_key_value_text(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key=value, got '" +
                        stripped + "'");
    }
    out.emplace_back(trim(std::string_view(stripped).substr(0, eq)),
                     trim(std::string_view(stripped).substr(eq + 1)));
  }
  return out;
}

}  // namespace rvae
