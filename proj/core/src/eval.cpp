#include "rvae/eval.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rvae/errors.hpp"

namespace rvae {

namespace {

constexpr std::uint64_t kEvalStream = 0x4556414cULL;  // "EVAL"

}  // namespace

std::string format_real(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

Rng eval_rng(std::uint64_t seed, std::size_t index) {
  return Rng(derive_seed(seed, kEvalStream, index));
}

Column importance_log_ratios(const VaeParams& params, std::span<const double> x,
                             const Matrix& noise) {
  const std::size_t k = noise.rows();
  const Matrix row(1, x.size(), std::vector<double>(x.begin(), x.end()));
  const PosteriorParams single = encode(params, row);
  PosteriorParams post{Matrix(k, single.mu.cols()), Matrix(k, single.mu.cols())};
  for (std::size_t i = 0; i < k; ++i) {
    std::ranges::copy(single.mu.row(0), post.mu.row(i).begin());
    std::ranges::copy(single.logvar.row(0), post.logvar.row(i).begin());
  }
  Matrix tiled(k, x.size());
  for (std::size_t i = 0; i < k; ++i) std::ranges::copy(x, tiled.row(i).begin());

  const LatentBatch latent = reparametrize(post, noise);
  const Column loglik = bernoulli_loglik(decode(params, latent.z), tiled);
  const Column prior = gaussian_logpdf_std(latent.z);
  const Column entropy = gaussian_logpdf(post, latent.z);
  Column ratios(k);
  for (std::size_t i = 0; i < k; ++i) ratios[i] = loglik[i] + prior[i] - entropy[i];
  return ratios;
}

double iwae_ll(const VaeParams& params, std::span<const double> x, std::size_t k, Rng& rng) {
  if (k == 0) throw DomainError("iwae_ll: K must be >= 1");
  const Matrix noise = gaussian_sample(rng, k, params.shape().latent);
  return log_mean_exp(importance_log_ratios(params, x, noise));
}

EvalResult evaluate(const VaeParams& params, const Matrix& test_binary, const EvalConfig& cfg) {
  if (cfg.k == 0) throw DomainError("evaluate: K must be >= 1");
  const std::size_t n = std::min(test_binary.rows(), cfg.subset.value_or(test_binary.rows()));
  if (n == 0) throw DomainError("evaluate: empty test set");

  EvalResult result;
  result.k = cfg.k;
  result.seed = cfg.seed;
  result.per_example_ll.assign(n, 0.0);
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      Rng rng = eval_rng(cfg.seed, i);
      result.per_example_ll[i] = iwae_ll(params, test_binary.row(i), cfg.k, rng);
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(cfg.threads, n));
  if (threads == 1) {
    work(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t, threads);
  }
  result.mean_ll = std::accumulate(result.per_example_ll.begin(), result.per_example_ll.end(), 0.0) /
                   static_cast<double>(n);
  return result;
}

void export_metrics(const EvalResult& result, const std::filesystem::path& csv_path,
                    const std::filesystem::path& json_path) {
  {
    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw IoError("cannot open " + csv_path.string() + " for writing");
    csv << "example_index,log_likelihood\n";
    for (std::size_t i = 0; i < result.per_example_ll.size(); ++i) {
      csv << i << ',' << format_real(result.per_example_ll[i]) << '\n';
    }
    if (!csv) throw IoError("write failed for " + csv_path.string());
  }
  nlohmann::ordered_json summary;
  summary["mean_ll"] = result.mean_ll;
  summary["K"] = result.k;
  summary["n"] = result.per_example_ll.size();
  summary["checkpoint"] = result.model_checkpoint;
  summary["seed"] = result.seed;
  std::ofstream json(json_path, std::ios::trunc);
  if (!json) throw IoError("cannot open " + json_path.string() + " for writing");
  json << summary.dump(2) << '\n';
  if (!json) throw IoError("write failed for " + json_path.string());
}

}  // namespace rvae
