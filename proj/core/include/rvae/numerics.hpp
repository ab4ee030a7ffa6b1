#pragma once

// Dense row-major matrices, the layer primitives used by the VAE, stable
// scalar special functions, Adam, a portable seeded RNG and a central
// finite-difference gradient oracle.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rvae {

/// Per-example column of scalars (one entry per batch row).
using Column = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  /// "RxC", used in diagnostics.
  std::string shape_string() const;
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;
  void fill(double value) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Row-major product a·b.
Matrix matmul(const Matrix& a, const Matrix& b);

/// Rows of `source` selected by `indices`, in order.
Matrix gather_rows(const Matrix& source, std::span<const std::size_t> indices);

// ---------------------------------------------------------------------------
// Layer primitives

/// out = x·W + b, with b a 1×O row.
Matrix affine_forward(const Matrix& x, const Matrix& weight, const Matrix& bias);

struct AffineGrads {
  Matrix grad_x;
  Matrix grad_weight;
  Matrix grad_bias;
};

/// Reverse-mode rule for affine_forward. With compute_grad_x = false the
/// input gradient is left empty (first layers never need it).
AffineGrads affine_backward(const Matrix& x, const Matrix& weight, const Matrix& grad_out,
                            bool compute_grad_x = true);

/// x where x > 0, slope·x elsewhere.
Matrix prelu_forward(const Matrix& x, double slope);

struct PreluGrads {
  Matrix grad_x;
  double grad_slope = 0.0;
};

/// The derivative at exactly x = 0 takes the positive branch.
PreluGrads prelu_backward(const Matrix& x, double slope, const Matrix& grad_out);

// ---------------------------------------------------------------------------
// Stable scalar functions

/// log(e^a + e^b) without overflow; (-inf, -inf) -> -inf.
double log_add_exp(double a, double b) noexcept;

/// 1 / (1 + e^-t), never exponentiating a large positive number.
double stable_sigmoid(double t) noexcept;

/// log(1 + e^t).
double softplus(double t) noexcept;

/// log Σ e^{v_i}, max-shifted. Empty input -> -inf.
double log_sum_exp(std::span<const double> values) noexcept;

/// log((1/n) Σ e^{v_i}).
double log_mean_exp(std::span<const double> values);

// ---------------------------------------------------------------------------
// Random numbers

/// mt19937_64 with hand-rolled uniform/normal transforms, so the stream is
/// identical on every standard library (std:: distributions are not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Standard normal via Box-Muller; draws come in cached pairs.
  double normal();
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t uniform_index(std::uint64_t n);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes (seed, stream, index) into an independent child seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) noexcept;

/// rows×cols i.i.d. standard normals.
Matrix gaussian_sample(Rng& rng, std::size_t rows, std::size_t cols);

/// He-style N(0, 2/fan_in) weights.
Matrix he_normal(Rng& rng, std::size_t fan_in, std::size_t fan_out);

// ---------------------------------------------------------------------------
// Adam

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t t = 0;
  double beta1 = 0.99;
  double beta2 = 0.999;
  double eps_hat = 1e-4;

  /// Zero moments shaped like `params`.
  static AdamState for_params(std::span<const Matrix* const> params, double beta1 = 0.99,
                              double beta2 = 0.999, double eps_hat = 1e-4);
};

/// One bias-corrected Adam step descending `grads`. Throws TrainingDivergence
/// (leaving params and state untouched) if any gradient entry is non-finite.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, double lr);

// ---------------------------------------------------------------------------
// Finite differences

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every coordinate.
std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x, double h);

}  // namespace rvae
