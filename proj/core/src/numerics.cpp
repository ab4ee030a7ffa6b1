#include "rvae/numerics.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rvae/errors.hpp"

namespace rvae {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap as_eigen(const Matrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

MutMap as_eigen(Matrix& m) {
  return {m.values().data(), static_cast<Eigen::Index>(m.rows()),
          static_cast<Eigen::Index>(m.cols())};
}

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                       b.shape_string());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: " + std::to_string(data_.size()) +
                         " values cannot fill shape " + shape_string());
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

std::string Matrix::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Matrix::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  if (a.cols() == 0) return out;
  as_eigen(out).noalias() = as_eigen(a) * as_eigen(b);
  return out;
}

Matrix gather_rows(const Matrix& source, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), source.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= source.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[i]) +
                           " out of range for " + source.shape_string());
    }
    std::ranges::copy(source.row(indices[i]), out.row(i).begin());
  }
  return out;
}

Matrix affine_forward(const Matrix& x, const Matrix& weight, const Matrix& bias) {
  if (x.cols() != weight.rows()) shape_error("affine_forward(x, W)", x, weight);
  if (bias.rows() != 1 || bias.cols() != weight.cols()) {
    shape_error("affine_forward(W, b)", weight, bias);
  }
  Matrix out = matmul(x, weight);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += bias(0, j);
  }
  return out;
}

AffineGrads affine_backward(const Matrix& x, const Matrix& weight, const Matrix& grad_out,
                            bool compute_grad_x) {
  if (x.cols() != weight.rows()) shape_error("affine_backward(x, W)", x, weight);
  if (grad_out.rows() != x.rows() || grad_out.cols() != weight.cols()) {
    shape_error("affine_backward(grad_out)", grad_out, weight);
  }
  AffineGrads g{compute_grad_x ? Matrix(x.rows(), x.cols()) : Matrix(),
                Matrix(weight.rows(), weight.cols()), Matrix(1, weight.cols())};
  if (x.rows() > 0) {
    if (compute_grad_x) {
      as_eigen(g.grad_x).noalias() = as_eigen(grad_out) * as_eigen(weight).transpose();
    }
    as_eigen(g.grad_weight).noalias() = as_eigen(x).transpose() * as_eigen(grad_out);
  }
  for (std::size_t i = 0; i < grad_out.rows(); ++i) {
    const auto row = grad_out.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) g.grad_bias(0, j) += row[j];
  }
  return g;
}

Matrix prelu_forward(const Matrix& x, double slope) {
  Matrix out = x;
  for (double& v : out.values()) {
    if (!(v > 0.0)) v *= slope;
  }
  return out;
}

PreluGrads prelu_backward(const Matrix& x, double slope, const Matrix& grad_out) {
  if (!x.same_shape(grad_out)) shape_error("prelu_backward", x, grad_out);
  PreluGrads g{grad_out, 0.0};
  const auto xs = x.values();
  auto gx = g.grad_x.values();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i] < 0.0) {
      g.grad_slope += xs[i] * gx[i];
      gx[i] *= slope;
    }
  }
  return g;
}

double log_add_exp(double a, double b) noexcept {
  if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<double>::quiet_NaN();
  const double hi = std::max(a, b);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double stable_sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double softplus(double t) noexcept {
  // max(t, 0) + log1p(e^{-|t|})
  return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
}

double log_sum_exp(std::span<const double> values) noexcept {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::ranges::max_element(values);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double log_mean_exp(std::span<const double> values) {
  if (values.empty()) throw DomainError("log_mean_exp: empty input");
  return log_sum_exp(values) - std::log(static_cast<double>(values.size()));
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw DomainError("Rng::uniform_index: empty range");
  // Rejection on the top of the range removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return draw % n;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) noexcept {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ index);
}

Matrix gaussian_sample(Rng& rng, std::size_t rows, std::size_t cols) {
  Matrix out(rows, cols);
  for (double& v : out.values()) v = rng.normal();
  return out;
}

Matrix he_normal(Rng& rng, std::size_t fan_in, std::size_t fan_out) {
  Matrix w = gaussian_sample(rng, fan_in, fan_out);
  const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : w.values()) v *= scale;
  return w;
}

AdamState AdamState::for_params(std::span<const Matrix* const> params, double beta1,
                                double beta2, double eps_hat) {
  AdamState s;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps_hat = eps_hat;
  for (const Matrix* p : params) {
    s.m.emplace_back(p->rows(), p->cols());
    s.v.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, double lr) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " +
                         std::to_string(grads.size()) + " grads, " +
                         std::to_string(state.m.size()) + " moment slots");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k]->same_shape(*grads[k])) shape_error("adam_step", *params[k], *grads[k]);
    if (!grads[k]->all_finite()) {
      throw TrainingDivergence("adam_step: non-finite gradient in tensor " + std::to_string(k));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k]->values();
    const auto g = grads[k]->values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps_hat);
    }
  }
}

std::vector<double> finite_diff_grad(const ScalarFunction& f, std::span<const double> x,
                                     double h) {
  if (!(h > 0.0)) throw DomainError("finite_diff_grad: step must be positive");
  std::vector<double> point(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = point[i];
    point[i] = saved + h;
    const double up = f(point);
    point[i] = saved - h;
    const double down = f(point);
    point[i] = saved;
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

}  // namespace rvae
