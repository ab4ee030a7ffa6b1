#pragma once

// Bernoulli-observation VAE with a diagonal Gaussian posterior:
//
//   encoder  x -> PReLU(affine) -> PReLU(affine) -> {mu, logvar} heads
//   sampling z = mu + exp(logvar / 2) * noise
//   decoder  z -> PReLU(affine) -> PReLU(affine) -> affine -> logits
//
// Each PReLU layer owns a single learnable slope.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rvae/numerics.hpp"

namespace rvae {

struct VaeShape {
  std::size_t input = 784;
  std::size_t hidden = 200;
  std::size_t latent = 50;

  friend bool operator==(const VaeShape&, const VaeShape&) = default;
};

inline constexpr double kInitialPreluSlope = 0.25;

/// Encoder (phi) and decoder (theta) parameters. Also used as gradient storage.
///
/// Members are declared in checkpoint order; tensors() walks the same order.
struct VaeParams {
  static constexpr std::size_t kTensorCount = 18;

  // phi
  Matrix enc1_weight, enc1_bias, enc1_slope;
  Matrix enc2_weight, enc2_bias, enc2_slope;
  Matrix mu_weight, mu_bias;
  Matrix logvar_weight, logvar_bias;
  // theta
  Matrix dec1_weight, dec1_bias, dec1_slope;
  Matrix dec2_weight, dec2_bias, dec2_slope;
  Matrix out_weight, out_bias;

  /// All-zero tensors (slopes included).
  static VaeParams zeros(const VaeShape& shape);
  /// He-normal weights, zero biases, slopes at kInitialPreluSlope.
  static VaeParams initialize(const VaeShape& shape, Rng& rng);

  VaeShape shape() const;
  std::array<Matrix*, kTensorCount> tensors();
  std::array<const Matrix*, kTensorCount> tensors() const;
  static const std::array<std::string_view, kTensorCount>& tensor_names();
  /// Expected (rows, cols) of every tensor for a given architecture.
  static std::array<std::pair<std::size_t, std::size_t>, kTensorCount> tensor_shapes(
      const VaeShape& shape);

  std::size_t parameter_count() const;
  bool all_finite() const;

  /// Concatenation of every tensor in declaration order.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  friend bool operator==(const VaeParams&, const VaeParams&) = default;
};

using VaeGradients = VaeParams;

/// Zero tensors shaped like `params`.
VaeGradients zero_gradients_like(const VaeParams& params);

/// grads *= factor, elementwise.
void scale(VaeGradients& grads, double factor);

/// q(z|x, phi) for a batch.
struct PosteriorParams {
  Matrix mu;
  Matrix logvar;
};

/// Reparametrized draw. z is recomputable from (mu, logvar, noise).
struct LatentBatch {
  Matrix noise;
  Matrix z;
};

/// Intermediate activations kept for the backward pass.
struct EncoderTrace {
  Matrix pre1, hidden1, pre2, hidden2;
  PosteriorParams posterior;
};

struct DecoderTrace {
  Matrix pre1, hidden1, pre2, hidden2;
  Matrix logits;
};

EncoderTrace encode_trace(const VaeParams& params, const Matrix& x);
PosteriorParams encode(const VaeParams& params, const Matrix& x);

DecoderTrace decode_trace(const VaeParams& params, const Matrix& z);
/// Bernoulli logits, one row per latent row.
Matrix decode(const VaeParams& params, const Matrix& z);

/// Draws fresh noise from `rng` and applies reparametrize().
LatentBatch reparam_sample(const PosteriorParams& post, Rng& rng);
/// z = mu + exp(logvar / 2) * noise for caller-supplied noise.
LatentBatch reparametrize(const PosteriorParams& post, Matrix noise);

/// Σ_d [x·l - softplus(l)] per row.
Column bernoulli_loglik(const Matrix& logits, const Matrix& x);

/// log N(z; 0, I) per row.
Column gaussian_logpdf_std(const Matrix& z);

/// log q(z | mu, exp(logvar)) per row.
Column gaussian_logpdf(const PosteriorParams& post, const Matrix& z);

/// KL(q || N(0, I)) per row, closed form.
Column analytic_kl(const PosteriorParams& post);

/// Backpropagates d(objective)/d(logits) through the decoder, accumulating
/// theta gradients into `grads`. Returns d(objective)/dz.
Matrix decoder_backward(const VaeParams& params, const Matrix& z, const DecoderTrace& trace,
                        const Matrix& grad_logits, VaeGradients& grads);

/// Backpropagates d/dmu and d/dlogvar through the encoder into `grads`.
void encoder_backward(const VaeParams& params, const Matrix& x, const EncoderTrace& trace,
                      const Matrix& grad_mu, const Matrix& grad_logvar, VaeGradients& grads);

/// Human-readable table of tensor shapes (for checkpoint mismatch diagnostics).
std::string shape_table(const std::array<std::pair<std::size_t, std::size_t>,
                                         VaeParams::kTensorCount>& shapes);

}  // namespace rvae
