#include "rvae/vae_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rvae/errors.hpp"

namespace rvae {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;  // ½·ln(2π)

void add_into(Matrix& dst, const Matrix& src) {
  auto d = dst.values();
  const auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void check_same(const char* op, const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
  }
}

}  // namespace

VaeParams VaeParams::zeros(const VaeShape& shape) {
  VaeParams p;
  const auto shapes = tensor_shapes(shape);
  auto ts = p.tensors();
  for (std::size_t k = 0; k < kTensorCount; ++k) {
    *ts[k] = Matrix(shapes[k].first, shapes[k].second);
  }
  return p;
}

VaeParams VaeParams::initialize(const VaeShape& shape, Rng& rng) {
  VaeParams p = zeros(shape);
  p.enc1_weight = he_normal(rng, shape.input, shape.hidden);
  p.enc2_weight = he_normal(rng, shape.hidden, shape.hidden);
  p.mu_weight = he_normal(rng, shape.hidden, shape.latent);
  p.logvar_weight = he_normal(rng, shape.hidden, shape.latent);
  p.dec1_weight = he_normal(rng, shape.latent, shape.hidden);
  p.dec2_weight = he_normal(rng, shape.hidden, shape.hidden);
  p.out_weight = he_normal(rng, shape.hidden, shape.input);
  for (Matrix* s : {&p.enc1_slope, &p.enc2_slope, &p.dec1_slope, &p.dec2_slope}) {
    s->fill(kInitialPreluSlope);
  }
  return p;
}

VaeShape VaeParams::shape() const {
  return {enc1_weight.rows(), enc1_weight.cols(), mu_weight.cols()};
}

std::array<Matrix*, VaeParams::kTensorCount> VaeParams::tensors() {
  return {&enc1_weight, &enc1_bias,  &enc1_slope,    &enc2_weight, &enc2_bias,  &enc2_slope,
          &mu_weight,   &mu_bias,    &logvar_weight, &logvar_bias, &dec1_weight, &dec1_bias,
          &dec1_slope,  &dec2_weight, &dec2_bias,    &dec2_slope,  &out_weight, &out_bias};
}

std::array<const Matrix*, VaeParams::kTensorCount> VaeParams::tensors() const {
  auto mut = const_cast<VaeParams*>(this)->tensors();
  std::array<const Matrix*, kTensorCount> out{};
  std::ranges::copy(mut, out.begin());
  return out;
}

const std::array<std::string_view, VaeParams::kTensorCount>& VaeParams::tensor_names() {
  static const std::array<std::string_view, kTensorCount> names = {
      "enc1.weight", "enc1.bias",  "enc1.slope",    "enc2.weight", "enc2.bias",  "enc2.slope",
      "mu.weight",   "mu.bias",    "logvar.weight", "logvar.bias", "dec1.weight", "dec1.bias",
      "dec1.slope",  "dec2.weight", "dec2.bias",    "dec2.slope",  "out.weight", "out.bias"};
  return names;
}

std::array<std::pair<std::size_t, std::size_t>, VaeParams::kTensorCount> VaeParams::tensor_shapes(
    const VaeShape& s) {
  return {{{s.input, s.hidden},
           {1, s.hidden},
           {1, 1},
           {s.hidden, s.hidden},
           {1, s.hidden},
           {1, 1},
           {s.hidden, s.latent},
           {1, s.latent},
           {s.hidden, s.latent},
           {1, s.latent},
           {s.latent, s.hidden},
           {1, s.hidden},
           {1, 1},
           {s.hidden, s.hidden},
           {1, s.hidden},
           {1, 1},
           {s.hidden, s.input},
           {1, s.input}}};
}

std::size_t VaeParams::parameter_count() const {
  std::size_t n = 0;
  for (const Matrix* t : tensors()) n += t->size();
  return n;
}

bool VaeParams::all_finite() const {
  return std::ranges::all_of(tensors(), [](const Matrix* t) { return t->all_finite(); });
}

std::vector<double> VaeParams::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Matrix* t : tensors()) flat.insert(flat.end(), t->values().begin(), t->values().end());
  return flat;
}

void VaeParams::unflatten(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw DimensionError("VaeParams::unflatten: got " + std::to_string(flat.size()) +
                         " values, expected " + std::to_string(parameter_count()));
  }
  std::size_t offset = 0;
  for (Matrix* t : tensors()) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t->size(),
                t->values().begin());
    offset += t->size();
  }
}

VaeGradients zero_gradients_like(const VaeParams& params) { return VaeParams::zeros(params.shape()); }

void scale(VaeGradients& grads, double factor) {
  for (Matrix* t : grads.tensors()) {
    for (double& v : t->values()) v *= factor;
  }
}

EncoderTrace encode_trace(const VaeParams& p, const Matrix& x) {
  if (x.cols() != p.enc1_weight.rows()) {
    throw DimensionError("encode: input " + x.shape_string() + " vs enc1.weight " +
                         p.enc1_weight.shape_string());
  }
  EncoderTrace t;
  t.pre1 = affine_forward(x, p.enc1_weight, p.enc1_bias);
  t.hidden1 = prelu_forward(t.pre1, p.enc1_slope(0, 0));
  t.pre2 = affine_forward(t.hidden1, p.enc2_weight, p.enc2_bias);
  t.hidden2 = prelu_forward(t.pre2, p.enc2_slope(0, 0));
  t.posterior.mu = affine_forward(t.hidden2, p.mu_weight, p.mu_bias);
  t.posterior.logvar = affine_forward(t.hidden2, p.logvar_weight, p.logvar_bias);
  return t;
}

PosteriorParams encode(const VaeParams& params, const Matrix& x) {
  return std::move(encode_trace(params, x).posterior);
}

DecoderTrace decode_trace(const VaeParams& p, const Matrix& z) {
  if (z.cols() != p.dec1_weight.rows()) {
    throw DimensionError("decode: latent " + z.shape_string() + " vs dec1.weight " +
                         p.dec1_weight.shape_string());
  }
  DecoderTrace t;
  t.pre1 = affine_forward(z, p.dec1_weight, p.dec1_bias);
  t.hidden1 = prelu_forward(t.pre1, p.dec1_slope(0, 0));
  t.pre2 = affine_forward(t.hidden1, p.dec2_weight, p.dec2_bias);
  t.hidden2 = prelu_forward(t.pre2, p.dec2_slope(0, 0));
  t.logits = affine_forward(t.hidden2, p.out_weight, p.out_bias);
  return t;
}

Matrix decode(const VaeParams& params, const Matrix& z) {
  return std::move(decode_trace(params, z).logits);
}

LatentBatch reparam_sample(const PosteriorParams& post, Rng& rng) {
  return reparametrize(post, gaussian_sample(rng, post.mu.rows(), post.mu.cols()));
}

LatentBatch reparametrize(const PosteriorParams& post, Matrix noise) {
  check_same("reparametrize(mu, logvar)", post.mu, post.logvar);
  check_same("reparametrize(mu, noise)", post.mu, noise);
  LatentBatch out{std::move(noise), post.mu};
  auto z = out.z.values();
  const auto lv = post.logvar.values();
  const auto n = out.noise.values();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] += std::exp(0.5 * lv[i]) * n[i];
  return out;
}

Column bernoulli_loglik(const Matrix& logits, const Matrix& x) {
  check_same("bernoulli_loglik", logits, x);
  Column out(logits.rows(), 0.0);
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto l = logits.row(i);
    const auto xi = x.row(i);
    double acc = 0.0;
    for (std::size_t d = 0; d < l.size(); ++d) acc += xi[d] * l[d] - softplus(l[d]);
    out[i] = acc;
  }
  return out;
}

Column gaussian_logpdf_std(const Matrix& z) {
  Column out(z.rows(), 0.0);
  const double constant = -static_cast<double>(z.cols()) * kHalfLog2Pi;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double sq = 0.0;
    for (double v : z.row(i)) sq += v * v;
    out[i] = constant - 0.5 * sq;
  }
  return out;
}

Column gaussian_logpdf(const PosteriorParams& post, const Matrix& z) {
  check_same("gaussian_logpdf(mu, logvar)", post.mu, post.logvar);
  check_same("gaussian_logpdf(mu, z)", post.mu, z);
  Column out(z.rows(), 0.0);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto mu = post.mu.row(i);
    const auto lv = post.logvar.row(i);
    const auto zi = z.row(i);
    double acc = 0.0;
    for (std::size_t l = 0; l < zi.size(); ++l) {
      const double diff = zi[l] - mu[l];
      acc += -kHalfLog2Pi - 0.5 * lv[l] - diff * diff / (2.0 * std::exp(lv[l]));
    }
    out[i] = acc;
  }
  return out;
}

Column analytic_kl(const PosteriorParams& post) {
  check_same("analytic_kl", post.mu, post.logvar);
  Column out(post.mu.rows(), 0.0);
  for (std::size_t i = 0; i < post.mu.rows(); ++i) {
    const auto mu = post.mu.row(i);
    const auto lv = post.logvar.row(i);
    double acc = 0.0;
    for (std::size_t l = 0; l < mu.size(); ++l) {
      // exp(lv) - 1 - lv via expm1 keeps precision near lv = 0.
      acc += mu[l] * mu[l] + (std::expm1(lv[l]) - lv[l]);
    }
    out[i] = 0.5 * acc;
  }
  return out;
}

Matrix decoder_backward(const VaeParams& p, const Matrix& z, const DecoderTrace& t,
                        const Matrix& grad_logits, VaeGradients& g) {
  check_same("decoder_backward", t.logits, grad_logits);
  AffineGrads out = affine_backward(t.hidden2, p.out_weight, grad_logits);
  add_into(g.out_weight, out.grad_weight);
  add_into(g.out_bias, out.grad_bias);

  PreluGrads act2 = prelu_backward(t.pre2, p.dec2_slope(0, 0), out.grad_x);
  g.dec2_slope(0, 0) += act2.grad_slope;
  AffineGrads layer2 = affine_backward(t.hidden1, p.dec2_weight, act2.grad_x);
  add_into(g.dec2_weight, layer2.grad_weight);
  add_into(g.dec2_bias, layer2.grad_bias);

  PreluGrads act1 = prelu_backward(t.pre1, p.dec1_slope(0, 0), layer2.grad_x);
  g.dec1_slope(0, 0) += act1.grad_slope;
  AffineGrads layer1 = affine_backward(z, p.dec1_weight, act1.grad_x);
  add_into(g.dec1_weight, layer1.grad_weight);
  add_into(g.dec1_bias, layer1.grad_bias);
  return std::move(layer1.grad_x);
}

void encoder_backward(const VaeParams& p, const Matrix& x, const EncoderTrace& t,
                      const Matrix& grad_mu, const Matrix& grad_logvar, VaeGradients& g) {
  check_same("encoder_backward(mu)", t.posterior.mu, grad_mu);
  check_same("encoder_backward(logvar)", t.posterior.logvar, grad_logvar);
  AffineGrads mu = affine_backward(t.hidden2, p.mu_weight, grad_mu);
  add_into(g.mu_weight, mu.grad_weight);
  add_into(g.mu_bias, mu.grad_bias);
  AffineGrads lv = affine_backward(t.hidden2, p.logvar_weight, grad_logvar);
  add_into(g.logvar_weight, lv.grad_weight);
  add_into(g.logvar_bias, lv.grad_bias);

  Matrix grad_hidden2 = std::move(mu.grad_x);
  add_into(grad_hidden2, lv.grad_x);
  PreluGrads act2 = prelu_backward(t.pre2, p.enc2_slope(0, 0), grad_hidden2);
  g.enc2_slope(0, 0) += act2.grad_slope;
  AffineGrads layer2 = affine_backward(t.hidden1, p.enc2_weight, act2.grad_x);
  add_into(g.enc2_weight, layer2.grad_weight);
  add_into(g.enc2_bias, layer2.grad_bias);

  PreluGrads act1 = prelu_backward(t.pre1, p.enc1_slope(0, 0), layer2.grad_x);
  g.enc1_slope(0, 0) += act1.grad_slope;
  AffineGrads layer1 = affine_backward(x, p.enc1_weight, act1.grad_x, /*compute_grad_x=*/false);
  add_into(g.enc1_weight, layer1.grad_weight);
  add_into(g.enc1_bias, layer1.grad_bias);
}

std::string shape_table(
    const std::array<std::pair<std::size_t, std::size_t>, VaeParams::kTensorCount>& shapes) {
  std::ostringstream out;
  for (std::size_t k = 0; k < shapes.size(); ++k) {
    if (k) out << ", ";
    out << VaeParams::tensor_names()[k] << "=" << shapes[k].first << "x" << shapes[k].second;
  }
  return out.str();
}

}  // namespace rvae
