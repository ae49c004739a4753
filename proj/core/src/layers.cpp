#include "lgr/nn/layers.hpp"

#include "lgr/error.hpp"

#include <Eigen/Core>
#include <fmt/format.h>

#include <cmath>
#include <limits>

namespace lgr::nn {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;
using StridedMap = Eigen::Map<RowMatrix, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

void require_rank5(const Shape& s, const char* who) {
  if (s.size() != 5) throw Error(fmt::format("{}: expected a 5-D tensor, got {}", who, shape_string(s)));
}

int pooled_extent(int in, int k, int s, int p, const char* who) {
  const int out = (in + 2 * p - k) / s + 1;
  if (in + 2 * p < k || out < 1) throw Error(fmt::format("{}: input extent {} too small for kernel {}", who, in, k));
  return out;
}

void he_uniform(Tensor& t, int fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / fan_in);
  for (auto& v : t.values()) v = rng.uniform(-bound, bound);
}

}  // namespace

// --- Conv3d -----------------------------------------------------------------

Conv3d::Conv3d(std::string name, int in_channels, int out_channels, Triple kernel, Triple stride, Triple padding,
               bool bias, Rng& rng)
    : in_(in_channels),
      out_(out_channels),
      k_(kernel),
      s_(stride),
      p_(padding),
      weight_(name + ".weight", {out_channels, in_channels, kernel[0], kernel[1], kernel[2]}) {
  he_uniform(weight_.value, in_channels * kernel[0] * kernel[1] * kernel[2], rng);
  if (bias) bias_ = std::make_unique<Parameter>(name + ".bias", Shape{out_channels});
}

void Conv3d::zero_parameters() {
  weight_.value.zero();
  if (bias_) bias_->value.zero();
}

Shape Conv3d::output_shape(const Shape& in) const {
  require_rank5(in, "conv3d");
  if (in[1] != in_) throw Error(fmt::format("conv3d: expected {} input channels, got {}", in_, in[1]));
  return {in[0], out_, pooled_extent(in[2], k_[0], s_[0], p_[0], "conv3d"),
          pooled_extent(in[3], k_[1], s_[1], p_[1], "conv3d"), pooled_extent(in[4], k_[2], s_[2], p_[2], "conv3d")};
}

namespace {

// Fills cols (K x Ho*Wo) with the receptive fields of output depth slice od.
void im2col_slice(const double* x, int C, int D, int H, int W, int od, int Ho, int Wo, const Triple& k,
                  const Triple& s, const Triple& p, double* cols) {
  const long P = static_cast<long>(Ho) * Wo;
  long row = 0;
  for (int c = 0; c < C; ++c) {
    for (int kz = 0; kz < k[0]; ++kz) {
      const int iz = od * s[0] - p[0] + kz;
      for (int ky = 0; ky < k[1]; ++ky) {
        for (int kx = 0; kx < k[2]; ++kx, ++row) {
          double* dst = cols + row * P;
          if (iz < 0 || iz >= D) {
            std::fill(dst, dst + P, 0.0);
            continue;
          }
          const double* plane = x + (static_cast<long>(c) * D + iz) * H * W;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * s[1] - p[1] + ky;
            double* out_row = dst + static_cast<long>(oy) * Wo;
            if (iy < 0 || iy >= H) {
              std::fill(out_row, out_row + Wo, 0.0);
              continue;
            }
            const double* in_row = plane + static_cast<long>(iy) * W;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * s[2] - p[2] + kx;
              out_row[ox] = (ix >= 0 && ix < W) ? in_row[ix] : 0.0;
            }
          }
        }
      }
    }
  }
}

void col2im_slice(const double* cols, int C, int D, int H, int W, int od, int Ho, int Wo, const Triple& k,
                  const Triple& s, const Triple& p, double* dx) {
  const long P = static_cast<long>(Ho) * Wo;
  long row = 0;
  for (int c = 0; c < C; ++c) {
    for (int kz = 0; kz < k[0]; ++kz) {
      const int iz = od * s[0] - p[0] + kz;
      for (int ky = 0; ky < k[1]; ++ky) {
        for (int kx = 0; kx < k[2]; ++kx, ++row) {
          if (iz < 0 || iz >= D) continue;
          const double* src = cols + row * P;
          double* plane = dx + (static_cast<long>(c) * D + iz) * H * W;
          for (int oy = 0; oy < Ho; ++oy) {
            const int iy = oy * s[1] - p[1] + ky;
            if (iy < 0 || iy >= H) continue;
            double* in_row = plane + static_cast<long>(iy) * W;
            const double* g = src + static_cast<long>(oy) * Wo;
            for (int ox = 0; ox < Wo; ++ox) {
              const int ix = ox * s[2] - p[2] + kx;
              if (ix >= 0 && ix < W) in_row[ix] += g[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv3d::forward(const Tensor& x, bool /*training*/) {
  const Shape os = output_shape(x.shape());
  const int N = x.dim(0), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int Do = os[2], Ho = os[3], Wo = os[4];
  const long K = static_cast<long>(in_) * k_[0] * k_[1] * k_[2];
  const long P = static_cast<long>(Ho) * Wo;
  input_ = x;

  Tensor y(os);
  std::vector<double> cols(static_cast<std::size_t>(K * P));
  ConstMatMap Wm(weight_.value.data(), out_, K);
  const long in_sample = static_cast<long>(in_) * D * H * W;
  const long out_sample = static_cast<long>(out_) * Do * P;
  for (int n = 0; n < N; ++n) {
    for (int od = 0; od < Do; ++od) {
      im2col_slice(x.data() + n * in_sample, in_, D, H, W, od, Ho, Wo, k_, s_, p_, cols.data());
      StridedMap Y(y.data() + n * out_sample + od * P, out_, P, Eigen::OuterStride<>(Do * P));
      Y.noalias() = Wm * ConstMatMap(cols.data(), K, P);
      if (bias_)
        for (int c = 0; c < out_; ++c) Y.row(c).array() += bias_->value[c];
    }
  }
  return y;
}

Tensor Conv3d::backward(const Tensor& grad_out) {
  const Shape& is = input_.shape();
  const int N = is[0], D = is[2], H = is[3], W = is[4];
  const int Do = grad_out.dim(2), Ho = grad_out.dim(3), Wo = grad_out.dim(4);
  const long K = static_cast<long>(in_) * k_[0] * k_[1] * k_[2];
  const long P = static_cast<long>(Ho) * Wo;

  Tensor dx(is);
  std::vector<double> cols(static_cast<std::size_t>(K * P));
  std::vector<double> dcols(static_cast<std::size_t>(K * P));
  ConstMatMap Wm(weight_.value.data(), out_, K);
  MatMap dW(weight_.grad.data(), out_, K);
  const long in_sample = static_cast<long>(in_) * D * H * W;
  const long out_sample = static_cast<long>(out_) * Do * P;
  for (int n = 0; n < N; ++n) {
    for (int od = 0; od < Do; ++od) {
      ConstStridedMap dY(grad_out.data() + n * out_sample + od * P, out_, P, Eigen::OuterStride<>(Do * P));
      im2col_slice(input_.data() + n * in_sample, in_, D, H, W, od, Ho, Wo, k_, s_, p_, cols.data());
      dW.noalias() += dY * ConstMatMap(cols.data(), K, P).transpose();
      MatMap(dcols.data(), K, P).noalias() = Wm.transpose() * dY;
      col2im_slice(dcols.data(), in_, D, H, W, od, Ho, Wo, k_, s_, p_, dx.data() + n * in_sample);
      if (bias_)
        for (int c = 0; c < out_; ++c) bias_->grad[c] += dY.row(c).sum();
    }
  }
  return dx;
}

void Conv3d::collect(std::vector<Parameter*>& p, std::vector<Buffer*>&) {
  p.push_back(&weight_);
  if (bias_) p.push_back(bias_.get());
}

// --- BatchNorm --------------------------------------------------------------

BatchNorm::BatchNorm(std::string name, int channels, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".gamma", {channels}, false),
      beta_(name + ".beta", {channels}, false),
      running_mean_{name + ".running_mean", Tensor({channels}, 0.0)},
      running_var_{name + ".running_var", Tensor({channels}, 1.0)} {
  gamma_.value.fill(1.0);
}

Tensor BatchNorm::forward(const Tensor& x, bool training) {
  require_rank5(x.shape(), "batchnorm");
  if (x.dim(1) != channels_) throw Error("batchnorm: channel mismatch");
  const int N = x.dim(0);
  const long S = static_cast<long>(x.dim(2)) * x.dim(3) * x.dim(4);
  const long M = N * S;
  cached_training_ = training;
  xhat_ = Tensor(x.shape());
  inv_std_.assign(static_cast<std::size_t>(channels_), 0.0);
  Tensor y(x.shape());

  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x.data() + (static_cast<long>(n) * channels_ + c) * S;
        for (long i = 0; i < S; ++i) sum += p[i];
      }
      mean = sum / M;
      double sq = 0.0;
      for (int n = 0; n < N; ++n) {
        const double* p = x.data() + (static_cast<long>(n) * channels_ + c) * S;
        for (long i = 0; i < S; ++i) sq += (p[i] - mean) * (p[i] - mean);
      }
      var = sq / M;
      const double unbiased = M > 1 ? sq / (M - 1) : var;
      running_mean_.value[c] = (1.0 - momentum_) * running_mean_.value[c] + momentum_ * mean;
      running_var_.value[c] = (1.0 - momentum_) * running_var_.value[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_.value[c];
      var = running_var_.value[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[static_cast<std::size_t>(c)] = inv;
    const double g = gamma_.value[c], b = beta_.value[c];
    for (int n = 0; n < N; ++n) {
      const long off = (static_cast<long>(n) * channels_ + c) * S;
      for (long i = 0; i < S; ++i) {
        const double h = (x[off + i] - mean) * inv;
        xhat_[off + i] = h;
        y[off + i] = g * h + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  const int N = grad_out.dim(0);
  const long S = static_cast<long>(grad_out.dim(2)) * grad_out.dim(3) * grad_out.dim(4);
  const double M = static_cast<double>(N) * S;
  Tensor dx(grad_out.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < N; ++n) {
      const long off = (static_cast<long>(n) * channels_ + c) * S;
      for (long i = 0; i < S; ++i) {
        sum_dy += grad_out[off + i];
        sum_dy_xhat += grad_out[off + i] * xhat_[off + i];
      }
    }
    gamma_.grad[c] += sum_dy_xhat;
    beta_.grad[c] += sum_dy;
    const double g = gamma_.value[c];
    const double inv = inv_std_[static_cast<std::size_t>(c)];
    for (int n = 0; n < N; ++n) {
      const long off = (static_cast<long>(n) * channels_ + c) * S;
      for (long i = 0; i < S; ++i) {
        if (cached_training_) {
          dx[off + i] = g * inv * (grad_out[off + i] - sum_dy / M - xhat_[off + i] * sum_dy_xhat / M);
        } else {
          dx[off + i] = g * inv * grad_out[off + i];
        }
      }
    }
  }
  return dx;
}

void BatchNorm::collect(std::vector<Parameter*>& p, std::vector<Buffer*>& b) {
  p.push_back(&gamma_);
  p.push_back(&beta_);
  b.push_back(&running_mean_);
  b.push_back(&running_var_);
}

// --- elementwise ------------------------------------------------------------

Tensor ReLU::forward(const Tensor& x, bool) {
  shape_ = x.shape();
  active_.assign(static_cast<std::size_t>(x.numel()), false);
  Tensor y(x.shape());
  for (long i = 0; i < x.numel(); ++i) {
    if (x[i] > 0.0) {
      y[i] = x[i];
      active_[static_cast<std::size_t>(i)] = true;
    } else if (std::isnan(x[i])) {
      y[i] = x[i];  // propagate so corrupted inputs surface as a non-finite loss
    }
  }
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out) {
  Tensor dx(shape_);
  for (long i = 0; i < dx.numel(); ++i)
    if (active_[static_cast<std::size_t>(i)]) dx[i] = grad_out[i];
  return dx;
}

Tensor Clamp01::forward(const Tensor& x, bool) {
  shape_ = x.shape();
  inside_.assign(static_cast<std::size_t>(x.numel()), false);
  Tensor y(x.shape());
  for (long i = 0; i < x.numel(); ++i) {
    y[i] = std::isnan(x[i]) ? x[i] : std::clamp(x[i], 0.0, 1.0);
    inside_[static_cast<std::size_t>(i)] = x[i] > 0.0 && x[i] < 1.0;
  }
  return y;
}

Tensor Clamp01::backward(const Tensor& grad_out) {
  Tensor dx(shape_);
  for (long i = 0; i < dx.numel(); ++i)
    if (inside_[static_cast<std::size_t>(i)]) dx[i] = grad_out[i];
  return dx;
}

// --- pooling / resampling ---------------------------------------------------

Shape MaxPool3d::output_shape(const Shape& in) const {
  require_rank5(in, "maxpool3d");
  return {in[0], in[1], pooled_extent(in[2], k_[0], s_[0], p_[0], "maxpool3d"),
          pooled_extent(in[3], k_[1], s_[1], p_[1], "maxpool3d"), pooled_extent(in[4], k_[2], s_[2], p_[2], "maxpool3d")};
}

Tensor MaxPool3d::forward(const Tensor& x, bool) {
  const Shape os = output_shape(x.shape());
  in_shape_ = x.shape();
  const int NC = x.dim(0) * x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
  const int Do = os[2], Ho = os[3], Wo = os[4];
  Tensor y(os);
  argmax_.assign(static_cast<std::size_t>(y.numel()), -1);
  long o = 0;
  for (int nc = 0; nc < NC; ++nc) {
    const long base = static_cast<long>(nc) * D * H * W;
    for (int od = 0; od < Do; ++od)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          long best_idx = -1;
          for (int kz = 0; kz < k_[0]; ++kz) {
            const int iz = od * s_[0] - p_[0] + kz;
            if (iz < 0 || iz >= D) continue;
            for (int ky = 0; ky < k_[1]; ++ky) {
              const int iy = oy * s_[1] - p_[1] + ky;
              if (iy < 0 || iy >= H) continue;
              for (int kx = 0; kx < k_[2]; ++kx) {
                const int ix = ox * s_[2] - p_[2] + kx;
                if (ix < 0 || ix >= W) continue;
                const long idx = base + (static_cast<long>(iz) * H + iy) * W + ix;
                if (x[idx] > best || std::isnan(x[idx])) {
                  best = x[idx];
                  best_idx = idx;
                }
              }
            }
          }
          y[o] = best;
          argmax_[static_cast<std::size_t>(o)] = best_idx;
        }
  }
  return y;
}

Tensor MaxPool3d::backward(const Tensor& grad_out) {
  Tensor dx(in_shape_);
  for (long o = 0; o < grad_out.numel(); ++o) dx[argmax_[static_cast<std::size_t>(o)]] += grad_out[o];
  return dx;
}

Shape Upsample2x::output_shape(const Shape& in) const {
  require_rank5(in, "upsample");
  return {in[0], in[1], in[2], 2 * in[3], 2 * in[4]};
}

Tensor Upsample2x::forward(const Tensor& x, bool) {
  Tensor y(output_shape(x.shape()));
  const long planes = static_cast<long>(x.dim(0)) * x.dim(1) * x.dim(2);
  const int H = x.dim(3), W = x.dim(4);
  for (long p = 0; p < planes; ++p) {
    const double* src = x.data() + p * H * W;
    double* dst = y.data() + p * 4 * H * W;
    for (int r = 0; r < 2 * H; ++r)
      for (int c = 0; c < 2 * W; ++c) dst[static_cast<long>(r) * 2 * W + c] = src[(r / 2) * W + c / 2];
  }
  return y;
}

Tensor Upsample2x::backward(const Tensor& grad_out) {
  const int H = grad_out.dim(3) / 2, W = grad_out.dim(4) / 2;
  Tensor dx({grad_out.dim(0), grad_out.dim(1), grad_out.dim(2), H, W});
  const long planes = static_cast<long>(grad_out.dim(0)) * grad_out.dim(1) * grad_out.dim(2);
  for (long p = 0; p < planes; ++p) {
    const double* src = grad_out.data() + p * 4 * H * W;
    double* dst = dx.data() + p * H * W;
    for (int r = 0; r < 2 * H; ++r)
      for (int c = 0; c < 2 * W; ++c) dst[(r / 2) * W + c / 2] += src[static_cast<long>(r) * 2 * W + c];
  }
  return dx;
}

Tensor GlobalAvgPool::forward(const Tensor& x, bool) {
  require_rank5(x.shape(), "avgpool");
  in_shape_ = x.shape();
  const long S = static_cast<long>(x.dim(2)) * x.dim(3) * x.dim(4);
  Tensor y({x.dim(0), x.dim(1)});
  for (long i = 0; i < y.numel(); ++i) {
    double s = 0.0;
    for (long j = 0; j < S; ++j) s += x[i * S + j];
    y[i] = s / S;
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor dx(in_shape_);
  const long S = static_cast<long>(in_shape_[2]) * in_shape_[3] * in_shape_[4];
  for (long i = 0; i < grad_out.numel(); ++i)
    for (long j = 0; j < S; ++j) dx[i * S + j] = grad_out[i] / S;
  return dx;
}

// --- Linear -----------------------------------------------------------------

Linear::Linear(std::string name, int in_features, int out_features, Rng& rng)
    : in_(in_features),
      out_(out_features),
      weight_(name + ".weight", {out_features, in_features}),
      bias_(name + ".bias", {out_features}) {
  he_uniform(weight_.value, in_features, rng);
}

Tensor Linear::forward(const Tensor& x, bool) {
  if (x.rank() != 2 || x.dim(1) != in_) throw Error("linear: input shape mismatch " + shape_string(x.shape()));
  input_ = x;
  const int N = x.dim(0);
  Tensor y({N, out_});
  MatMap Y(y.data(), N, out_);
  Y.noalias() = ConstMatMap(x.data(), N, in_) * ConstMatMap(weight_.value.data(), out_, in_).transpose();
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < out_; ++o) Y(n, o) += bias_.value[o];
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const int N = grad_out.dim(0);
  ConstMatMap dY(grad_out.data(), N, out_);
  MatMap(weight_.grad.data(), out_, in_).noalias() += dY.transpose() * ConstMatMap(input_.data(), N, in_);
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < out_; ++o) bias_.grad[o] += dY(n, o);
  Tensor dx({N, in_});
  MatMap(dx.data(), N, in_).noalias() = dY * ConstMatMap(weight_.value.data(), out_, in_);
  return dx;
}

void Linear::collect(std::vector<Parameter*>& p, std::vector<Buffer*>&) {
  p.push_back(&weight_);
  p.push_back(&bias_);
}

// --- Sequential -------------------------------------------------------------

Sequential& Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor h = x;
  for (auto& l : layers_) h = l->forward(h, training);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

Shape Sequential::output_shape(const Shape& in) const {
  Shape s = in;
  for (const auto& l : layers_) s = l->output_shape(s);
  return s;
}

void Sequential::collect(std::vector<Parameter*>& p, std::vector<Buffer*>& b) {
  for (auto& l : layers_) l->collect(p, b);
}

std::unique_ptr<Sequential> conv_bn_relu(const std::string& name, int in, int out, Triple kernel, Triple stride,
                                         Triple padding, Rng& rng) {
  auto seq = std::make_unique<Sequential>();
  seq->emplace<Conv3d>(name + ".conv", in, out, kernel, stride, padding, false, rng);
  seq->emplace<BatchNorm>(name + ".bn", out);
  seq->emplace<ReLU>();
  return seq;
}

// --- helpers ----------------------------------------------------------------

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != 5 || sb.size() != 5 || sa[0] != sb[0] || sa[2] != sb[2] || sa[3] != sb[3] || sa[4] != sb[4])
    throw Error("concat: incompatible shapes " + shape_string(sa) + " and " + shape_string(sb));
  const long S = static_cast<long>(sa[2]) * sa[3] * sa[4];
  Tensor y({sa[0], sa[1] + sb[1], sa[2], sa[3], sa[4]});
  for (int n = 0; n < sa[0]; ++n) {
    double* dst = y.data() + static_cast<long>(n) * (sa[1] + sb[1]) * S;
    std::copy_n(a.data() + static_cast<long>(n) * sa[1] * S, sa[1] * S, dst);
    std::copy_n(b.data() + static_cast<long>(n) * sb[1] * S, sb[1] * S, dst + sa[1] * S);
  }
  return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& x, int channels_a) {
  const Shape& s = x.shape();
  const int cb = s[1] - channels_a;
  const long S = static_cast<long>(s[2]) * s[3] * s[4];
  Tensor a({s[0], channels_a, s[2], s[3], s[4]});
  Tensor b({s[0], cb, s[2], s[3], s[4]});
  for (int n = 0; n < s[0]; ++n) {
    const double* src = x.data() + static_cast<long>(n) * s[1] * S;
    std::copy_n(src, channels_a * S, a.data() + static_cast<long>(n) * channels_a * S);
    std::copy_n(src + channels_a * S, cb * S, b.data() + static_cast<long>(n) * cb * S);
  }
  return {std::move(a), std::move(b)};
}

double cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tensor* grad) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != labels.size())
    throw Error("cross_entropy: logits/labels mismatch");
  const int N = logits.dim(0), K = logits.dim(1);
  if (grad) *grad = Tensor(logits.shape());
  double loss = 0.0;
  for (int n = 0; n < N; ++n) {
    const double* z = logits.data() + static_cast<long>(n) * K;
    const int y = labels[static_cast<std::size_t>(n)];
    if (y < 0 || y >= K) throw Error("cross_entropy: label out of range");
    const double m = *std::max_element(z, z + K);
    double sum = 0.0;
    for (int k = 0; k < K; ++k) sum += std::exp(z[k] - m);
    const double lse = m + std::log(sum);
    loss += lse - z[y];
    if (grad) {
      for (int k = 0; k < K; ++k) (*grad)[static_cast<long>(n) * K + k] = std::exp(z[k] - lse) / N;
      (*grad)[static_cast<long>(n) * K + y] -= 1.0 / N;
    }
  }
  return loss / N;
}

int argmax_row(const Tensor& logits, int row) {
  const int K = logits.dim(1);
  const double* z = logits.data() + static_cast<long>(row) * K;
  int best = 0;
  for (int k = 1; k < K; ++k)
    if (z[k] > z[best]) best = k;
  return best;
}

}  // namespace lgr::nn
