#include "rlab/layers.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "linalg.hpp"

namespace rlab {

Activation activation_from_string(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  if (name == "tanh") return Activation::tanh;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation kind) {
  switch (kind) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
  }
  return "?";
}

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::pool2d: return "pool2d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::activation: return "activation";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dueling: return "dueling";
  }
  return "?";
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double apply(Activation kind, double x) {
  switch (kind) {
    case Activation::identity: return x;
    case Activation::relu: return x > 0.0 ? x : 0.0;
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return std::tanh(x);
  }
  return x;
}

double derivative(Activation kind, double x) {
  switch (kind) {
    case Activation::identity: return 1.0;
    case Activation::relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
      const double s = sigmoid(x);
      return s * (1.0 - s);
    }
    case Activation::tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

void require_cache(bool cached, const char* layer) {
  if (!cached) throw std::logic_error(std::string(layer) + ": backward called without a preceding forward");
}

}  // namespace

Tensor activation_forward(const Tensor& x, Activation kind) {
  Tensor out = x;
  for (double& v : out.data()) v = apply(kind, v);
  return out;
}

Tensor activation_grad(const Tensor& x, Activation kind) {
  Tensor out = x;
  for (double& v : out.data()) v = derivative(kind, v);
  return out;
}

LossResult mse_loss(const Tensor& y_hat, const Tensor& y) {
  if (y_hat.shape() != y.shape()) {
    throw std::invalid_argument("mse_loss: shape mismatch " + shape_string(y_hat.shape()) + " vs " +
                                shape_string(y.shape()));
  }
  LossResult result{0.0, Tensor(y_hat.shape())};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double diff = y_hat[i] - y[i];
    result.loss += 0.5 * diff * diff;
    result.grad[i] = diff;
  }
  return result;
}

void glorot_uniform(Tensor& weights, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& w : weights.data()) w = rng.uniform(-limit, limit);
}

// ---------------------------------------------------------------- Dense

Dense::Dense(std::size_t in, std::size_t out, Activation activation)
    : in_(in),
      out_(out),
      activation_(activation),
      weights_{"weights", Tensor({in, out}), Tensor({in, out})},
      bias_{"bias", Tensor({out}), Tensor({out})} {
  if (in == 0 || out == 0) throw std::invalid_argument("Dense: zero-sized layer");
}

void Dense::initialize(Rng& rng) {
  glorot_uniform(weights_.value, in_, out_, rng);
  bias_.value.fill(0.0);
}

Tensor::Shape Dense::output_shape(const Tensor::Shape& input) const {
  if (input.size() != 1 || input[0] != in_) {
    throw std::invalid_argument("Dense: expected input [" + std::to_string(in_) + "], got " + shape_string(input));
  }
  return {out_};
}

std::vector<std::int64_t> Dense::attributes() const {
  return {static_cast<std::int64_t>(in_), static_cast<std::int64_t>(out_), static_cast<std::int64_t>(activation_)};
}

std::string Dense::describe() const {
  return "dense(" + std::to_string(in_) + "->" + std::to_string(out_) + ", " + to_string(activation_) + ")";
}

Tensor Dense::forward(const Tensor& x, Mode) {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw std::invalid_argument("Dense: expected [B x " + std::to_string(in_) + "], got " + shape_string(x.shape()));
  }
  const std::size_t batch = x.dim(0);
  input_ = x;
  pre_activation_ = Tensor({batch, out_});
  auto z = linalg::view(pre_activation_.raw(), batch, out_);
  z.noalias() = linalg::view(x.raw(), batch, in_) * linalg::view(weights_.value.raw(), in_, out_);
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t j = 0; j < out_; ++j) pre_activation_.at(i, j) += bias_.value[j];
  }
  cached_ = true;
  if (activation_ == Activation::identity) return pre_activation_;
  return activation_forward(pre_activation_, activation_);
}

Tensor Dense::backward(const Tensor& grad_out) {
  require_cache(cached_, "Dense");
  if (grad_out.shape() != pre_activation_.shape()) throw std::invalid_argument("Dense: gradient shape mismatch");
  const std::size_t batch = input_.dim(0);
  Tensor delta = grad_out;
  if (activation_ != Activation::identity) {
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= derivative(activation_, pre_activation_[i]);
  }
  const auto d = linalg::view(delta.raw(), batch, out_);
  linalg::view(weights_.grad.raw(), in_, out_).noalias() = linalg::view(input_.raw(), batch, in_).transpose() * d;
  for (std::size_t j = 0; j < out_; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < batch; ++i) s += delta.at(i, j);
    bias_.grad[j] = s;
  }
  Tensor grad_in({batch, in_});
  linalg::view(grad_in.raw(), batch, in_).noalias() = d * linalg::view(weights_.value.raw(), in_, out_).transpose();
  return grad_in;
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t padding)
    : in_channels_(in_channels),
      out_channels_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      filters_{"filters", Tensor({out_channels, in_channels, kernel, kernel}),
               Tensor({out_channels, in_channels, kernel, kernel})},
      bias_{"bias", Tensor({out_channels}), Tensor({out_channels})} {
  if (in_channels == 0 || out_channels == 0 || kernel == 0) throw std::invalid_argument("Conv2d: zero-sized layer");
  if (stride == 0) throw std::invalid_argument("Conv2d: stride must be >= 1");
}

void Conv2d::initialize(Rng& rng) {
  const std::size_t area = kernel_ * kernel_;
  glorot_uniform(filters_.value, in_channels_ * area, out_channels_ * area, rng);
  bias_.value.fill(0.0);
}

Tensor::Shape Conv2d::output_shape(const Tensor::Shape& input) const {
  if (input.size() != 3) throw std::invalid_argument("Conv2d: expected [C x H x W], got " + shape_string(input));
  if (input[0] != in_channels_) {
    throw std::invalid_argument("Conv2d: expected " + std::to_string(in_channels_) + " input channels, got " +
                                std::to_string(input[0]));
  }
  const std::size_t h = input[1] + 2 * padding_;
  const std::size_t w = input[2] + 2 * padding_;
  if (h < kernel_ || w < kernel_) {
    throw std::invalid_argument("Conv2d: " + std::to_string(kernel_) + "x" + std::to_string(kernel_) +
                                " filter does not fit input " + shape_string(input));
  }
  return {out_channels_, (h - kernel_) / stride_ + 1, (w - kernel_) / stride_ + 1};
}

std::vector<std::int64_t> Conv2d::attributes() const {
  return {static_cast<std::int64_t>(in_channels_), static_cast<std::int64_t>(out_channels_),
          static_cast<std::int64_t>(kernel_), static_cast<std::int64_t>(stride_),
          static_cast<std::int64_t>(padding_)};
}

std::string Conv2d::describe() const {
  return "conv2d(" + std::to_string(in_channels_) + "->" + std::to_string(out_channels_) + ", k" +
         std::to_string(kernel_) + " s" + std::to_string(stride_) + " p" + std::to_string(padding_) + ")";
}

namespace {

struct ConvGeometry {
  std::size_t channels, height, width, kernel, stride, padding, out_h, out_w;
  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

// Calls visit(position, patch_row) for every output position whose receptive
// field contains input element `index`.
template <class Visit>
void for_each_tap(const ConvGeometry& g, std::size_t index, Visit visit) {
  const std::size_t plane = g.height * g.width;
  const std::size_t c = index / plane;
  const std::size_t y = index % plane / g.width + g.padding;
  const std::size_t x = index % g.width + g.padding;
  const auto first = [&](std::size_t p) { return p + 1 >= g.kernel ? (p + 1 - g.kernel + g.stride - 1) / g.stride : 0; };
  const std::size_t oh_end = std::min(y / g.stride + 1, g.out_h);
  const std::size_t ow_end = std::min(x / g.stride + 1, g.out_w);
  for (std::size_t oh = first(y); oh < oh_end; ++oh) {
    const std::size_t i = y - oh * g.stride;
    for (std::size_t ow = first(x); ow < ow_end; ++ow) {
      const std::size_t j = x - ow * g.stride;
      visit(oh * g.out_w + ow, (c * g.kernel + i) * g.kernel + j);
    }
  }
}

// Batches with at most this fraction of nonzero inputs take the sparse path.
constexpr double kSparseDensity = 0.125;

// Appends every nonzero of each [sample_size] block to out; returns false as
// soon as more than `limit` have been found. Chunks of eight are skipped
// when all of their bit patterns, sign aside, are zero.
bool collect_nonzeros(const double* data, std::size_t batch, std::size_t sample_size, std::size_t limit,
                      std::vector<detail::Nonzero>& out) {
  constexpr std::size_t kChunk = 8;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* row = data + b * sample_size;
    for (std::size_t start = 0; start < sample_size; start += kChunk) {
      const std::size_t n = std::min(kChunk, sample_size - start);
      std::uint64_t bits = 0;
      for (std::size_t i = 0; i < n; ++i) bits |= std::bit_cast<std::uint64_t>(row[start + i]);
      if ((bits << 1) == 0) continue;
      for (std::size_t i = 0; i < n; ++i) {
        if (row[start + i] != 0.0) out.push_back({b, start + i, row[start + i]});
      }
      if (out.size() > limit) return false;
    }
  }
  return true;
}

// cols holds C*k*k rows of OH*OW entries with row stride ld; row (c, i, j),
// column (oh, ow).
void im2col(const double* image, const ConvGeometry& g, double* cols, std::size_t ld) {
  const std::size_t positions = ld;
  if (g.padding == 0) {
    for (std::size_t c = 0; c < g.channels; ++c) {
      for (std::size_t i = 0; i < g.kernel; ++i) {
        for (std::size_t j = 0; j < g.kernel; ++j) {
          double* row = cols + ((c * g.kernel + i) * g.kernel + j) * positions;
          for (std::size_t oh = 0; oh < g.out_h; ++oh) {
            const double* src = image + (c * g.height + oh * g.stride + i) * g.width + j;
            double* dst = row + oh * g.out_w;
            for (std::size_t ow = 0; ow < g.out_w; ++ow) dst[ow] = src[ow * g.stride];
          }
        }
      }
    }
    return;
  }
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        double* row = cols + ((c * g.kernel + i) * g.kernel + j) * positions;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh * g.stride + i) - pad;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow * g.stride + j) - pad;
            const bool inside = y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(g.height) &&
                                x < static_cast<std::ptrdiff_t>(g.width);
            row[oh * g.out_w + ow] = inside ? image[(c * g.height + y) * g.width + x] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* cols, const ConvGeometry& g, double* image, std::size_t ld) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t i = 0; i < g.kernel; ++i) {
      for (std::size_t j = 0; j < g.kernel; ++j) {
        const double* row = cols + ((c * g.kernel + i) * g.kernel + j) * ld;
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oh * g.stride + i) - pad;
          if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
          for (std::size_t ow = 0; ow < g.out_w; ++ow) {
            const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(ow * g.stride + j) - pad;
            if (x < 0 || x >= static_cast<std::ptrdiff_t>(g.width)) continue;
            image[(c * g.height + y) * g.width + x] += row[oh * g.out_w + ow];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Mode) {
  if (x.rank() != 4) throw std::invalid_argument("Conv2d: expected [B x C x H x W], got " + shape_string(x.shape()));
  const auto out_shape = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const ConvGeometry g{in_channels_, x.dim(2), x.dim(3), kernel_, stride_, padding_, out_shape[1], out_shape[2]};
  const std::size_t batch = x.dim(0);
  const std::size_t positions = g.positions();
  const std::size_t col_size = g.patch() * positions;
  const std::size_t in_stride = in_channels_ * g.height * g.width;
  const std::size_t out_stride = out_channels_ * positions;
  Tensor out({batch, out_channels_, g.out_h, g.out_w});
  input_shape_ = x.shape();
  cached_ = true;

  nonzeros_.clear();
  const auto limit = static_cast<std::size_t>(kSparseDensity * static_cast<double>(x.size()));
  sparse_ = collect_nonzeros(x.raw(), batch, in_stride, limit, nonzeros_);
  if (sparse_) {
    cols_.clear();
    const std::size_t fn = out_channels_;
    AlignedBuffer wt(g.patch() * fn);  // [patch x F]
    for (std::size_t f = 0; f < fn; ++f)
      for (std::size_t k = 0; k < g.patch(); ++k) wt[k * fn + f] = filters_.value[f * g.patch() + k];
    AlignedBuffer acc(positions * fn);  // [position x F]
    auto nz = nonzeros_.begin();
    for (std::size_t b = 0; b < batch; ++b) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (; nz != nonzeros_.end() && nz->sample == b; ++nz) {
        const double v = nz->value;
        for_each_tap(g, nz->index, [&](std::size_t p, std::size_t k) {
          const double* w = wt.data() + k * fn;
          double* a = acc.data() + p * fn;
          for (std::size_t f = 0; f < fn; ++f) a[f] += v * w[f];
        });
      }
      double* o = out.raw() + b * out_stride;
      for (std::size_t f = 0; f < fn; ++f)
        for (std::size_t p = 0; p < positions; ++p) o[f * positions + p] = acc[p * fn + f] + bias_.value[f];
    }
    return out;
  }

  nonzeros_.clear();
  cols_.resize(batch * col_size);
  const auto weights = linalg::view(filters_.value.raw(), out_channels_, g.patch());
  for (std::size_t b = 0; b < batch; ++b) {
    double* cols = cols_.data() + b * col_size;
    im2col(x.raw() + b * in_stride, g, cols, positions);
    auto o = linalg::view(out.raw() + b * out_stride, out_channels_, positions);
    o.noalias() = weights * linalg::view(cols, g.patch(), positions);
    for (std::size_t f = 0; f < out_channels_; ++f) o.row(static_cast<Eigen::Index>(f)).array() += bias_.value[f];
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  require_cache(cached_, "Conv2d");
  const auto out_shape = output_shape({input_shape_[1], input_shape_[2], input_shape_[3]});
  const ConvGeometry g{in_channels_, input_shape_[2], input_shape_[3], kernel_, stride_, padding_, out_shape[1],
                       out_shape[2]};
  const std::size_t batch = input_shape_[0];
  if (grad_out.shape() != Tensor::Shape{batch, out_channels_, g.out_h, g.out_w}) {
    throw std::invalid_argument("Conv2d: gradient shape mismatch");
  }
  filters_.grad.fill(0.0);
  bias_.grad.fill(0.0);
  Tensor grad_in = input_grad_ ? Tensor(input_shape_) : Tensor();
  const std::size_t positions = g.positions();
  const std::size_t col_size = g.patch() * positions;
  AlignedBuffer grad_cols(input_grad_ ? col_size : 0);
  const auto weights = linalg::view(filters_.value.raw(), out_channels_, g.patch());
  auto weight_grad = linalg::view(filters_.grad.raw(), out_channels_, g.patch());
  const std::size_t in_stride = in_channels_ * g.height * g.width;
  const std::size_t out_stride = out_channels_ * positions;
  if (sparse_) {
    const std::size_t fn = out_channels_;
    AlignedBuffer gwt(g.patch() * fn, 0.0);  // [patch x F]
    AlignedBuffer gt(positions * fn);          // [position x F]
    std::size_t sample = batch;
    for (const auto& nz : nonzeros_) {
      if (nz.sample != sample) {
        sample = nz.sample;
        const double* go = grad_out.raw() + sample * out_stride;
        for (std::size_t f = 0; f < fn; ++f)
          for (std::size_t p = 0; p < positions; ++p) gt[p * fn + f] = go[f * positions + p];
      }
      for_each_tap(g, nz.index, [&](std::size_t p, std::size_t k) {
        const double* gp = gt.data() + p * fn;
        double* w = gwt.data() + k * fn;
        for (std::size_t f = 0; f < fn; ++f) w[f] += nz.value * gp[f];
      });
    }
    for (std::size_t f = 0; f < fn; ++f)
      for (std::size_t k = 0; k < g.patch(); ++k) filters_.grad[f * g.patch() + k] = gwt[k * fn + f];
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const auto go = linalg::view(grad_out.raw() + b * out_stride, out_channels_, positions);
    if (!sparse_) weight_grad.noalias() += go * linalg::view(cols_.data() + b * col_size, g.patch(), positions).transpose();
    for (std::size_t f = 0; f < out_channels_; ++f) bias_.grad[f] += go.row(static_cast<Eigen::Index>(f)).sum();
    if (!input_grad_) continue;
    linalg::view(grad_cols.data(), g.patch(), positions).noalias() = weights.transpose() * go;
    col2im_add(grad_cols.data(), g, grad_in.raw() + b * in_stride, positions);
  }
  return grad_in;
}

// ---------------------------------------------------------------- Pool2d

Pool2d::Pool2d(PoolMode mode, std::size_t window, std::size_t stride) : mode_(mode), window_(window), stride_(stride) {
  if (window == 0 || stride == 0) throw std::invalid_argument("Pool2d: window and stride must be >= 1");
}

Tensor::Shape Pool2d::output_shape(const Tensor::Shape& input) const {
  if (input.size() != 3) throw std::invalid_argument("Pool2d: expected [C x H x W], got " + shape_string(input));
  if (input[1] < window_ || input[2] < window_) {
    throw std::invalid_argument("Pool2d: window " + std::to_string(window_) + " does not fit input " +
                                shape_string(input));
  }
  return {input[0], (input[1] - window_) / stride_ + 1, (input[2] - window_) / stride_ + 1};
}

std::vector<std::int64_t> Pool2d::attributes() const {
  return {static_cast<std::int64_t>(mode_), static_cast<std::int64_t>(window_), static_cast<std::int64_t>(stride_)};
}

Tensor Pool2d::forward(const Tensor& x, Mode) {
  if (x.rank() != 4) throw std::invalid_argument("Pool2d: expected [B x C x H x W]");
  const auto os = output_shape({x.dim(1), x.dim(2), x.dim(3)});
  const std::size_t batch = x.dim(0), channels = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({batch, channels, os[1], os[2]});
  argmax_.assign(out.size(), 0);
  const double area = static_cast<double>(window_ * window_);
  std::size_t o = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t plane = (n * channels + c) * h * w;
      for (std::size_t oh = 0; oh < os[1]; ++oh) {
        for (std::size_t ow = 0; ow < os[2]; ++ow, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_at = 0;
          double sum = 0.0;
          for (std::size_t i = 0; i < window_; ++i) {
            for (std::size_t j = 0; j < window_; ++j) {
              const std::size_t at = plane + (oh * stride_ + i) * w + ow * stride_ + j;
              const double v = x[at];
              sum += v;
              if (v > best) {
                best = v;
                best_at = at;
              }
            }
          }
          if (mode_ == PoolMode::max) {
            out[o] = best;
            argmax_[o] = best_at;
          } else {
            out[o] = sum / area;
          }
        }
      }
    }
  }
  input_shape_ = x.shape();
  cached_ = true;
  return out;
}

Tensor Pool2d::backward(const Tensor& grad_out) {
  require_cache(cached_, "Pool2d");
  if (grad_out.size() != argmax_.size()) throw std::invalid_argument("Pool2d: gradient shape mismatch");
  Tensor grad_in(input_shape_);
  if (mode_ == PoolMode::max) {
    for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in[argmax_[o]] += grad_out[o];
    return grad_in;
  }
  const std::size_t batch = input_shape_[0], channels = input_shape_[1], h = input_shape_[2], w = input_shape_[3];
  const std::size_t oh_n = grad_out.dim(2), ow_n = grad_out.dim(3);
  const double share = 1.0 / static_cast<double>(window_ * window_);
  std::size_t o = 0;
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t plane = (n * channels + c) * h * w;
      for (std::size_t oh = 0; oh < oh_n; ++oh) {
        for (std::size_t ow = 0; ow < ow_n; ++ow, ++o) {
          for (std::size_t i = 0; i < window_; ++i) {
            for (std::size_t j = 0; j < window_; ++j) {
              grad_in[plane + (oh * stride_ + i) * w + ow * stride_ + j] += grad_out[o] * share;
            }
          }
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(std::size_t features, double eps, double momentum)
    : features_(features),
      eps_(eps),
      momentum_(momentum),
      scale_{"scale", Tensor({features}, 1.0), Tensor({features})},
      shift_{"shift", Tensor({features}), Tensor({features})},
      running_mean_({features}, 0.0),
      running_var_({features}, 1.0) {
  if (features == 0) throw std::invalid_argument("BatchNorm: zero features");
  if (!(eps >= 0.0)) throw std::invalid_argument("BatchNorm: eps must be >= 0");
  if (!(momentum > 0.0 && momentum < 1.0)) throw std::invalid_argument("BatchNorm: momentum must lie in (0,1)");
}

Tensor::Shape BatchNorm::output_shape(const Tensor::Shape& input) const {
  if (input.empty() || input[0] != features_) {
    throw std::invalid_argument("BatchNorm: expected " + std::to_string(features_) + " features/channels, got " +
                                shape_string(input));
  }
  if (input.size() != 1 && input.size() != 3) throw std::invalid_argument("BatchNorm: expects [F] or [C x H x W]");
  return input;
}

std::vector<std::int64_t> BatchNorm::attributes() const { return {static_cast<std::int64_t>(features_)}; }

namespace {

struct NormLayout {
  std::size_t batch, channels, inner;
  std::size_t count() const { return batch * inner; }
  std::size_t at(std::size_t n, std::size_t c, std::size_t i) const { return (n * channels + c) * inner + i; }
};

NormLayout norm_layout(const Tensor& x, std::size_t features) {
  if (x.rank() == 2 && x.dim(1) == features) return {x.dim(0), features, 1};
  if (x.rank() == 4 && x.dim(1) == features) return {x.dim(0), features, x.dim(2) * x.dim(3)};
  throw std::invalid_argument("BatchNorm: expected [B x " + std::to_string(features) + "] or [B x " +
                              std::to_string(features) + " x H x W], got " + shape_string(x.shape()));
}

}  // namespace

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  const NormLayout L = norm_layout(x, features_);
  if (mode == Mode::train && L.batch < 2) {
    throw std::invalid_argument("BatchNorm: training mode needs a batch of at least 2 samples");
  }
  normalized_ = Tensor(x.shape());
  Tensor out(x.shape());
  inv_std_.assign(features_, 0.0);
  const double n = static_cast<double>(L.count());
  for (std::size_t c = 0; c < features_; ++c) {
    double mean = 0.0, var = 0.0;
    if (mode == Mode::train) {
      for (std::size_t b = 0; b < L.batch; ++b)
        for (std::size_t i = 0; i < L.inner; ++i) mean += x[L.at(b, c, i)];
      mean /= n;
      for (std::size_t b = 0; b < L.batch; ++b)
        for (std::size_t i = 0; i < L.inner; ++i) {
          const double d = x[L.at(b, c, i)] - mean;
          var += d * d;
        }
      var /= n;
      running_mean_[c] = momentum_ * running_mean_[c] + (1.0 - momentum_) * mean;
      running_var_[c] = momentum_ * running_var_[c] + (1.0 - momentum_) * var;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv_std;
    for (std::size_t b = 0; b < L.batch; ++b) {
      for (std::size_t i = 0; i < L.inner; ++i) {
        const std::size_t at = L.at(b, c, i);
        const double xhat = (x[at] - mean) * inv_std;
        normalized_[at] = xhat;
        out[at] = scale_.value[c] * xhat + shift_.value[c];
      }
    }
  }
  mode_ = mode;
  cached_ = true;
  return out;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  require_cache(cached_, "BatchNorm");
  if (grad_out.shape() != normalized_.shape()) throw std::invalid_argument("BatchNorm: gradient shape mismatch");
  const NormLayout L = norm_layout(grad_out, features_);
  Tensor grad_in(grad_out.shape());
  const double n = static_cast<double>(L.count());
  for (std::size_t c = 0; c < features_; ++c) {
    double sum_g = 0.0, sum_g_xhat = 0.0;
    for (std::size_t b = 0; b < L.batch; ++b) {
      for (std::size_t i = 0; i < L.inner; ++i) {
        const std::size_t at = L.at(b, c, i);
        sum_g += grad_out[at];
        sum_g_xhat += grad_out[at] * normalized_[at];
      }
    }
    scale_.grad[c] = sum_g_xhat;
    shift_.grad[c] = sum_g;
    const double m = scale_.value[c];
    const double inv_std = inv_std_[c];
    for (std::size_t b = 0; b < L.batch; ++b) {
      for (std::size_t i = 0; i < L.inner; ++i) {
        const std::size_t at = L.at(b, c, i);
        if (mode_ == Mode::infer) {
          grad_in[at] = grad_out[at] * m * inv_std;
        } else {
          // Full chain through the batch mean and variance.
          grad_in[at] = m * inv_std / n * (n * grad_out[at] - sum_g - normalized_[at] * sum_g_xhat);
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- ActivationLayer / Flatten

Tensor ActivationLayer::forward(const Tensor& x, Mode) {
  input_ = x;
  cached_ = true;
  return activation_forward(x, activation_);
}

Tensor ActivationLayer::backward(const Tensor& grad_out) {
  require_cache(cached_, "ActivationLayer");
  if (grad_out.shape() != input_.shape()) throw std::invalid_argument("ActivationLayer: gradient shape mismatch");
  Tensor grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] *= derivative(activation_, input_[i]);
  return grad_in;
}

Tensor Flatten::forward(const Tensor& x, Mode) {
  if (x.rank() < 1) throw std::invalid_argument("Flatten: scalar input");
  input_shape_ = x.shape();
  return x.reshaped({x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)});
}

Tensor Flatten::backward(const Tensor& grad_out) {
  if (input_shape_.empty()) throw std::logic_error("Flatten: backward called without a preceding forward");
  return grad_out.reshaped(input_shape_);
}

// ---------------------------------------------------------------- Dueling

DuelingMode dueling_mode_from_string(const std::string& name) {
  if (name == "sum") return DuelingMode::sum;
  if (name == "mean_subtract" || name == "mean") return DuelingMode::mean_subtract;
  throw std::invalid_argument("unknown dueling mode '" + name + "' (expected sum or mean_subtract)");
}

std::string to_string(DuelingMode mode) { return mode == DuelingMode::sum ? "sum" : "mean_subtract"; }

Tensor dueling_aggregate(const Tensor& value, const Tensor& advantage, DuelingMode mode) {
  if (advantage.rank() != 2 || value.rank() != 2 || value.dim(1) != 1 || value.dim(0) != advantage.dim(0)) {
    throw std::invalid_argument("dueling_aggregate: expected value [B x 1] and advantage [B x n]");
  }
  const std::size_t batch = advantage.dim(0), n = advantage.dim(1);
  Tensor q(advantage.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    double mean = 0.0;
    if (mode == DuelingMode::mean_subtract) {
      for (std::size_t a = 0; a < n; ++a) mean += advantage.at(b, a);
      mean /= static_cast<double>(n);
    }
    for (std::size_t a = 0; a < n; ++a) q.at(b, a) = value.at(b, 0) + advantage.at(b, a) - mean;
  }
  return q;
}

DuelingHead::DuelingHead(std::size_t in, std::size_t n_actions, DuelingMode mode)
    : n_actions_(n_actions), mode_(mode), value_(in, 1), advantage_(in, n_actions) {}

void DuelingHead::initialize(Rng& rng) {
  value_.initialize(rng);
  advantage_.initialize(rng);
}

Tensor::Shape DuelingHead::output_shape(const Tensor::Shape& input) const {
  value_.output_shape(input);
  return advantage_.output_shape(input);
}

std::vector<Parameter*> DuelingHead::parameters() {
  return {&value_.weights(), &value_.bias(), &advantage_.weights(), &advantage_.bias()};
}

std::vector<std::int64_t> DuelingHead::attributes() const {
  auto attrs = advantage_.attributes();
  return {attrs[0], static_cast<std::int64_t>(n_actions_), static_cast<std::int64_t>(mode_)};
}

std::string DuelingHead::describe() const {
  return "dueling(value 1 + advantage " + std::to_string(n_actions_) + ", " + to_string(mode_) + ")";
}

Tensor DuelingHead::forward(const Tensor& x, Mode mode) {
  last_value_ = value_.forward(x, mode);
  last_advantage_ = advantage_.forward(x, mode);
  return dueling_aggregate(last_value_, last_advantage_, mode_);
}

Tensor DuelingHead::backward(const Tensor& grad_out) {
  if (grad_out.rank() != 2 || grad_out.dim(1) != n_actions_) throw std::invalid_argument("DuelingHead: gradient shape");
  const std::size_t batch = grad_out.dim(0);
  Tensor grad_value({batch, 1});
  Tensor grad_advantage = grad_out;
  for (std::size_t b = 0; b < batch; ++b) {
    double total = 0.0;
    for (std::size_t a = 0; a < n_actions_; ++a) total += grad_out.at(b, a);
    grad_value.at(b, 0) = total;
    if (mode_ == DuelingMode::mean_subtract) {
      const double mean = total / static_cast<double>(n_actions_);
      for (std::size_t a = 0; a < n_actions_; ++a) grad_advantage.at(b, a) -= mean;
    }
  }
  Tensor grad_in = value_.backward(grad_value);
  const Tensor from_advantage = advantage_.backward(grad_advantage);
  for (std::size_t i = 0; i < grad_in.size(); ++i) grad_in[i] += from_advantage[i];
  return grad_in;
}

}  // namespace rlab
