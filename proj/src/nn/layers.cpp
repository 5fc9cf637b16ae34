#include "msa/nn/layers.hpp"

#include <cmath>

namespace msa::nn {

// ---------------------------------------------------------------- Conv2d

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int dilation, bool bias)
    : weight_(out_channels, in_channels, kernel, kernel),
      bias_(1, bias ? out_channels : 0, 1, 1),
      weight_grad_(out_channels, in_channels, kernel, kernel),
      bias_grad_(1, bias ? out_channels : 0, 1, 1),
      dilation_(dilation),
      has_bias_(bias)
{
    if (in_channels < 1 || out_channels < 1) throw ConfigError("conv channel counts must be >= 1");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("conv kernel must be odd");
}

template <typename T>
std::span<const T> Conv2d<T>::bias_span() const noexcept
{
    return has_bias_ ? bias_.span() : std::span<const T>{};
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x)
{
    input_ = x;
    Tensor<T> y;
    kernels::conv2d_forward<T>(x, weight_, bias_span(), dilation_, y);
    return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& grad_out)
{
    kernels::conv2d_backward_weight<T>(input_, grad_out, dilation_, weight_grad_,
                                       has_bias_ ? bias_grad_.span() : std::span<T>{});
    Tensor<T> gx;
    if (input_grad_) kernels::conv2d_backward_input<T>(grad_out, weight_, dilation_, gx);
    return gx;
}

template <typename T>
void Conv2d<T>::collect(ParameterList<T>& out, const std::string& prefix)
{
    out.push_back({join_name(prefix, "weight"), &weight_, &weight_grad_});
    if (has_bias_) out.push_back({join_name(prefix, "bias"), &bias_, &bias_grad_});
}

template <typename T>
void Conv2d<T>::init(Rng& rng)
{
    const int fan_in = weight_.c() * weight_.h() * weight_.w();
    const double sd = std::sqrt(2.0 / fan_in);
    for (auto& v : weight_.span()) v = static_cast<T>(rng.normal(0.0, sd));
    bias_.zero();
}

// ---------------------------------------------------------------- GroupNorm

template <typename T>
int GroupNorm<T>::default_groups(int channels) noexcept
{
    for (int g : {8, 4, 2})
        if (channels % g == 0) return g;
    return 1;
}

template <typename T>
GroupNorm<T>::GroupNorm(int channels, int groups)
    : gamma_(1, channels, 1, 1, T(1)),
      beta_(1, channels, 1, 1),
      gamma_grad_(1, channels, 1, 1),
      beta_grad_(1, channels, 1, 1),
      groups_(groups > 0 ? groups : default_groups(channels))
{
    if (channels % groups_ != 0) throw ConfigError("group norm groups must divide channels");
}

template <typename T>
Tensor<T> GroupNorm<T>::forward(const Tensor<T>& x)
{
    input_ = x;
    Tensor<T> y;
    kernels::group_norm_forward<T>(x, groups_, gamma_.span(), beta_.span(), static_cast<T>(kEps), y, stats_);
    return y;
}

template <typename T>
Tensor<T> GroupNorm<T>::backward(const Tensor<T>& grad_out)
{
    Tensor<T> gx;
    kernels::group_norm_backward<T>(grad_out, input_, stats_, groups_, gamma_.span(), gx, gamma_grad_.span(),
                                    beta_grad_.span());
    return gx;
}

template <typename T>
void GroupNorm<T>::collect(ParameterList<T>& out, const std::string& prefix)
{
    out.push_back({join_name(prefix, "weight"), &gamma_, &gamma_grad_});
    out.push_back({join_name(prefix, "bias"), &beta_, &beta_grad_});
}

template <typename T>
void GroupNorm<T>::init(Rng&)
{
    gamma_.fill(T(1));
    beta_.zero();
}

// ---------------------------------------------------------------- ReLU

template <typename T>
Tensor<T> ReLU<T>::forward(const Tensor<T>& x)
{
    Tensor<T> y(x.shape());
    active_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const bool on = x[i] > T(0);
        active_[i] = on;
        y[i] = on ? x[i] : T(0);
    }
    return y;
}

template <typename T>
Tensor<T> ReLU<T>::backward(const Tensor<T>& grad_out)
{
    Tensor<T> gx(grad_out.shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = active_[i] ? grad_out[i] : T(0);
    return gx;
}

// ---------------------------------------------------------------- pooling / resampling

template <typename T>
Tensor<T> MaxPool2d<T>::forward(const Tensor<T>& x)
{
    input_shape_ = x.shape();
    Tensor<T> y;
    kernels::maxpool_forward<T>(x, factor_, y, argmax_);
    return y;
}

template <typename T>
Tensor<T> MaxPool2d<T>::backward(const Tensor<T>& grad_out)
{
    Tensor<T> gx;
    kernels::maxpool_backward<T>(grad_out, argmax_, input_shape_, gx);
    return gx;
}

template <typename T>
Tensor<T> UpsampleBilinear<T>::forward(const Tensor<T>& x)
{
    input_shape_ = x.shape();
    Tensor<T> y;
    kernels::upsample_bilinear_forward<T>(x, factor_, y);
    return y;
}

template <typename T>
Tensor<T> UpsampleBilinear<T>::backward(const Tensor<T>& grad_out)
{
    Tensor<T> gx;
    kernels::upsample_bilinear_backward<T>(grad_out, factor_, input_shape_, gx);
    return gx;
}

// ---------------------------------------------------------------- ConvBlock

template <typename T>
ConvBlock<T>::ConvBlock(int in_channels, int out_channels, int kernel, int dilation)
    : conv_(in_channels, out_channels, kernel, dilation), norm_(out_channels)
{
}

template <typename T>
Tensor<T> ConvBlock<T>::forward(const Tensor<T>& x)
{
    return relu_.forward(norm_.forward(conv_.forward(x)));
}

template <typename T>
Tensor<T> ConvBlock<T>::backward(const Tensor<T>& grad_out)
{
    return conv_.backward(norm_.backward(relu_.backward(grad_out)));
}

template <typename T>
void ConvBlock<T>::collect(ParameterList<T>& out, const std::string& prefix)
{
    conv_.collect(out, join_name(prefix, "conv"));
    norm_.collect(out, join_name(prefix, "norm"));
}

template <typename T>
void ConvBlock<T>::init(Rng& rng)
{
    conv_.init(rng);
    norm_.init(rng);
}

// ---------------------------------------------------------------- SEBlock

template <typename T>
SEBlock<T>::SEBlock(int channels, int reduction) : channels_(channels)
{
    if (reduction < 1 || channels % reduction != 0)
        throw ConfigError("SE reduction " + std::to_string(reduction) + " does not divide " +
                          std::to_string(channels) + " channels");
    hidden_ = channels / reduction;
    w1_ = Tensor<T>(1, 1, hidden_, channels_);
    b1_ = Tensor<T>(1, 1, 1, hidden_);
    w2_ = Tensor<T>(1, 1, channels_, hidden_);
    b2_ = Tensor<T>(1, 1, 1, channels_);
    gw1_ = Tensor<T>(w1_.shape());
    gb1_ = Tensor<T>(b1_.shape());
    gw2_ = Tensor<T>(w2_.shape());
    gb2_ = Tensor<T>(b2_.shape());
}

template <typename T>
Tensor<T> SEBlock<T>::forward(const Tensor<T>& x)
{
    if (!enabled_) return x;
    if (x.c() != channels_) throw ArgumentError("SE block expects " + std::to_string(channels_) + " channels");
    input_ = x;
    const int n = x.n();
    const std::size_t plane = x.shape().plane();
    pooled_.assign(static_cast<std::size_t>(n) * channels_, T(0));
    z1_.assign(static_cast<std::size_t>(n) * hidden_, T(0));
    h_.assign(z1_.size(), T(0));
    z2_.assign(pooled_.size(), T(0));
    gates_.assign(pooled_.size(), T(0));

    for (int b = 0; b < n; ++b) {
        T* p = pooled_.data() + static_cast<std::size_t>(b) * channels_;
        for (int c = 0; c < channels_; ++c) {
            const T* src = x.plane(b, c);
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += src[i];
            p[c] = static_cast<T>(s / static_cast<double>(plane));
        }
        for (int j = 0; j < hidden_; ++j) {
            T s = b1_[j];
            for (int c = 0; c < channels_; ++c) s += w1_[static_cast<std::size_t>(j) * channels_ + c] * p[c];
            z1_[static_cast<std::size_t>(b) * hidden_ + j] = s;
            h_[static_cast<std::size_t>(b) * hidden_ + j] = s > T(0) ? s : T(0);
        }
        for (int c = 0; c < channels_; ++c) {
            T s = b2_[c];
            for (int j = 0; j < hidden_; ++j)
                s += w2_[static_cast<std::size_t>(c) * hidden_ + j] * h_[static_cast<std::size_t>(b) * hidden_ + j];
            z2_[static_cast<std::size_t>(b) * channels_ + c] = s;
            gates_[static_cast<std::size_t>(b) * channels_ + c] = T(1) / (T(1) + std::exp(-s));
        }
    }

    Tensor<T> y(x.shape());
    for (int b = 0; b < n; ++b)
        for (int c = 0; c < channels_; ++c) {
            const T g = gates_[static_cast<std::size_t>(b) * channels_ + c];
            const T* src = x.plane(b, c);
            T* dst = y.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = src[i] * g;
        }
    return y;
}

template <typename T>
Tensor<T> SEBlock<T>::backward(const Tensor<T>& grad_out)
{
    if (!enabled_) return grad_out;
    const int n = input_.n();
    const std::size_t plane = input_.shape().plane();
    Tensor<T> gx(input_.shape());
    std::vector<T> dpooled(static_cast<std::size_t>(channels_));
    std::vector<T> dz2(static_cast<std::size_t>(channels_));
    std::vector<T> dz1(static_cast<std::size_t>(hidden_));

    for (int b = 0; b < n; ++b) {
        const std::size_t bc = static_cast<std::size_t>(b) * channels_;
        const std::size_t bh = static_cast<std::size_t>(b) * hidden_;
        for (int c = 0; c < channels_; ++c) {
            const T* g = grad_out.plane(b, c);
            const T* xs = input_.plane(b, c);
            double dg = 0.0;
            for (std::size_t i = 0; i < plane; ++i) dg += static_cast<double>(g[i]) * xs[i];
            const T gate = gates_[bc + c];
            dz2[c] = static_cast<T>(dg) * gate * (T(1) - gate);
        }
        for (int c = 0; c < channels_; ++c) {
            gb2_[c] += dz2[c];
            for (int j = 0; j < hidden_; ++j) gw2_[static_cast<std::size_t>(c) * hidden_ + j] += dz2[c] * h_[bh + j];
        }
        for (int j = 0; j < hidden_; ++j) {
            T s = T(0);
            for (int c = 0; c < channels_; ++c) s += w2_[static_cast<std::size_t>(c) * hidden_ + j] * dz2[c];
            dz1[j] = z1_[bh + j] > T(0) ? s : T(0);
            gb1_[j] += dz1[j];
            for (int c = 0; c < channels_; ++c)
                gw1_[static_cast<std::size_t>(j) * channels_ + c] += dz1[j] * pooled_[bc + c];
        }
        for (int c = 0; c < channels_; ++c) {
            T s = T(0);
            for (int j = 0; j < hidden_; ++j) s += w1_[static_cast<std::size_t>(j) * channels_ + c] * dz1[j];
            dpooled[c] = s / static_cast<T>(plane);
        }
        for (int c = 0; c < channels_; ++c) {
            const T gate = gates_[bc + c];
            const T* g = grad_out.plane(b, c);
            T* dst = gx.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] = g[i] * gate + dpooled[c];
        }
    }
    return gx;
}

template <typename T>
void SEBlock<T>::collect(ParameterList<T>& out, const std::string& prefix)
{
    out.push_back({join_name(prefix, "fc1.weight"), &w1_, &gw1_});
    out.push_back({join_name(prefix, "fc1.bias"), &b1_, &gb1_});
    out.push_back({join_name(prefix, "fc2.weight"), &w2_, &gw2_});
    out.push_back({join_name(prefix, "fc2.bias"), &b2_, &gb2_});
}

template <typename T>
void SEBlock<T>::init(Rng& rng)
{
    const double sd1 = std::sqrt(2.0 / channels_);
    const double sd2 = std::sqrt(2.0 / hidden_);
    for (auto& v : w1_.span()) v = static_cast<T>(rng.normal(0.0, sd1));
    for (auto& v : w2_.span()) v = static_cast<T>(rng.normal(0.0, sd2));
    b1_.zero();
    b2_.zero();
}

// ---------------------------------------------------------------- L2Normalize

template <typename T>
Tensor<T> L2Normalize<T>::forward(const Tensor<T>& x)
{
    const int n = x.n(), c = x.c();
    const std::size_t plane = x.shape().plane();
    output_ = Tensor<T>(x.shape());
    norms_.assign(static_cast<std::size_t>(n) * plane, T(0));
    for (int b = 0; b < n; ++b)
        for (std::size_t p = 0; p < plane; ++p) {
            double sq = 0.0;
            for (int ch = 0; ch < c; ++ch) {
                const double v = x.plane(b, ch)[p];
                sq += v * v;
            }
            const double norm = std::sqrt(sq);
            norms_[static_cast<std::size_t>(b) * plane + p] = static_cast<T>(norm);
            if (norm < kMinNorm) {
                for (int ch = 0; ch < c; ++ch) output_.plane(b, ch)[p] = ch == 0 ? T(1) : T(0);
                norms_[static_cast<std::size_t>(b) * plane + p] = T(0);
            } else {
                for (int ch = 0; ch < c; ++ch) output_.plane(b, ch)[p] = static_cast<T>(x.plane(b, ch)[p] / norm);
            }
        }
    return output_;
}

template <typename T>
Tensor<T> L2Normalize<T>::backward(const Tensor<T>& grad_out)
{
    const int n = output_.n(), c = output_.c();
    const std::size_t plane = output_.shape().plane();
    Tensor<T> gx(output_.shape());
    for (int b = 0; b < n; ++b)
        for (std::size_t p = 0; p < plane; ++p) {
            const T norm = norms_[static_cast<std::size_t>(b) * plane + p];
            if (norm == T(0)) continue;
            T dot = T(0);
            for (int ch = 0; ch < c; ++ch) dot += grad_out.plane(b, ch)[p] * output_.plane(b, ch)[p];
            for (int ch = 0; ch < c; ++ch)
                gx.plane(b, ch)[p] = (grad_out.plane(b, ch)[p] - dot * output_.plane(b, ch)[p]) / norm;
        }
    return gx;
}

#define MSA_INSTANTIATE_LAYERS(T)    \
    template class Conv2d<T>;        \
    template class GroupNorm<T>;     \
    template class ReLU<T>;          \
    template class MaxPool2d<T>;     \
    template class UpsampleBilinear<T>; \
    template class ConvBlock<T>;     \
    template class SEBlock<T>;       \
    template class L2Normalize<T>;

MSA_INSTANTIATE_LAYERS(float)
MSA_INSTANTIATE_LAYERS(double)

#undef MSA_INSTANTIATE_LAYERS

}  // namespace msa::nn
