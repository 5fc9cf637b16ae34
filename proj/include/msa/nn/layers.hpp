#pragma once

#include <cstdint>
#include <vector>

#include "msa/kernels/ops.hpp"
#include "msa/nn/module.hpp"

namespace msa::nn {

/// Stride-1 convolution with "same" padding. Weight (Cout, Cin, k, k).
template <typename T>
class Conv2d final : public Module<T> {
public:
    Conv2d() = default;
    Conv2d(int in_channels, int out_channels, int kernel, int dilation = 1, bool bias = true);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(ParameterList<T>& out, const std::string& prefix) override;
    /// Kaiming-normal fan-in weights, zero bias.
    void init(Rng& rng) override;

    /// Skip computing dL/dinput (first layer of the network).
    void set_input_grad(bool on) noexcept { input_grad_ = on; }

    Tensor<T>& weight() noexcept { return weight_; }
    Tensor<T>& bias() noexcept { return bias_; }
    const Tensor<T>& weight_grad() const noexcept { return weight_grad_; }
    int in_channels() const noexcept { return weight_.c(); }
    int out_channels() const noexcept { return weight_.n(); }
    int dilation() const noexcept { return dilation_; }

private:
    std::span<const T> bias_span() const noexcept;

    Tensor<T> weight_, bias_, weight_grad_, bias_grad_;
    Tensor<T> input_;
    int dilation_ = 1;
    bool has_bias_ = true;
    bool input_grad_ = true;
};

/// Group normalization with per-channel affine. Independent of batch size.
template <typename T>
class GroupNorm final : public Module<T> {
public:
    GroupNorm() = default;
    explicit GroupNorm(int channels, int groups = 0);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    int groups() const noexcept { return groups_; }
    /// Largest of {8, 4, 2, 1} dividing `channels`.
    static int default_groups(int channels) noexcept;

    static constexpr double kEps = 1e-5;

private:
    Tensor<T> gamma_, beta_, gamma_grad_, beta_grad_;
    Tensor<T> input_;
    kernels::GroupNormStats<T> stats_;
    int groups_ = 1;
};

template <typename T>
class ReLU final : public Module<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

private:
    std::vector<std::uint8_t> active_;
};

template <typename T>
class MaxPool2d final : public Module<T> {
public:
    explicit MaxPool2d(int factor = 2) : factor_(factor) {}

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

    int factor() const noexcept { return factor_; }

private:
    int factor_;
    Shape input_shape_{};
    std::vector<std::uint32_t> argmax_;
};

template <typename T>
class UpsampleBilinear final : public Module<T> {
public:
    explicit UpsampleBilinear(int factor = 2) : factor_(factor) {}

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

private:
    int factor_;
    Shape input_shape_{};
};

/// conv -> group norm -> ReLU.
template <typename T>
class ConvBlock final : public Module<T> {
public:
    ConvBlock() = default;
    ConvBlock(int in_channels, int out_channels, int kernel = 3, int dilation = 1);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    Conv2d<T>& conv() noexcept { return conv_; }
    GroupNorm<T>& norm() noexcept { return norm_; }
    int out_channels() const noexcept { return conv_.out_channels(); }

private:
    Conv2d<T> conv_;
    GroupNorm<T> norm_;
    ReLU<T> relu_;
};

/// Squeeze-and-excitation: x * sigmoid(W2 relu(W1 mean_hw(x) + b1) + b2), gates per (n, c).
template <typename T>
class SEBlock final : public Module<T> {
public:
    SEBlock() = default;
    SEBlock(int channels, int reduction);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    /// When disabled the block is the identity (used to isolate convolution paths in tests).
    void set_enabled(bool on) noexcept { enabled_ = on; }

    /// (hidden, channels) and (channels, hidden) weights; biases of length hidden / channels.
    Tensor<T>& fc1_weight() noexcept { return w1_; }
    Tensor<T>& fc1_bias() noexcept { return b1_; }
    Tensor<T>& fc2_weight() noexcept { return w2_; }
    Tensor<T>& fc2_bias() noexcept { return b2_; }
    /// Gates of the last forward pass, (n, c).
    const std::vector<T>& gates() const noexcept { return gates_; }
    /// fc2 pre-activations of the last forward pass, (n, c).
    const std::vector<T>& logits() const noexcept { return z2_; }

private:
    int channels_ = 0, hidden_ = 0;
    bool enabled_ = true;
    Tensor<T> w1_, b1_, w2_, b2_, gw1_, gb1_, gw2_, gb2_;
    Tensor<T> input_;
    std::vector<T> pooled_, z1_, h_, z2_, gates_;
};

/// Per-pixel L2 normalization across channels. Vectors with norm below 1e-12
/// are replaced by the first basis vector and receive zero gradient.
template <typename T>
class L2Normalize final : public Module<T> {
public:
    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;

    static constexpr double kMinNorm = 1e-12;

private:
    Tensor<T> output_;
    std::vector<T> norms_;
};

}  // namespace msa::nn
