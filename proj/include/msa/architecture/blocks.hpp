#pragma once

#include <array>
#include <memory>

#include "msa/nn/layers.hpp"

namespace msa {

/// Multi-scale attention encoder block.
///
///   out1 = conv(x), out2 = conv(out1), out3 = conv(out2)
///   y    = conv(SE(cat(out1, out2, out3)))
///
/// every conv being conv3x3 -> group norm -> ReLU. The SE block sees three
/// times the block width.
template <typename T>
class MEncoderBlock final : public nn::Module<T> {
public:
    MEncoderBlock(int in_channels, int out_channels, int se_reduction);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(nn::ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    void set_attention_enabled(bool on) noexcept { se_.set_enabled(on); }
    nn::ConvBlock<T>& stage(int i) { return stages_.at(static_cast<std::size_t>(i)); }
    nn::SEBlock<T>& attention() noexcept { return se_; }
    nn::ConvBlock<T>& projection() noexcept { return proj_; }
    int width() const noexcept { return width_; }
    /// Channel count of the concatenation fed to SE in the last forward pass.
    int concat_channels() const noexcept { return concat_channels_; }

private:
    int width_;
    std::array<nn::ConvBlock<T>, 3> stages_;
    nn::SEBlock<T> se_;
    nn::ConvBlock<T> proj_;
    int concat_channels_ = 0;
};

/// Three chained dilated conv blocks plus an identity shortcut: y = x + f(x).
template <typename T>
class DilatedResidualBlock final : public nn::Module<T> {
public:
    DilatedResidualBlock(int channels, std::array<int, 3> dilations);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(nn::ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    nn::ConvBlock<T>& stage(int i) { return stages_.at(static_cast<std::size_t>(i)); }
    const std::array<int, 3>& dilations() const noexcept { return dilations_; }

private:
    std::array<int, 3> dilations_;
    std::array<nn::ConvBlock<T>, 3> stages_;
};

/// ASPP head: dilated 3x3 branches at rates 4 and 8 plus a global-average-pool
/// branch (conv1x1 + ReLU, broadcast back by nearest neighbour), concatenated
/// and projected by conv1x1 -> group norm -> ReLU to the input width.
template <typename T>
class Aspp final : public nn::Module<T> {
public:
    explicit Aspp(int channels);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(nn::ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    static constexpr std::array<int, 2> kRates{4, 8};

private:
    int channels_;
    nn::ConvBlock<T> rate4_, rate8_;
    nn::Conv2d<T> pool_conv_;
    nn::ReLU<T> pool_relu_;
    nn::ConvBlock<T> proj_;
    Shape input_shape_{};
};

/// Dilated residual blocks with dilation patterns [1,2,1], [2,4,2], [4,8,4]
/// followed by ASPP. Preserves channel count and spatial size.
template <typename T>
class MsdBottleneck final : public nn::Module<T> {
public:
    explicit MsdBottleneck(int channels);

    /// Throws ConfigError when the input is smaller than 2x2.
    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(nn::ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    DilatedResidualBlock<T>& block(int i) { return blocks_.at(static_cast<std::size_t>(i)); }
    Aspp<T>& aspp() noexcept { return aspp_; }

    static constexpr std::array<std::array<int, 3>, 3> kPatterns{{{1, 2, 1}, {2, 4, 2}, {4, 8, 4}}};

private:
    std::array<DilatedResidualBlock<T>, 3> blocks_;
    Aspp<T> aspp_;
};

/// Stand-in bottleneck when the dilated bottleneck is ablated: one conv block.
template <typename T>
class PlainBottleneck final : public nn::Module<T> {
public:
    explicit PlainBottleneck(int channels) : block_(channels, channels) {}

    Tensor<T> forward(const Tensor<T>& x) override { return block_.forward(x); }
    Tensor<T> backward(const Tensor<T>& g) override { return block_.backward(g); }
    void collect(nn::ParameterList<T>& out, const std::string& prefix) override
    {
        block_.collect(out, nn::join_name(prefix, "conv"));
    }
    void init(Rng& rng) override { block_.init(rng); }

private:
    nn::ConvBlock<T> block_;
};

/// Contextual attention fusion: four parallel 3x3 conv blocks at dilation
/// 1, 2, 4, 8, concatenated, recalibrated by SE and projected by a 3x3 conv block.
template <typename T>
class Cafm final : public nn::Module<T> {
public:
    Cafm(int in_channels, int out_channels, int se_reduction);

    Tensor<T> forward(const Tensor<T>& x) override;
    Tensor<T> backward(const Tensor<T>& grad_out) override;
    void collect(nn::ParameterList<T>& out, const std::string& prefix) override;
    void init(Rng& rng) override;

    void set_attention_enabled(bool on) noexcept { se_.set_enabled(on); }
    nn::ConvBlock<T>& branch(int i) { return branches_.at(static_cast<std::size_t>(i)); }
    nn::ConvBlock<T>& projection() noexcept { return proj_; }
    int branch_width() const noexcept { return width_; }
    int concat_channels() const noexcept { return 4 * width_; }

    static constexpr std::array<int, 4> kRates{1, 2, 4, 8};

private:
    int width_;
    std::array<nn::ConvBlock<T>, 4> branches_;
    nn::SEBlock<T> se_;
    nn::ConvBlock<T> proj_;
};

}  // namespace msa
