#pragma once

#include <memory>
#include <vector>

#include "msa/architecture/blocks.hpp"
#include "msa/architecture/config.hpp"

namespace msa {

template <typename T>
struct NetworkOutput {
    /// (batch, 1, H, W) segmentation logits.
    Tensor<T> logits;
    /// (batch, embedding_dim, H / 2^(depth-1), W / 2^(depth-1)), unit norm per pixel.
    Tensor<T> embeddings;
};

/// One decoder level of the full-scale skip fusion. Level d receives the
/// (fused) encoder features of levels 0..d, max-pooled down to level d, and
/// the decoder features of every deeper level (the deepest being the
/// bottleneck), bilinearly upsampled and brought to decoder_channels by a
/// conv block. The concatenation is fused by a 3x3 conv block.
template <typename T>
class DecoderLevel {
public:
    DecoderLevel(int level, const std::vector<int>& skip_channels, const std::vector<int>& deeper_channels,
                 int decoder_channels, int out_channels);

    /// `skips[l]` for l in 0..level; `deeper[s - level - 1]` for s in level+1..depth-1.
    Tensor<T> forward(const std::vector<const Tensor<T>*>& skips, const std::vector<const Tensor<T>*>& deeper);
    /// Accumulates into skip_grads / deeper_grads (same indexing as forward).
    void backward(const Tensor<T>& grad_out, std::vector<Tensor<T>>& skip_grads,
                  std::vector<Tensor<T>>& deeper_grads);
    void collect(nn::ParameterList<T>& out, const std::string& prefix);
    void init(Rng& rng);

private:
    int level_;
    std::vector<int> skip_widths_;
    std::vector<int> deeper_widths_;
    std::vector<nn::MaxPool2d<T>> pools_;
    std::vector<nn::UpsampleBilinear<T>> ups_;
    std::vector<nn::ConvBlock<T>> deeper_convs_;
    nn::ConvBlock<T> fuse_;
};

/// Encoder-decoder segmentation network with multi-scale attention encoder
/// blocks, a dilated ASPP bottleneck, context-fused full-scale skips and a
/// second head producing L2-normalized per-pixel embeddings from the bottleneck.
template <typename T>
class Network {
public:
    explicit Network(const NetworkConfig& cfg);

    const NetworkConfig& config() const noexcept { return cfg_; }

    void init(std::uint64_t seed);
    NetworkOutput<T> forward(const Tensor<T>& x);
    /// Backpropagates dL/dlogits and dL/dembeddings, accumulating parameter gradients.
    /// Either gradient may be empty (treated as zero).
    void backward(const Tensor<T>& grad_logits, const Tensor<T>& grad_embeddings);

    nn::ParameterList<T>& parameters() noexcept { return params_; }
    std::size_t parameter_count() const;
    void zero_grad();

    MEncoderBlock<T>& encoder(int level) { return *encoders_.at(static_cast<std::size_t>(level)); }
    nn::Module<T>& bottleneck() { return *bottleneck_; }

    /// Copies every parameter value from `other` (same configuration, any precision).
    template <typename U>
    void copy_parameters_from(Network<U>& other);

private:
    NetworkConfig cfg_;
    std::vector<std::unique_ptr<MEncoderBlock<T>>> encoders_;
    std::vector<nn::MaxPool2d<T>> pools_;
    std::unique_ptr<nn::Module<T>> bottleneck_;
    std::vector<std::unique_ptr<nn::Module<T>>> skips_;
    std::vector<std::unique_ptr<DecoderLevel<T>>> decoders_;
    nn::Conv2d<T> seg_head_;
    nn::Conv2d<T> embed_head_;
    nn::L2Normalize<T> normalize_;
    nn::ParameterList<T> params_;

    std::vector<Shape> encoder_shapes_;
    Shape bottleneck_shape_{};
    std::vector<Shape> decoder_shapes_;
};

/// Parameter count of a configuration without building it at full precision.
std::size_t count_parameters(const NetworkConfig& cfg);

template <typename T>
template <typename U>
void Network<T>::copy_parameters_from(Network<U>& other)
{
    auto& src = other.parameters();
    if (src.size() != params_.size()) throw ArgumentError("parameter lists differ in length");
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (src[i].name != params_[i].name || src[i].value->size() != params_[i].value->size())
            throw ArgumentError("parameter mismatch at " + params_[i].name);
        for (std::size_t k = 0; k < params_[i].value->size(); ++k)
            (*params_[i].value)[k] = static_cast<T>((*src[i].value)[k]);
    }
}

}  // namespace msa
