#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msa/tensor.hpp"

// OpenMP kernels for the network's layers. Every kernel here has a serial
// counterpart in reference.hpp with identical semantics; the unit tests hold
// the two together.
//
// Convolutions are stride 1 with "same" zero padding of dilation*(k-1)/2, so
// only odd square kernels are accepted. Weights are laid out (Cout, Cin, k, k).

namespace msa::kernels {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, int dilation,
                    Tensor<T>& y);

/// gx = dL/dx given gy = dL/dy. Overwrites gx.
template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& weight, int dilation, Tensor<T>& gx);

/// Accumulates dL/dW into gw and dL/db into gb (gb may be empty).
template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& gy, int dilation, Tensor<T>& gw,
                            std::span<T> gb);

/// Non-overlapping factor x factor max pooling. `argmax` receives, for each
/// output element, the flat index of the winning input element (first max wins).
template <typename T>
void maxpool_forward(const Tensor<T>& x, int factor, Tensor<T>& y, std::vector<std::uint32_t>& argmax);

template <typename T>
void maxpool_backward(const Tensor<T>& gy, std::span<const std::uint32_t> argmax, const Shape& in, Tensor<T>& gx);

/// Bilinear upsampling by an integer factor with half-pixel centers
/// (align_corners = false), edges clamped.
template <typename T>
void upsample_bilinear_forward(const Tensor<T>& x, int factor, Tensor<T>& y);

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& gy, int factor, const Shape& in, Tensor<T>& gx);

template <typename T>
struct GroupNormStats {
    std::vector<T> mean;  // (n, groups)
    std::vector<T> rstd;  // (n, groups)
};

template <typename T>
void group_norm_forward(const Tensor<T>& x, int groups, std::span<const T> gamma, std::span<const T> beta, T eps,
                        Tensor<T>& y, GroupNormStats<T>& stats);

/// Overwrites gx, accumulates into ggamma / gbeta.
template <typename T>
void group_norm_backward(const Tensor<T>& gy, const Tensor<T>& x, const GroupNormStats<T>& stats, int groups,
                         std::span<const T> gamma, Tensor<T>& gx, std::span<T> ggamma, std::span<T> gbeta);

/// Bilinear source taps for one axis: output o reads in[i0]*(1-l) + in[i1]*l.
struct BilinearTap {
    int i0;
    int i1;
    double lambda;
};
std::vector<BilinearTap> bilinear_taps(int in_size, int factor);

}  // namespace msa::kernels
