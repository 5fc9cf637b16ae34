#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "msa/kernels/ops.hpp"

// Serial, loop-nest implementations of the kernels in ops.hpp. Kept for
// testing and benchmarking; nothing in the training path calls them.

namespace msa::kernels::reference {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, int dilation,
                    Tensor<T>& y);

template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& weight, int dilation, Tensor<T>& gx);

template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& gy, int dilation, Tensor<T>& gw,
                            std::span<T> gb);

template <typename T>
void maxpool_forward(const Tensor<T>& x, int factor, Tensor<T>& y, std::vector<std::uint32_t>& argmax);

template <typename T>
void upsample_bilinear_forward(const Tensor<T>& x, int factor, Tensor<T>& y);

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& gy, int factor, const Shape& in, Tensor<T>& gx);

template <typename T>
void group_norm_forward(const Tensor<T>& x, int groups, std::span<const T> gamma, std::span<const T> beta, T eps,
                        Tensor<T>& y, GroupNormStats<T>& stats);

template <typename T>
void group_norm_backward(const Tensor<T>& gy, const Tensor<T>& x, const GroupNormStats<T>& stats, int groups,
                         std::span<const T> gamma, Tensor<T>& gx, std::span<T> ggamma, std::span<T> gbeta);

}  // namespace msa::kernels::reference
