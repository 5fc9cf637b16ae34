#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "msa/error.hpp"

namespace msa {

/// Extent of a rank-4 (batch, channels, height, width) array.
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
    std::size_t numel() const noexcept { return static_cast<std::size_t>(n) * c * plane(); }

    friend bool operator==(const Shape&, const Shape&) = default;

    std::string str() const
    {
        return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
               std::to_string(w) + ")";
    }
};

/// Dense NCHW array. This is the feature map type used by every layer.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.numel(), fill)
    {
        if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
            throw ArgumentError("negative tensor extent " + shape.str());
    }
    Tensor(int n, int c, int h, int w, T fill = T(0)) : Tensor(Shape{n, c, h, w}, fill) {}

    const Shape& shape() const noexcept { return shape_; }
    int n() const noexcept { return shape_.n; }
    int c() const noexcept { return shape_.c; }
    int h() const noexcept { return shape_.h; }
    int w() const noexcept { return shape_.w; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> span() noexcept { return data_; }
    std::span<const T> span() const noexcept { return data_; }

    std::size_t offset(int n, int c, int y, int x) const noexcept
    {
        return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(int n, int c, int y, int x) noexcept { return data_[offset(n, c, y, x)]; }
    T operator()(int n, int c, int y, int x) const noexcept { return data_[offset(n, c, y, x)]; }
    T& operator[](std::size_t i) noexcept { return data_[i]; }
    T operator[](std::size_t i) const noexcept { return data_[i]; }

    T* plane(int n, int c) noexcept { return data_.data() + offset(n, c, 0, 0); }
    const T* plane(int n, int c) const noexcept { return data_.data() + offset(n, c, 0, 0); }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(T(0)); }

    Tensor& operator+=(const Tensor& o)
    {
        if (o.shape_ != shape_) throw ArgumentError("tensor add: " + shape_.str() + " vs " + o.shape_.str());
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
        return *this;
    }

    bool all_finite() const noexcept
    {
        return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
    }

    template <typename U>
    Tensor<U> cast() const
    {
        Tensor<U> out(shape_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

private:
    Shape shape_{};
    std::vector<T> data_;
};

/// Concatenate tensors along the channel axis. All parts share n, h, w.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>* const> parts)
{
    if (parts.empty()) throw ArgumentError("concat of zero tensors");
    Shape s = parts.front()->shape();
    int channels = 0;
    for (const auto* p : parts) {
        const Shape& ps = p->shape();
        if (ps.n != s.n || ps.h != s.h || ps.w != s.w)
            throw ArgumentError("concat shape mismatch " + s.str() + " vs " + ps.str());
        channels += ps.c;
    }
    Tensor<T> out(s.n, channels, s.h, s.w);
    const std::size_t plane = s.plane();
    for (int b = 0; b < s.n; ++b) {
        int c0 = 0;
        for (const auto* p : parts) {
            std::copy_n(p->plane(b, 0), plane * p->c(), out.plane(b, c0));
            c0 += p->c();
        }
    }
    return out;
}

/// Inverse of concat_channels: slice `count` channels starting at `first`.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int first, int count)
{
    if (first < 0 || count < 0 || first + count > x.c())
        throw ArgumentError("channel slice out of range");
    Tensor<T> out(x.n(), count, x.h(), x.w());
    const std::size_t plane = x.shape().plane();
    for (int b = 0; b < x.n(); ++b) std::copy_n(x.plane(b, first), plane * count, out.plane(b, 0));
    return out;
}

}  // namespace msa
