#include <cmath>
#include <limits>

#include "msa/kernels/ops.hpp"

namespace msa::kernels {

std::vector<BilinearTap> bilinear_taps(int in_size, int factor)
{
    std::vector<BilinearTap> taps(static_cast<std::size_t>(in_size) * factor);
    for (int o = 0; o < in_size * factor; ++o) {
        double src = (o + 0.5) / factor - 0.5;
        if (src < 0.0) src = 0.0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in_size - 1) i0 = in_size - 1;
        const int i1 = std::min(i0 + 1, in_size - 1);
        taps[o] = {i0, i1, src - i0};
    }
    return taps;
}

template <typename T>
void maxpool_forward(const Tensor<T>& x, int factor, Tensor<T>& y, std::vector<std::uint32_t>& argmax)
{
    if (factor < 1 || x.h() % factor != 0 || x.w() % factor != 0)
        throw ArgumentError("maxpool factor " + std::to_string(factor) + " does not divide " + x.shape().str());
    const Shape out{x.n(), x.c(), x.h() / factor, x.w() / factor};
    if (y.shape() != out) y = Tensor<T>(out);
    argmax.assign(out.numel(), 0);
    const int planes = out.n * out.c;

#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const std::size_t in_base = static_cast<std::size_t>(pl) * x.shape().plane();
        const std::size_t out_base = static_cast<std::size_t>(pl) * out.plane();
        const T* src = x.data() + in_base;
        for (int oy = 0; oy < out.h; ++oy)
            for (int ox = 0; ox < out.w; ++ox) {
                std::size_t best = static_cast<std::size_t>(oy * factor) * x.w() + ox * factor;
                T best_v = src[best];
                for (int dy = 0; dy < factor; ++dy)
                    for (int dx = 0; dx < factor; ++dx) {
                        const std::size_t idx = static_cast<std::size_t>(oy * factor + dy) * x.w() + ox * factor + dx;
                        if (src[idx] > best_v) {
                            best_v = src[idx];
                            best = idx;
                        }
                    }
                const std::size_t o = out_base + static_cast<std::size_t>(oy) * out.w + ox;
                y.data()[o] = best_v;
                argmax[o] = static_cast<std::uint32_t>(in_base + best);
            }
    }
}

template <typename T>
void maxpool_backward(const Tensor<T>& gy, std::span<const std::uint32_t> argmax, const Shape& in, Tensor<T>& gx)
{
    if (argmax.size() != gy.size()) throw ArgumentError("maxpool backward: argmax size mismatch");
    if (gx.shape() != in) gx = Tensor<T>(in);
    gx.zero();
    // Windows do not overlap, so every input element receives at most one write.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(gy.size()); ++i) gx[argmax[i]] += gy[i];
}

template <typename T>
void upsample_bilinear_forward(const Tensor<T>& x, int factor, Tensor<T>& y)
{
    if (factor < 1) throw ArgumentError("upsample factor must be >= 1");
    const Shape out{x.n(), x.c(), x.h() * factor, x.w() * factor};
    if (y.shape() != out) y = Tensor<T>(out);
    const auto ty = bilinear_taps(x.h(), factor);
    const auto tx = bilinear_taps(x.w(), factor);
    const int planes = out.n * out.c;

#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const T* src = x.data() + static_cast<std::size_t>(pl) * x.shape().plane();
        T* dst = y.data() + static_cast<std::size_t>(pl) * out.plane();
        for (int oy = 0; oy < out.h; ++oy) {
            const auto& a = ty[oy];
            const T* r0 = src + static_cast<std::size_t>(a.i0) * x.w();
            const T* r1 = src + static_cast<std::size_t>(a.i1) * x.w();
            const T ly = static_cast<T>(a.lambda);
            for (int ox = 0; ox < out.w; ++ox) {
                const auto& b = tx[ox];
                const T lx = static_cast<T>(b.lambda);
                const T top = r0[b.i0] * (T(1) - lx) + r0[b.i1] * lx;
                const T bot = r1[b.i0] * (T(1) - lx) + r1[b.i1] * lx;
                dst[static_cast<std::size_t>(oy) * out.w + ox] = top * (T(1) - ly) + bot * ly;
            }
        }
    }
}

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& gy, int factor, const Shape& in, Tensor<T>& gx)
{
    if (gy.shape() != Shape{in.n, in.c, in.h * factor, in.w * factor})
        throw ArgumentError("upsample backward: bad grad shape " + gy.shape().str());
    if (gx.shape() != in) gx = Tensor<T>(in);
    gx.zero();
    const auto ty = bilinear_taps(in.h, factor);
    const auto tx = bilinear_taps(in.w, factor);
    const int planes = in.n * in.c;
    const int ow = in.w * factor;

#pragma omp parallel for schedule(static)
    for (int pl = 0; pl < planes; ++pl) {
        const T* g = gy.data() + static_cast<std::size_t>(pl) * gy.shape().plane();
        T* dst = gx.data() + static_cast<std::size_t>(pl) * in.plane();
        for (int oy = 0; oy < in.h * factor; ++oy) {
            const auto& a = ty[oy];
            T* r0 = dst + static_cast<std::size_t>(a.i0) * in.w;
            T* r1 = dst + static_cast<std::size_t>(a.i1) * in.w;
            const T ly = static_cast<T>(a.lambda);
            for (int ox = 0; ox < ow; ++ox) {
                const auto& b = tx[ox];
                const T lx = static_cast<T>(b.lambda);
                const T v = g[static_cast<std::size_t>(oy) * ow + ox];
                const T top = v * (T(1) - ly);
                const T bot = v * ly;
                r0[b.i0] += top * (T(1) - lx);
                r0[b.i1] += top * lx;
                r1[b.i0] += bot * (T(1) - lx);
                r1[b.i1] += bot * lx;
            }
        }
    }
}

#define MSA_INSTANTIATE_RESAMPLE(T)                                                                           \
    template void maxpool_forward<T>(const Tensor<T>&, int, Tensor<T>&, std::vector<std::uint32_t>&);          \
    template void maxpool_backward<T>(const Tensor<T>&, std::span<const std::uint32_t>, const Shape&,         \
                                      Tensor<T>&);                                                              \
    template void upsample_bilinear_forward<T>(const Tensor<T>&, int, Tensor<T>&);                              \
    template void upsample_bilinear_backward<T>(const Tensor<T>&, int, const Shape&, Tensor<T>&);

MSA_INSTANTIATE_RESAMPLE(float)
MSA_INSTANTIATE_RESAMPLE(double)

#undef MSA_INSTANTIATE_RESAMPLE

}  // namespace msa::kernels
