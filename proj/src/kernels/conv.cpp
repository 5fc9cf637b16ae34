#include <algorithm>
#include <cstddef>
#include <vector>

#include "msa/kernels/gemm.hpp"
#include "msa/kernels/ops.hpp"
#include "msa/kernels/parallel.hpp"

namespace msa::kernels {

namespace {

// Pixels per im2col panel. Fixed, so the work split (and therefore every
// floating-point summation order) does not depend on the thread count.
constexpr int kPanel = 1024;

struct ConvDims {
    int n, cin, cout, h, w, k, dilation, pad;
    std::size_t hw() const { return static_cast<std::size_t>(h) * w; }
    int rows() const { return cin * k * k; }
};

template <typename T>
ConvDims check_conv(const Shape& x, const Tensor<T>& weight, int dilation)
{
    const Shape& ws = weight.shape();
    if (ws.h != ws.w || ws.h % 2 == 0) throw ArgumentError("conv kernel must be odd and square, got " + ws.str());
    if (ws.c != x.c) throw ArgumentError("conv input channels " + std::to_string(x.c) + " != weight " + ws.str());
    if (dilation < 1) throw ArgumentError("conv dilation must be >= 1");
    return {x.n, x.c, ws.n, x.h, x.w, ws.h, dilation, dilation * (ws.h - 1) / 2};
}

// Column panel for output pixels [p0, p0 + len) of one image: rows are (ci, ky, kx).
template <typename T>
void im2col_panel(const T* img, const ConvDims& d, int p0, int len, T* col)
{
    const int kk = d.k * d.k;
    for (int r = 0; r < d.rows(); ++r) {
        const int ci = r / kk;
        const int ky = (r % kk) / d.k;
        const int kx = r % d.k;
        const int dy = ky * d.dilation - d.pad;
        const int dx = kx * d.dilation - d.pad;
        const T* src = img + static_cast<std::size_t>(ci) * d.hw();
        T* dst = col + static_cast<std::size_t>(r) * len;
        int p = p0;
        const int end = p0 + len;
        while (p < end) {
            const int oy = p / d.w;
            const int ox0 = p % d.w;
            const int run = std::min(end - p, d.w - ox0);
            const int iy = oy + dy;
            T* out = dst + (p - p0);
            if (iy < 0 || iy >= d.h) {
                std::fill_n(out, run, T(0));
            } else {
                const T* srow = src + static_cast<std::size_t>(iy) * d.w;
                for (int t = 0; t < run; ++t) {
                    const int ix = ox0 + t + dx;
                    out[t] = (ix >= 0 && ix < d.w) ? srow[ix] : T(0);
                }
            }
            p += run;
        }
    }
}

}  // namespace

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, int dilation,
                    Tensor<T>& y)
{
    const ConvDims d = check_conv(x.shape(), weight, dilation);
    if (!bias.empty() && static_cast<int>(bias.size()) != d.cout) throw ArgumentError("conv bias size mismatch");
    if (y.shape() != Shape{d.n, d.cout, d.h, d.w}) y = Tensor<T>(d.n, d.cout, d.h, d.w);

    const int hw = static_cast<int>(d.hw());
    const int panels = (hw + kPanel - 1) / kPanel;
    const bool pointwise = d.k == 1;
    const int total = d.n * panels;

#pragma omp parallel
    {
        std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(d.rows()) * std::min(kPanel, hw));
#pragma omp for schedule(static)
        for (int job = 0; job < total; ++job) {
            const int b = job / panels;
            const int p0 = (job % panels) * kPanel;
            const int len = std::min(kPanel, hw - p0);
            const T* img = x.plane(b, 0);
            T* out = y.plane(b, 0) + p0;
            if (pointwise) {
                gemm_nn(d.cout, len, d.cin, weight.data(), d.rows(), img + p0, hw, out, hw, false);
            } else {
                im2col_panel(img, d, p0, len, col.data());
                gemm_nn(d.cout, len, d.rows(), weight.data(), d.rows(), col.data(), len, out, hw, false);
            }
            if (!bias.empty()) {
                for (int co = 0; co < d.cout; ++co) {
                    T* o = out + static_cast<std::size_t>(co) * hw;
                    const T bv = bias[co];
#pragma omp simd
                    for (int t = 0; t < len; ++t) o[t] += bv;
                }
            }
        }
    }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& weight, int dilation, Tensor<T>& gx)
{
    // The adjoint of a stride-1 "same" convolution is the same convolution with
    // the kernel rotated 180 degrees and its channel axes swapped.
    const Shape& ws = weight.shape();
    if (ws.n != gy.c()) throw ArgumentError("conv backward: grad channels do not match weight");
    Tensor<T> flipped(ws.c, ws.n, ws.h, ws.w);
    const int k = ws.h;
    for (int co = 0; co < ws.n; ++co)
        for (int ci = 0; ci < ws.c; ++ci)
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) flipped(ci, co, k - 1 - ky, k - 1 - kx) = weight(co, ci, ky, kx);
    conv2d_forward<T>(gy, flipped, {}, dilation, gx);
}

template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& gy, int dilation, Tensor<T>& gw, std::span<T> gb)
{
    const ConvDims d = check_conv(x.shape(), gw, dilation);
    if (gy.shape() != Shape{d.n, d.cout, d.h, d.w}) throw ArgumentError("conv backward: bad grad shape");
    const int hw = static_cast<int>(d.hw());
    const int panels = (hw + kPanel - 1) / kPanel;
    const bool pointwise = d.k == 1;
    const int rows = d.rows();

    if (!gb.empty()) {
        for (int b = 0; b < d.n; ++b)
            for (int co = 0; co < d.cout; ++co) {
                const T* g = gy.plane(b, co);
                T s = T(0);
#pragma omp simd reduction(+ : s)
                for (int t = 0; t < hw; ++t) s += g[t];
                gb[co] += s;
            }
    }

    if (deterministic() || max_threads() == 1) {
        std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(rows) * std::min(kPanel, hw));
        for (int b = 0; b < d.n; ++b) {
            for (int pi = 0; pi < panels; ++pi) {
                const int p0 = pi * kPanel;
                const int len = std::min(kPanel, hw - p0);
                const T* img = x.plane(b, 0);
                const T* g = gy.plane(b, 0) + p0;
                if (pointwise) {
                    gemm_nt(d.cout, rows, len, g, hw, img + p0, hw, gw.data(), rows, true);
                } else {
                    im2col_panel(img, d, p0, len, col.data());
                    gemm_nt(d.cout, rows, len, g, hw, col.data(), len, gw.data(), rows, true);
                }
            }
        }
        return;
    }

    // Fast mode: per-thread partial gradients merged in completion order.
    const int total = d.n * panels;
#pragma omp parallel
    {
        std::vector<T> col(pointwise ? 0 : static_cast<std::size_t>(rows) * std::min(kPanel, hw));
        std::vector<T> local(gw.size(), T(0));
#pragma omp for schedule(dynamic)
        for (int job = 0; job < total; ++job) {
            const int b = job / panels;
            const int p0 = (job % panels) * kPanel;
            const int len = std::min(kPanel, hw - p0);
            const T* img = x.plane(b, 0);
            const T* g = gy.plane(b, 0) + p0;
            for (int co = 0; co < d.cout; ++co) {
                const T* grow = g + static_cast<std::size_t>(co) * hw;
                if (pointwise) {
                    for (int r = 0; r < rows; ++r) {
                        const T* src = img + static_cast<std::size_t>(r) * hw + p0;
                        T s = T(0);
                        for (int t = 0; t < len; ++t) s += grow[t] * src[t];
                        local[static_cast<std::size_t>(co) * rows + r] += s;
                    }
                }
            }
            if (!pointwise) {
                im2col_panel(img, d, p0, len, col.data());
                for (int co = 0; co < d.cout; ++co) {
                    const T* grow = g + static_cast<std::size_t>(co) * hw;
                    for (int r = 0; r < rows; ++r) {
                        const T* src = col.data() + static_cast<std::size_t>(r) * len;
                        T s = T(0);
#pragma omp simd reduction(+ : s)
                        for (int t = 0; t < len; ++t) s += grow[t] * src[t];
                        local[static_cast<std::size_t>(co) * rows + r] += s;
                    }
                }
            }
        }
#pragma omp critical(msa_conv_weight_merge)
        for (std::size_t i = 0; i < local.size(); ++i) gw[i] += local[i];
    }
}

#define MSA_INSTANTIATE_CONV(T)                                                                              \
    template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int, Tensor<T>&); \
    template void conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&, int, Tensor<T>&);              \
    template void conv2d_backward_weight<T>(const Tensor<T>&, const Tensor<T>&, int, Tensor<T>&, std::span<T>);

MSA_INSTANTIATE_CONV(float)
MSA_INSTANTIATE_CONV(double)

#undef MSA_INSTANTIATE_CONV

}  // namespace msa::kernels
