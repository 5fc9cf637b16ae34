#include "msa/kernels/reference.hpp"

#include <cmath>

namespace msa::kernels::reference {

template <typename T>
void conv2d_forward(const Tensor<T>& x, const Tensor<T>& weight, std::span<const T> bias, int dilation, Tensor<T>& y)
{
    const Shape& ws = weight.shape();
    if (ws.c != x.c() || ws.h != ws.w || ws.h % 2 == 0) throw ArgumentError("reference conv: bad weight shape");
    const int k = ws.h;
    const int pad = dilation * (k - 1) / 2;
    y = Tensor<T>(x.n(), ws.n, x.h(), x.w());
    for (int b = 0; b < x.n(); ++b)
        for (int co = 0; co < ws.n; ++co)
            for (int oy = 0; oy < x.h(); ++oy)
                for (int ox = 0; ox < x.w(); ++ox) {
                    T acc = bias.empty() ? T(0) : bias[co];
                    for (int ci = 0; ci < ws.c; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy - pad + ky * dilation;
                            if (iy < 0 || iy >= x.h()) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox - pad + kx * dilation;
                                if (ix < 0 || ix >= x.w()) continue;
                                acc += weight(co, ci, ky, kx) * x(b, ci, iy, ix);
                            }
                        }
                    y(b, co, oy, ox) = acc;
                }
}

template <typename T>
void conv2d_backward_input(const Tensor<T>& gy, const Tensor<T>& weight, int dilation, Tensor<T>& gx)
{
    const Shape& ws = weight.shape();
    const int k = ws.h;
    const int pad = dilation * (k - 1) / 2;
    gx = Tensor<T>(gy.n(), ws.c, gy.h(), gy.w());
    for (int b = 0; b < gy.n(); ++b)
        for (int co = 0; co < ws.n; ++co)
            for (int oy = 0; oy < gy.h(); ++oy)
                for (int ox = 0; ox < gy.w(); ++ox) {
                    const T g = gy(b, co, oy, ox);
                    for (int ci = 0; ci < ws.c; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy - pad + ky * dilation;
                            if (iy < 0 || iy >= gy.h()) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox - pad + kx * dilation;
                                if (ix < 0 || ix >= gy.w()) continue;
                                gx(b, ci, iy, ix) += weight(co, ci, ky, kx) * g;
                            }
                        }
                }
}

template <typename T>
void conv2d_backward_weight(const Tensor<T>& x, const Tensor<T>& gy, int dilation, Tensor<T>& gw, std::span<T> gb)
{
    const Shape& ws = gw.shape();
    const int k = ws.h;
    const int pad = dilation * (k - 1) / 2;
    for (int b = 0; b < x.n(); ++b)
        for (int co = 0; co < ws.n; ++co)
            for (int oy = 0; oy < x.h(); ++oy)
                for (int ox = 0; ox < x.w(); ++ox) {
                    const T g = gy(b, co, oy, ox);
                    if (!gb.empty()) gb[co] += g;
                    for (int ci = 0; ci < ws.c; ++ci)
                        for (int ky = 0; ky < k; ++ky) {
                            const int iy = oy - pad + ky * dilation;
                            if (iy < 0 || iy >= x.h()) continue;
                            for (int kx = 0; kx < k; ++kx) {
                                const int ix = ox - pad + kx * dilation;
                                if (ix < 0 || ix >= x.w()) continue;
                                gw(co, ci, ky, kx) += g * x(b, ci, iy, ix);
                            }
                        }
                }
}

template <typename T>
void maxpool_forward(const Tensor<T>& x, int factor, Tensor<T>& y, std::vector<std::uint32_t>& argmax)
{
    y = Tensor<T>(x.n(), x.c(), x.h() / factor, x.w() / factor);
    argmax.assign(y.size(), 0);
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < y.h(); ++oy)
                for (int ox = 0; ox < y.w(); ++ox) {
                    std::size_t best = x.offset(b, c, oy * factor, ox * factor);
                    for (int dy = 0; dy < factor; ++dy)
                        for (int dx = 0; dx < factor; ++dx) {
                            const std::size_t i = x.offset(b, c, oy * factor + dy, ox * factor + dx);
                            if (x[i] > x[best]) best = i;
                        }
                    y(b, c, oy, ox) = x[best];
                    argmax[y.offset(b, c, oy, ox)] = static_cast<std::uint32_t>(best);
                }
}

namespace {

// Direct evaluation of the half-pixel bilinear rule for one axis.
void tap(int o, int factor, int in_size, int& i0, int& i1, double& l)
{
    double src = (o + 0.5) / factor - 0.5;
    if (src < 0.0) src = 0.0;
    i0 = std::min(static_cast<int>(std::floor(src)), in_size - 1);
    i1 = std::min(i0 + 1, in_size - 1);
    l = src - i0;
}

}  // namespace

template <typename T>
void upsample_bilinear_forward(const Tensor<T>& x, int factor, Tensor<T>& y)
{
    y = Tensor<T>(x.n(), x.c(), x.h() * factor, x.w() * factor);
    for (int b = 0; b < x.n(); ++b)
        for (int c = 0; c < x.c(); ++c)
            for (int oy = 0; oy < y.h(); ++oy)
                for (int ox = 0; ox < y.w(); ++ox) {
                    int y0, y1, x0, x1;
                    double ly, lx;
                    tap(oy, factor, x.h(), y0, y1, ly);
                    tap(ox, factor, x.w(), x0, x1, lx);
                    const double v = (1 - ly) * ((1 - lx) * x(b, c, y0, x0) + lx * x(b, c, y0, x1)) +
                                     ly * ((1 - lx) * x(b, c, y1, x0) + lx * x(b, c, y1, x1));
                    y(b, c, oy, ox) = static_cast<T>(v);
                }
}

template <typename T>
void upsample_bilinear_backward(const Tensor<T>& gy, int factor, const Shape& in, Tensor<T>& gx)
{
    gx = Tensor<T>(in);
    for (int b = 0; b < in.n; ++b)
        for (int c = 0; c < in.c; ++c)
            for (int oy = 0; oy < gy.h(); ++oy)
                for (int ox = 0; ox < gy.w(); ++ox) {
                    int y0, y1, x0, x1;
                    double ly, lx;
                    tap(oy, factor, in.h, y0, y1, ly);
                    tap(ox, factor, in.w, x0, x1, lx);
                    const double g = gy(b, c, oy, ox);
                    gx(b, c, y0, x0) += static_cast<T>(g * (1 - ly) * (1 - lx));
                    gx(b, c, y0, x1) += static_cast<T>(g * (1 - ly) * lx);
                    gx(b, c, y1, x0) += static_cast<T>(g * ly * (1 - lx));
                    gx(b, c, y1, x1) += static_cast<T>(g * ly * lx);
                }
}

template <typename T>
void group_norm_forward(const Tensor<T>& x, int groups, std::span<const T> gamma, std::span<const T> beta, T eps,
                        Tensor<T>& y, GroupNormStats<T>& stats)
{
    const int cpg = x.c() / groups;
    y = Tensor<T>(x.shape());
    stats.mean.assign(static_cast<std::size_t>(x.n()) * groups, T(0));
    stats.rstd.assign(static_cast<std::size_t>(x.n()) * groups, T(0));
    for (int b = 0; b < x.n(); ++b)
        for (int g = 0; g < groups; ++g) {
            long double sum = 0, sq = 0;
            const long double count = static_cast<long double>(cpg) * x.h() * x.w();
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (int i = 0; i < x.h(); ++i)
                    for (int j = 0; j < x.w(); ++j) sum += x(b, c, i, j);
            const long double mean = sum / count;
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (int i = 0; i < x.h(); ++i)
                    for (int j = 0; j < x.w(); ++j) sq += (x(b, c, i, j) - mean) * (x(b, c, i, j) - mean);
            const long double rstd = 1.0L / std::sqrt(sq / count + static_cast<long double>(eps));
            stats.mean[static_cast<std::size_t>(b) * groups + g] = static_cast<T>(mean);
            stats.rstd[static_cast<std::size_t>(b) * groups + g] = static_cast<T>(rstd);
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (int i = 0; i < x.h(); ++i)
                    for (int j = 0; j < x.w(); ++j)
                        y(b, c, i, j) = static_cast<T>((x(b, c, i, j) - mean) * rstd * gamma[c] + beta[c]);
        }
}

template <typename T>
void group_norm_backward(const Tensor<T>& gy, const Tensor<T>& x, const GroupNormStats<T>& stats, int groups,
                         std::span<const T> gamma, Tensor<T>& gx, std::span<T> ggamma, std::span<T> gbeta)
{
    const int cpg = x.c() / groups;
    gx = Tensor<T>(x.shape());
    const long double count = static_cast<long double>(cpg) * x.h() * x.w();
    for (int b = 0; b < x.n(); ++b)
        for (int g = 0; g < groups; ++g) {
            const long double m = stats.mean[static_cast<std::size_t>(b) * groups + g];
            const long double r = stats.rstd[static_cast<std::size_t>(b) * groups + g];
            long double sd = 0, sdx = 0;
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (int i = 0; i < x.h(); ++i)
                    for (int j = 0; j < x.w(); ++j) {
                        const long double xhat = (x(b, c, i, j) - m) * r;
                        const long double d = static_cast<long double>(gy(b, c, i, j)) * gamma[c];
                        sd += d;
                        sdx += d * xhat;
                        ggamma[c] += static_cast<T>(gy(b, c, i, j) * xhat);
                        gbeta[c] += gy(b, c, i, j);
                    }
            for (int c = g * cpg; c < (g + 1) * cpg; ++c)
                for (int i = 0; i < x.h(); ++i)
                    for (int j = 0; j < x.w(); ++j) {
                        const long double xhat = (x(b, c, i, j) - m) * r;
                        const long double d = static_cast<long double>(gy(b, c, i, j)) * gamma[c];
                        gx(b, c, i, j) = static_cast<T>(r * (d - sd / count - xhat * sdx / count));
                    }
        }
}

#define MSA_INSTANTIATE_REFERENCE(T)                                                                              \
    template void conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, std::span<const T>, int, Tensor<T>&);     \
    template void conv2d_backward_input<T>(const Tensor<T>&, const Tensor<T>&, int, Tensor<T>&);                  \
    template void conv2d_backward_weight<T>(const Tensor<T>&, const Tensor<T>&, int, Tensor<T>&, std::span<T>);   \
    template void maxpool_forward<T>(const Tensor<T>&, int, Tensor<T>&, std::vector<std::uint32_t>&);             \
    template void upsample_bilinear_forward<T>(const Tensor<T>&, int, Tensor<T>&);                                 \
    template void upsample_bilinear_backward<T>(const Tensor<T>&, int, const Shape&, Tensor<T>&);                  \
    template void group_norm_forward<T>(const Tensor<T>&, int, std::span<const T>, std::span<const T>, T,          \
                                        Tensor<T>&, GroupNormStats<T>&);                                           \
    template void group_norm_backward<T>(const Tensor<T>&, const Tensor<T>&, const GroupNormStats<T>&, int,        \
                                         std::span<const T>, Tensor<T>&, std::span<T>, std::span<T>);

MSA_INSTANTIATE_REFERENCE(float)
MSA_INSTANTIATE_REFERENCE(double)

#undef MSA_INSTANTIATE_REFERENCE

}  // namespace msa::kernels::reference
