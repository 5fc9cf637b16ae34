#include <cmath>

#include "msa/kernels/ops.hpp"

namespace msa::kernels {

namespace {

template <typename T>
void check_groups(const Shape& s, int groups, std::size_t gamma_size)
{
    if (groups < 1 || s.c % groups != 0)
        throw ArgumentError("group norm: " + std::to_string(groups) + " groups do not divide " + std::to_string(s.c) +
                            " channels");
    if (gamma_size != static_cast<std::size_t>(s.c)) throw ArgumentError("group norm: affine size mismatch");
}

}  // namespace

template <typename T>
void group_norm_forward(const Tensor<T>& x, int groups, std::span<const T> gamma, std::span<const T> beta, T eps,
                        Tensor<T>& y, GroupNormStats<T>& stats)
{
    const Shape& s = x.shape();
    check_groups<T>(s, groups, gamma.size());
    if (y.shape() != s) y = Tensor<T>(s);
    const int cpg = s.c / groups;
    const std::size_t count = static_cast<std::size_t>(cpg) * s.plane();
    stats.mean.assign(static_cast<std::size_t>(s.n) * groups, T(0));
    stats.rstd.assign(static_cast<std::size_t>(s.n) * groups, T(0));
    const int jobs = s.n * groups;

#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
        const int b = job / groups;
        const int g = job % groups;
        const T* src = x.plane(b, g * cpg);
        // Two-pass in double for a stable variance regardless of T.
        double sum = 0.0;
        for (std::size_t i = 0; i < count; ++i) sum += src[i];
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double d = src[i] - mean;
            sq += d * d;
        }
        const double var = sq / static_cast<double>(count);
        const T m = static_cast<T>(mean);
        const T r = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        stats.mean[job] = m;
        stats.rstd[job] = r;
        for (int ci = 0; ci < cpg; ++ci) {
            const int c = g * cpg + ci;
            const T scale = gamma[c] * r;
            const T shift = beta[c] - m * scale;
            const T* xs = x.plane(b, c);
            T* ys = y.plane(b, c);
#pragma omp simd
            for (std::size_t i = 0; i < s.plane(); ++i) ys[i] = xs[i] * scale + shift;
        }
    }
}

template <typename T>
void group_norm_backward(const Tensor<T>& gy, const Tensor<T>& x, const GroupNormStats<T>& stats, int groups,
                         std::span<const T> gamma, Tensor<T>& gx, std::span<T> ggamma, std::span<T> gbeta)
{
    const Shape& s = x.shape();
    check_groups<T>(s, groups, gamma.size());
    if (gx.shape() != s) gx = Tensor<T>(s);
    const int cpg = s.c / groups;
    const std::size_t plane = s.plane();
    const double count = static_cast<double>(cpg) * static_cast<double>(plane);

    // Affine gradients: reduce over batch in fixed order, parallel over channels.
#pragma omp parallel for schedule(static)
    for (int c = 0; c < s.c; ++c) {
        const int g = c / cpg;
        double dg = 0.0, db = 0.0;
        for (int b = 0; b < s.n; ++b) {
            const T m = stats.mean[static_cast<std::size_t>(b) * groups + g];
            const T r = stats.rstd[static_cast<std::size_t>(b) * groups + g];
            const T* xs = x.plane(b, c);
            const T* gs = gy.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) {
                dg += static_cast<double>(gs[i]) * static_cast<double>((xs[i] - m) * r);
                db += gs[i];
            }
        }
        ggamma[c] += static_cast<T>(dg);
        gbeta[c] += static_cast<T>(db);
    }

    const int jobs = s.n * groups;
#pragma omp parallel for schedule(static)
    for (int job = 0; job < jobs; ++job) {
        const int b = job / groups;
        const int g = job % groups;
        const T m = stats.mean[job];
        const T r = stats.rstd[job];
        // dxhat = gy * gamma; gx = r * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
        double sum_d = 0.0, sum_dx = 0.0;
        for (int ci = 0; ci < cpg; ++ci) {
            const int c = g * cpg + ci;
            const T* xs = x.plane(b, c);
            const T* gs = gy.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = static_cast<double>(gs[i]) * gamma[c];
                sum_d += d;
                sum_dx += d * static_cast<double>((xs[i] - m) * r);
            }
        }
        const T mean_d = static_cast<T>(sum_d / count);
        const T mean_dx = static_cast<T>(sum_dx / count);
        for (int ci = 0; ci < cpg; ++ci) {
            const int c = g * cpg + ci;
            const T* xs = x.plane(b, c);
            const T* gs = gy.plane(b, c);
            T* out = gx.plane(b, c);
            for (std::size_t i = 0; i < plane; ++i) {
                const T xhat = (xs[i] - m) * r;
                out[i] = r * (gs[i] * gamma[c] - mean_d - xhat * mean_dx);
            }
        }
    }
}

#define MSA_INSTANTIATE_NORM(T)                                                                                  \
    template void group_norm_forward<T>(const Tensor<T>&, int, std::span<const T>, std::span<const T>, T,         \
                                        Tensor<T>&, GroupNormStats<T>&);                                          \
    template void group_norm_backward<T>(const Tensor<T>&, const Tensor<T>&, const GroupNormStats<T>&, int,       \
                                         std::span<const T>, Tensor<T>&, std::span<T>, std::span<T>);

MSA_INSTANTIATE_NORM(float)
MSA_INSTANTIATE_NORM(double)

#undef MSA_INSTANTIATE_NORM

}  // namespace msa::kernels
