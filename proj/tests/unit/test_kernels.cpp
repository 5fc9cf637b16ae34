#include <gtest/gtest.h>

#include <vector>

#include "msa/kernels/gemm.hpp"
#include "msa/kernels/ops.hpp"
#include "msa/kernels/parallel.hpp"
#include "msa/kernels/reference.hpp"
#include "test_util.hpp"

using namespace msa;
using msa::test::max_abs_diff;
using msa::test::random_tensor;
namespace ref = msa::kernels::reference;

namespace {

struct ConvCase {
    int n, cin, cout, h, w, k, dilation;
};

const std::vector<ConvCase> kConvCases = {
    {1, 1, 1, 4, 4, 3, 1},   {2, 3, 5, 7, 9, 3, 1},  {1, 4, 6, 16, 16, 3, 2}, {2, 2, 3, 8, 8, 3, 4},
    {1, 6, 4, 5, 5, 1, 1},   {1, 3, 2, 33, 40, 3, 8}, {3, 8, 8, 12, 12, 3, 1}, {1, 5, 7, 48, 48, 3, 1},
};

}  // namespace

TEST(Gemm, MatchesNaiveProduct)
{
    const int m = 13, n = 300, k = 37;
    auto a = random_tensor<double>({1, 1, m, k}, 1);
    auto b = random_tensor<double>({1, 1, k, n}, 2);
    auto bt = random_tensor<double>({1, 1, n, k}, 3);
    std::vector<double> c(m * n, 0.5), c2(m * n, 0.5);
    kernels::gemm_nn(m, n, k, a.data(), k, b.data(), n, c.data(), n, true);
    kernels::gemm_nt(m, n, k, a.data(), k, bt.data(), k, c2.data(), n, false);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.5, s2 = 0.0;
            for (int p = 0; p < k; ++p) {
                s += a[i * k + p] * b[p * n + j];
                s2 += a[i * k + p] * bt[j * k + p];
            }
            EXPECT_NEAR(c[i * n + j], s, 1e-12);
            EXPECT_NEAR(c2[i * n + j], s2, 1e-12);
        }
}

TEST(Conv, ForwardMatchesReference)
{
    for (const auto& cs : kConvCases) {
        auto x = random_tensor<double>({cs.n, cs.cin, cs.h, cs.w}, 10);
        auto wt = random_tensor<double>({cs.cout, cs.cin, cs.k, cs.k}, 11);
        auto b = random_tensor<double>({1, cs.cout, 1, 1}, 12);
        Tensor<double> y, yr;
        kernels::conv2d_forward<double>(x, wt, b.span(), cs.dilation, y);
        ref::conv2d_forward<double>(x, wt, b.span(), cs.dilation, yr);
        ASSERT_EQ(y.shape(), yr.shape());
        EXPECT_LT(max_abs_diff(y, yr), 1e-12) << "case k=" << cs.k << " d=" << cs.dilation;
    }
}

TEST(Conv, BackwardInputMatchesReference)
{
    for (const auto& cs : kConvCases) {
        auto gy = random_tensor<double>({cs.n, cs.cout, cs.h, cs.w}, 20);
        auto wt = random_tensor<double>({cs.cout, cs.cin, cs.k, cs.k}, 21);
        Tensor<double> gx, gxr;
        kernels::conv2d_backward_input<double>(gy, wt, cs.dilation, gx);
        ref::conv2d_backward_input<double>(gy, wt, cs.dilation, gxr);
        ASSERT_EQ(gx.shape(), gxr.shape());
        EXPECT_LT(max_abs_diff(gx, gxr), 1e-12);
    }
}

TEST(Conv, BackwardWeightMatchesReferenceInBothModes)
{
    for (bool det : {true, false}) {
        kernels::set_deterministic(det);
        for (const auto& cs : kConvCases) {
            auto x = random_tensor<double>({cs.n, cs.cin, cs.h, cs.w}, 30);
            auto gy = random_tensor<double>({cs.n, cs.cout, cs.h, cs.w}, 31);
            Tensor<double> gw(cs.cout, cs.cin, cs.k, cs.k, 0.25), gwr(cs.cout, cs.cin, cs.k, cs.k, 0.25);
            std::vector<double> gb(cs.cout, 1.0), gbr(cs.cout, 1.0);
            kernels::conv2d_backward_weight<double>(x, gy, cs.dilation, gw, gb);
            ref::conv2d_backward_weight<double>(x, gy, cs.dilation, gwr, gbr);
            EXPECT_LT(max_abs_diff(gw, gwr), 1e-10);
            for (int i = 0; i < cs.cout; ++i) EXPECT_NEAR(gb[i], gbr[i], 1e-10);
        }
    }
    kernels::set_deterministic(true);
}

TEST(Conv, AdjointIdentity)
{
    // <conv(x), g> == <x, conv^T(g)>
    auto x = random_tensor<double>({2, 3, 10, 11}, 40);
    auto g = random_tensor<double>({2, 4, 10, 11}, 41);
    auto wt = random_tensor<double>({4, 3, 3, 3}, 42);
    Tensor<double> y, gx;
    kernels::conv2d_forward<double>(x, wt, {}, 2, y);
    kernels::conv2d_backward_input<double>(g, wt, 2, gx);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * gx[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
}

TEST(Conv, FloatForwardIsBitwiseRepeatable)
{
    auto x = random_tensor<float>({2, 8, 40, 40}, 50);
    auto wt = random_tensor<float>({8, 8, 3, 3}, 51);
    Tensor<float> y1, y2;
    kernels::conv2d_forward<float>(x, wt, {}, 1, y1);
    kernels::conv2d_forward<float>(x, wt, {}, 1, y2);
    EXPECT_EQ(max_abs_diff(y1, y2), 0.0);
}

TEST(Resample, MaxPoolMatchesReferenceAndPicksFirstMax)
{
    auto x = random_tensor<double>({2, 3, 8, 12}, 60);
    Tensor<double> y, yr;
    std::vector<std::uint32_t> am, amr;
    kernels::maxpool_forward<double>(x, 4, y, am);
    ref::maxpool_forward<double>(x, 4, yr, amr);
    EXPECT_EQ(max_abs_diff(y, yr), 0.0);
    EXPECT_EQ(am, amr);

    Tensor<double> flat(1, 1, 2, 2, 1.0);
    kernels::maxpool_forward<double>(flat, 2, y, am);
    ASSERT_EQ(am.size(), 1u);
    EXPECT_EQ(am[0], 0u);

    Tensor<double> gy(y.shape(), 3.0), gx;
    kernels::maxpool_backward<double>(gy, am, flat.shape(), gx);
    EXPECT_EQ(gx[0], 3.0);
    EXPECT_EQ(gx[1] + gx[2] + gx[3], 0.0);
}

TEST(Resample, BilinearMatchesReference)
{
    for (int f : {2, 4, 8}) {
        auto x = random_tensor<double>({2, 3, 5, 7}, 70 + f);
        Tensor<double> y, yr;
        kernels::upsample_bilinear_forward<double>(x, f, y);
        ref::upsample_bilinear_forward<double>(x, f, yr);
        ASSERT_EQ(y.shape(), (Shape{2, 3, 5 * f, 7 * f}));
        EXPECT_LT(max_abs_diff(y, yr), 1e-14);

        auto gy = random_tensor<double>(y.shape(), 80 + f);
        Tensor<double> gx, gxr;
        kernels::upsample_bilinear_backward<double>(gy, f, x.shape(), gx);
        ref::upsample_bilinear_backward<double>(gy, f, x.shape(), gxr);
        EXPECT_LT(max_abs_diff(gx, gxr), 1e-12);
    }
}

TEST(Resample, BilinearPreservesConstantsAndHalfPixelCenters)
{
    Tensor<double> c(1, 1, 3, 3, 2.5), y;
    kernels::upsample_bilinear_forward<double>(c, 2, y);
    for (double v : y.span()) EXPECT_DOUBLE_EQ(v, 2.5);

    // 1-D ramp [0, 1], factor 2: outputs at source coords -0.25, 0.25, 0.75, 1.25 -> clamp.
    Tensor<double> r(1, 1, 1, 2);
    r[1] = 1.0;
    kernels::upsample_bilinear_forward<double>(r, 2, y);
    EXPECT_DOUBLE_EQ(y(0, 0, 0, 0), 0.0);
    EXPECT_DOUBLE_EQ(y(0, 0, 0, 1), 0.25);
    EXPECT_DOUBLE_EQ(y(0, 0, 0, 2), 0.75);
    EXPECT_DOUBLE_EQ(y(0, 0, 0, 3), 1.0);
}

TEST(GroupNorm, MatchesReference)
{
    auto x = random_tensor<double>({2, 8, 6, 5}, 90);
    auto gamma = random_tensor<double>({1, 8, 1, 1}, 91, 0.5, 1.5);
    auto beta = random_tensor<double>({1, 8, 1, 1}, 92);
    Tensor<double> y, yr;
    kernels::GroupNormStats<double> st, str;
    kernels::group_norm_forward<double>(x, 4, gamma.span(), beta.span(), 1e-5, y, st);
    ref::group_norm_forward<double>(x, 4, gamma.span(), beta.span(), 1e-5, yr, str);
    EXPECT_LT(max_abs_diff(y, yr), 1e-12);

    auto gy = random_tensor<double>(x.shape(), 93);
    Tensor<double> gx, gxr;
    std::vector<double> gg(8, 0.0), gb(8, 0.0), ggr(8, 0.0), gbr(8, 0.0);
    kernels::group_norm_backward<double>(gy, x, st, 4, gamma.span(), gx, gg, gb);
    ref::group_norm_backward<double>(gy, x, str, 4, gamma.span(), gxr, ggr, gbr);
    EXPECT_LT(max_abs_diff(gx, gxr), 1e-11);
    for (int c = 0; c < 8; ++c) {
        EXPECT_NEAR(gg[c], ggr[c], 1e-11);
        EXPECT_NEAR(gb[c], gbr[c], 1e-11);
    }
}

TEST(GroupNorm, OutputHasZeroMeanUnitVariancePerGroup)
{
    auto x = random_tensor<double>({1, 4, 8, 8}, 95, -3.0, 7.0);
    std::vector<double> gamma(4, 1.0), beta(4, 0.0);
    Tensor<double> y;
    kernels::GroupNormStats<double> st;
    kernels::group_norm_forward<double>(x, 2, gamma, beta, 1e-5, y, st);
    for (int g = 0; g < 2; ++g) {
        double s = 0, s2 = 0;
        for (int c = 2 * g; c < 2 * g + 2; ++c)
            for (int i = 0; i < 64; ++i) {
                s += y.plane(0, c)[i];
                s2 += y.plane(0, c)[i] * y.plane(0, c)[i];
            }
        EXPECT_NEAR(s / 128, 0.0, 1e-12);
        EXPECT_NEAR(s2 / 128, 1.0, 1e-4);
    }
}
