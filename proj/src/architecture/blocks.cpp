#include "msa/architecture/blocks.hpp"

namespace msa {

using nn::join_name;

// ---------------------------------------------------------------- MEncoderBlock

template <typename T>
MEncoderBlock<T>::MEncoderBlock(int in_channels, int out_channels, int se_reduction)
    : width_(out_channels),
      stages_{nn::ConvBlock<T>(in_channels, out_channels), nn::ConvBlock<T>(out_channels, out_channels),
              nn::ConvBlock<T>(out_channels, out_channels)},
      se_(3 * out_channels, se_reduction),
      proj_(3 * out_channels, out_channels)
{
}

template <typename T>
Tensor<T> MEncoderBlock<T>::forward(const Tensor<T>& x)
{
    const Tensor<T> o1 = stages_[0].forward(x);
    const Tensor<T> o2 = stages_[1].forward(o1);
    const Tensor<T> o3 = stages_[2].forward(o2);
    const Tensor<T>* parts[] = {&o1, &o2, &o3};
    Tensor<T> cat = msa::concat_channels<T>(parts);
    concat_channels_ = cat.c();
    return proj_.forward(se_.forward(cat));
}

template <typename T>
Tensor<T> MEncoderBlock<T>::backward(const Tensor<T>& grad_out)
{
    const Tensor<T> gcat = se_.backward(proj_.backward(grad_out));
    Tensor<T> g3 = slice_channels(gcat, 2 * width_, width_);
    Tensor<T> g2 = slice_channels(gcat, width_, width_);
    Tensor<T> g1 = slice_channels(gcat, 0, width_);
    g2 += stages_[2].backward(g3);
    g1 += stages_[1].backward(g2);
    return stages_[0].backward(g1);
}

template <typename T>
void MEncoderBlock<T>::collect(nn::ParameterList<T>& out, const std::string& prefix)
{
    for (int i = 0; i < 3; ++i) stages_[i].collect(out, join_name(prefix, "conv" + std::to_string(i + 1)));
    se_.collect(out, join_name(prefix, "se"));
    proj_.collect(out, join_name(prefix, "proj"));
}

template <typename T>
void MEncoderBlock<T>::init(Rng& rng)
{
    for (auto& s : stages_) s.init(rng);
    se_.init(rng);
    proj_.init(rng);
}

// ---------------------------------------------------------------- DilatedResidualBlock

template <typename T>
DilatedResidualBlock<T>::DilatedResidualBlock(int channels, std::array<int, 3> dilations)
    : dilations_(dilations),
      stages_{nn::ConvBlock<T>(channels, channels, 3, dilations[0]),
              nn::ConvBlock<T>(channels, channels, 3, dilations[1]),
              nn::ConvBlock<T>(channels, channels, 3, dilations[2])}
{
}

template <typename T>
Tensor<T> DilatedResidualBlock<T>::forward(const Tensor<T>& x)
{
    Tensor<T> y = stages_[2].forward(stages_[1].forward(stages_[0].forward(x)));
    y += x;
    return y;
}

template <typename T>
Tensor<T> DilatedResidualBlock<T>::backward(const Tensor<T>& grad_out)
{
    Tensor<T> gx = stages_[0].backward(stages_[1].backward(stages_[2].backward(grad_out)));
    gx += grad_out;
    return gx;
}

template <typename T>
void DilatedResidualBlock<T>::collect(nn::ParameterList<T>& out, const std::string& prefix)
{
    for (int i = 0; i < 3; ++i) stages_[i].collect(out, join_name(prefix, "conv" + std::to_string(i + 1)));
}

template <typename T>
void DilatedResidualBlock<T>::init(Rng& rng)
{
    for (auto& s : stages_) s.init(rng);
}

// ---------------------------------------------------------------- Aspp

template <typename T>
Aspp<T>::Aspp(int channels)
    : channels_(channels),
      rate4_(channels, channels, 3, kRates[0]),
      rate8_(channels, channels, 3, kRates[1]),
      pool_conv_(channels, channels, 1),
      proj_(3 * channels, channels, 1)
{
}

template <typename T>
Tensor<T> Aspp<T>::forward(const Tensor<T>& x)
{
    input_shape_ = x.shape();
    const Tensor<T> a = rate4_.forward(x);
    const Tensor<T> b = rate8_.forward(x);

    const std::size_t plane = x.shape().plane();
    Tensor<T> pooled(x.n(), x.c(), 1, 1);
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) {
            const T* src = x.plane(n, c);
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += src[i];
            pooled(n, c, 0, 0) = static_cast<T>(s / static_cast<double>(plane));
        }
    const Tensor<T> g = pool_relu_.forward(pool_conv_.forward(pooled));
    Tensor<T> broadcast(x.n(), x.c(), x.h(), x.w());
    for (int n = 0; n < x.n(); ++n)
        for (int c = 0; c < x.c(); ++c) std::fill_n(broadcast.plane(n, c), plane, g(n, c, 0, 0));

    const Tensor<T>* parts[] = {&a, &b, &broadcast};
    return proj_.forward(msa::concat_channels<T>(parts));
}

template <typename T>
Tensor<T> Aspp<T>::backward(const Tensor<T>& grad_out)
{
    const Tensor<T> gcat = proj_.backward(grad_out);
    Tensor<T> gx = rate4_.backward(slice_channels(gcat, 0, channels_));
    gx += rate8_.backward(slice_channels(gcat, channels_, channels_));

    const Tensor<T> gb = slice_channels(gcat, 2 * channels_, channels_);
    const std::size_t plane = input_shape_.plane();
    Tensor<T> gpool(input_shape_.n, channels_, 1, 1);
    for (int n = 0; n < input_shape_.n; ++n)
        for (int c = 0; c < channels_; ++c) {
            const T* src = gb.plane(n, c);
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += src[i];
            gpool(n, c, 0, 0) = static_cast<T>(s);
        }
    const Tensor<T> gpooled = pool_conv_.backward(pool_relu_.backward(gpool));
    for (int n = 0; n < input_shape_.n; ++n)
        for (int c = 0; c < channels_; ++c) {
            const T v = gpooled(n, c, 0, 0) / static_cast<T>(plane);
            T* dst = gx.plane(n, c);
            for (std::size_t i = 0; i < plane; ++i) dst[i] += v;
        }
    return gx;
}

template <typename T>
void Aspp<T>::collect(nn::ParameterList<T>& out, const std::string& prefix)
{
    rate4_.collect(out, join_name(prefix, "rate4"));
    rate8_.collect(out, join_name(prefix, "rate8"));
    pool_conv_.collect(out, join_name(prefix, "pool.conv"));
    proj_.collect(out, join_name(prefix, "proj"));
}

template <typename T>
void Aspp<T>::init(Rng& rng)
{
    rate4_.init(rng);
    rate8_.init(rng);
    pool_conv_.init(rng);
    proj_.init(rng);
}

// ---------------------------------------------------------------- MsdBottleneck

template <typename T>
MsdBottleneck<T>::MsdBottleneck(int channels)
    : blocks_{DilatedResidualBlock<T>(channels, kPatterns[0]), DilatedResidualBlock<T>(channels, kPatterns[1]),
              DilatedResidualBlock<T>(channels, kPatterns[2])},
      aspp_(channels)
{
}

template <typename T>
Tensor<T> MsdBottleneck<T>::forward(const Tensor<T>& x)
{
    if (x.h() < 2 || x.w() < 2)
        throw ConfigError("dilated bottleneck needs at least 2x2 input, got " + std::to_string(x.h()) + "x" +
                          std::to_string(x.w()));
    Tensor<T> y = x;
    for (auto& b : blocks_) y = b.forward(y);
    return aspp_.forward(y);
}

template <typename T>
Tensor<T> MsdBottleneck<T>::backward(const Tensor<T>& grad_out)
{
    Tensor<T> g = aspp_.backward(grad_out);
    for (int i = 2; i >= 0; --i) g = blocks_[i].backward(g);
    return g;
}

template <typename T>
void MsdBottleneck<T>::collect(nn::ParameterList<T>& out, const std::string& prefix)
{
    for (int i = 0; i < 3; ++i) blocks_[i].collect(out, join_name(prefix, "block" + std::to_string(i + 1)));
    aspp_.collect(out, join_name(prefix, "aspp"));
}

template <typename T>
void MsdBottleneck<T>::init(Rng& rng)
{
    for (auto& b : blocks_) b.init(rng);
    aspp_.init(rng);
}

// ---------------------------------------------------------------- Cafm

template <typename T>
Cafm<T>::Cafm(int in_channels, int out_channels, int se_reduction)
    : width_(out_channels),
      branches_{nn::ConvBlock<T>(in_channels, out_channels, 3, kRates[0]),
                nn::ConvBlock<T>(in_channels, out_channels, 3, kRates[1]),
                nn::ConvBlock<T>(in_channels, out_channels, 3, kRates[2]),
                nn::ConvBlock<T>(in_channels, out_channels, 3, kRates[3])},
      se_(4 * out_channels, se_reduction),
      proj_(4 * out_channels, out_channels)
{
}

template <typename T>
Tensor<T> Cafm<T>::forward(const Tensor<T>& x)
{
    const Tensor<T> b0 = branches_[0].forward(x);
    const Tensor<T> b1 = branches_[1].forward(x);
    const Tensor<T> b2 = branches_[2].forward(x);
    const Tensor<T> b3 = branches_[3].forward(x);
    const Tensor<T>* parts[] = {&b0, &b1, &b2, &b3};
    return proj_.forward(se_.forward(msa::concat_channels<T>(parts)));
}

template <typename T>
Tensor<T> Cafm<T>::backward(const Tensor<T>& grad_out)
{
    const Tensor<T> gcat = se_.backward(proj_.backward(grad_out));
    Tensor<T> gx = branches_[0].backward(slice_channels(gcat, 0, width_));
    for (int i = 1; i < 4; ++i) gx += branches_[i].backward(slice_channels(gcat, i * width_, width_));
    return gx;
}

template <typename T>
void Cafm<T>::collect(nn::ParameterList<T>& out, const std::string& prefix)
{
    for (int i = 0; i < 4; ++i) branches_[i].collect(out, join_name(prefix, "branch_d" + std::to_string(kRates[i])));
    se_.collect(out, join_name(prefix, "se"));
    proj_.collect(out, join_name(prefix, "proj"));
}

template <typename T>
void Cafm<T>::init(Rng& rng)
{
    for (auto& b : branches_) b.init(rng);
    se_.init(rng);
    proj_.init(rng);
}

#define MSA_INSTANTIATE_BLOCKS(T)            \
    template class MEncoderBlock<T>;         \
    template class DilatedResidualBlock<T>;  \
    template class Aspp<T>;                  \
    template class MsdBottleneck<T>;         \
    template class Cafm<T>;

MSA_INSTANTIATE_BLOCKS(float)
MSA_INSTANTIATE_BLOCKS(double)

#undef MSA_INSTANTIATE_BLOCKS

}  // namespace msa
