#include "msa/architecture/network.hpp"

namespace msa {

using nn::join_name;

namespace {

template <typename T>
void accumulate(Tensor<T>& dst, Tensor<T>&& src)
{
    if (dst.empty()) dst = std::move(src);
    else dst += src;
}

}  // namespace

// ---------------------------------------------------------------- DecoderLevel

template <typename T>
DecoderLevel<T>::DecoderLevel(int level, const std::vector<int>& skip_channels,
                              const std::vector<int>& deeper_channels, int decoder_channels, int out_channels)
    : level_(level), skip_widths_(skip_channels), deeper_widths_(deeper_channels)
{
    int cat = 0;
    for (int l = 0; l <= level; ++l) {
        pools_.emplace_back(1 << (level - l));
        cat += skip_widths_.at(static_cast<std::size_t>(l));
    }
    for (std::size_t i = 0; i < deeper_widths_.size(); ++i) {
        ups_.emplace_back(1 << (i + 1));
        deeper_convs_.emplace_back(deeper_widths_[i], decoder_channels);
        cat += decoder_channels;
    }
    fuse_ = nn::ConvBlock<T>(cat, out_channels);
}

template <typename T>
Tensor<T> DecoderLevel<T>::forward(const std::vector<const Tensor<T>*>& skips,
                                   const std::vector<const Tensor<T>*>& deeper)
{
    std::vector<Tensor<T>> parts;
    parts.reserve(skips.size() + deeper.size());
    for (std::size_t l = 0; l < skips.size(); ++l)
        parts.push_back(pools_[l].factor() == 1 ? *skips[l] : pools_[l].forward(*skips[l]));
    for (std::size_t i = 0; i < deeper.size(); ++i)
        parts.push_back(deeper_convs_[i].forward(ups_[i].forward(*deeper[i])));
    std::vector<const Tensor<T>*> ptrs;
    for (const auto& p : parts) ptrs.push_back(&p);
    return fuse_.forward(msa::concat_channels<T>(ptrs));
}

template <typename T>
void DecoderLevel<T>::backward(const Tensor<T>& grad_out, std::vector<Tensor<T>>& skip_grads,
                               std::vector<Tensor<T>>& deeper_grads)
{
    const Tensor<T> gcat = fuse_.backward(grad_out);
    int c0 = 0;
    for (std::size_t l = 0; l < pools_.size(); ++l) {
        Tensor<T> g = slice_channels(gcat, c0, skip_widths_[l]);
        c0 += skip_widths_[l];
        accumulate(skip_grads[l], pools_[l].factor() == 1 ? std::move(g) : pools_[l].backward(g));
    }
    for (std::size_t i = 0; i < deeper_convs_.size(); ++i) {
        const int w = deeper_convs_[i].out_channels();
        Tensor<T> g = ups_[i].backward(deeper_convs_[i].backward(slice_channels(gcat, c0, w)));
        c0 += w;
        accumulate(deeper_grads[i], std::move(g));
    }
}

template <typename T>
void DecoderLevel<T>::collect(nn::ParameterList<T>& out, const std::string& prefix)
{
    for (std::size_t i = 0; i < deeper_convs_.size(); ++i)
        deeper_convs_[i].collect(out, join_name(prefix, "from_dec" + std::to_string(level_ + 1 + static_cast<int>(i))));
    fuse_.collect(out, join_name(prefix, "fuse"));
}

template <typename T>
void DecoderLevel<T>::init(Rng& rng)
{
    for (auto& c : deeper_convs_) c.init(rng);
    fuse_.init(rng);
}

// ---------------------------------------------------------------- Network

template <typename T>
Network<T>::Network(const NetworkConfig& cfg) : cfg_(cfg)
{
    cfg_.validate();
    const auto widths = cfg_.encoder_channels();
    const int depth = cfg_.depth;
    const int dc = cfg_.decoder_channels;

    int cin = cfg_.input_channels;
    for (int l = 0; l < depth; ++l) {
        encoders_.push_back(std::make_unique<MEncoderBlock<T>>(cin, widths[l], cfg_.se_reduction));
        cin = widths[l];
    }
    encoders_.front()->stage(0).conv().set_input_grad(false);
    pools_.assign(static_cast<std::size_t>(depth - 1), nn::MaxPool2d<T>(2));

    const int cb = widths.back();
    if (cfg_.use_msd) bottleneck_ = std::make_unique<MsdBottleneck<T>>(cb);
    else bottleneck_ = std::make_unique<PlainBottleneck<T>>(cb);

    std::vector<int> skip_widths;
    for (int l = 0; l < depth - 1; ++l) {
        if (cfg_.use_cafm) {
            skips_.push_back(std::make_unique<Cafm<T>>(widths[l], dc, cfg_.se_reduction));
            skip_widths.push_back(dc);
        } else {
            skips_.push_back(std::make_unique<nn::Identity<T>>());
            skip_widths.push_back(widths[l]);
        }
    }

    const int out_channels = depth * dc;
    decoders_.resize(static_cast<std::size_t>(depth - 1));
    for (int d = depth - 2; d >= 0; --d) {
        std::vector<int> sk(skip_widths.begin(), skip_widths.begin() + d + 1);
        std::vector<int> deeper;
        for (int s = d + 1; s < depth; ++s) deeper.push_back(s == depth - 1 ? cb : out_channels);
        decoders_[static_cast<std::size_t>(d)] = std::make_unique<DecoderLevel<T>>(d, sk, deeper, dc, out_channels);
    }

    seg_head_ = nn::Conv2d<T>(out_channels, 1, 1);
    embed_head_ = nn::Conv2d<T>(cb, cfg_.embedding_dim, 1);

    for (int l = 0; l < depth; ++l) encoders_[l]->collect(params_, "encoder." + std::to_string(l));
    bottleneck_->collect(params_, "bottleneck");
    for (int l = 0; l < depth - 1; ++l) skips_[l]->collect(params_, "cafm." + std::to_string(l));
    for (int d = 0; d < depth - 1; ++d) decoders_[d]->collect(params_, "decoder." + std::to_string(d));
    seg_head_.collect(params_, "head.seg");
    embed_head_.collect(params_, "head.embed");
}

template <typename T>
void Network<T>::init(std::uint64_t seed)
{
    Rng rng(stream_seed(seed, "init"));
    for (auto& e : encoders_) e->init(rng);
    bottleneck_->init(rng);
    for (auto& s : skips_) s->init(rng);
    for (auto& d : decoders_) d->init(rng);
    seg_head_.init(rng);
    embed_head_.init(rng);
}

template <typename T>
NetworkOutput<T> Network<T>::forward(const Tensor<T>& x)
{
    cfg_.validate_input(x.c(), x.h(), x.w());
    const int depth = cfg_.depth;

    std::vector<Tensor<T>> feats(static_cast<std::size_t>(depth));
    feats[0] = encoders_[0]->forward(x);
    for (int l = 1; l < depth; ++l) feats[l] = encoders_[l]->forward(pools_[l - 1].forward(feats[l - 1]));
    encoder_shapes_.clear();
    for (const auto& f : feats) encoder_shapes_.push_back(f.shape());

    std::vector<Tensor<T>> dec(static_cast<std::size_t>(depth));
    dec[depth - 1] = bottleneck_->forward(feats[depth - 1]);
    bottleneck_shape_ = dec[depth - 1].shape();

    std::vector<Tensor<T>> skips(static_cast<std::size_t>(depth - 1));
    for (int l = 0; l < depth - 1; ++l) skips[l] = skips_[l]->forward(feats[l]);
    feats.clear();

    for (int d = depth - 2; d >= 0; --d) {
        std::vector<const Tensor<T>*> sk, deeper;
        for (int l = 0; l <= d; ++l) sk.push_back(&skips[l]);
        for (int s = d + 1; s < depth; ++s) deeper.push_back(&dec[s]);
        dec[d] = decoders_[d]->forward(sk, deeper);
    }
    decoder_shapes_.clear();
    for (const auto& t : dec) decoder_shapes_.push_back(t.shape());

    NetworkOutput<T> out;
    out.logits = seg_head_.forward(dec[0]);
    out.embeddings = normalize_.forward(embed_head_.forward(dec[depth - 1]));
    return out;
}

template <typename T>
void Network<T>::backward(const Tensor<T>& grad_logits, const Tensor<T>& grad_embeddings)
{
    const int depth = cfg_.depth;
    std::vector<Tensor<T>> gdec(static_cast<std::size_t>(depth));
    std::vector<Tensor<T>> gskip(static_cast<std::size_t>(depth - 1));

    if (!grad_logits.empty()) {
        gdec[0] = seg_head_.backward(grad_logits);
        for (int d = 0; d < depth - 1; ++d) {
            std::vector<Tensor<T>> sg(static_cast<std::size_t>(d + 1));
            std::vector<Tensor<T>> dg(static_cast<std::size_t>(depth - 1 - d));
            if (gdec[d].empty()) gdec[d] = Tensor<T>(decoder_shapes_[d]);
            decoders_[d]->backward(gdec[d], sg, dg);
            for (int l = 0; l <= d; ++l) accumulate(gskip[l], std::move(sg[l]));
            for (int s = d + 1; s < depth; ++s) accumulate(gdec[s], std::move(dg[s - d - 1]));
        }
    }

    Tensor<T> gb = std::move(gdec[depth - 1]);
    if (!grad_embeddings.empty()) accumulate(gb, embed_head_.backward(normalize_.backward(grad_embeddings)));
    if (gb.empty()) return;

    std::vector<Tensor<T>> gfeat(static_cast<std::size_t>(depth));
    gfeat[depth - 1] = bottleneck_->backward(gb);
    for (int l = depth - 1; l >= 0; --l) {
        if (l < depth - 1 && !gskip[l].empty()) accumulate(gfeat[l], skips_[l]->backward(gskip[l]));
        if (gfeat[l].empty()) gfeat[l] = Tensor<T>(encoder_shapes_[l]);
        Tensor<T> gin = encoders_[l]->backward(gfeat[l]);
        if (l > 0) accumulate(gfeat[l - 1], pools_[l - 1].backward(gin));
    }
}

template <typename T>
std::size_t Network<T>::parameter_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value->size();
    return n;
}

template <typename T>
void Network<T>::zero_grad()
{
    for (auto& p : params_) p.grad->zero();
}

template class DecoderLevel<float>;
template class DecoderLevel<double>;
template class Network<float>;
template class Network<double>;

std::size_t count_parameters(const NetworkConfig& cfg)
{
    return Network<float>(cfg).parameter_count();
}

}  // namespace msa
