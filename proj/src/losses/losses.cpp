#include "msa/losses/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "msa/error.hpp"

namespace msa {

namespace {

template <typename T>
void require_same_size(std::span<const T> a, std::span<const T> b, const char* what)
{
    if (a.size() != b.size())
        throw ArgumentError(std::string(what) + ": size mismatch " + std::to_string(a.size()) + " vs " +
                            std::to_string(b.size()));
}

std::string fixed6(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

// Unit vector of pixel p of an embedding map, plus the norm of the raw vector.
template <typename T>
double gather(const Tensor<T>& v, std::size_t pixel, std::vector<double>& out)
{
    const std::size_t plane = v.shape().plane();
    const int n = static_cast<int>(pixel / plane);
    const std::size_t p = pixel % plane;
    out.resize(static_cast<std::size_t>(v.c()));
    double sq = 0.0;
    for (int c = 0; c < v.c(); ++c) {
        out[c] = v.plane(n, c)[p];
        sq += out[c] * out[c];
    }
    const double norm = std::sqrt(sq);
    if (norm > 0.0)
        for (double& x : out) x /= norm;
    return norm;
}

// Chain rule from dL/du (u = f/|f|) to dL/df, accumulated into grad.
template <typename T>
void scatter_unit_grad(Tensor<T>& grad, std::size_t pixel, std::span<const double> u, double norm,
                       std::span<const double> du)
{
    if (norm <= 0.0) return;
    const std::size_t plane = grad.shape().plane();
    const int n = static_cast<int>(pixel / plane);
    const std::size_t p = pixel % plane;
    double dot = 0.0;
    for (std::size_t c = 0; c < u.size(); ++c) dot += du[c] * u[c];
    for (std::size_t c = 0; c < u.size(); ++c)
        grad.plane(n, static_cast<int>(c))[p] += static_cast<T>((du[c] - dot * u[c]) / norm);
}

double dot(std::span<const double> a, std::span<const double> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

void LossWeights::validate() const
{
    for (auto [v, name] : {std::pair{alpha, "alpha"}, {beta, "beta"}, {gamma, "gamma"}})
        if (!std::isfinite(v) || v < 0.0) throw ConfigError(std::string("loss.") + name + " must be finite and >= 0");
}

void ContrastiveConfig::validate() const
{
    if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("contrastive.tau must be > 0");
    if (n_p < 1) throw ConfigError("contrastive.n_p must be >= 1");
    if (!(margin > 0.0 && margin <= 2.0)) throw ConfigError("contrastive.margin must be in (0, 2]");
    if (!(w1 >= 0.0) || !(w0 >= 0.0)) throw ConfigError("contrastive.w1 and contrastive.w0 must be >= 0");
    if (max_pixels < 2) throw ConfigError("contrastive.max_pixels must be >= 2");
}

template <typename T>
void EmbeddingMap<T>::validate() const
{
    const Shape& s = vectors.shape();
    if (labels.size() != static_cast<std::size_t>(s.n) * s.plane())
        throw ArgumentError("embedding labels do not match embedding grid " + s.str());
    for (auto l : labels)
        if (l != 0 && l != 1 && l != kIgnore) throw ArgumentError("embedding label outside {0, 1, ignore}");
}

// ---------------------------------------------------------------- BCE / Dice

template <typename T>
double bce_loss(std::span<const T> probs, std::span<const T> target, std::span<T> grad)
{
    require_same_size(probs, target, "bce_loss");
    if (!grad.empty() && grad.size() != probs.size()) throw ArgumentError("bce_loss: gradient size mismatch");
    const double n = static_cast<double>(probs.size());
    double s = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double raw = probs[i];
        const double p = std::clamp(raw, kProbEps, 1.0 - kProbEps);
        const double y = target[i];
        s += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
        if (!grad.empty()) {
            const bool clamped = raw < kProbEps || raw > 1.0 - kProbEps;
            grad[i] = clamped ? T(0) : static_cast<T>(-(y / p - (1.0 - y) / (1.0 - p)) / n);
        }
    }
    return -s / n;
}

template <typename T>
double dice_loss(std::span<const T> probs, std::span<const T> target, double smooth, std::span<T> grad)
{
    require_same_size(probs, target, "dice_loss");
    if (!grad.empty() && grad.size() != probs.size()) throw ArgumentError("dice_loss: gradient size mismatch");
    double inter = 0.0, sy = 0.0, sp = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        inter += double(target[i]) * double(probs[i]);
        sy += target[i];
        sp += probs[i];
    }
    const double num = 2.0 * inter + smooth;
    const double den = sy + sp + smooth;
    if (!grad.empty())
        for (std::size_t i = 0; i < probs.size(); ++i)
            grad[i] = static_cast<T>(-(2.0 * double(target[i]) * den - num) / (den * den));
    return 1.0 - num / den;
}

// ---------------------------------------------------------------- labels

Mask downsample_labels(const Mask& mask, int factor)
{
    if (factor < 1 || mask.h % factor != 0 || mask.w % factor != 0)
        throw ArgumentError("downsample_labels: factor " + std::to_string(factor) + " does not divide " +
                            std::to_string(mask.h) + "x" + std::to_string(mask.w));
    Mask out(mask.h / factor, mask.w / factor);
    const double cell = double(factor) * factor;
    for (int i = 0; i < out.h; ++i)
        for (int j = 0; j < out.w; ++j) {
            int s = 0;
            for (int u = 0; u < factor; ++u)
                for (int v = 0; v < factor; ++v) s += mask(i * factor + u, j * factor + v) ? 1 : 0;
            const double mean = s / cell;
            out(i, j) = mean > 0.6 ? 1 : mean < 0.4 ? 0 : kIgnore;
        }
    return out;
}

// ---------------------------------------------------------------- prototypes

template <typename T>
PrototypeSet build_prototypes(const EmbeddingMap<T>& emb, const ContrastiveConfig& cfg, Rng& rng)
{
    emb.validate();
    const int dim = emb.vectors.c();
    std::vector<std::vector<double>> pts;
    std::vector<double> u;
    for (std::size_t i = 0; i < emb.labels.size(); ++i)
        if (emb.labels[i] == 1) {
            if (gather(emb.vectors, i, u) > 0.0) pts.push_back(u);
        }
    if (pts.empty()) throw EmptyForeground();

    const int k = cfg.n_p;
    const std::size_t m = pts.size();
    PrototypeSet out;
    out.dim = dim;

    auto normalized_mean = [&](const std::vector<std::size_t>& idx, std::vector<double>& dst) {
        std::vector<double> acc(dim, 0.0);
        for (std::size_t i : idx)
            for (int c = 0; c < dim; ++c) acc[c] += pts[i][c];
        const double norm = std::sqrt(dot(acc, acc));
        if (norm < 1e-12) return false;
        for (int c = 0; c < dim; ++c) dst[c] = acc[c] / norm;
        return true;
    };

    if (m < static_cast<std::size_t>(k)) {
        std::vector<std::size_t> all(m);
        std::iota(all.begin(), all.end(), 0);
        std::vector<double> mean(pts[0]);
        normalized_mean(all, mean);
        for (int j = 0; j < k; ++j) out.data.insert(out.data.end(), mean.begin(), mean.end());
        return out;
    }

    // Farthest-point initialization in cosine distance.
    std::vector<std::vector<double>> centers;
    centers.push_back(pts[rng.below(m)]);
    std::vector<double> nearest(m, 2.0);
    while (static_cast<int>(centers.size()) < k) {
        std::size_t best = 0;
        double best_d = -1.0;
        for (std::size_t i = 0; i < m; ++i) {
            nearest[i] = std::min(nearest[i], 1.0 - dot(pts[i], centers.back()));
            if (nearest[i] > best_d) {
                best_d = nearest[i];
                best = i;
            }
        }
        centers.push_back(pts[best]);
    }

    std::vector<int> assign(m, -1);
    for (int iter = 0; iter < 10; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < m; ++i) {
            int arg = 0;
            double best = dot(pts[i], centers[0]);
            for (int j = 1; j < k; ++j) {
                const double s = dot(pts[i], centers[j]);
                if (s > best) {
                    best = s;
                    arg = j;
                }
            }
            if (assign[i] != arg) changed = true;
            assign[i] = arg;
        }
        if (!changed) break;
        for (int j = 0; j < k; ++j) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < m; ++i)
                if (assign[i] == j) members.push_back(i);
            if (!members.empty()) normalized_mean(members, centers[j]);
        }
    }
    for (const auto& c : centers) out.data.insert(out.data.end(), c.begin(), c.end());
    return out;
}

// ---------------------------------------------------------------- SCE

template <typename T>
double sce_loss(const EmbeddingMap<T>& emb, const ContrastiveConfig& cfg, Rng& rng, Tensor<T>* grad)
{
    emb.validate();
    cfg.validate();
    std::vector<std::size_t> fg, bg;
    for (std::size_t i = 0; i < emb.labels.size(); ++i) {
        if (emb.labels[i] == 1) fg.push_back(i);
        else if (emb.labels[i] == 0) bg.push_back(i);
    }

    const std::size_t cap = static_cast<std::size_t>(cfg.max_pixels);
    std::vector<std::size_t> sel;
    if (fg.size() + bg.size() <= cap) {
        sel = fg;
        sel.insert(sel.end(), bg.begin(), bg.end());
    } else {
        std::size_t qb = std::min(bg.size(), cap - std::min(fg.size(), cap / 2));
        std::size_t qf = std::min(fg.size(), cap - qb);
        auto draw = [&](std::vector<std::size_t>& pool, std::size_t q) {
            for (std::size_t i = 0; i < q; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
            sel.insert(sel.end(), pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(q));
        };
        draw(fg, qf);
        draw(bg, qb);
    }
    std::sort(sel.begin(), sel.end());

    const std::size_t m = sel.size();
    const int dim = emb.vectors.c();
    std::vector<std::vector<double>> u(m);
    std::vector<double> norms(m);
    std::vector<std::uint8_t> lab(m);
    for (std::size_t a = 0; a < m; ++a) {
        norms[a] = gather(emb.vectors, sel[a], u[a]);
        lab[a] = emb.labels[sel[a]];
    }

    std::vector<double> pos(m, 0.0);
    double z = 0.0;
    for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b)
            if (b != a && lab[b] == lab[a]) pos[a] += 1.0;
        z += pos[a];
    }
    if (z == 0.0) throw NoPositivePairs();

    const double inv_tau = 1.0 / cfg.tau;
    std::vector<double> s(m * m);
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t b = a; b < m; ++b) s[a * m + b] = s[b * m + a] = dot(u[a], u[b]) * inv_tau;

    double total = 0.0;
    std::vector<double> g(grad ? m * m : 0, 0.0);
    for (std::size_t a = 0; a < m; ++a) {
        if (pos[a] == 0.0) continue;
        double mx = -1e300;
        for (std::size_t b = 0; b < m; ++b)
            if (b != a) mx = std::max(mx, s[a * m + b]);
        double se = 0.0;
        for (std::size_t b = 0; b < m; ++b)
            if (b != a) se += std::exp(s[a * m + b] - mx);
        const double lse = mx + std::log(se);
        double anchor = 0.0;
        for (std::size_t b = 0; b < m; ++b)
            if (b != a && lab[b] == lab[a]) anchor += lse - s[a * m + b];
        total += anchor;
        if (grad)
            for (std::size_t b = 0; b < m; ++b) {
                if (b == a) continue;
                const double soft = std::exp(s[a * m + b] - lse);
                g[a * m + b] = (pos[a] * soft - (lab[b] == lab[a] ? 1.0 : 0.0)) * inv_tau / z;
            }
    }

    if (grad) {
        *grad = Tensor<T>(emb.vectors.shape());
        std::vector<double> du(dim);
        for (std::size_t a = 0; a < m; ++a) {
            std::fill(du.begin(), du.end(), 0.0);
            for (std::size_t b = 0; b < m; ++b) {
                const double w = g[a * m + b] + g[b * m + a];
                if (w == 0.0) continue;
                for (int c = 0; c < dim; ++c) du[c] += w * u[b][c];
            }
            scatter_unit_grad(*grad, sel[a], u[a], norms[a], du);
        }
    }
    return total / z;
}

// ---------------------------------------------------------------- PCL

template <typename T>
double pcl_loss(const EmbeddingMap<T>& emb, const PrototypeSet& protos, const ContrastiveConfig& cfg, Tensor<T>* grad)
{
    emb.validate();
    if (protos.count() == 0) throw ArgumentError("pcl_loss: empty prototype set");
    const int dim = emb.vectors.c();
    if (protos.dim != dim) throw ArgumentError("pcl_loss: prototype dimension mismatch");
    if (grad) *grad = Tensor<T>(emb.vectors.shape());

    std::size_t n_valid = 0;
    for (auto l : emb.labels) n_valid += l != kIgnore;
    if (n_valid == 0) return 0.0;
    const int k = protos.count();
    const double scale = 1.0 / (double(n_valid) * k);

    double total = 0.0;
    std::vector<double> u, du(dim);
    for (std::size_t i = 0; i < emb.labels.size(); ++i) {
        const auto l = emb.labels[i];
        if (l == kIgnore) continue;
        const double norm = gather(emb.vectors, i, u);
        std::fill(du.begin(), du.end(), 0.0);
        for (int j = 0; j < k; ++j) {
            const auto p = protos[j];
            const double cos = norm > 0.0 ? dot(u, p) : 0.0;
            const double d = 1.0 - cos;
            double dterm_dcos = 0.0;
            if (l == 1) {
                total += cfg.w1 * d * d;
                dterm_dcos = -2.0 * cfg.w1 * d;
            } else if (d < cfg.margin) {
                const double h = cfg.margin - d;
                total += cfg.w0 * h * h;
                dterm_dcos = 2.0 * cfg.w0 * h;
            }
            if (grad && dterm_dcos != 0.0)
                for (int c = 0; c < dim; ++c) du[c] += scale * dterm_dcos * p[c];
        }
        if (grad) scatter_unit_grad(*grad, i, u, norm, du);
    }
    return total * scale;
}

template <typename T>
PrototypeAffinity prototype_affinity(const EmbeddingMap<T>& emb, const PrototypeSet& protos)
{
    emb.validate();
    PrototypeAffinity out;
    std::vector<double> u;
    for (std::size_t i = 0; i < emb.labels.size(); ++i) {
        const auto l = emb.labels[i];
        if (l == kIgnore) continue;
        gather(emb.vectors, i, u);
        double best = -1.0;
        for (int j = 0; j < protos.count(); ++j) best = std::max(best, dot(u, protos[j]));
        if (l == 1) {
            out.foreground += best;
            ++out.foreground_count;
        } else {
            out.background += best;
            ++out.background_count;
        }
    }
    if (out.foreground_count) out.foreground /= double(out.foreground_count);
    if (out.background_count) out.background /= double(out.background_count);
    return out;
}

// ---------------------------------------------------------------- total

std::string LossBreakdown::flags() const
{
    std::string f;
    if (!sce_skipped.empty()) f += "sce_skipped:" + sce_skipped;
    if (!pcl_skipped.empty()) f += (f.empty() ? "" : ";") + std::string("pcl_skipped:") + pcl_skipped;
    return f;
}

std::string LossBreakdown::csv_header()
{
    return "bce,dice,sce,pcl,total,flags";
}

std::string LossBreakdown::csv_row() const
{
    return fixed6(bce) + "," + fixed6(dice) + "," + fixed6(sce) + "," + fixed6(pcl) + "," + fixed6(total) + "," +
           flags();
}

nlohmann::json LossBreakdown::to_json() const
{
    return {{"bce", bce}, {"dice", dice}, {"sce", sce}, {"pcl", pcl}, {"total", total}, {"flags", flags()}};
}

template <typename T>
std::vector<T> sigmoid_probs(const Tensor<T>& logits)
{
    std::vector<T> p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<T>(1.0 / (1.0 + std::exp(-double(logits[i]))));
    return p;
}

template <typename T>
EmbeddingMap<T> embedding_map(const Tensor<T>& target, const Tensor<T>& embeddings)
{
    if (target.c() != 1 || target.n() != embeddings.n())
        throw ArgumentError("embedding_map: target " + target.shape().str() + " vs embeddings " +
                            embeddings.shape().str());
    if (embeddings.h() == 0 || target.h() % embeddings.h() != 0 || target.w() % embeddings.w() != 0 ||
        target.h() / embeddings.h() != target.w() / embeddings.w())
        throw ArgumentError("embedding_map: target " + target.shape().str() + " is not an integer multiple of " +
                            embeddings.shape().str());
    const int f = target.h() / embeddings.h();
    EmbeddingMap<T> out{embeddings, {}};
    out.labels.reserve(static_cast<std::size_t>(embeddings.n()) * embeddings.shape().plane());
    for (int n = 0; n < target.n(); ++n) {
        Mask m(target.h(), target.w());
        const T* src = target.plane(n, 0);
        for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = src[i] > T(0.5) ? 1 : 0;
        const Mask lab = downsample_labels(m, f);
        out.labels.insert(out.labels.end(), lab.data.begin(), lab.data.end());
    }
    return out;
}

template <typename T>
LossResult<T> total_loss(const Tensor<T>& logits, const Tensor<T>& target, const Tensor<T>& embeddings,
                         const LossWeights& weights, const ContrastiveConfig& cfg, std::uint64_t seed, bool with_grad)
{
    weights.validate();
    cfg.validate();
    if (logits.shape() != target.shape() || logits.c() != 1)
        throw ArgumentError("total_loss: logits " + logits.shape().str() + " vs target " + target.shape().str());

    LossResult<T> res;
    LossBreakdown& b = res.breakdown;
    const std::vector<T> probs = sigmoid_probs(logits);
    std::vector<T> gb, gd;
    if (with_grad) {
        gb.resize(probs.size());
        gd.resize(probs.size());
    }
    b.bce = bce_loss<T>(probs, target.span(), gb);
    b.dice = dice_loss<T>(probs, target.span(), 1.0, gd);
    b.total = weights.alpha * b.bce + weights.beta * b.dice;
    if (with_grad) {
        res.grad_logits = Tensor<T>(logits.shape());
        for (std::size_t i = 0; i < probs.size(); ++i) {
            const double p = probs[i];
            res.grad_logits[i] =
                static_cast<T>((weights.alpha * double(gb[i]) + weights.beta * double(gd[i])) * p * (1.0 - p));
        }
        res.grad_embeddings = Tensor<T>(embeddings.shape());
    }

    if (weights.gamma == 0.0) {
        b.sce_skipped = b.pcl_skipped = "disabled";
        return res;
    }

    const EmbeddingMap<T> emb = embedding_map(target, embeddings);
    const bool has_foreground = std::find(emb.labels.begin(), emb.labels.end(), 1) != emb.labels.end();
    Tensor<T> g_sce, g_pcl;
    if (!has_foreground) {
        b.sce_skipped = b.pcl_skipped = "empty_foreground";
    } else {
        try {
            Rng rng(stream_seed(seed, "sce"));
            b.sce = sce_loss(emb, cfg, rng, with_grad ? &g_sce : nullptr);
        } catch (const NoPositivePairs&) {
            b.sce_skipped = "no_positive_pairs";
        }
        Rng rng(stream_seed(seed, "prototypes"));
        const PrototypeSet protos = build_prototypes(emb, cfg, rng);
        b.pcl = pcl_loss(emb, protos, cfg, with_grad ? &g_pcl : nullptr);
    }
    b.total += weights.gamma * (b.sce + b.pcl);

    if (with_grad) {
        for (const Tensor<T>* g : {&g_sce, &g_pcl})
            if (!g->empty())
                for (std::size_t i = 0; i < g->size(); ++i)
                    res.grad_embeddings[i] += static_cast<T>(weights.gamma * double((*g)[i]));
    }
    return res;
}

#define MSA_INSTANTIATE_LOSSES(T)                                                                                 \
    template struct EmbeddingMap<T>;                                                                               \
    template double bce_loss<T>(std::span<const T>, std::span<const T>, std::span<T>);                             \
    template double dice_loss<T>(std::span<const T>, std::span<const T>, double, std::span<T>);                    \
    template PrototypeSet build_prototypes<T>(const EmbeddingMap<T>&, const ContrastiveConfig&, Rng&);             \
    template double sce_loss<T>(const EmbeddingMap<T>&, const ContrastiveConfig&, Rng&, Tensor<T>*);               \
    template double pcl_loss<T>(const EmbeddingMap<T>&, const PrototypeSet&, const ContrastiveConfig&, Tensor<T>*); \
    template PrototypeAffinity prototype_affinity<T>(const EmbeddingMap<T>&, const PrototypeSet&);                 \
    template std::vector<T> sigmoid_probs<T>(const Tensor<T>&);                                                    \
    template EmbeddingMap<T> embedding_map<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template LossResult<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const LossWeights&, \
                                         const ContrastiveConfig&, std::uint64_t, bool);

MSA_INSTANTIATE_LOSSES(float)
MSA_INSTANTIATE_LOSSES(double)

}  // namespace msa
