#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msa/mask.hpp"
#include "msa/random.hpp"
#include "msa/tensor.hpp"

namespace msa {

struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;

    void validate() const;
};

struct ContrastiveConfig {
    double tau = 1.0;
    int n_p = 2;
    double margin = 0.5;
    double w1 = 1.0;
    double w0 = 1.0;
    int max_pixels = 1024;

    void validate() const;
};

/// Per-pixel embeddings with labels at the same resolution.
/// `vectors` is (n, dim, h, w); `labels` is (n, h, w) with values {0, 1, kIgnore}.
template <typename T>
struct EmbeddingMap {
    Tensor<T> vectors;
    std::vector<std::uint8_t> labels;

    void validate() const;
};

/// n_p unit vectors, row-major (count, dim).
struct PrototypeSet {
    int dim = 0;
    std::vector<double> data;

    int count() const noexcept { return dim == 0 ? 0 : static_cast<int>(data.size()) / dim; }
    std::span<const double> operator[](int k) const { return {data.data() + std::size_t(k) * dim, std::size_t(dim)}; }
};

inline constexpr double kProbEps = 1e-7;

/// Mean binary cross-entropy over probabilities clamped to [1e-7, 1 - 1e-7].
/// If `grad` is non-empty it receives dL/dprob (zero where clamping is active).
template <typename T>
double bce_loss(std::span<const T> probs, std::span<const T> target, std::span<T> grad = {});

/// 1 - (2 sum(y p) + s) / (sum(y) + sum(p) + s).
template <typename T>
double dice_loss(std::span<const T> probs, std::span<const T> target, double smooth = 1.0, std::span<T> grad = {});

/// Average-pools `mask` over factor x factor cells: mean > 0.6 -> 1, < 0.4 -> 0, else kIgnore.
Mask downsample_labels(const Mask& mask, int factor);

/// Cosine k-means over foreground embeddings. Throws EmptyForeground.
template <typename T>
PrototypeSet build_prototypes(const EmbeddingMap<T>& emb, const ContrastiveConfig& cfg, Rng& rng);

/// Supervised contrastive term over valid pixels (subsampled to cfg.max_pixels).
/// `grad`, if non-null, receives dL/dvectors (same shape as emb.vectors). Throws NoPositivePairs.
template <typename T>
double sce_loss(const EmbeddingMap<T>& emb, const ContrastiveConfig& cfg, Rng& rng, Tensor<T>* grad = nullptr);

/// Prototype term with squared hinge on background pixels; prototypes are constants.
template <typename T>
double pcl_loss(const EmbeddingMap<T>& emb, const PrototypeSet& protos, const ContrastiveConfig& cfg,
                Tensor<T>* grad = nullptr);

struct LossBreakdown {
    double bce = 0.0;
    double dice = 0.0;
    double sce = 0.0;
    double pcl = 0.0;
    double total = 0.0;
    /// Reason each contrastive term was skipped, empty when it contributed.
    std::string sce_skipped;
    std::string pcl_skipped;

    std::string flags() const;
    static std::string csv_header();
    /// bce,dice,sce,pcl,total,flags with six fractional digits.
    std::string csv_row() const;
    nlohmann::json to_json() const;
};

/// Mean cosine similarity to the nearest prototype for foreground and background pixels.
struct PrototypeAffinity {
    double foreground = 0.0;
    double background = 0.0;
    std::size_t foreground_count = 0;
    std::size_t background_count = 0;
};

template <typename T>
PrototypeAffinity prototype_affinity(const EmbeddingMap<T>& emb, const PrototypeSet& protos);

template <typename T>
struct LossResult {
    LossBreakdown breakdown;
    Tensor<T> grad_logits;
    Tensor<T> grad_embeddings;
};

/// Weighted total of BCE, Dice and (when gamma != 0) SCE + PCL.
///
/// `logits` is (n, 1, H, W), `target` the same shape with values {0, 1},
/// `embeddings` (n, dim, H/f, W/f). Labels for the contrastive terms are
/// the target downsampled by f. The contrastive terms draw from streams
/// derived from `seed`: "sce" for subsampling and "prototypes" for k-means.
template <typename T>
LossResult<T> total_loss(const Tensor<T>& logits, const Tensor<T>& target, const Tensor<T>& embeddings,
                         const LossWeights& weights, const ContrastiveConfig& cfg, std::uint64_t seed,
                         bool with_grad = true);

/// Elementwise logistic sigmoid, as used by total_loss.
template <typename T>
std::vector<T> sigmoid_probs(const Tensor<T>& logits);

/// Builds the label-carrying embedding map used by total_loss.
template <typename T>
EmbeddingMap<T> embedding_map(const Tensor<T>& target, const Tensor<T>& embeddings);

}  // namespace msa
