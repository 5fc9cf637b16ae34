#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msa/architecture/network.hpp"
#include "msa/data/dataset.hpp"
#include "msa/losses/losses.hpp"
#include "msa/metrics/metrics.hpp"
#include "msa/training/checkpoint.hpp"

namespace msa {

struct TrainConfig {
    int epochs = 100;
    int batch_size = 5;
    double lr = 1e-4;
    double lr_decay_factor = 0.1;
    /// Fractions of `epochs` at which the rate is multiplied by lr_decay_factor.
    std::vector<double> lr_milestones{0.6, 0.8};
    std::uint64_t seed = 1;
    LossWeights loss;
    ContrastiveConfig contrastive;
    AugmentConfig augment;
    bool use_augment = true;
    bool use_spcl = true;
    bool use_cafm = true;
    bool use_msd = true;
    /// Fixed-order reductions in every kernel.
    bool deterministic = true;
    /// Stop after this many optimizer steps (0: no limit).
    int max_steps = 0;
    /// Validate every n epochs and at the last one.
    int eval_every = 1;

    void validate() const;
    /// Loss weights after the SPCL switch (gamma forced to 0 when off).
    LossWeights effective_weights() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Network configuration with the CAFM and MSD switches of `train` applied.
NetworkConfig apply_ablation(NetworkConfig net, const TrainConfig& train);

/// Epoch index (0-based) at which milestone `i` takes effect.
int milestone_epoch(const TrainConfig& cfg, std::size_t i);
/// Piecewise-constant rate: lr * factor^(passed milestones). A factor that is
/// the reciprocal of an integer divides by that integer instead, so 1e-4 with
/// factor 0.1 gives exactly 1e-5 and 1e-6.
double learning_rate(const TrainConfig& cfg, int epoch);

/// Adam with bias correction and no weight decay.
class Adam {
public:
    explicit Adam(nn::ParameterList<float>& params, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    void step(double lr);
    long long steps() const noexcept { return t_; }

private:
    nn::ParameterList<float>& params_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct FoldData {
    std::vector<SegmentationSample> train;
    std::vector<SegmentationSample> val;
    /// Held-out samples evaluated with the selected checkpoint, may be empty.
    std::vector<SegmentationSample> test;
};

struct EpochLog {
    int epoch = 0;
    double lr = 0.0;
    /// Mean over the epoch's batches; flags are those of the last batch.
    LossBreakdown loss;
    int batches = 0;
    std::optional<double> val_dice;
    double seconds = 0.0;
};

struct RunRecord {
    std::string tag;
    NetworkConfig network;
    TrainConfig train;
    std::size_t parameter_count = 0;
    std::vector<EpochLog> epochs;
    long long steps = 0;
    int best_epoch = -1;
    double best_val_dice = 0.0;
    /// Validation metrics of the selected (best) checkpoint.
    MetricsReport val_report;
    /// Validation metrics after the last epoch.
    MetricsReport final_val_report;
    MetricsReport test_report;
    /// Prototype affinity of the selected checkpoint on the training set (contrastive runs only).
    std::optional<PrototypeAffinity> affinity;
    double wall_seconds = 0.0;
    Checkpoint checkpoint;
    std::filesystem::path checkpoint_path;

    nlohmann::json to_json() const;
    static std::string log_csv_header();
    std::string log_csv() const;
};

using ProgressFn = std::function<void(const std::string& tag, const EpochLog&)>;

/// Images stacked into (n, 1, H, W) and masks into a float target of the same shape.
void stack_batch(const std::vector<const SegmentationSample*>& batch, Tensor<float>& images, Tensor<float>& target);

/// Thresholds sigmoid(logit) at 0.5 (logit > 0).
std::vector<Mask> predict_masks(Network<float>& net, const std::vector<SegmentationSample>& samples,
                                int batch_size = 4);
MetricsReport evaluate_model(Network<float>& net, const std::vector<SegmentationSample>& samples,
                             int batch_size = 4, DistanceBackend backend = DistanceBackend::transform);

/// Mean prototype affinity over `samples`, prototypes rebuilt per batch.
PrototypeAffinity measure_affinity(Network<float>& net, const std::vector<SegmentationSample>& samples,
                                   const ContrastiveConfig& cfg, std::uint64_t seed, int batch_size = 4);

/// Trains one model. Streams "init", "order" and "augment" under cfg.seed are
/// independent. Keeps the parameters of the best validation Dice. Throws
/// NonFiniteLoss naming the epoch, batch and sample ids on divergence.
RunRecord train_fold(const NetworkConfig& net_cfg, const TrainConfig& cfg, const FoldData& data,
                     const std::string& tag = "run", const ProgressFn& progress = {});

struct CrossValidationResult {
    std::string tag;
    std::vector<RunRecord> folds;

    /// Per-fold mean of `metric` on the validation folds.
    std::vector<double> fold_values(const std::string& metric) const;
    MetricSummary summary(const std::string& metric) const;
    std::vector<double> test_fold_values(const std::string& metric) const;
    /// Rows fold_<i>, mean, std over validation fold means.
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

/// Splits the "train"-tagged samples into k folds (seeded by cfg.seed) and
/// trains one model per fold, in fold order. "test"-tagged samples are scored
/// by every fold model.
CrossValidationResult cross_validate(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                                     const std::vector<SegmentationSample>& dataset, int k = 5,
                                     const std::string& tag = "cv", const ProgressFn& progress = {});

struct TTest {
    double mean_difference = 0.0;
    double t = 0.0;
    int df = 0;
    /// One-tailed, alternative "improvement" (higher for overlap metrics, lower for distances).
    double p = 1.0;
};

/// Paired one-tailed t-test of `b` improving on `a`. `higher_is_better` picks the direction.
TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b, bool higher_is_better);
/// "∇∇" p < 0.01, "∇" p < 0.05, "◇" p < 0.1, "◇◇" p < 0.2, else "".
std::string significance_marker(double p);
bool higher_is_better(const std::string& metric);

struct GammaAblation {
    CrossValidationResult baseline;  // gamma = 0
    CrossValidationResult spcl;      // gamma = 1
    std::vector<std::pair<std::string, TTest>> tests;

    std::string table_markdown() const;
    std::string table_csv() const;
    nlohmann::json to_json() const;
};

GammaAblation gamma_ablation(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                             const std::vector<SegmentationSample>& dataset, int k = 5,
                             const ProgressFn& progress = {});

struct AblationFlags {
    bool spcl = false;
    bool cafm = false;
    bool msd = false;
};

/// The eight switch combinations, SPCL varying fastest, then CAFM, then MSD.
std::vector<AblationFlags> component_grid();

struct ComponentAblation {
    std::vector<AblationFlags> flags;
    std::vector<CrossValidationResult> results;
    std::vector<std::size_t> parameter_counts;

    std::string table_markdown() const;
    std::string table_csv() const;
    nlohmann::json to_json() const;
};

ComponentAblation component_ablation(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                                     const std::vector<SegmentationSample>& dataset, int k = 5,
                                     const ProgressFn& progress = {});

/// Writes config.json, log.csv, metrics.csv, checkpoint.msackpt and record.json into `dir`.
void write_run(const std::filesystem::path& dir, const RunRecord& rec);

}  // namespace msa
