#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "msa/error.hpp"
#include "msa/kernels/parallel.hpp"
#include "msa/training/trainer.hpp"

namespace msa {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<const SegmentationSample*> pointers(const std::vector<SegmentationSample>& v, std::size_t lo,
                                                std::size_t hi)
{
    std::vector<const SegmentationSample*> out;
    for (std::size_t i = lo; i < hi; ++i) out.push_back(&v[i]);
    return out;
}

// Mean of per-batch breakdowns. A skip reason survives when any batch skipped,
// with the number of skipping batches when that was not all of them.
struct BreakdownMean {
    LossBreakdown sum;
    int n = 0, sce_skips = 0, pcl_skips = 0;
    std::string sce_reason, pcl_reason;

    void add(const LossBreakdown& b)
    {
        sum.bce += b.bce;
        sum.dice += b.dice;
        sum.sce += b.sce;
        sum.pcl += b.pcl;
        sum.total += b.total;
        ++n;
        if (!b.sce_skipped.empty()) {
            ++sce_skips;
            if (sce_reason.empty()) sce_reason = b.sce_skipped;
        }
        if (!b.pcl_skipped.empty()) {
            ++pcl_skips;
            if (pcl_reason.empty()) pcl_reason = b.pcl_skipped;
        }
    }

    LossBreakdown mean() const
    {
        LossBreakdown m;
        if (n == 0) return m;
        m.bce = sum.bce / n;
        m.dice = sum.dice / n;
        m.sce = sum.sce / n;
        m.pcl = sum.pcl / n;
        m.total = sum.total / n;
        auto reason = [&](const std::string& r, int k) {
            if (k == 0) return std::string();
            return k == n ? r : r + "@" + std::to_string(k) + "/" + std::to_string(n);
        };
        m.sce_skipped = reason(sce_reason, sce_skips);
        m.pcl_skipped = reason(pcl_reason, pcl_skips);
        return m;
    }
};

}  // namespace

void stack_batch(const std::vector<const SegmentationSample*>& batch, Tensor<float>& images, Tensor<float>& target)
{
    if (batch.empty()) throw ArgumentError("stack_batch: empty batch");
    const int h = batch.front()->height(), w = batch.front()->width();
    images = Tensor<float>(int(batch.size()), 1, h, w);
    target = Tensor<float>(int(batch.size()), 1, h, w);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& s = *batch[b];
        if (s.height() != h || s.width() != w || s.image.shape() != Shape{1, 1, h, w})
            throw ArgumentError("stack_batch: sample " + s.id + " has a different size");
        std::copy(s.image.span().begin(), s.image.span().end(), images.plane(int(b), 0));
        float* t = target.plane(int(b), 0);
        for (std::size_t i = 0; i < s.mask.size(); ++i) t[i] = s.mask.data[i] ? 1.0f : 0.0f;
    }
}

std::vector<Mask> predict_masks(Network<float>& net, const std::vector<SegmentationSample>& samples, int batch_size)
{
    std::vector<Mask> out;
    Tensor<float> images, target;
    for (std::size_t lo = 0; lo < samples.size(); lo += std::size_t(batch_size)) {
        const std::size_t hi = std::min(samples.size(), lo + std::size_t(batch_size));
        stack_batch(pointers(samples, lo, hi), images, target);
        const auto o = net.forward(images);
        for (int b = 0; b < o.logits.n(); ++b) {
            Mask m(o.logits.h(), o.logits.w());
            const float* p = o.logits.plane(b, 0);
            for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = p[i] > 0.0f ? 1 : 0;
            out.push_back(std::move(m));
        }
    }
    return out;
}

MetricsReport evaluate_model(Network<float>& net, const std::vector<SegmentationSample>& samples, int batch_size,
                             DistanceBackend backend)
{
    const auto pred = predict_masks(net, samples, batch_size);
    MetricsReport r;
    for (std::size_t i = 0; i < samples.size(); ++i)
        r.samples.push_back(evaluate_sample(samples[i].id, pred[i], samples[i].mask, backend));
    return r;
}

PrototypeAffinity measure_affinity(Network<float>& net, const std::vector<SegmentationSample>& samples,
                                   const ContrastiveConfig& cfg, std::uint64_t seed, int batch_size)
{
    PrototypeAffinity total;
    double fg = 0.0, bg = 0.0;
    Tensor<float> images, target;
    for (std::size_t lo = 0; lo < samples.size(); lo += std::size_t(batch_size)) {
        const std::size_t hi = std::min(samples.size(), lo + std::size_t(batch_size));
        stack_batch(pointers(samples, lo, hi), images, target);
        const auto o = net.forward(images);
        const auto emb = embedding_map(target, o.embeddings);
        Rng rng(stream_seed(seed, "affinity", lo));
        PrototypeSet protos;
        try {
            protos = build_prototypes(emb, cfg, rng);
        } catch (const EmptyForeground&) {
            continue;
        }
        const auto a = prototype_affinity(emb, protos);
        fg += a.foreground * double(a.foreground_count);
        bg += a.background * double(a.background_count);
        total.foreground_count += a.foreground_count;
        total.background_count += a.background_count;
    }
    if (total.foreground_count) total.foreground = fg / double(total.foreground_count);
    if (total.background_count) total.background = bg / double(total.background_count);
    return total;
}

RunRecord train_fold(const NetworkConfig& net_cfg, const TrainConfig& cfg, const FoldData& data,
                     const std::string& tag, const ProgressFn& progress)
{
    cfg.validate();
    if (data.train.empty()) throw ArgumentError("train_fold: empty training set");
    const NetworkConfig arch = apply_ablation(net_cfg, cfg);
    for (const auto& s : data.train) arch.validate_input(1, s.height(), s.width());
    kernels::set_deterministic(cfg.deterministic);
    const auto t0 = Clock::now();

    RunRecord rec;
    rec.tag = tag;
    rec.network = arch;
    rec.train = cfg;
    Network<float> net(arch);
    net.init(cfg.seed);
    rec.parameter_count = net.parameter_count();
    Adam opt(net.parameters());
    const LossWeights weights = cfg.effective_weights();

    std::vector<std::size_t> order(data.train.size());
    Tensor<float> images, target;
    bool have_best = false;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.max_steps > 0 && opt.steps() >= cfg.max_steps) break;
        const auto te = Clock::now();
        EpochLog log;
        log.epoch = epoch;
        log.lr = learning_rate(cfg, epoch);

        std::iota(order.begin(), order.end(), std::size_t(0));
        Rng order_rng(stream_seed(cfg.seed, "order", std::uint64_t(epoch)));
        order_rng.shuffle(order.begin(), order.end());
        Rng aug_rng(stream_seed(cfg.seed, "augment", std::uint64_t(epoch)));

        BreakdownMean mean;
        for (std::size_t lo = 0, batch = 0; lo < order.size(); lo += std::size_t(cfg.batch_size), ++batch) {
            if (cfg.max_steps > 0 && opt.steps() >= cfg.max_steps) break;
            const std::size_t hi = std::min(order.size(), lo + std::size_t(cfg.batch_size));
            std::vector<SegmentationSample> augmented;
            std::vector<const SegmentationSample*> items;
            augmented.reserve(hi - lo);
            for (std::size_t i = lo; i < hi; ++i) {
                const auto& s = data.train[order[i]];
                if (cfg.use_augment) {
                    augmented.push_back(augment(s, aug_rng, cfg.augment));
                    items.push_back(&augmented.back());
                } else {
                    items.push_back(&s);
                }
            }
            stack_batch(items, images, target);
            const auto out = net.forward(images);
            auto res = total_loss(out.logits, target, out.embeddings, weights, cfg.contrastive,
                                  stream_seed(cfg.seed, "loss", std::uint64_t(opt.steps())));
            auto batch_id = [&] {
                std::string id = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch) + " [";
                for (std::size_t k = 0; k < items.size(); ++k) id += (k ? "," : "") + items[k]->id;
                return id + "]";
            };
            if (!std::isfinite(res.breakdown.total)) throw NonFiniteLoss(batch_id());
            net.zero_grad();
            net.backward(res.grad_logits, res.grad_embeddings);
            for (const auto& p : net.parameters())
                if (!p.grad->all_finite()) throw NonFiniteLoss(batch_id() + " (gradient of " + p.name + ")");
            opt.step(log.lr);
            mean.add(res.breakdown);
        }
        log.loss = mean.mean();
        log.batches = mean.n;
        rec.steps = opt.steps();

        const bool last = epoch + 1 == cfg.epochs || (cfg.max_steps > 0 && opt.steps() >= cfg.max_steps);
        if (!data.val.empty() && ((epoch + 1) % cfg.eval_every == 0 || last)) {
            const MetricsReport r = evaluate_model(net, data.val);
            const double dice = r.summary("dice").mean;
            log.val_dice = dice;
            if (!have_best || dice > rec.best_val_dice) {
                have_best = true;
                rec.best_val_dice = dice;
                rec.best_epoch = epoch;
                rec.checkpoint = snapshot(net);
            }
            if (last) rec.final_val_report = r;
        }
        log.seconds = seconds_since(te);
        rec.epochs.push_back(log);
        if (progress) progress(tag, log);
    }

    if (!have_best) {
        // No validation data: keep the final parameters.
        rec.best_epoch = rec.epochs.empty() ? -1 : rec.epochs.back().epoch;
        rec.checkpoint = snapshot(net);
    }
    rec.checkpoint.meta = {{"tag", tag},
                           {"epoch", rec.best_epoch},
                           {"val_dice", rec.best_val_dice},
                           {"steps", rec.steps},
                           {"train", to_json(cfg)}};
    restore(net, rec.checkpoint);
    if (!data.val.empty()) rec.val_report = evaluate_model(net, data.val);
    if (!data.test.empty()) rec.test_report = evaluate_model(net, data.test);
    if (weights.gamma != 0.0) rec.affinity = measure_affinity(net, data.train, cfg.contrastive, cfg.seed);
    rec.wall_seconds = seconds_since(t0);
    return rec;
}

std::string RunRecord::log_csv_header()
{
    return "epoch,lr," + LossBreakdown::csv_header() + ",val_dice";
}

std::string RunRecord::log_csv() const
{
    std::ostringstream os;
    os << log_csv_header() << '\n';
    char buf[64];
    for (const auto& e : epochs) {
        std::snprintf(buf, sizeof buf, "%.9g", e.lr);
        os << e.epoch << ',' << buf << ',' << e.loss.csv_row() << ',';
        if (e.val_dice) {
            std::snprintf(buf, sizeof buf, "%.6f", *e.val_dice);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

nlohmann::json RunRecord::to_json() const
{
    nlohmann::json j;
    j["tag"] = tag;
    j["network"] = msa::to_json(network);
    j["train"] = msa::to_json(train);
    j["parameter_count"] = parameter_count;
    j["steps"] = steps;
    j["best_epoch"] = best_epoch;
    j["best_val_dice"] = best_val_dice;
    j["wall_seconds"] = wall_seconds;
    j["checkpoint"] = checkpoint_path.string();
    j["epochs"] = nlohmann::json::array();
    for (const auto& e : epochs) {
        nlohmann::json ej = e.loss.to_json();
        ej["epoch"] = e.epoch;
        ej["lr"] = e.lr;
        ej["batches"] = e.batches;
        ej["seconds"] = e.seconds;
        if (e.val_dice) ej["val_dice"] = *e.val_dice;
        j["epochs"].push_back(ej);
    }
    j["val"] = val_report.to_json();
    j["final_val"] = final_val_report.to_json();
    if (!test_report.samples.empty()) j["test"] = test_report.to_json();
    if (affinity)
        j["affinity"] = {{"foreground", affinity->foreground},
                         {"background", affinity->background},
                         {"foreground_pixels", affinity->foreground_count},
                         {"background_pixels", affinity->background_count}};
    return j;
}

}  // namespace msa
