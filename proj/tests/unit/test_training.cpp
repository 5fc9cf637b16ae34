#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "msa/error.hpp"
#include "msa/training/trainer.hpp"

using namespace msa;
namespace fs = std::filesystem;

namespace {

NetworkConfig tiny_net()
{
    NetworkConfig c;
    c.preset = Preset::custom;
    c.depth = 3;
    c.base_channels = 2;
    c.decoder_channels = 2;
    c.embedding_dim = 4;
    c.se_reduction = 2;
    return c;
}

std::vector<SegmentationSample> tiny_dataset(int count, int size = 16)
{
    GeneratorConfig g;
    g.count = count;
    g.image_size = size;
    g.width_min = 2;
    g.width_max = 5;
    return generate_dataset(g);
}

TrainConfig quick_train()
{
    TrainConfig t;
    t.epochs = 2;
    t.batch_size = 2;
    t.lr = 1e-3;
    return t;
}

// Closed-form Student t CDF for four degrees of freedom.
double t_cdf_df4(double t)
{
    const double s = 1.0 + t * t / 4.0;
    return 0.5 + 0.375 * (t / std::sqrt(s)) * (1.0 - t * t / (12.0 * s));
}

}  // namespace

TEST(LearningRate, StepDecayAtMilestones)
{
    TrainConfig c;
    EXPECT_EQ(learning_rate(c, 0), 1e-4);
    EXPECT_EQ(learning_rate(c, 59), 1e-4);
    EXPECT_EQ(learning_rate(c, 60), 1e-5);
    EXPECT_EQ(learning_rate(c, 79), 1e-5);
    EXPECT_EQ(learning_rate(c, 80), 1e-6);
    EXPECT_EQ(learning_rate(c, 99), 1e-6);
}

TEST(LearningRate, PiecewiseConstantProperty)
{
    TrainConfig c;
    c.epochs = 37;
    c.lr = 3e-3;
    c.lr_decay_factor = 0.5;
    c.lr_milestones = {0.3, 0.5, 0.9};
    for (int e = 0; e < c.epochs; ++e) {
        int passed = 0;
        for (std::size_t i = 0; i < c.lr_milestones.size(); ++i) passed += e >= milestone_epoch(c, i);
        EXPECT_DOUBLE_EQ(learning_rate(c, e), c.lr * std::pow(0.5, passed)) << e;
    }
}

TEST(TrainConfig, ValidationNamesField)
{
    TrainConfig c;
    c.lr_milestones = {0.8, 0.6};
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.batch_size = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    try {
        train_config_from_json({{"loss", {{"gama", 1}}}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.loss.gama"), std::string::npos);
    }
    try {
        train_config_from_json({{"batch_size", "five"}});
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("train.batch_size"), std::string::npos);
    }
}

TEST(TrainConfig, JsonRoundTrip)
{
    TrainConfig c;
    c.epochs = 7;
    c.seed = 99;
    c.loss.gamma = 0.0;
    c.contrastive.margin = 0.3;
    c.use_msd = false;
    c.augment.contrast_max = 1.1;
    const auto back = train_config_from_json(to_json(c));
    EXPECT_EQ(to_json(back), to_json(c));
}

TEST(TrainConfig, SpclSwitchZeroesGammaOnly)
{
    TrainConfig c;
    c.use_spcl = false;
    EXPECT_EQ(c.effective_weights().gamma, 0.0);
    EXPECT_EQ(c.effective_weights().alpha, c.loss.alpha);
    const auto net = NetworkConfig::desk();
    TrainConfig on;
    EXPECT_EQ(count_parameters(apply_ablation(net, c)), count_parameters(apply_ablation(net, on)));
    c.use_msd = false;
    EXPECT_NE(count_parameters(apply_ablation(net, c)), count_parameters(apply_ablation(net, on)));
}

TEST(Adam, MatchesScalarOracle)
{
    Tensor<float> w(1, 1, 1, 1, 0.5f), g(1, 1, 1, 1);
    nn::ParameterList<float> params{{"w", &w, &g}};
    Adam opt(params);
    double m = 0, v = 0, x = 0.5;
    const double grads[] = {0.3, -0.1, 0.7};
    for (int t = 1; t <= 3; ++t) {
        g[0] = float(grads[t - 1]);
        opt.step(0.01);
        m = 0.9 * m + 0.1 * double(g[0]);
        v = 0.999 * v + 0.001 * double(g[0]) * g[0];
        const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
        x = float(x - 0.01 * mh / (std::sqrt(vh) + 1e-8));
        EXPECT_FLOAT_EQ(w[0], float(x)) << t;
    }
}

TEST(TTest, MatchesClosedFormOracle)
{
    const std::vector<double> a{0.80, 0.82, 0.79, 0.85, 0.81};
    const std::vector<double> b{0.83, 0.82, 0.84, 0.86, 0.80};
    double mean = 0;
    for (int i = 0; i < 5; ++i) mean += b[i] - a[i];
    mean /= 5;
    double ss = 0;
    for (int i = 0; i < 5; ++i) ss += (b[i] - a[i] - mean) * (b[i] - a[i] - mean);
    const double t = mean / (std::sqrt(ss / 4) / std::sqrt(5.0));

    const auto r = paired_t_test(a, b, true);
    EXPECT_EQ(r.df, 4);
    EXPECT_NEAR(r.t, t, 1e-9);
    EXPECT_NEAR(r.p, 1.0 - t_cdf_df4(t), 1e-9);

    // Distances improve downwards: same numbers read as distances flip the sign.
    const auto d = paired_t_test(a, b, false);
    EXPECT_NEAR(d.t, -t, 1e-9);
    EXPECT_NEAR(d.p, 1.0 - t_cdf_df4(-t), 1e-9);
}

TEST(TTest, DegenerateAndInvalidInput)
{
    EXPECT_EQ(paired_t_test({1, 2, 3}, {1, 2, 3}, true).p, 0.5);
    EXPECT_EQ(paired_t_test({1, 2, 3}, {2, 3, 4}, true).p, 0.0);
    EXPECT_THROW(paired_t_test({1, 2}, {1}, true), ArgumentError);
    EXPECT_THROW(paired_t_test({1}, {2}, true), ArgumentError);
}

TEST(TTest, Markers)
{
    EXPECT_EQ(significance_marker(0.005), "∇∇");
    EXPECT_EQ(significance_marker(0.01), "∇");
    EXPECT_EQ(significance_marker(0.049), "∇");
    EXPECT_EQ(significance_marker(0.05), "◇");
    EXPECT_EQ(significance_marker(0.15), "◇◇");
    EXPECT_EQ(significance_marker(0.2), "");
}

TEST(ComponentGrid, EightDistinctConfigurationsInTableOrder)
{
    const auto g = component_grid();
    ASSERT_EQ(g.size(), 8u);
    std::set<int> seen;
    for (const auto& f : g) seen.insert(f.spcl + 2 * f.cafm + 4 * f.msd);
    EXPECT_EQ(seen.size(), 8u);
    EXPECT_FALSE(g[0].spcl || g[0].cafm || g[0].msd);
    EXPECT_TRUE(g[7].spcl && g[7].cafm && g[7].msd);
    EXPECT_TRUE(g[1].spcl && !g[1].cafm && !g[1].msd);
    EXPECT_TRUE(!g[2].spcl && g[2].cafm && !g[2].msd);
    EXPECT_TRUE(!g[4].spcl && !g[4].cafm && g[4].msd);
}

TEST(Checkpoint, RoundTripReproducesMetricsBitwise)
{
    const auto ds = tiny_dataset(4);
    FoldData d;
    d.train = {ds[0], ds[1]};
    d.val = {ds[2], ds[3]};
    const auto rec = train_fold(tiny_net(), quick_train(), d);

    const fs::path dir = fs::temp_directory_path() / "msa_test_ckpt";
    fs::remove_all(dir);
    write_run(dir, rec);
    for (const char* f : {"config.json", "log.csv", "metrics.csv", "checkpoint.msackpt", "record.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;

    const auto ck = load_checkpoint(dir / "checkpoint.msackpt");
    Network<float> net(ck.network);
    restore(net, ck);
    EXPECT_EQ(evaluate_model(net, d.val).to_csv(), rec.val_report.to_csv());
    EXPECT_EQ(ck.meta.at("epoch").get<int>(), rec.best_epoch);
    fs::remove_all(dir);
}

TEST(Checkpoint, MismatchNamesFieldsAndCorruptionIsDetected)
{
    Network<float> a(tiny_net());
    a.init(1);
    const auto ck = snapshot(a);
    auto other = tiny_net();
    other.decoder_channels = 4;
    other.use_msd = false;
    Network<float> b(other);
    try {
        restore(b, ck);
        FAIL();
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("decoder_channels"), std::string::npos);
        EXPECT_NE(msg.find("use_msd"), std::string::npos);
        EXPECT_EQ(msg.find("embedding_dim"), std::string::npos);
    }

    const fs::path p = fs::temp_directory_path() / "msa_test_corrupt.msackpt";
    save_checkpoint(p, ck);
    {
        std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(-3, std::ios::end);
        f.put('\x7f');
    }
    EXPECT_THROW(load_checkpoint(p), IoError);
    {
        std::ofstream f(p, std::ios::binary);
        f << "NOTACKPT";
    }
    EXPECT_THROW(load_checkpoint(p), IoError);
    fs::remove(p);
}

TEST(TrainFold, SpclOffLogsZeroContrastiveTermsFlaggedSkipped)
{
    const auto ds = tiny_dataset(4);
    FoldData d;
    d.train = ds;
    auto t = quick_train();
    t.use_spcl = false;
    const auto rec = train_fold(tiny_net(), t, d);
    ASSERT_EQ(rec.epochs.size(), 2u);
    for (const auto& e : rec.epochs) {
        EXPECT_EQ(e.loss.sce, 0.0);
        EXPECT_EQ(e.loss.pcl, 0.0);
        EXPECT_EQ(e.loss.sce_skipped, "disabled");
        EXPECT_EQ(e.loss.pcl_skipped, "disabled");
        EXPECT_EQ(e.batches, 2);
    }
    EXPECT_FALSE(rec.affinity.has_value());
}

TEST(TrainFold, DeterministicRerunIsBitwiseIdentical)
{
    const auto ds = tiny_dataset(6);
    FoldData d;
    d.train = {ds[0], ds[1], ds[2], ds[3]};
    d.val = {ds[4], ds[5]};
    const auto a = train_fold(tiny_net(), quick_train(), d);
    const auto b = train_fold(tiny_net(), quick_train(), d);
    EXPECT_EQ(a.log_csv(), b.log_csv());
    EXPECT_EQ(a.val_report.to_csv(), b.val_report.to_csv());
    for (std::size_t i = 0; i < a.checkpoint.tensors.size(); ++i)
        ASSERT_TRUE(std::equal(a.checkpoint.tensors[i].value.span().begin(), a.checkpoint.tensors[i].value.span().end(),
                               b.checkpoint.tensors[i].value.span().begin()));
}

TEST(TrainFold, SeedStreamsAreIsolated)
{
    // Changing only the seed changes init, order and augmentation together;
    // switching augmentation off leaves init and order untouched.
    const auto ds = tiny_dataset(4);
    FoldData d;
    d.train = ds;
    auto t = quick_train();
    t.epochs = 1;
    t.batch_size = 4;
    t.max_steps = 1;
    const auto a = train_fold(tiny_net(), t, d);
    t.use_augment = false;
    const auto b = train_fold(tiny_net(), t, d);
    EXPECT_NE(a.epochs[0].loss.total, b.epochs[0].loss.total);

    // Init depends on its own stream only: identical for both runs above.
    Network<float> n1(tiny_net()), n2(tiny_net()), n3(tiny_net());
    n1.init(t.seed);
    n2.init(t.seed);
    n3.init(t.seed + 1);
    const auto& p1 = *n1.parameters()[0].value;
    EXPECT_TRUE(std::equal(p1.span().begin(), p1.span().end(), n2.parameters()[0].value->span().begin()));
    EXPECT_FALSE(std::equal(p1.span().begin(), p1.span().end(), n3.parameters()[0].value->span().begin()));
}

TEST(TrainFold, NonFiniteLossNamesBatch)
{
    auto ds = tiny_dataset(2);
    ds[1].image[0] = std::nanf("");
    FoldData d;
    d.train = ds;
    auto t = quick_train();
    t.use_augment = false;
    t.batch_size = 1;
    try {
        train_fold(tiny_net(), t, d);
        FAIL();
    } catch (const NonFiniteLoss& e) {
        EXPECT_NE(e.batch_id().find(ds[1].id), std::string::npos);
        EXPECT_NE(e.batch_id().find("epoch 0"), std::string::npos);
    }
}

TEST(CrossValidate, FiveRecordsAndMeanIsFoldMean)
{
    const auto ds = tiny_dataset(12);
    auto t = quick_train();
    t.epochs = 1;
    const auto cv = cross_validate(tiny_net(), t, ds, 5);
    ASSERT_EQ(cv.folds.size(), 5u);
    std::set<std::string> val_ids;
    std::size_t pool = 0;
    for (const auto& s : ds) pool += s.split == "train";
    for (const auto& f : cv.folds) {
        for (const auto& s : f.val_report.samples) EXPECT_TRUE(val_ids.insert(s.id).second);
        EXPECT_FALSE(f.test_report.samples.empty());
    }
    EXPECT_EQ(val_ids.size(), pool);
    const auto v = cv.fold_values("dice");
    double m = 0;
    for (double x : v) m += x;
    EXPECT_NEAR(cv.summary("dice").mean, m / 5, 1e-12);
}
