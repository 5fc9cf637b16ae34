#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "msa/error.hpp"
#include "msa/training/trainer.hpp"

namespace msa {

namespace {

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double fold_mean(const MetricsReport& r, const std::string& metric)
{
    const auto v = r.values(metric);
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return summarize(v).mean;
}

std::string metric_label(const std::string& m)
{
    if (m == "recall") return "Recall";
    if (m == "f1") return "F1";
    if (m == "dice") return "Dice";
    if (m == "asd") return "ASD";
    return "ACD";
}

std::string mean_std(const MetricSummary& s)
{
    if (s.n == 0) return "n/a";
    return fmt("%.4f", s.mean) + "±" + fmt("%.4f", s.std);
}

}  // namespace

// ---------------------------------------------------------------- cross-validation

std::vector<double> CrossValidationResult::fold_values(const std::string& metric) const
{
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(fold_mean(f.val_report, metric));
    return v;
}

std::vector<double> CrossValidationResult::test_fold_values(const std::string& metric) const
{
    std::vector<double> v;
    for (const auto& f : folds) v.push_back(fold_mean(f.test_report, metric));
    return v;
}

MetricSummary CrossValidationResult::summary(const std::string& metric) const
{
    std::vector<double> v;
    for (double x : fold_values(metric))
        if (!std::isnan(x)) v.push_back(x);
    return summarize(v);
}

std::string CrossValidationResult::to_csv() const
{
    const auto& names = MetricsReport::metric_names();
    std::ostringstream os;
    os << "id";
    for (const auto& m : names) os << ',' << m;
    os << '\n';
    for (std::size_t f = 0; f < folds.size(); ++f) {
        os << "fold_" << f;
        for (const auto& m : names) {
            const double v = fold_values(m)[f];
            os << ',' << (std::isnan(v) ? std::string("excluded") : fmt("%.9f", v));
        }
        os << '\n';
    }
    for (const char* row : {"mean", "std"}) {
        os << row;
        for (const auto& m : names) {
            const auto s = summary(m);
            os << ',' << fmt("%.9f", row[0] == 'm' ? s.mean : s.std);
        }
        os << '\n';
    }
    return os.str();
}

nlohmann::json CrossValidationResult::to_json() const
{
    nlohmann::json j;
    j["tag"] = tag;
    j["k"] = folds.size();
    for (const auto& m : MetricsReport::metric_names()) {
        const auto s = summary(m);
        j["summary"][m] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
        j["folds"][m] = fold_values(m);
        j["test_folds"][m] = test_fold_values(m);
    }
    return j;
}

CrossValidationResult cross_validate(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                                     const std::vector<SegmentationSample>& dataset, int k, const std::string& tag,
                                     const ProgressFn& progress)
{
    std::vector<const SegmentationSample*> pool, test;
    for (const auto& s : dataset) (s.split == "test" ? test : pool).push_back(&s);
    const auto folds = kfold_split(pool.size(), k, cfg.seed);

    CrossValidationResult out;
    out.tag = tag;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        FoldData d;
        for (auto i : folds[f].train) d.train.push_back(*pool[i]);
        for (auto i : folds[f].val) d.val.push_back(*pool[i]);
        for (const auto* s : test) d.test.push_back(*s);
        out.folds.push_back(train_fold(net_cfg, cfg, d, tag + "/fold_" + std::to_string(f), progress));
    }
    return out;
}

// ---------------------------------------------------------------- significance

bool higher_is_better(const std::string& metric)
{
    return metric != "asd" && metric != "acd";
}

TTest paired_t_test(const std::vector<double>& a, const std::vector<double>& b, bool higher)
{
    if (a.size() != b.size()) throw ArgumentError("paired_t_test: samples differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!std::isnan(a[i]) && !std::isnan(b[i])) d.push_back(higher ? b[i] - a[i] : a[i] - b[i]);
    if (d.size() < 2) throw ArgumentError("paired_t_test: need at least two complete pairs");
    const auto s = summarize(d);
    TTest r;
    r.mean_difference = s.mean;
    r.df = int(d.size()) - 1;
    if (s.std == 0.0) {
        r.t = s.mean > 0 ? std::numeric_limits<double>::infinity()
                         : s.mean < 0 ? -std::numeric_limits<double>::infinity() : 0.0;
        r.p = s.mean > 0 ? 0.0 : s.mean < 0 ? 1.0 : 0.5;
        return r;
    }
    r.t = s.mean / (s.std / std::sqrt(double(d.size())));
    const boost::math::students_t dist(r.df);
    r.p = boost::math::cdf(boost::math::complement(dist, r.t));
    return r;
}

std::string significance_marker(double p)
{
    if (p < 0.01) return "∇∇";
    if (p < 0.05) return "∇";
    if (p < 0.1) return "◇";
    if (p < 0.2) return "◇◇";
    return "";
}

// ---------------------------------------------------------------- gamma ablation

GammaAblation gamma_ablation(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                             const std::vector<SegmentationSample>& dataset, int k, const ProgressFn& progress)
{
    GammaAblation g;
    TrainConfig off = cfg, on = cfg;
    off.use_spcl = false;
    off.loss.gamma = 0.0;
    on.use_spcl = true;
    on.loss.gamma = 1.0;
    g.baseline = cross_validate(net_cfg, off, dataset, k, "gamma0", progress);
    g.spcl = cross_validate(net_cfg, on, dataset, k, "gamma1", progress);
    if (g.baseline.folds.size() != g.spcl.folds.size()) throw Error("gamma_ablation: fold mismatch");
    for (std::size_t f = 0; f < g.baseline.folds.size(); ++f) {
        auto ids = [](const MetricsReport& r) {
            std::vector<std::string> v;
            for (const auto& s : r.samples) v.push_back(s.id);
            return v;
        };
        if (ids(g.baseline.folds[f].val_report) != ids(g.spcl.folds[f].val_report))
            throw Error("gamma_ablation: fold " + std::to_string(f) + " validation sets differ between arms");
    }
    for (const auto& m : MetricsReport::metric_names())
        g.tests.emplace_back(m, paired_t_test(g.baseline.fold_values(m), g.spcl.fold_values(m), higher_is_better(m)));
    return g;
}

std::string GammaAblation::table_markdown() const
{
    const auto& names = MetricsReport::metric_names();
    std::ostringstream os;
    os << "| Arm |";
    for (const auto& m : names) os << ' ' << metric_label(m) << (higher_is_better(m) ? " ↑" : " ↓") << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < names.size(); ++i) os << "---|";
    os << "\n| γ=0 (baseline) |";
    for (const auto& m : names) os << ' ' << mean_std(baseline.summary(m)) << " |";
    os << "\n| γ=1 (SPCL) |";
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto& t = tests[i].second;
        const auto mark = significance_marker(t.p);
        os << ' ' << mean_std(spcl.summary(names[i])) << (mark.empty() ? "" : " " + mark) << " |";
    }
    os << "\n| p (paired, one-tailed) |";
    for (const auto& [m, t] : tests) os << ' ' << fmt("%.4g", t.p) << " |";
    os << "\n\n∇∇ p < 0.01, ∇ p < 0.05, ◇ p < 0.1, ◇◇ p < 0.2 (weak evidence). " << baseline.folds.size()
       << " paired folds.\n";
    return os.str();
}

std::string GammaAblation::table_csv() const
{
    const auto& names = MetricsReport::metric_names();
    std::ostringstream os;
    os << "row";
    for (const auto& m : names) os << ',' << m;
    os << '\n';
    auto row = [&](const char* label, auto&& value) {
        os << label;
        for (std::size_t i = 0; i < names.size(); ++i) os << ',' << value(i);
        os << '\n';
    };
    row("gamma0_mean", [&](std::size_t i) { return fmt("%.9f", baseline.summary(names[i]).mean); });
    row("gamma0_std", [&](std::size_t i) { return fmt("%.9f", baseline.summary(names[i]).std); });
    row("gamma1_mean", [&](std::size_t i) { return fmt("%.9f", spcl.summary(names[i]).mean); });
    row("gamma1_std", [&](std::size_t i) { return fmt("%.9f", spcl.summary(names[i]).std); });
    row("mean_difference", [&](std::size_t i) { return fmt("%.9f", tests[i].second.mean_difference); });
    row("t", [&](std::size_t i) { return fmt("%.9g", tests[i].second.t); });
    row("df", [&](std::size_t i) { return std::to_string(tests[i].second.df); });
    row("p", [&](std::size_t i) { return fmt("%.9g", tests[i].second.p); });
    row("marker", [&](std::size_t i) { return significance_marker(tests[i].second.p); });
    return os.str();
}

nlohmann::json GammaAblation::to_json() const
{
    nlohmann::json j{{"gamma0", baseline.to_json()}, {"gamma1", spcl.to_json()}};
    for (const auto& [m, t] : tests)
        j["tests"][m] = {{"mean_difference", t.mean_difference},
                         {"t", t.t},
                         {"df", t.df},
                         {"p", t.p},
                         {"marker", significance_marker(t.p)}};
    return j;
}

// ---------------------------------------------------------------- component ablation

std::vector<AblationFlags> component_grid()
{
    std::vector<AblationFlags> g;
    for (int i = 0; i < 8; ++i) g.push_back({bool(i & 1), bool(i & 2), bool(i & 4)});
    return g;
}

ComponentAblation component_ablation(const NetworkConfig& net_cfg, const TrainConfig& cfg,
                                     const std::vector<SegmentationSample>& dataset, int k,
                                     const ProgressFn& progress)
{
    ComponentAblation out;
    out.flags = component_grid();
    for (std::size_t i = 0; i < out.flags.size(); ++i) {
        const auto& f = out.flags[i];
        TrainConfig c = cfg;
        c.use_spcl = f.spcl;
        c.use_cafm = f.cafm;
        c.use_msd = f.msd;
        if (f.spcl && c.loss.gamma == 0.0) c.loss.gamma = 1.0;
        out.parameter_counts.push_back(count_parameters(apply_ablation(net_cfg, c)));
        out.results.push_back(cross_validate(net_cfg, c, dataset, k, "config" + std::to_string(i + 1), progress));
    }
    return out;
}

std::string ComponentAblation::table_markdown() const
{
    const auto& names = MetricsReport::metric_names();
    std::ostringstream os;
    os << "| Idx | SPCL | CAFM | MSD | Params |";
    for (const auto& m : names) os << ' ' << metric_label(m) << (higher_is_better(m) ? " ↑" : " ↓") << " |";
    os << "\n|---|---|---|---|---|";
    for (std::size_t i = 0; i < names.size(); ++i) os << "---|";
    os << '\n';
    auto mark = [](bool b) { return b ? "✓" : "✗"; };
    for (std::size_t r = 0; r < flags.size(); ++r) {
        os << "| " << r + 1 << " | " << mark(flags[r].spcl) << " | " << mark(flags[r].cafm) << " | "
           << mark(flags[r].msd) << " | " << parameter_counts[r] << " |";
        for (const auto& m : names) os << ' ' << mean_std(results[r].summary(m)) << " |";
        os << '\n';
    }
    return os.str();
}

std::string ComponentAblation::table_csv() const
{
    std::ostringstream os;
    os << "idx,spcl,cafm,msd,params";
    for (const auto& m : MetricsReport::metric_names()) os << ',' << m << "_mean," << m << "_std";
    os << '\n';
    for (std::size_t r = 0; r < flags.size(); ++r) {
        os << r + 1 << ',' << flags[r].spcl << ',' << flags[r].cafm << ',' << flags[r].msd << ','
           << parameter_counts[r];
        for (const auto& m : MetricsReport::metric_names()) {
            const auto s = results[r].summary(m);
            os << ',' << fmt("%.9f", s.mean) << ',' << fmt("%.9f", s.std);
        }
        os << '\n';
    }
    return os.str();
}

nlohmann::json ComponentAblation::to_json() const
{
    nlohmann::json j = nlohmann::json::array();
    for (std::size_t r = 0; r < flags.size(); ++r)
        j.push_back({{"idx", r + 1},
                     {"spcl", flags[r].spcl},
                     {"cafm", flags[r].cafm},
                     {"msd", flags[r].msd},
                     {"params", parameter_counts[r]},
                     {"result", results[r].to_json()}});
    return j;
}

// ---------------------------------------------------------------- run directories

void write_run(const std::filesystem::path& dir, const RunRecord& rec)
{
    std::filesystem::create_directories(dir);
    auto write = [&](const char* name, const std::string& text) {
        std::ofstream f(dir / name, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + (dir / name).string());
        f << text;
    };
    write("config.json", nlohmann::json{{"network", to_json(rec.network)}, {"train", to_json(rec.train)}}.dump(2) + "\n");
    write("log.csv", rec.log_csv());
    write("metrics.csv", rec.val_report.to_csv());
    if (!rec.test_report.samples.empty()) write("test_metrics.csv", rec.test_report.to_csv());
    save_checkpoint(dir / "checkpoint.msackpt", rec.checkpoint);
    RunRecord copy = rec;
    copy.checkpoint_path = dir / "checkpoint.msackpt";
    write("record.json", copy.to_json().dump(2) + "\n");
}

}  // namespace msa
