#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11/CLI11.hpp>

#include "msa/cli/cli.hpp"
#include "msa/error.hpp"
#include "msa/kernels/parallel.hpp"
#include "msa/report/report.hpp"

namespace fs = std::filesystem;

namespace msa {

namespace {

// Bad flag values found after parsing; reported as usage errors.
class UsageError : public Error {
public:
    using Error::Error;
};

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

std::string fixed(double v, int digits = 4)
{
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

struct Common {
    std::string config;
    std::string data;
    std::string runs = "runs";
    std::string tag;
    std::optional<int> size;
    bool deterministic = false;
    bool fast = false;
    bool quiet = false;
};

ExperimentConfig resolve_config(const Common& c)
{
    ExperimentConfig cfg;
    if (!c.config.empty()) cfg = load_experiment_config(c.config);
    if (c.size) cfg.image_size = *c.size;
    if (c.deterministic && c.fast) throw UsageError("--deterministic and --fast are mutually exclusive");
    if (c.deterministic) cfg.train.deterministic = true;
    if (c.fast) cfg.train.deterministic = false;
    cfg.validate();
    return cfg;
}

void apply_flags(TrainConfig& t, const std::optional<std::string>& flags, const std::optional<int>& gamma)
{
    if (flags) {
        t.use_spcl = t.use_cafm = t.use_msd = false;
        std::stringstream ss(*flags);
        std::string f;
        while (std::getline(ss, f, ',')) {
            if (f == "spcl") t.use_spcl = true;
            else if (f == "cafm") t.use_cafm = true;
            else if (f == "msd") t.use_msd = true;
            else if (f != "none" && !f.empty())
                throw UsageError("--flags: unknown component '" + f + "' (expected spcl, cafm, msd or none)");
        }
    }
    if (gamma) {
        if (*gamma == 0) {
            t.loss.gamma = 0.0;
            t.use_spcl = false;
        } else {
            if (flags && !t.use_spcl) throw UsageError("--gamma 1 contradicts --flags without spcl");
            t.loss.gamma = 1.0;
            t.use_spcl = true;
        }
    }
}

std::vector<SegmentationSample> load(const Common& c, int image_size)
{
    auto ds = load_dataset(c.data, image_size);
    if (ds.empty()) throw IoError("no samples under " + c.data);
    return ds;
}

ProgressFn progress_printer(std::ostream& err, bool quiet, int epochs)
{
    if (quiet) return {};
    return [&err, epochs](const std::string& tag, const EpochLog& e) {
        err << "[" << tag << "] epoch " << e.epoch + 1 << "/" << epochs << " lr " << e.lr << " loss "
            << fixed(e.loss.total) << " (bce " << fixed(e.loss.bce) << " dice " << fixed(e.loss.dice) << " sce "
            << fixed(e.loss.sce) << " pcl " << fixed(e.loss.pcl) << ")";
        if (e.val_dice) err << " val_dice " << fixed(*e.val_dice);
        err << " " << fixed(e.seconds, 1) << "s\n";
    };
}

void print_summary(std::ostream& out, const MetricsReport& r, const std::string& title)
{
    out << title << " (" << r.samples.size() << " samples)\n";
    for (const auto& m : MetricsReport::metric_names()) {
        const auto s = r.summary(m);
        out << "  " << m << " " << fixed(s.mean) << " ± " << fixed(s.std);
        if (s.n != r.samples.size()) out << "  (" << r.samples.size() - s.n << " excluded)";
        out << '\n';
    }
}

void write_panels(const fs::path& dir, Network<float>& net, const std::vector<SegmentationSample>& samples, int count)
{
    if (count <= 0 || samples.empty()) return;
    fs::create_directories(dir);
    std::vector<SegmentationSample> subset(samples.begin(), samples.begin() + std::min<std::size_t>(count, samples.size()));
    const auto pred = predict_masks(net, subset);
    std::string csv = "id,kind,y0,x0,y1,x1,pixels\n";
    for (std::size_t i = 0; i < subset.size(); ++i) {
        std::vector<OverlayBox> boxes;
        const auto img = render_qualitative(subset[i].image, subset[i].mask, pred[i], &boxes);
        write_png_rgb(dir / (subset[i].id + ".png"), img.h, img.w, img.data);
        for (const auto& b : boxes)
            csv += subset[i].id + "," + (b.false_negative ? "FN" : "FP") + "," + std::to_string(b.y0) + "," +
                   std::to_string(b.x0) + "," + std::to_string(b.y1) + "," + std::to_string(b.x1) + "," +
                   std::to_string(b.pixels) + "\n";
    }
    write_text(dir / "boxes.csv", csv);
}

void add_common(CLI::App* cmd, Common& c, bool needs_data)
{
    cmd->add_option("--config", c.config, "Experiment config JSON (docs/config.md)")->check(CLI::ExistingFile);
    if (needs_data) cmd->add_option("--data", c.data, "Dataset root with images/ and masks/")->required();
    cmd->add_option("--size", c.size, "Resize samples to this resolution (overrides data.image_size)")
        ->check(CLI::PositiveNumber);
}

void add_training(CLI::App* cmd, Common& c)
{
    cmd->add_option("--runs", c.runs, "Directory receiving run folders");
    cmd->add_flag("--deterministic", c.deterministic, "Fixed-order reductions (default on)");
    cmd->add_flag("--fast", c.fast, "Allow order-dependent reductions");
    cmd->add_flag("--quiet", c.quiet, "No per-epoch progress");
}

// ---------------------------------------------------------------- generate

int cmd_generate(const Common& c, const std::optional<std::uint64_t>& seed, const std::optional<int>& count,
                 const std::string& out_dir, bool force, std::ostream& out)
{
    ExperimentConfig cfg;
    if (!c.config.empty()) cfg = load_experiment_config(c.config);
    GeneratorConfig g = cfg.generator;
    if (seed) g.seed = *seed;
    if (count) g.count = *count;
    if (c.size) g.image_size = *c.size;
    g.validate();
    const fs::path root(out_dir);
    if (fs::exists(root) && !fs::is_empty(root)) {
        if (!force) throw IoError(root.string() + " exists and is not empty (use --force to overwrite)");
        fs::remove_all(root / "images");
        fs::remove_all(root / "masks");
        fs::remove(root / "manifest.json");
    }
    const auto ds = generate_dataset(g);
    save_dataset(root, ds, g);
    std::size_t fg = 0, px = 0, test = 0;
    for (const auto& s : ds) {
        fg += s.mask.count(1);
        px += s.mask.size();
        test += s.split == "test";
    }
    out << "wrote " << ds.size() << " samples (" << ds.size() - test << " train, " << test << " test) to "
        << root.string() << ", foreground " << fixed(100.0 * double(fg) / double(px), 2) << "%\n";
    return kExitOk;
}

// ---------------------------------------------------------------- train

int cmd_train(const Common& c, const std::optional<std::string>& flags, const std::optional<int>& gamma, int folds,
              int fold, bool all_folds, int panels, std::ostream& out, std::ostream& err)
{
    ExperimentConfig cfg = resolve_config(c);
    apply_flags(cfg.train, flags, gamma);
    cfg.train.validate();
    const auto ds = load(c, cfg.image_size);
    const fs::path dir = make_run_dir(c.runs, c.tag.empty() ? "train" : c.tag);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    const auto progress = progress_printer(err, c.quiet, cfg.train.epochs);

    if (all_folds) {
        const auto cv = cross_validate(cfg.network, cfg.train, ds, folds, "cv", progress);
        for (std::size_t f = 0; f < cv.folds.size(); ++f) {
            RunRecord rec = cv.folds[f];
            rec.checkpoint.meta["image_size"] = cfg.image_size;
            write_run(dir / ("fold_" + std::to_string(f)), rec);
        }
        write_text(dir / "metrics.csv", cv.to_csv());
        write_text(dir / "record.json", cv.to_json().dump(2) + "\n");
        write_text(dir / "log.csv", "fold,best_epoch,best_val_dice,steps,wall_seconds\n" + [&] {
            std::string s;
            for (std::size_t f = 0; f < cv.folds.size(); ++f)
                s += std::to_string(f) + "," + std::to_string(cv.folds[f].best_epoch) + "," +
                     fixed(cv.folds[f].best_val_dice, 6) + "," + std::to_string(cv.folds[f].steps) + "," +
                     fixed(cv.folds[f].wall_seconds, 3) + "\n";
            return s;
        }());
        out << "cross-validation (" << cv.folds.size() << " folds)\n";
        for (const auto& m : MetricsReport::metric_names()) {
            const auto s = cv.summary(m);
            out << "  " << m << " " << fixed(s.mean) << " ± " << fixed(s.std) << '\n';
        }
        out << "run directory: " << dir.string() << '\n';
        return kExitOk;
    }

    std::vector<SegmentationSample> pool, test;
    for (const auto& s : ds) (s.split == "test" ? test : pool).push_back(s);
    if (fold < 0 || fold >= folds) throw UsageError("--fold must be in [0, --folds)");
    const auto split = kfold_split(pool.size(), folds, cfg.train.seed);
    FoldData d;
    for (auto i : split[std::size_t(fold)].train) d.train.push_back(pool[i]);
    for (auto i : split[std::size_t(fold)].val) d.val.push_back(pool[i]);
    d.test = test;
    auto rec = train_fold(cfg.network, cfg.train, d, "fold_" + std::to_string(fold), progress);
    rec.checkpoint.meta["image_size"] = cfg.image_size;
    write_run(dir, rec);
    Network<float> net(rec.network);
    restore(net, rec.checkpoint);
    write_panels(dir / "panels", net, d.val, panels);
    print_summary(out, rec.val_report, "validation, best epoch " + std::to_string(rec.best_epoch));
    if (!rec.test_report.samples.empty()) print_summary(out, rec.test_report, "test split");
    out << "run directory: " << dir.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- evaluate

int cmd_evaluate(const Common& c, const std::string& checkpoint, const std::string& out_dir, const std::string& split,
                 bool oracle, int panels, std::ostream& out)
{
    const Checkpoint ck = load_checkpoint(checkpoint);
    int image_size = 256;
    NetworkConfig net_cfg = ck.network;
    if (!c.config.empty()) {
        const auto cfg = resolve_config(c);
        image_size = cfg.image_size;
        // The config must describe the checkpointed network, ablation switches included.
        net_cfg = apply_ablation(cfg.network, cfg.train);
    } else if (c.size) {
        image_size = *c.size;
    } else if (ck.meta.contains("image_size")) {
        image_size = ck.meta.at("image_size").get<int>();
    }
    Network<float> net(net_cfg);
    restore(net, ck);

    std::vector<SegmentationSample> samples;
    for (auto& s : load(c, image_size))
        if (split == "all" || s.split == split) samples.push_back(std::move(s));
    if (samples.empty()) throw IoError("no samples in split '" + split + "'");

    const MetricsReport report = evaluate_model(net, samples);
    const fs::path dir = out_dir.empty() ? fs::path(checkpoint).parent_path() / "evaluation" : fs::path(out_dir);
    fs::create_directories(dir);
    write_text(dir / "metrics.csv", report.to_csv());
    write_text(dir / "summary.json", report.to_json().dump(2) + "\n");
    write_panels(dir / "panels", net, samples, panels);
    print_summary(out, report, "evaluation on " + split);

    if (oracle) {
        const auto pred = predict_masks(net, samples);
        std::string csv = "id,metric,transform,brute_force,abs_diff\n";
        int discrepancies = 0;
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto a = evaluate_sample(samples[i].id, pred[i], samples[i].mask, DistanceBackend::transform);
            const auto b = evaluate_sample(samples[i].id, pred[i], samples[i].mask, DistanceBackend::brute_force);
            for (auto [name, x, y] : {std::tuple{"asd", a.asd, b.asd}, std::tuple{"acd", a.acd, b.acd}}) {
                if (x.has_value() != y.has_value()) {
                    ++discrepancies;
                    csv += samples[i].id + "," + name + ",,,presence\n";
                } else if (x) {
                    const double diff = std::abs(*x - *y);
                    if (diff > 1e-9) ++discrepancies;
                    csv += samples[i].id + "," + name + "," + fixed(*x, 12) + "," + fixed(*y, 12) + "," +
                           fixed(diff, 15) + "\n";
                }
            }
        }
        write_text(dir / "oracle.csv", csv);
        out << "oracle: " << discrepancies << " discrepancies over " << samples.size() << " samples\n";
        if (discrepancies) return kExitFailure;
    }
    out << "results: " << dir.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- ablate

int cmd_ablate(const Common& c, const std::string& mode, int folds, std::ostream& out, std::ostream& err)
{
    const ExperimentConfig cfg = resolve_config(c);
    const auto ds = load(c, cfg.image_size);
    const fs::path dir = make_run_dir(c.runs, c.tag.empty() ? "ablate-" + mode : c.tag);
    write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
    const auto progress = progress_printer(err, c.quiet, cfg.train.epochs);

    std::string log = "arm,fold,params,best_epoch,best_val_dice,steps\n";
    auto save_arm = [&](const std::string& name, const CrossValidationResult& cv) {
        for (std::size_t f = 0; f < cv.folds.size(); ++f) {
            RunRecord rec = cv.folds[f];
            rec.checkpoint.meta["image_size"] = cfg.image_size;
            write_run(dir / name / ("fold_" + std::to_string(f)), rec);
            log += name + "," + std::to_string(f) + "," + std::to_string(rec.parameter_count) + "," +
                   std::to_string(rec.best_epoch) + "," + fixed(rec.best_val_dice, 6) + "," +
                   std::to_string(rec.steps) + "\n";
        }
        write_text(dir / name / "metrics.csv", cv.to_csv());
    };
    if (mode == "gamma") {
        const auto g = gamma_ablation(cfg.network, cfg.train, ds, folds, progress);
        save_arm("gamma0", g.baseline);
        save_arm("gamma1", g.spcl);
        write_report(dir, g);
        out << g.table_markdown();
    } else {
        const auto a = component_ablation(cfg.network, cfg.train, ds, folds, progress);
        for (std::size_t i = 0; i < a.results.size(); ++i) save_arm("config" + std::to_string(i + 1), a.results[i]);
        write_report(dir, a);
        out << a.table_markdown();
    }
    fs::copy_file(dir / "per_fold.csv", dir / "metrics.csv", fs::copy_options::overwrite_existing);
    write_text(dir / "log.csv", log);
    out << "run directory: " << dir.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------- report

int cmd_report(const std::string& run, std::ostream& out)
{
    const fs::path dir(run);
    if (!fs::is_directory(dir)) throw IoError("no run directory " + run);
    const auto written = render_plots(dir);
    bool any = !written.empty();
    if (fs::exists(dir / "table.md")) {
        std::ifstream in(dir / "table.md");
        out << in.rdbuf();
        any = true;
    } else if (fs::exists(dir / "metrics.csv")) {
        std::ifstream in(dir / "metrics.csv");
        out << in.rdbuf();
        any = true;
    }
    for (const auto& p : written) out << "rendered " << p.string() << '\n';
    if (!any) throw IoError(run + " holds no report data (metrics.csv, scatter.csv or dice_box.csv)");
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"MSA-UNet3+ vessel segmentation: data generation, training, evaluation and ablations", "msa"};
    app.set_version_flag("--version", std::string(MSA_VERSION));
    app.require_subcommand(1);

    Common common;
    std::optional<std::uint64_t> seed;
    std::optional<int> count, gamma;
    std::optional<std::string> flags;
    std::string out_dir, checkpoint, split = "all", mode, run;
    bool force = false, all_folds = false, oracle = false;
    int folds = 5, fold = 0, panels = 3;

    auto* gen = app.add_subcommand("generate", "Write a synthetic vessel dataset");
    gen->add_option("--config", common.config, "Experiment config JSON (generator section)")->check(CLI::ExistingFile);
    gen->add_option("--seed", seed, "Generator seed");
    gen->add_option("--count", count, "Number of samples")->check(CLI::PositiveNumber);
    gen->add_option("--size", common.size, "Image side length in pixels")->check(CLI::PositiveNumber);
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_flag("--force", force, "Overwrite a non-empty output directory");

    auto* train = app.add_subcommand("train", "Train one fold (or all folds) and write a run directory");
    add_common(train, common, true);
    add_training(train, common);
    train->add_option("--gamma", gamma, "SPCL weight")->check(CLI::IsMember({0, 1}));
    train->add_option("--flags", flags, "Enabled components: comma list of spcl,cafm,msd, or none");
    train->add_option("--tag", common.tag, "Run folder suffix");
    train->add_option("--folds", folds, "Number of cross-validation folds")->check(CLI::Range(2, 1000));
    train->add_option("--fold", fold, "Fold to train")->check(CLI::NonNegativeNumber);
    train->add_flag("--cv", all_folds, "Train every fold");
    train->add_option("--panels", panels, "Qualitative panels to render")->check(CLI::NonNegativeNumber);

    auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
    add_common(eval, common, true);
    eval->add_option("--checkpoint", checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out_dir, "Output directory (default: <checkpoint dir>/evaluation)");
    eval->add_option("--split", split, "Samples to score")->check(CLI::IsMember({"all", "train", "test"}));
    eval->add_flag("--oracle", oracle, "Recompute ASD/ACD by exhaustive search and compare");
    eval->add_option("--panels", panels, "Qualitative panels to render")->check(CLI::NonNegativeNumber);

    auto* ablate = app.add_subcommand("ablate", "Run the gamma or component ablation protocol");
    add_common(ablate, common, true);
    add_training(ablate, common);
    ablate->add_option("--mode", mode, "gamma or components")->required()->check(CLI::IsMember({"gamma", "components"}));
    ablate->add_option("--tag", common.tag, "Run folder suffix");
    ablate->add_option("--folds", folds, "Number of cross-validation folds")->check(CLI::Range(2, 1000));

    auto* report = app.add_subcommand("report", "Re-render plots of a run directory from its CSVs");
    report->add_option("--run", run, "Run directory")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_generate(common, seed, count, out_dir, force, out);
        if (train->parsed()) return cmd_train(common, flags, gamma, folds, fold, all_folds, panels, out, err);
        if (eval->parsed()) return cmd_evaluate(common, checkpoint, out_dir, split, oracle, panels, out);
        if (ablate->parsed()) return cmd_ablate(common, mode, folds, out, err);
        return cmd_report(run, out);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const ConfigError& e) {
        err << "invalid configuration: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NonFiniteLoss& e) {
        err << "training diverged: " << e.what() << '\n';
        return kExitFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace msa
