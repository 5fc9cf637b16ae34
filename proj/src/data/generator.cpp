#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "msa/data/dataset.hpp"
#include "msa/error.hpp"

namespace msa {

void GeneratorConfig::validate() const
{
    if (count < 1) throw ConfigError("generator.count must be >= 1");
    if (image_size < 8) throw ConfigError("generator.image_size must be >= 8");
    if (n_branches < 0) throw ConfigError("generator.n_branches must be >= 0");
    if (!(width_min >= 1.0) || !(width_max >= width_min))
        throw ConfigError("generator.vessel_width_range must satisfy 1 <= min <= max");
    if (!(noise_sigma >= 0.0)) throw ConfigError("generator.noise_sigma must be >= 0");
    if (background_structures < 0) throw ConfigError("generator.background_structures must be >= 0");
    if (!(contrast_min > 0.0) || !(contrast_max >= contrast_min) || contrast_max > 1.0)
        throw ConfigError("generator.contrast_range must satisfy 0 < min <= max <= 1");
    if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("generator.test_fraction must be in [0, 1)");
}

void GeneratorConfig::validate_for_depth(int depth) const
{
    const int f = 1 << (depth - 1);
    if (image_size % f != 0)
        throw ConfigError("generator.image_size " + std::to_string(image_size) + " is not divisible by " +
                          std::to_string(f) + " (2^(depth-1))");
}

nlohmann::json to_json(const GeneratorConfig& c)
{
    return {{"seed", c.seed},
            {"count", c.count},
            {"image_size", c.image_size},
            {"n_branches", c.n_branches},
            {"vessel_width_range", {c.width_min, c.width_max}},
            {"noise_sigma", c.noise_sigma},
            {"background_structures", c.background_structures},
            {"contrast_range", {c.contrast_min, c.contrast_max}},
            {"test_fraction", c.test_fraction}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig c)
{
    if (!j.is_object()) throw ConfigError("generator: expected an object");
    auto range = [](const nlohmann::json& v, const std::string& key, double& lo, double& hi) {
        if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
            throw ConfigError("generator." + key + ": expected [min, max]");
        lo = v[0].get<double>();
        hi = v[1].get<double>();
    };
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const auto& v = it.value();
        auto integer = [&](auto& dst) {
            if (!v.is_number_integer()) throw ConfigError("generator." + k + ": expected an integer");
            dst = v.get<std::remove_reference_t<decltype(dst)>>();
        };
        auto real = [&](double& dst) {
            if (!v.is_number()) throw ConfigError("generator." + k + ": expected a number");
            dst = v.get<double>();
        };
        if (k == "seed") integer(c.seed);
        else if (k == "count") integer(c.count);
        else if (k == "image_size") integer(c.image_size);
        else if (k == "n_branches") integer(c.n_branches);
        else if (k == "vessel_width_range") range(v, k, c.width_min, c.width_max);
        else if (k == "noise_sigma") real(c.noise_sigma);
        else if (k == "background_structures") integer(c.background_structures);
        else if (k == "contrast_range") range(v, k, c.contrast_min, c.contrast_max);
        else if (k == "test_fraction") real(c.test_fraction);
        else throw ConfigError("generator." + k + ": unknown field");
    }
    c.validate();
    return c;
}

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kStep = 0.5;

struct Walker {
    double r, c, heading, length, w0, w1;
};

// Smooth random walk: heading drifts with bounded curvature.
Branch grow(const Walker& wk, int size, Rng& rng)
{
    Branch b;
    double r = wk.r, c = wk.c, h = wk.heading, turn = 0.0;
    const int steps = std::max(2, int(wk.length / kStep));
    for (int i = 0; i < steps; ++i) {
        const double t = double(i) / (steps - 1);
        b.centerline.push_back({r, c});
        b.widths.push_back(wk.w0 + (wk.w1 - wk.w0) * t);
        turn = std::clamp(0.9 * turn + rng.normal(0.0, 0.004), -0.03, 0.03);
        h += turn;
        r += kStep * std::sin(h);
        c += kStep * std::cos(h);
        if (r < -4 || c < -4 || r > size + 3 || c > size + 3) break;
    }
    return b;
}

}  // namespace

GeneratedSample generate_sample_with_geometry(const GeneratorConfig& cfg, int index)
{
    cfg.validate();
    if (index < 0) throw ArgumentError("generate_sample: negative index");
    Rng rng(stream_seed(cfg.seed, "sample", static_cast<std::uint64_t>(index)));
    const int n = cfg.image_size;
    const double size = n;
    GeneratedSample out;

    // Trunk enters from a random edge and heads roughly inward.
    const int edge = int(rng.below(4));
    const double along = rng.uniform(0.25, 0.75) * size;
    double r0 = 0, c0 = 0, h0 = 0;
    switch (edge) {
    case 0: r0 = 0; c0 = along; h0 = kPi / 2; break;
    case 1: r0 = size - 1; c0 = along; h0 = -kPi / 2; break;
    case 2: r0 = along; c0 = 0; h0 = 0; break;
    default: r0 = along; c0 = size - 1; h0 = kPi; break;
    }
    h0 += rng.uniform(-0.35, 0.35);
    const double w_trunk = rng.uniform(0.6, 1.0) * (cfg.width_max - cfg.width_min) + cfg.width_min;
    const double w_tip = std::max(cfg.width_min, 0.6 * w_trunk);
    out.branches.push_back(grow({r0, c0, h0, rng.uniform(0.7, 1.1) * size, w_trunk, w_tip}, n, rng));

    for (int k = 0; k < cfg.n_branches; ++k) {
        const Branch& parent = out.branches[rng.below(out.branches.size())];
        if (parent.centerline.size() < 8) continue;
        const std::size_t at = std::size_t(rng.uniform(0.15, 0.85) * double(parent.centerline.size() - 2)) + 1;
        const auto& p = parent.centerline[at];
        const auto& q = parent.centerline[at + 1];
        const double ph = std::atan2(q[0] - p[0], q[1] - p[1]);
        const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
        const double h = ph + side * rng.uniform(0.45, 1.05);
        const double w = std::max(cfg.width_min, parent.widths[at] * rng.uniform(0.55, 0.85));
        const double tip = std::max(cfg.width_min, 0.6 * w);
        out.branches.push_back(grow({p[0], p[1], h, rng.uniform(0.2, 0.5) * size, w, tip}, n, rng));
    }

    // Rasterize: mask by disc coverage, vessel opacity anti-aliased over one pixel.
    Mask mask(n, n);
    std::vector<float> vessel(std::size_t(n) * n, 0.0f);
    for (const auto& b : out.branches)
        for (std::size_t i = 0; i < b.centerline.size(); ++i) {
            const double pr = b.centerline[i][0], pc = b.centerline[i][1], rad = 0.5 * b.widths[i];
            const int lo_r = std::max(0, int(std::floor(pr - rad - 1))), hi_r = std::min(n - 1, int(std::ceil(pr + rad + 1)));
            const int lo_c = std::max(0, int(std::floor(pc - rad - 1))), hi_c = std::min(n - 1, int(std::ceil(pc + rad + 1)));
            for (int y = lo_r; y <= hi_r; ++y)
                for (int x = lo_c; x <= hi_c; ++x) {
                    const double d = std::hypot(y - pr, x - pc);
                    if (d <= rad) mask(y, x) = 1;
                    const float a = float(std::clamp(rad + 0.5 - d, 0.0, 1.0));
                    float& v = vessel[std::size_t(y) * n + x];
                    v = std::max(v, a);
                }
        }

    // Background: gradient plus soft blobs, minus vessels, plus noise.
    const double base = rng.uniform(0.45, 0.65);
    const double gdir = rng.uniform(0.0, 2 * kPi), gamp = rng.uniform(0.05, 0.2);
    struct Blob {
        double r, c, s, a;
    };
    std::vector<Blob> blobs;
    for (int k = 0; k < cfg.background_structures; ++k)
        blobs.push_back({rng.uniform(0, size), rng.uniform(0, size), rng.uniform(0.08, 0.25) * size,
                         rng.uniform(-0.15, 0.15)});
    const double contrast = rng.uniform(cfg.contrast_min, cfg.contrast_max);

    out.sample.image = Tensor<float>(1, 1, n, n);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const double u = (y / size - 0.5) * std::sin(gdir) + (x / size - 0.5) * std::cos(gdir);
            double v = base + gamp * u;
            for (const auto& b : blobs)
                v += b.a * std::exp(-((y - b.r) * (y - b.r) + (x - b.c) * (x - b.c)) / (2 * b.s * b.s));
            v -= contrast * vessel[std::size_t(y) * n + x];
            v += rng.normal(0.0, cfg.noise_sigma);
            out.sample.image(0, 0, y, x) = normalize(float(std::clamp(v, 0.0, 1.0)));
        }

    char id[32];
    std::snprintf(id, sizeof id, "sample_%04d", index);
    out.sample.id = id;
    out.sample.split = index >= cfg.count - int(std::lround(cfg.count * cfg.test_fraction)) ? "test" : "train";
    out.sample.mask = std::move(mask);
    return out;
}

SegmentationSample generate_sample(const GeneratorConfig& cfg, int index)
{
    return generate_sample_with_geometry(cfg, index).sample;
}

std::vector<SegmentationSample> generate_dataset(const GeneratorConfig& cfg)
{
    cfg.validate();
    std::vector<SegmentationSample> out(static_cast<std::size_t>(cfg.count));
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < cfg.count; ++i) out[i] = generate_sample(cfg, i);
    return out;
}

}  // namespace msa
