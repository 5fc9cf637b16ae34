#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>

#include "msa/data/dataset.hpp"
#include "msa/error.hpp"

namespace fs = std::filesystem;

namespace msa {

// ---------------------------------------------------------------- preprocessing

float normalize(float x)
{
    if (!(x >= 0.0f && x <= 1.0f)) throw ArgumentError("normalize: value " + std::to_string(x) + " outside [0, 1]");
    return (x - 0.5f) / 0.5f;
}

void normalize_in_place(std::vector<float>& values)
{
    for (float& v : values) v = normalize(v);
}

float denormalize(float x) noexcept
{
    return x * 0.5f + 0.5f;
}

std::vector<float> resize_bilinear(const std::vector<float>& src, int h, int w, int out_h, int out_w)
{
    if (src.size() != std::size_t(h) * w || out_h < 1 || out_w < 1) throw ArgumentError("resize_bilinear: bad size");
    if (h == out_h && w == out_w) return src;
    auto taps = [](int in, int out) {
        std::vector<std::pair<int, double>> t(out);
        const double scale = double(in) / out;
        for (int o = 0; o < out; ++o) {
            const double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, double(in - 1));
            const int i0 = std::min(int(s), in - 1);
            t[o] = {i0, s - i0};
        }
        return t;
    };
    const auto ty = taps(h, out_h), tx = taps(w, out_w);
    std::vector<float> out(std::size_t(out_h) * out_w);
    for (int y = 0; y < out_h; ++y) {
        const int y0 = ty[y].first, y1 = std::min(y0 + 1, h - 1);
        const double ly = ty[y].second;
        for (int x = 0; x < out_w; ++x) {
            const int x0 = tx[x].first, x1 = std::min(x0 + 1, w - 1);
            const double lx = tx[x].second;
            const double top = src[y0 * w + x0] * (1 - lx) + src[y0 * w + x1] * lx;
            const double bot = src[y1 * w + x0] * (1 - lx) + src[y1 * w + x1] * lx;
            out[std::size_t(y) * out_w + x] = float(std::clamp(top * (1 - ly) + bot * ly, 0.0, 1.0));
        }
    }
    return out;
}

Mask resize_nearest(const Mask& src, int out_h, int out_w)
{
    if (out_h < 1 || out_w < 1) throw ArgumentError("resize_nearest: bad size");
    Mask out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(src.h - 1, int((y + 0.5) * src.h / out_h));
        for (int x = 0; x < out_w; ++x) out(y, x) = src(sy, std::min(src.w - 1, int((x + 0.5) * src.w / out_w)));
    }
    return out;
}

void AugmentConfig::validate() const
{
    if (!(brightness >= 0.0 && brightness <= 1.0)) throw ConfigError("augment.brightness must be in [0, 1]");
    if (!(contrast_min > 0.0 && contrast_max >= contrast_min))
        throw ConfigError("augment.contrast_range must satisfy 0 < min <= max");
}

SegmentationSample augment_with(const SegmentationSample& s, double delta, double factor)
{
    SegmentationSample out = s;
    double mean = 0.0;
    for (float v : s.image.span()) mean += denormalize(v);
    mean /= double(s.image.size());
    for (float& v : out.image.span()) {
        const double x = denormalize(v);
        v = normalize(float(std::clamp((x - mean) * factor + mean + delta, 0.0, 1.0)));
    }
    return out;
}

SegmentationSample augment(const SegmentationSample& s, Rng& rng, const AugmentConfig& cfg)
{
    const double delta = rng.uniform(-cfg.brightness, cfg.brightness);
    const double factor = rng.uniform(cfg.contrast_min, cfg.contrast_max);
    return augment_with(s, delta, factor);
}

std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed)
{
    if (k < 2) throw ArgumentError("kfold_split: k must be >= 2");
    if (std::size_t(k) > n)
        throw ArgumentError("kfold_split: k=" + std::to_string(k) + " exceeds sample count " + std::to_string(n));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(stream_seed(seed, "kfold"));
    rng.shuffle(order.begin(), order.end());
    std::vector<Fold> folds(static_cast<std::size_t>(k));
    std::size_t start = 0;
    for (int f = 0; f < k; ++f) {
        const std::size_t len = n / k + (std::size_t(f) < n % k ? 1 : 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (i >= start && i < start + len) folds[f].val.push_back(order[i]);
            else folds[f].train.push_back(order[i]);
        }
        std::sort(folds[f].val.begin(), folds[f].val.end());
        std::sort(folds[f].train.begin(), folds[f].train.end());
        start += len;
    }
    return folds;
}

// ---------------------------------------------------------------- dataset files

void save_dataset(const fs::path& root, const std::vector<SegmentationSample>& samples, const GeneratorConfig& cfg)
{
    fs::create_directories(root / "images");
    fs::create_directories(root / "masks");
    nlohmann::json manifest;
    manifest["generator"] = to_json(cfg);
    manifest["samples"] = nlohmann::json::array();
    for (const auto& s : samples) {
        GrayImage img{s.height(), s.width(), {}}, msk{s.height(), s.width(), {}};
        img.data.resize(s.mask.size());
        msk.data.resize(s.mask.size());
        for (std::size_t i = 0; i < s.mask.size(); ++i) {
            img.data[i] = std::uint8_t(std::lround(std::clamp(denormalize(s.image[i]), 0.0f, 1.0f) * 255.0f));
            msk.data[i] = s.mask.data[i] ? 255 : 0;
        }
        write_png_gray(root / "images" / (s.id + ".png"), img);
        write_png_gray(root / "masks" / (s.id + ".png"), msk);
        manifest["samples"].push_back({{"id", s.id}, {"split", s.split}});
    }
    std::ofstream(root / "manifest.json") << manifest.dump(2) << '\n';
}

std::vector<SegmentationSample> load_dataset(const fs::path& root, int image_size)
{
    if (image_size < 1) throw ArgumentError("load_dataset: image_size must be >= 1");
    if (!fs::is_directory(root)) throw IoError("dataset root " + root.string() + " does not exist");
    if (!fs::is_directory(root / "images")) throw IoError("missing directory " + (root / "images").string());
    if (!fs::is_directory(root / "masks")) throw IoError("missing directory " + (root / "masks").string());

    std::map<std::string, std::string> splits;
    if (fs::exists(root / "manifest.json")) {
        try {
            const auto m = nlohmann::json::parse(std::ifstream(root / "manifest.json"));
            for (const auto& s : m.at("samples")) splits[s.at("id").get<std::string>()] = s.at("split").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw IoError("bad manifest " + (root / "manifest.json").string() + ": " + e.what());
        }
    }

    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(root / "images"))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        std::cerr << "warning: no images found under " << (root / "images").string() << '\n';
        return {};
    }
    for (const auto& f : files)
        if (!fs::exists(root / "masks" / f.filename()))
            throw IoError("missing mask for image " + f.filename().string() + " (expected " +
                          (root / "masks" / f.filename()).string() + ")");

    std::vector<SegmentationSample> out(files.size());
    std::vector<std::string> errors(files.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < files.size(); ++i) {
        try {
            const GrayImage img = read_png_gray(files[i]);
            const GrayImage msk = read_png_gray(root / "masks" / files[i].filename());
            if (img.h != msk.h || img.w != msk.w)
                throw IoError("image and mask sizes differ for " + files[i].filename().string());
            std::vector<float> v(img.data.size());
            for (std::size_t p = 0; p < v.size(); ++p) v[p] = img.data[p] / 255.0f;
            v = resize_bilinear(v, img.h, img.w, image_size, image_size);
            normalize_in_place(v);
            Mask m(msk.h, msk.w);
            for (std::size_t p = 0; p < m.size(); ++p) m.data[p] = msk.data[p] > 127 ? 1 : 0;

            SegmentationSample& s = out[i];
            s.id = files[i].stem().string();
            auto it = splits.find(s.id);
            s.split = it == splits.end() ? "train" : it->second;
            s.image = Tensor<float>(1, 1, image_size, image_size);
            std::copy(v.begin(), v.end(), s.image.data());
            s.mask = resize_nearest(m, image_size, image_size);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw IoError(e);
    return out;
}

}  // namespace msa
