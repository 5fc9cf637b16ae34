#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msa/mask.hpp"
#include "msa/random.hpp"
#include "msa/tensor.hpp"

namespace msa {

/// Grayscale image and binary mask at a common resolution. `image` is
/// (1, 1, H, W) in [-1, 1]; split is "train" or "test".
struct SegmentationSample {
    std::string id;
    std::string split = "train";
    Tensor<float> image;
    Mask mask;

    int height() const noexcept { return mask.h; }
    int width() const noexcept { return mask.w; }
};

struct GeneratorConfig {
    std::uint64_t seed = 7;
    int count = 150;
    int image_size = 256;
    /// Branches grown off the trunk.
    int n_branches = 6;
    double width_min = 1.0;
    double width_max = 8.0;
    double noise_sigma = 0.03;
    /// Soft blobs standing in for ribs, diaphragm and similar structures.
    int background_structures = 4;
    /// Intensity drop of a vessel, drawn per sample.
    double contrast_min = 0.25;
    double contrast_max = 0.6;
    /// Fraction of samples tagged "test" (the last ones by index).
    double test_fraction = 0.2;

    void validate() const;
    void validate_for_depth(int depth) const;
};

nlohmann::json to_json(const GeneratorConfig& cfg);
GeneratorConfig generator_config_from_json(const nlohmann::json& j, GeneratorConfig base = {});

struct Branch {
    /// Centerline in continuous (row, col) pixel coordinates, pixel centers at integers.
    std::vector<std::array<double, 2>> centerline;
    /// Stroke diameter at each centerline point.
    std::vector<double> widths;
};

struct GeneratedSample {
    SegmentationSample sample;
    std::vector<Branch> branches;
};

/// Fully determined by (cfg.seed, index).
GeneratedSample generate_sample_with_geometry(const GeneratorConfig& cfg, int index);
SegmentationSample generate_sample(const GeneratorConfig& cfg, int index);
/// Samples 0..cfg.count-1, generated in parallel.
std::vector<SegmentationSample> generate_dataset(const GeneratorConfig& cfg);

// ---------------------------------------------------------------- files

struct GrayImage {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> data;
};

/// 8-bit grayscale PNG. 16-bit gray is reduced to 8 bits; colour, palette or
/// alpha input raises IoError.
GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray(const std::filesystem::path& path, const GrayImage& img);
void write_png_rgb(const std::filesystem::path& path, int h, int w, const std::vector<std::uint8_t>& rgb);

/// Writes root/images/<id>.png, root/masks/<id>.png (0/255) and root/manifest.json.
void save_dataset(const std::filesystem::path& root, const std::vector<SegmentationSample>& samples,
                  const GeneratorConfig& cfg);

/// Pairs root/images/*.png with root/masks/*.png of the same name, resizes to
/// image_size (bilinear image, nearest mask) and normalizes. Split tags come
/// from manifest.json when present. An empty images/ yields an empty list and
/// a warning on stderr.
std::vector<SegmentationSample> load_dataset(const std::filesystem::path& root, int image_size);

// ---------------------------------------------------------------- preprocessing

/// Bilinear resize with half-pixel centers; values stay in the input range.
std::vector<float> resize_bilinear(const std::vector<float>& src, int h, int w, int out_h, int out_w);
Mask resize_nearest(const Mask& src, int out_h, int out_w);

/// (x - 0.5) / 0.5 for x in [0, 1]; ArgumentError outside.
float normalize(float x);
void normalize_in_place(std::vector<float>& values);
float denormalize(float x) noexcept;

struct AugmentConfig {
    double brightness = 0.2;
    double contrast_min = 0.8;
    double contrast_max = 1.2;

    void validate() const;
};

/// Contrast about the image mean m, then brightness, in [0, 1] space:
/// clamp((x - m) * factor + m + delta). Mask and id are untouched.
SegmentationSample augment_with(const SegmentationSample& s, double delta, double factor);
/// Draws delta ~ U(-brightness, brightness) then factor ~ U(contrast_min, contrast_max).
SegmentationSample augment(const SegmentationSample& s, Rng& rng, const AugmentConfig& cfg = {});

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
};

/// Seeded shuffle of 0..n-1 cut into k validation folds whose sizes differ by at most one.
std::vector<Fold> kfold_split(std::size_t n, int k, std::uint64_t seed);

}  // namespace msa
