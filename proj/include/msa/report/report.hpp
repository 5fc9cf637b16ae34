#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "msa/mask.hpp"
#include "msa/tensor.hpp"
#include "msa/training/trainer.hpp"

namespace msa {

/// Bounding box of a connected error region, inclusive corners.
struct OverlayBox {
    int y0 = 0, x0 = 0, y1 = 0, x1 = 0;
    /// Missed vessel (truth and not pred); otherwise a false positive.
    bool false_negative = false;
    int pixels = 0;
};

/// 8-connected components of truth & ~pred (FN) and pred & ~truth (FP) with
/// at least `min_pixels` pixels, FN boxes first, each in raster order of their first pixel.
std::vector<OverlayBox> overlay_boxes(const Mask& pred, const Mask& truth, int min_pixels = 5);

struct RgbImage {
    int h = 0, w = 0;
    std::vector<std::uint8_t> data;  // row-major RGB

    void set(int y, int x, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// input | truth | prediction, separated by 4-pixel gutters. FN boxes are
/// yellow, FP boxes green. `image` is (1, 1, H, W) in [-1, 1].
RgbImage render_qualitative(const Tensor<float>& image, const Mask& truth, const Mask& pred,
                            std::vector<OverlayBox>* boxes = nullptr);

// ---------------------------------------------------------------- plots from CSV

struct ScatterPoint {
    std::string label;
    double params = 0.0;
    double dice = 0.0;
    double asd = 0.0;
};

struct BoxGroup {
    std::string label;
    std::vector<double> values;
};

/// Tukey box statistics with linear-interpolated quartiles.
struct BoxStats {
    double q1 = 0, median = 0, q3 = 0, whisker_lo = 0, whisker_hi = 0;
    std::vector<double> outliers;
};

BoxStats box_stats(std::vector<double> values);

std::string scatter_csv(const std::vector<ScatterPoint>& points);
std::vector<ScatterPoint> read_scatter_csv(const std::filesystem::path& path);
/// Parameters (millions) against Dice; marker area grows with ASD.
std::string scatter_svg(const std::vector<ScatterPoint>& points);

/// Long format: group,fold,id,dice.
std::string boxplot_csv(const std::vector<BoxGroup>& groups, const std::vector<std::vector<std::string>>& ids,
                        const std::vector<std::vector<int>>& folds);
std::vector<BoxGroup> read_boxplot_csv(const std::filesystem::path& path);
std::string boxplot_svg(const std::vector<BoxGroup>& groups);

// ---------------------------------------------------------------- bundles

/// Writes table.md, table.csv, per_fold.csv, scatter.csv, dice_box.csv and
/// the rendered SVGs into `dir`.
void write_report(const std::filesystem::path& dir, const GammaAblation& g);
void write_report(const std::filesystem::path& dir, const ComponentAblation& c);

/// Re-renders every SVG in `dir` from its sibling CSV. Returns the files written.
std::vector<std::filesystem::path> render_plots(const std::filesystem::path& dir);

}  // namespace msa
