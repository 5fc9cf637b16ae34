#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "msa/mask.hpp"

namespace msa {

struct ConfusionCounts {
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    std::uint64_t total() const noexcept { return tp + fp + fn + tn; }
    friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

ConfusionCounts confusion(const Mask& pred, const Mask& truth);

// Empty truth and empty prediction score 1 on every overlap metric.
// A ratio with an empty denominator otherwise takes the vacuous value 1
// (recall with no truth pixels, precision with no predicted pixels).
double dice_score(const ConfusionCounts& c);
double recall(const ConfusionCounts& c);
double precision(const ConfusionCounts& c);
double f1(const ConfusionCounts& c);

struct Point {
    int r = 0;
    int c = 0;
    friend auto operator<=>(const Point&, const Point&) = default;
};

enum class BoundaryKind { surface, contour };

struct BoundarySet {
    BoundaryKind kind = BoundaryKind::surface;
    /// Surface: raster order. Contour: trace order, one trace per 8-connected
    /// component (components in raster order of their first pixel); a pixel may repeat.
    std::vector<Point> points;

    /// Distinct points in raster order.
    std::vector<Point> unique_points() const;
};

/// Surface: foreground pixels with a background 8-neighbour, the image border
/// counting as background. Contour: Moore-neighbour trace of the outer border of
/// each 8-connected component with Jacob's stopping criterion.
BoundarySet extract_boundary(const Mask& mask, BoundaryKind kind);

enum class DistanceBackend { transform, brute_force };

/// Exact squared Euclidean distance of every pixel to the nearest set pixel.
/// Pixels are (h, w) row-major; returns +inf everywhere when no pixel is set.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& feature, int h, int w);

/// Average symmetric surface distance. Throws UndefinedDistance if either mask is empty.
double asd(const Mask& pred, const Mask& truth, DistanceBackend backend = DistanceBackend::transform);
/// As asd, over deduplicated contour-trace points.
double acd(const Mask& pred, const Mask& truth, DistanceBackend backend = DistanceBackend::transform);

Mask binarize(const std::vector<float>& probs, int h, int w, double threshold = 0.5);

struct SampleMetrics {
    std::string id;
    double recall = 0.0;
    double f1 = 0.0;
    double dice = 0.0;
    /// Empty when a mask was empty (sample excluded from the boundary metric).
    std::optional<double> asd;
    std::optional<double> acd;
};

SampleMetrics evaluate_sample(const std::string& id, const Mask& pred, const Mask& truth,
                              DistanceBackend backend = DistanceBackend::transform);

struct MetricSummary {
    double mean = 0.0;
    /// Sample standard deviation (n - 1); 0 for fewer than two values.
    double std = 0.0;
    std::size_t n = 0;
};

MetricSummary summarize(const std::vector<double>& values);

struct MetricsReport {
    std::vector<SampleMetrics> samples;

    static const std::vector<std::string>& metric_names();
    /// Values of `metric` over samples, skipping exclusions.
    std::vector<double> values(const std::string& metric) const;
    MetricSummary summary(const std::string& metric) const;

    /// One row per sample, then "mean" and "std" rows. Excluded boundary
    /// metrics are written as "excluded".
    std::string to_csv() const;
    nlohmann::json to_json() const;
};

}  // namespace msa
