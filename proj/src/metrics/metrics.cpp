#include "msa/metrics/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "msa/error.hpp"

namespace msa {

ConfusionCounts confusion(const Mask& pred, const Mask& truth)
{
    require_same_shape(pred, truth, "confusion");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const bool p = pred.data[i] != 0, t = truth.data[i] != 0;
        if (p && t) ++c.tp;
        else if (p) ++c.fp;
        else if (t) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double dice_score(const ConfusionCounts& c)
{
    const double den = 2.0 * c.tp + c.fp + c.fn;
    return den == 0.0 ? 1.0 : 2.0 * c.tp / den;
}

double recall(const ConfusionCounts& c)
{
    return c.tp + c.fn == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fn);
}

double precision(const ConfusionCounts& c)
{
    return c.tp + c.fp == 0 ? 1.0 : double(c.tp) / double(c.tp + c.fp);
}

double f1(const ConfusionCounts& c)
{
    const double p = precision(c), r = recall(c);
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

// ---------------------------------------------------------------- boundaries

std::vector<Point> BoundarySet::unique_points() const
{
    std::vector<Point> u = points;
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
}

namespace {

// Clockwise from west.
constexpr std::array<Point, 8> kRing{{{0, -1}, {-1, -1}, {-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}}};

bool fg(const Mask& m, int r, int c)
{
    return r >= 0 && r < m.h && c >= 0 && c < m.w && m(r, c) != 0;
}

int ring_index(int dr, int dc)
{
    for (int i = 0; i < 8; ++i)
        if (kRing[i].r == dr && kRing[i].c == dc) return i;
    return -1;
}

struct TraceState {
    Point cur;
    int back;
};

// One Moore step: scan clockwise from the backtrack; false for an isolated pixel.
bool moore_step(const Mask& m, TraceState& s)
{
    for (int k = 1; k <= 8; ++k) {
        const int d = (s.back + k) % 8;
        const Point next{s.cur.r + kRing[d].r, s.cur.c + kRing[d].c};
        if (!fg(m, next.r, next.c)) continue;
        const int prev = (d + 7) % 8;
        const Point bpos{s.cur.r + kRing[prev].r, s.cur.c + kRing[prev].c};
        s = {next, ring_index(bpos.r - next.r, bpos.c - next.c)};
        return true;
    }
    return false;
}

// Trace from the raster-first pixel (its west neighbour is background). Stops
// when the first transition out of the start pixel repeats (Jacob's criterion).
void moore_trace(const Mask& m, Point start, std::vector<Point>& out)
{
    out.push_back(start);
    TraceState s{start, 0};
    if (!moore_step(m, s)) return;
    const TraceState first = s;
    const std::size_t cap = 8 * m.size() + 8;
    for (std::size_t step = 0; step < cap; ++step) {
        out.push_back(s.cur);
        const bool at_start = s.cur == start;
        moore_step(m, s);
        if (at_start && s.cur == first.cur && s.back == first.back) {
            out.pop_back();
            return;
        }
    }
}

}  // namespace

BoundarySet extract_boundary(const Mask& mask, BoundaryKind kind)
{
    BoundarySet b;
    b.kind = kind;
    if (kind == BoundaryKind::surface) {
        for (int r = 0; r < mask.h; ++r)
            for (int c = 0; c < mask.w; ++c) {
                if (!mask(r, c)) continue;
                bool edge = false;
                for (const auto& d : kRing)
                    if (!fg(mask, r + d.r, c + d.c)) {
                        edge = true;
                        break;
                    }
                if (edge) b.points.push_back({r, c});
            }
        return b;
    }

    // 8-connected components; trace each from its raster-first pixel.
    std::vector<std::uint8_t> seen(mask.size(), 0);
    std::vector<Point> stack;
    for (int r = 0; r < mask.h; ++r)
        for (int c = 0; c < mask.w; ++c) {
            const std::size_t idx = std::size_t(r) * mask.w + c;
            if (!mask(r, c) || seen[idx]) continue;
            moore_trace(mask, {r, c}, b.points);
            stack.push_back({r, c});
            seen[idx] = 1;
            while (!stack.empty()) {
                const Point p = stack.back();
                stack.pop_back();
                for (const auto& d : kRing) {
                    const int rr = p.r + d.r, cc = p.c + d.c;
                    if (!fg(mask, rr, cc)) continue;
                    const std::size_t j = std::size_t(rr) * mask.w + cc;
                    if (!seen[j]) {
                        seen[j] = 1;
                        stack.push_back({rr, cc});
                    }
                }
            }
        }
    return b;
}

// ---------------------------------------------------------------- distances

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// 1-D squared distance transform of sampled function f (Felzenszwalb & Huttenlocher).
void dt1d(const double* f, int n, std::ptrdiff_t stride, double* d, std::vector<int>& v, std::vector<double>& z)
{
    v.resize(n);
    z.resize(n + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
        const double fq = f[q * stride];
        if (fq == kInf) continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = ((fq + double(q) * q) - (f[p * stride] + double(p) * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) --k;
            else break;
        }
        if (s <= z[k]) {  // k == 0 and the new parabola dominates everywhere
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        for (int q = 0; q < n; ++q) d[q * stride] = kInf;
        return;
    }
    int j = 0;
    for (int q = 0; q < n; ++q) {
        while (z[j + 1] < q) ++j;
        const double dq = double(q - v[j]);
        d[q * stride] = dq * dq + f[v[j] * stride];
    }
}

std::vector<std::uint8_t> indicator(const std::vector<Point>& pts, int h, int w)
{
    std::vector<std::uint8_t> f(std::size_t(h) * w, 0);
    for (const auto& p : pts) f[std::size_t(p.r) * w + p.c] = 1;
    return f;
}

double mean_distance(const std::vector<Point>& from, const std::vector<Point>& to, int h, int w,
                     DistanceBackend backend)
{
    double sum = 0.0;
    if (backend == DistanceBackend::transform) {
        const auto dt = squared_distance_transform(indicator(to, h, w), h, w);
        for (const auto& p : from) sum += std::sqrt(dt[std::size_t(p.r) * w + p.c]);
    } else {
        for (const auto& p : from) {
            double best = kInf;
            for (const auto& q : to) {
                const double dr = p.r - q.r, dc = p.c - q.c;
                best = std::min(best, dr * dr + dc * dc);
            }
            sum += std::sqrt(best);
        }
    }
    return sum / double(from.size());
}

double symmetric_distance(const std::vector<Point>& a, const std::vector<Point>& b, int h, int w,
                          DistanceBackend backend)
{
    if (a.empty() || b.empty()) throw UndefinedDistance();
    return 0.5 * (mean_distance(a, b, h, w, backend) + mean_distance(b, a, h, w, backend));
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& feature, int h, int w)
{
    if (feature.size() != std::size_t(h) * w) throw ArgumentError("distance transform: size mismatch");
    std::vector<double> f(feature.size()), g(feature.size());
    for (std::size_t i = 0; i < f.size(); ++i) f[i] = feature[i] ? 0.0 : kInf;
#pragma omp parallel
    {
        std::vector<int> v;
        std::vector<double> z;
#pragma omp for schedule(static)
        for (int c = 0; c < w; ++c) dt1d(f.data() + c, h, w, g.data() + c, v, z);
#pragma omp for schedule(static)
        for (int r = 0; r < h; ++r) dt1d(g.data() + std::size_t(r) * w, w, 1, f.data() + std::size_t(r) * w, v, z);
    }
    return f;
}

double asd(const Mask& pred, const Mask& truth, DistanceBackend backend)
{
    require_same_shape(pred, truth, "asd");
    return symmetric_distance(extract_boundary(pred, BoundaryKind::surface).points,
                              extract_boundary(truth, BoundaryKind::surface).points, pred.h, pred.w, backend);
}

double acd(const Mask& pred, const Mask& truth, DistanceBackend backend)
{
    require_same_shape(pred, truth, "acd");
    return symmetric_distance(extract_boundary(pred, BoundaryKind::contour).unique_points(),
                              extract_boundary(truth, BoundaryKind::contour).unique_points(), pred.h, pred.w,
                              backend);
}

Mask binarize(const std::vector<float>& probs, int h, int w, double threshold)
{
    if (probs.size() != std::size_t(h) * w) throw ArgumentError("binarize: size mismatch");
    Mask m(h, w);
    for (std::size_t i = 0; i < probs.size(); ++i) m.data[i] = probs[i] >= threshold ? 1 : 0;
    return m;
}

SampleMetrics evaluate_sample(const std::string& id, const Mask& pred, const Mask& truth, DistanceBackend backend)
{
    const ConfusionCounts c = confusion(pred, truth);
    SampleMetrics s;
    s.id = id;
    s.recall = recall(c);
    s.f1 = f1(c);
    s.dice = dice_score(c);
    if (pred.any() && truth.any()) {
        s.asd = asd(pred, truth, backend);
        s.acd = acd(pred, truth, backend);
    }
    return s;
}

// ---------------------------------------------------------------- report

MetricSummary summarize(const std::vector<double>& values)
{
    MetricSummary s;
    s.n = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / double(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / double(values.size() - 1));
    }
    return s;
}

const std::vector<std::string>& MetricsReport::metric_names()
{
    static const std::vector<std::string> names{"recall", "f1", "dice", "asd", "acd"};
    return names;
}

std::vector<double> MetricsReport::values(const std::string& metric) const
{
    std::vector<double> v;
    for (const auto& s : samples) {
        if (metric == "recall") v.push_back(s.recall);
        else if (metric == "f1") v.push_back(s.f1);
        else if (metric == "dice") v.push_back(s.dice);
        else if (metric == "asd") {
            if (s.asd) v.push_back(*s.asd);
        } else if (metric == "acd") {
            if (s.acd) v.push_back(*s.acd);
        } else throw ArgumentError("unknown metric '" + metric + "'");
    }
    return v;
}

MetricSummary MetricsReport::summary(const std::string& metric) const
{
    return summarize(values(metric));
}

namespace {

std::string num(double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string opt(const std::optional<double>& v)
{
    return v ? num(*v) : "excluded";
}

}  // namespace

std::string MetricsReport::to_csv() const
{
    std::ostringstream os;
    os << "id,recall,f1,dice,asd,acd\n";
    for (const auto& s : samples)
        os << s.id << ',' << num(s.recall) << ',' << num(s.f1) << ',' << num(s.dice) << ',' << opt(s.asd) << ','
           << opt(s.acd) << '\n';
    os << "mean";
    for (const auto& m : metric_names()) os << ',' << num(summary(m).mean);
    os << "\nstd";
    for (const auto& m : metric_names()) os << ',' << num(summary(m).std);
    os << '\n';
    return os.str();
}

nlohmann::json MetricsReport::to_json() const
{
    nlohmann::json j;
    j["count"] = samples.size();
    for (const auto& m : metric_names()) {
        const auto s = summary(m);
        j["metrics"][m] = {{"mean", s.mean}, {"std", s.std}, {"n", s.n}};
    }
    j["excluded"] = {{"asd", samples.size() - values("asd").size()}, {"acd", samples.size() - values("acd").size()}};
    for (const auto& s : samples) {
        nlohmann::json r = {{"id", s.id}, {"recall", s.recall}, {"f1", s.f1}, {"dice", s.dice}};
        r["asd"] = s.asd ? nlohmann::json(*s.asd) : nlohmann::json(nullptr);
        r["acd"] = s.acd ? nlohmann::json(*s.acd) : nlohmann::json(nullptr);
        j["samples"].push_back(r);
    }
    return j;
}

}  // namespace msa
