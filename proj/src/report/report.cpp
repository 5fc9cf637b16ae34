#include "msa/report/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "msa/data/dataset.hpp"
#include "msa/error.hpp"

namespace fs = std::filesystem;

namespace msa {

namespace {

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string clean_label(std::string s)
{
    std::replace(s.begin(), s.end(), ',', ';');
    return s;
}

std::string xml_escape(const std::string& s)
{
    std::string o;
    for (char c : s) {
        if (c == '<') o += "&lt;";
        else if (c == '>') o += "&gt;";
        else if (c == '&') o += "&amp;";
        else o += c;
    }
    return o;
}

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path, std::size_t columns)
{
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path.string());
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        auto cells = split_csv(line);
        if (cells.size() != columns)
            throw IoError(path.string() + ": expected " + std::to_string(columns) + " columns in \"" + line + "\"");
        rows.push_back(std::move(cells));
    }
    return rows;
}

double to_double(const std::string& s, const fs::path& path)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw IoError(path.string() + ": not a number: \"" + s + "\"");
    }
}

void write_text(const fs::path& path, const std::string& text)
{
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path.string());
    f << text;
}

// 8-connected components of `m`, each as a list of flat indices in raster order.
std::vector<std::vector<int>> components(const std::vector<std::uint8_t>& m, int h, int w)
{
    std::vector<int> label(m.size(), -1);
    std::vector<std::vector<int>> out;
    std::vector<int> stack;
    for (int start = 0; start < h * w; ++start) {
        if (!m[start] || label[start] >= 0) continue;
        const int id = int(out.size());
        out.emplace_back();
        label[start] = id;
        stack.push_back(start);
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            out[id].push_back(p);
            const int y = p / w, x = p % w;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || nx < 0 || ny >= h || nx >= w) continue;
                    const int q = ny * w + nx;
                    if (m[q] && label[q] < 0) {
                        label[q] = id;
                        stack.push_back(q);
                    }
                }
        }
    }
    return out;
}

struct Axis {
    double lo, hi;
    double px_lo, px_hi;
    double map(double v) const { return px_lo + (v - lo) / (hi - lo) * (px_hi - px_lo); }
};

Axis padded_axis(double lo, double hi, double px_lo, double px_hi)
{
    if (!(hi > lo)) {
        const double pad = std::max(std::abs(lo) * 0.05, 1e-3);
        return {lo - pad, hi + pad, px_lo, px_hi};
    }
    const double pad = 0.08 * (hi - lo);
    return {lo - pad, hi + pad, px_lo, px_hi};
}

constexpr int kWidth = 640, kHeight = 420, kLeft = 70, kRight = 20, kTop = 30, kBottom = 60;

void svg_frame(std::ostringstream& os, const std::string& title, const std::string& xlabel, const std::string& ylabel,
               const Axis& y, const Axis* x)
{
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
       << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
       << "</text>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << kWidth - kRight << "\" y2=\""
       << kHeight - kBottom << "\" stroke=\"black\"/>\n";
    os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\"" << kHeight - kBottom
       << "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        const double v = y.lo + (y.hi - y.lo) * i / 4.0;
        const double py = y.map(v);
        os << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fmt("%.1f", py) << "\" x2=\"" << kLeft << "\" y2=\""
           << fmt("%.1f", py) << "\" stroke=\"black\"/>\n";
        os << "<text x=\"" << kLeft - 6 << "\" y=\"" << fmt("%.1f", py + 4) << "\" text-anchor=\"end\">"
           << fmt("%.4g", v) << "</text>\n";
        if (x) {
            const double xv = x->lo + (x->hi - x->lo) * i / 4.0;
            const double px = x->map(xv);
            os << "<line x1=\"" << fmt("%.1f", px) << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << fmt("%.1f", px)
               << "\" y2=\"" << kHeight - kBottom + 4 << "\" stroke=\"black\"/>\n";
            os << "<text x=\"" << fmt("%.1f", px) << "\" y=\"" << kHeight - kBottom + 18
               << "\" text-anchor=\"middle\">" << fmt("%.4g", xv) << "</text>\n";
        }
    }
    os << "<text x=\"" << (kLeft + kWidth - kRight) / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">"
       << xml_escape(xlabel) << "</text>\n";
    os << "<text x=\"16\" y=\"" << (kTop + kHeight - kBottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
       << (kTop + kHeight - kBottom) / 2 << ")\">" << xml_escape(ylabel) << "</text>\n";
}

}  // namespace

// ---------------------------------------------------------------- overlays

std::vector<OverlayBox> overlay_boxes(const Mask& pred, const Mask& truth, int min_pixels)
{
    require_same_shape(pred, truth, "overlay_boxes");
    std::vector<OverlayBox> out;
    for (bool fn : {true, false}) {
        std::vector<std::uint8_t> err(truth.size());
        for (std::size_t i = 0; i < err.size(); ++i)
            err[i] = fn ? (truth.data[i] == 1 && pred.data[i] != 1) : (pred.data[i] == 1 && truth.data[i] != 1);
        for (const auto& comp : components(err, truth.h, truth.w)) {
            if (int(comp.size()) < min_pixels) continue;
            OverlayBox b{truth.h, truth.w, -1, -1, fn, int(comp.size())};
            for (int p : comp) {
                const int y = p / truth.w, x = p % truth.w;
                b.y0 = std::min(b.y0, y);
                b.x0 = std::min(b.x0, x);
                b.y1 = std::max(b.y1, y);
                b.x1 = std::max(b.x1, x);
            }
            out.push_back(b);
        }
    }
    return out;
}

void RgbImage::set(int y, int x, std::uint8_t r, std::uint8_t g, std::uint8_t b)
{
    if (y < 0 || x < 0 || y >= h || x >= w) return;
    auto* p = data.data() + (std::size_t(y) * w + x) * 3;
    p[0] = r;
    p[1] = g;
    p[2] = b;
}

RgbImage render_qualitative(const Tensor<float>& image, const Mask& truth, const Mask& pred,
                            std::vector<OverlayBox>* boxes_out)
{
    require_same_shape(pred, truth, "render_qualitative");
    if (image.h() != truth.h || image.w() != truth.w) throw ArgumentError("render_qualitative: image/mask size mismatch");
    const int h = truth.h, w = truth.w, gutter = 4;
    RgbImage out{h, 3 * w + 2 * gutter, {}};
    out.data.assign(std::size_t(out.h) * out.w * 3, 255);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const auto g = std::uint8_t(std::lround(std::clamp(denormalize(image(0, 0, y, x)), 0.0f, 1.0f) * 255.0f));
            out.set(y, x, g, g, g);
            const std::uint8_t t = truth(y, x) == 1 ? 255 : 0, p = pred(y, x) == 1 ? 255 : 0;
            out.set(y, w + gutter + x, t, t, t);
            out.set(y, 2 * (w + gutter) + x, p, p, p);
        }
    const auto boxes = overlay_boxes(pred, truth);
    const int ox = 2 * (w + gutter);
    for (const auto& b : boxes) {
        // Yellow for misses, green for false alarms.
        const std::uint8_t rr = b.false_negative ? 255 : 0, g = 255, bl = 0;
        // Box one pixel outside the component, clipped to the panel.
        const int y0 = std::max(0, b.y0 - 1), y1 = std::min(h - 1, b.y1 + 1);
        const int x0 = std::max(0, b.x0 - 1), x1 = std::min(w - 1, b.x1 + 1);
        for (int x = x0; x <= x1; ++x) {
            out.set(y0, ox + x, rr, g, bl);
            out.set(y1, ox + x, rr, g, bl);
        }
        for (int y = y0; y <= y1; ++y) {
            out.set(y, ox + x0, rr, g, bl);
            out.set(y, ox + x1, rr, g, bl);
        }
    }
    if (boxes_out) *boxes_out = boxes;
    return out;
}

// ---------------------------------------------------------------- plots

BoxStats box_stats(std::vector<double> v)
{
    BoxStats s;
    if (v.empty()) return s;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double pos = p * double(v.size() - 1);
        const auto i = std::size_t(pos);
        const double f = pos - double(i);
        return i + 1 < v.size() ? v[i] * (1 - f) + v[i + 1] * f : v[i];
    };
    s.q1 = q(0.25);
    s.median = q(0.5);
    s.q3 = q(0.75);
    const double iqr = s.q3 - s.q1;
    const double lo = s.q1 - 1.5 * iqr, hi = s.q3 + 1.5 * iqr;
    s.whisker_lo = s.q1;
    s.whisker_hi = s.q3;
    for (double x : v) {
        if (x < lo || x > hi) s.outliers.push_back(x);
        else {
            s.whisker_lo = std::min(s.whisker_lo, x);
            s.whisker_hi = std::max(s.whisker_hi, x);
        }
    }
    return s;
}

std::string scatter_csv(const std::vector<ScatterPoint>& points)
{
    std::string s = "label,params,dice,asd\n";
    for (const auto& p : points)
        s += clean_label(p.label) + "," + fmt("%.0f", p.params) + "," + fmt("%.9f", p.dice) + "," + fmt("%.9f", p.asd) + "\n";
    return s;
}

std::vector<ScatterPoint> read_scatter_csv(const fs::path& path)
{
    std::vector<ScatterPoint> out;
    for (const auto& r : read_csv(path, 4))
        out.push_back({r[0], to_double(r[1], path), to_double(r[2], path), to_double(r[3], path)});
    return out;
}

std::string scatter_svg(const std::vector<ScatterPoint>& points)
{
    double xl = 1e300, xh = -1e300, yl = 1e300, yh = -1e300, al = 1e300, ah = -1e300;
    for (const auto& p : points) {
        xl = std::min(xl, p.params / 1e6);
        xh = std::max(xh, p.params / 1e6);
        yl = std::min(yl, p.dice);
        yh = std::max(yh, p.dice);
        al = std::min(al, p.asd);
        ah = std::max(ah, p.asd);
    }
    if (points.empty()) xl = yl = al = 0, xh = yh = ah = 1;
    const Axis x = padded_axis(xl, xh, kLeft, kWidth - kRight);
    const Axis y = padded_axis(yl, yh, kHeight - kBottom, kTop);
    std::ostringstream os;
    svg_frame(os, "Parameters vs Dice (marker size: ASD)", "parameters (millions)", "mean Dice", y, &x);
    for (const auto& p : points) {
        const double r = 4.0 + (ah > al ? 10.0 * (p.asd - al) / (ah - al) : 4.0);
        const double px = x.map(p.params / 1e6), py = y.map(p.dice);
        os << "<circle cx=\"" << fmt("%.1f", px) << "\" cy=\"" << fmt("%.1f", py) << "\" r=\"" << fmt("%.1f", r)
           << "\" fill=\"steelblue\" fill-opacity=\"0.6\" stroke=\"navy\"/>\n";
        os << "<text x=\"" << fmt("%.1f", px + r + 3) << "\" y=\"" << fmt("%.1f", py + 4) << "\">"
           << xml_escape(p.label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string boxplot_csv(const std::vector<BoxGroup>& groups, const std::vector<std::vector<std::string>>& ids,
                        const std::vector<std::vector<int>>& folds)
{
    std::string s = "group,fold,id,dice\n";
    for (std::size_t g = 0; g < groups.size(); ++g)
        for (std::size_t i = 0; i < groups[g].values.size(); ++i)
            s += clean_label(groups[g].label) + "," + std::to_string(folds[g][i]) + "," + clean_label(ids[g][i]) + "," +
                 fmt("%.9f", groups[g].values[i]) + "\n";
    return s;
}

std::vector<BoxGroup> read_boxplot_csv(const fs::path& path)
{
    std::vector<BoxGroup> out;
    for (const auto& r : read_csv(path, 4)) {
        if (out.empty() || out.back().label != r[0]) out.push_back({r[0], {}});
        out.back().values.push_back(to_double(r[3], path));
    }
    return out;
}

std::string boxplot_svg(const std::vector<BoxGroup>& groups)
{
    double lo = 1e300, hi = -1e300;
    for (const auto& g : groups)
        for (double v : g.values) lo = std::min(lo, v), hi = std::max(hi, v);
    if (lo > hi) lo = 0, hi = 1;
    const Axis y = padded_axis(lo, hi, kHeight - kBottom, kTop);
    std::ostringstream os;
    svg_frame(os, "Dice per validation sample", "", "Dice", y, nullptr);
    const double slot = double(kWidth - kLeft - kRight) / std::max<std::size_t>(1, groups.size());
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const BoxStats s = box_stats(groups[i].values);
        const double cx = kLeft + slot * (double(i) + 0.5), half = std::min(30.0, slot * 0.3);
        auto line = [&](double x1, double y1, double x2, double y2) {
            os << "<line x1=\"" << fmt("%.1f", x1) << "\" y1=\"" << fmt("%.1f", y1) << "\" x2=\"" << fmt("%.1f", x2)
               << "\" y2=\"" << fmt("%.1f", y2) << "\" stroke=\"black\"/>\n";
        };
        if (!groups[i].values.empty()) {
            line(cx, y.map(s.whisker_lo), cx, y.map(s.q1));
            line(cx, y.map(s.q3), cx, y.map(s.whisker_hi));
            line(cx - half / 2, y.map(s.whisker_lo), cx + half / 2, y.map(s.whisker_lo));
            line(cx - half / 2, y.map(s.whisker_hi), cx + half / 2, y.map(s.whisker_hi));
            os << "<rect x=\"" << fmt("%.1f", cx - half) << "\" y=\"" << fmt("%.1f", y.map(s.q3)) << "\" width=\""
               << fmt("%.1f", 2 * half) << "\" height=\"" << fmt("%.1f", y.map(s.q1) - y.map(s.q3))
               << "\" fill=\"lightsteelblue\" stroke=\"black\"/>\n";
            line(cx - half, y.map(s.median), cx + half, y.map(s.median));
            for (double o : s.outliers)
                os << "<circle cx=\"" << fmt("%.1f", cx) << "\" cy=\"" << fmt("%.1f", y.map(o))
                   << "\" r=\"2.5\" fill=\"none\" stroke=\"black\"/>\n";
        }
        os << "<text x=\"" << fmt("%.1f", cx) << "\" y=\"" << kHeight - kBottom + 18 << "\" text-anchor=\"middle\">"
           << xml_escape(groups[i].label) << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

// ---------------------------------------------------------------- bundles

namespace {

void write_common(const fs::path& dir, const std::vector<std::pair<std::string, const CrossValidationResult*>>& arms,
                  const std::vector<std::size_t>& params)
{
    fs::create_directories(dir);
    std::string per_fold = "group,fold";
    for (const auto& m : MetricsReport::metric_names()) per_fold += "," + m;
    per_fold += "\n";
    std::vector<ScatterPoint> scatter;
    std::vector<BoxGroup> groups;
    std::vector<std::vector<std::string>> ids;
    std::vector<std::vector<int>> folds;
    for (std::size_t a = 0; a < arms.size(); ++a) {
        const auto& [label, cv] = arms[a];
        for (std::size_t f = 0; f < cv->folds.size(); ++f) {
            per_fold += clean_label(label) + "," + std::to_string(f);
            for (const auto& m : MetricsReport::metric_names()) {
                const double v = cv->fold_values(m)[f];
                per_fold += "," + (std::isnan(v) ? std::string("excluded") : fmt("%.9f", v));
            }
            per_fold += "\n";
        }
        scatter.push_back({label, double(params[a]), cv->summary("dice").mean, cv->summary("asd").mean});
        BoxGroup g{label, {}};
        ids.emplace_back();
        folds.emplace_back();
        for (std::size_t f = 0; f < cv->folds.size(); ++f)
            for (const auto& s : cv->folds[f].val_report.samples) {
                g.values.push_back(s.dice);
                ids.back().push_back(s.id);
                folds.back().push_back(int(f));
            }
        groups.push_back(std::move(g));
    }
    write_text(dir / "per_fold.csv", per_fold);
    write_text(dir / "scatter.csv", scatter_csv(scatter));
    write_text(dir / "dice_box.csv", boxplot_csv(groups, ids, folds));
    render_plots(dir);
}

}  // namespace

void write_report(const fs::path& dir, const GammaAblation& g)
{
    const std::size_t p = g.baseline.folds.empty() ? 0 : g.baseline.folds.front().parameter_count;
    write_common(dir, {{"gamma=0", &g.baseline}, {"gamma=1", &g.spcl}}, {p, p});
    write_text(dir / "table.md", g.table_markdown());
    write_text(dir / "table.csv", g.table_csv());
    write_text(dir / "report.json", g.to_json().dump(2) + "\n");
}

void write_report(const fs::path& dir, const ComponentAblation& c)
{
    std::vector<std::pair<std::string, const CrossValidationResult*>> arms;
    for (std::size_t i = 0; i < c.results.size(); ++i) {
        const auto& f = c.flags[i];
        arms.emplace_back(std::to_string(i + 1) + ":" + (f.spcl ? "S" : "-") + (f.cafm ? "C" : "-") + (f.msd ? "M" : "-"),
                          &c.results[i]);
    }
    write_common(dir, arms, c.parameter_counts);
    write_text(dir / "table.md", c.table_markdown());
    write_text(dir / "table.csv", c.table_csv());
    write_text(dir / "report.json", c.to_json().dump(2) + "\n");
}

std::vector<fs::path> render_plots(const fs::path& dir)
{
    std::vector<fs::path> written;
    if (fs::exists(dir / "scatter.csv")) {
        write_text(dir / "scatter.svg", scatter_svg(read_scatter_csv(dir / "scatter.csv")));
        written.push_back(dir / "scatter.svg");
    }
    if (fs::exists(dir / "dice_box.csv")) {
        write_text(dir / "dice_box.svg", boxplot_svg(read_boxplot_csv(dir / "dice_box.csv")));
        written.push_back(dir / "dice_box.svg");
    }
    return written;
}

}  // namespace msa
