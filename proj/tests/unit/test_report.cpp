#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "msa/error.hpp"
#include "msa/report/report.hpp"

using namespace msa;
namespace fs = std::filesystem;

namespace {

void fill_rect(Mask& m, int y0, int x0, int y1, int x1)
{
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) m(y, x) = 1;
}

}  // namespace

TEST(OverlayBoxes, IdenticalMasksGiveNoBoxes)
{
    Mask m(20, 20);
    fill_rect(m, 2, 2, 8, 8);
    EXPECT_TRUE(overlay_boxes(m, m).empty());
}

TEST(OverlayBoxes, EmptyPredictionGivesOneMissBox)
{
    Mask truth(20, 20), pred(20, 20);
    fill_rect(truth, 3, 4, 6, 9);
    const auto b = overlay_boxes(pred, truth);
    ASSERT_EQ(b.size(), 1u);
    EXPECT_TRUE(b[0].false_negative);
    EXPECT_EQ(b[0].y0, 3);
    EXPECT_EQ(b[0].x0, 4);
    EXPECT_EQ(b[0].y1, 6);
    EXPECT_EQ(b[0].x1, 9);
    EXPECT_EQ(b[0].pixels, 24);
}

TEST(OverlayBoxes, TwoFalsePositivesOneMiss)
{
    Mask truth(30, 30), pred(30, 30);
    fill_rect(truth, 10, 10, 14, 14);
    fill_rect(pred, 10, 10, 14, 12);     // columns 13-14 missed: 10 px FN
    fill_rect(pred, 0, 0, 2, 2);         // FP, 9 px
    fill_rect(pred, 25, 20, 26, 24);     // FP, 10 px
    fill_rect(pred, 20, 0, 20, 1);       // 2 px speckle, below the threshold
    const auto b = overlay_boxes(pred, truth);
    ASSERT_EQ(b.size(), 3u);
    EXPECT_TRUE(b[0].false_negative);
    EXPECT_EQ(b[0].pixels, 10);
    EXPECT_FALSE(b[1].false_negative);
    EXPECT_FALSE(b[2].false_negative);
    EXPECT_EQ(b[1].y0, 0);
    EXPECT_EQ(b[2].y0, 25);
}

TEST(OverlayBoxes, DiagonalPixelsFormOneComponent)
{
    Mask truth(10, 10), pred(10, 10);
    for (int i = 0; i < 6; ++i) truth(i, i) = 1;
    EXPECT_EQ(overlay_boxes(pred, truth).size(), 1u);
}

TEST(Qualitative, PanelLayoutAndBoxColours)
{
    Tensor<float> image(1, 1, 12, 12, 0.0f);
    Mask truth(12, 12), pred(12, 12);
    fill_rect(truth, 4, 4, 7, 7);
    fill_rect(pred, 0, 9, 2, 11);
    std::vector<OverlayBox> boxes;
    const auto p = render_qualitative(image, truth, pred, &boxes);
    EXPECT_EQ(p.h, 12);
    EXPECT_EQ(p.w, 3 * 12 + 8);
    ASSERT_EQ(boxes.size(), 2u);
    auto px = [&](int y, int x) {
        const auto* d = p.data.data() + (std::size_t(y) * p.w + x) * 3;
        return std::array<int, 3>{d[0], d[1], d[2]};
    };
    EXPECT_EQ(px(0, 0), (std::array<int, 3>{128, 128, 128}));  // image value 0 maps to mid-gray
    EXPECT_EQ(px(5, 16 + 5), (std::array<int, 3>{255, 255, 255}));  // truth panel
    const int ox = 32;
    EXPECT_EQ(px(3, ox + 3), (std::array<int, 3>{255, 255, 0}));  // FN box corner, yellow
    EXPECT_EQ(px(3, ox + 8), (std::array<int, 3>{0, 255, 0}));  // FP box lower-left corner, green
}

TEST(BoxStats, QuartilesAndOutliers)
{
    const auto s = box_stats({1, 2, 3, 4, 5, 6, 7, 8, 9, 100});
    EXPECT_DOUBLE_EQ(s.q1, 3.25);
    EXPECT_DOUBLE_EQ(s.median, 5.5);
    EXPECT_DOUBLE_EQ(s.q3, 7.75);
    ASSERT_EQ(s.outliers.size(), 1u);
    EXPECT_EQ(s.outliers[0], 100);
    EXPECT_EQ(s.whisker_hi, 9);
    EXPECT_EQ(s.whisker_lo, 1);
}

TEST(Plots, CsvRoundTripAndSvgOutput)
{
    const fs::path dir = fs::temp_directory_path() / "msa_test_plots";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::vector<ScatterPoint> pts{{"a", 795675, 0.91, 0.8}, {"b,c", 7574288, 0.93, 0.6}};
    std::ofstream(dir / "scatter.csv") << scatter_csv(pts);
    const std::vector<BoxGroup> groups{{"x", {0.9, 0.8}}, {"y", {0.7}}};
    std::ofstream(dir / "dice_box.csv") << boxplot_csv(groups, {{"s0", "s1"}, {"s2"}}, {{0, 1}, {0}});

    const auto back = read_scatter_csv(dir / "scatter.csv");
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].label, "b;c");
    EXPECT_EQ(back[1].params, 7574288);
    EXPECT_DOUBLE_EQ(back[0].dice, 0.91);
    const auto g = read_boxplot_csv(dir / "dice_box.csv");
    ASSERT_EQ(g.size(), 2u);
    EXPECT_EQ(g[0].values, (std::vector<double>{0.9, 0.8}));

    const auto files = render_plots(dir);
    EXPECT_EQ(files.size(), 2u);
    for (const auto& f : files) {
        std::ifstream in(f);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        EXPECT_EQ(text.rfind("<svg", 0), 0u);
        EXPECT_NE(text.find("</svg>"), std::string::npos);
    }
    std::ofstream(dir / "scatter.csv") << "label,params,dice,asd\nq,1,zz,3\n";
    EXPECT_THROW(read_scatter_csv(dir / "scatter.csv"), IoError);
    fs::remove_all(dir);
}

TEST(Bundle, GammaReportWritesEveryPlotWithSiblingCsv)
{
    GeneratorConfig gen;
    gen.count = 10;
    gen.image_size = 16;
    gen.width_min = 2;
    gen.width_max = 5;
    const auto ds = generate_dataset(gen);
    NetworkConfig net;
    net.preset = Preset::custom;
    net.depth = 3;
    net.base_channels = 2;
    net.decoder_channels = 2;
    net.embedding_dim = 4;
    net.se_reduction = 2;
    TrainConfig t;
    t.epochs = 1;
    t.batch_size = 4;
    const auto g = gamma_ablation(net, t, ds, 2);
    const fs::path dir = fs::temp_directory_path() / "msa_test_bundle";
    fs::remove_all(dir);
    write_report(dir, g);
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".svg") {
            auto csv = e.path();
            csv.replace_extension(".csv");
            EXPECT_TRUE(fs::exists(csv)) << csv;
        }
    EXPECT_TRUE(fs::exists(dir / "table.md"));
    EXPECT_TRUE(fs::exists(dir / "per_fold.csv"));
    fs::remove_all(dir);
}
