#include "test_support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mixar;
using namespace mixar::testing;

namespace {

GridConfig small_grid()
{
    GridConfig cfg;
    cfg.pi1_values = {0.7};
    cfg.a_pairs = {{0.1, 0.9}};
    cfg.n_values = {200};
    cfg.replications = 3;
    cfg.P = 2;
    cfg.fit.restarts = 2;
    cfg.fit.max_em_iterations = 50;
    cfg.master_seed = 5;
    return cfg;
}

std::size_t count_lines(const std::string& s)
{
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

std::string temp_path(const std::string& name)
{
    return (std::filesystem::temp_directory_path() / ("mixar_test_" + name)).string();
}

} // namespace

TEST(Format, ShortestRoundTrip)
{
    EXPECT_EQ(format_short(0.1), "0.1");
    EXPECT_EQ(format_short(200), "200");
    EXPECT_EQ(format_short(-0.5), "-0.5");
}

TEST(Format, CsvQuoting)
{
    EXPECT_EQ(csv_field("plain"), "plain");
    EXPECT_EQ(csv_field("a,b"), "\"a,b\"");
    EXPECT_EQ(csv_field("say \"hi\""), "\"say \"\"hi\"\"\"");
}

TEST(GridCsv, ConstructedRow)
{
    GridReport r;
    r.P = 3;
    r.replications = 20;
    r.cells.push_back({0.5, 0.1, 0.1, 200, {20, 0, 0}, 0, {}});
    const auto csv = render_grid_csv(r);
    EXPECT_EQ(csv, "pi1,a1,a2,n,count_p1,count_p2,count_p3\r\n0.5,0.1,0.1,200,20,0,0\r\n");
}

TEST(GridCsv, EmptyGridIsHeaderOnly)
{
    GridReport r;
    r.P = 2;
    EXPECT_EQ(render_grid_csv(r), "pi1,a1,a2,n,count_p1,count_p2\r\n");
}

TEST(Grid, ShapeAndCountsAddUp)
{
    auto cfg = small_grid();
    cfg.pi1_values = {0.5, 0.9};
    cfg.n_values = {60, 80};
    cfg.replications = 2;
    const auto r = run_linear_grid(cfg);
    ASSERT_EQ(r.cells.size(), 2u * 1u * 2u);
    EXPECT_EQ(count_lines(render_grid_csv(r)), 1 + r.cells.size());
    for (const auto& c : r.cells) {
        ASSERT_EQ(c.counts.size(), cfg.P);
        std::size_t total = c.failures;
        for (auto k : c.counts) total += k;
        EXPECT_EQ(total, cfg.replications);
    }
    ASSERT_NE(r.find(0.9, 0.1, 0.9, 80), nullptr);
    EXPECT_EQ(r.find(0.3, 0.1, 0.9, 80), nullptr);
}

TEST(Grid, DeterministicForSeed)
{
    const auto cfg = small_grid();
    const auto a = run_linear_grid(cfg);
    const auto b = run_linear_grid(cfg);
    EXPECT_EQ(a, b);
    EXPECT_EQ(render_grid_csv(a), render_grid_csv(b));
}

TEST(Grid, FullHasNinePairs)
{
    EXPECT_EQ(GridConfig::full().a_pairs.size(), 9u);
    EXPECT_EQ(GridConfig().a_pairs.size(), 3u);
}

TEST(Grid, RejectsBadConfig)
{
    auto cfg = small_grid();
    cfg.pi1_values = {1.0};
    EXPECT_THROW(run_linear_grid(cfg), InvariantError);
    cfg = small_grid();
    cfg.replications = 0;
    EXPECT_THROW(run_linear_grid(cfg), InvariantError);
}

TEST(Grid, MarkdownListsEveryCell)
{
    const auto r = run_linear_grid(small_grid());
    const auto md = render_grid_markdown(r);
    EXPECT_NE(md.find("| 200 |"), std::string::npos) << md;
    EXPECT_NE(md.find("0.7"), std::string::npos);
}

TEST(OrderReport, CsvHasOneRowPerOrder)
{
    const auto s = simulate(grid_cell_spec(GridConfig{}, 0.5, {0.1, 0.9}), 300, 3).series;
    FitConfig cfg;
    cfg.restarts = 2;
    const ExpertShape shape{ExpertKind::linear, 1, 0};
    const auto sel = select_order(s, 2, shape, cfg);
    const auto rep = summarize(sel, s.size(), PenaltyMode::bic_per_component);
    const auto csv = render_order_csv(rep);
    EXPECT_EQ(csv.rfind("p,loglik,penalty,criterion,weights,chosen", 0), 0u) << csv;
    EXPECT_EQ(count_lines(csv), 3u);
    EXPECT_EQ(rep.chosen, sel.chosen);
    EXPECT_NE(render_order_markdown(rep).find("per-component"), std::string::npos);
}

TEST(Standardize, ZeroMeanUnitVariance)
{
    const auto z = standardize(SeriesData({1.0, 2.0, 3.0, 4.0, 10.0}));
    double mean = 0, var = 0;
    for (double v : z.values()) mean += v;
    mean /= 5;
    for (double v : z.values()) var += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 1e-15);
    EXPECT_NEAR(var / 5, 1.0, 1e-14);
    EXPECT_THROW(standardize(SeriesData({2.0, 2.0})), DomainError);
}

TEST(Laser, RunsOnWellFormedFile)
{
    const auto path = temp_path("laser.txt");
    {
        std::ofstream out(path);
        write_series(out, simulate(two_mlp_spec(), 400, 11).series);
    }
    auto cfg = LaserConfig{};
    cfg.data_path = path;
    cfg.lags = 2;
    cfg.hidden_units = 2;
    cfg.P = 2;
    cfg.fit.restarts = 2;
    cfg.fit.max_em_iterations = 20;
    cfg.fit.inner_max_iterations = 5;
    const auto rep = run_laser(cfg);
    EXPECT_EQ(rep.per_p.size(), 2u);
    EXPECT_GE(rep.chosen, 1u);
    EXPECT_LE(rep.chosen, 2u);
    EXPECT_EQ(rep.n, 400u);
    std::filesystem::remove(path);
}

TEST(Laser, TruncatedFileIsIngestionError)
{
    const auto path = temp_path("laser_short.txt");
    {
        std::ofstream out(path);
        out << "0.1\n0.2\n0.3\n";
    }
    auto cfg = LaserConfig{};
    cfg.data_path = path;
    EXPECT_THROW(run_laser(cfg), IngestionError);
    std::filesystem::remove(path);
}

TEST(Laser, FullScaleUsesMoreRestarts)
{
    const auto cfg = LaserConfig::paper_scale("x.txt");
    EXPECT_EQ(cfg.fit.restarts, 100u);
    EXPECT_EQ(cfg.lags, 10u);
    EXPECT_EQ(cfg.hidden_units, 5u);
}
