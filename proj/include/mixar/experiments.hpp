#pragma once

/** @file
 * Batch harnesses: the two-regime linear selection grid and the laser-series
 * perceptron-mixture study, plus CSV / Markdown rendering of their reports.
 */

#include "mixar/em.hpp"
#include "mixar/error.hpp"
#include "mixar/io.hpp"
#include "mixar/model.hpp"
#include "mixar/parallel.hpp"
#include "mixar/random.hpp"
#include "mixar/selection.hpp"
#include "mixar/simulator.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace mixar {

enum class ReportFormat { csv, markdown };

/// Shortest decimal that reads back to the same double.
inline std::string format_short(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// Quotes a CSV field when it contains a delimiter, quote or line break.
inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

// ---------------------------------------------------------------------------
// Linear selection grid
// ---------------------------------------------------------------------------

struct GridConfig {
    std::vector<double> pi1_values{0.5, 0.7, 0.9};
    std::vector<std::pair<double, double>> a_pairs{{0.1, 0.1}, {0.1, 0.5}, {0.1, 0.9}};
    std::pair<double, double> b_pair{0.5, -0.5};
    double sigma = 0.5;
    std::vector<std::size_t> n_values{200, 500, 1000, 1500, 2000};
    std::size_t replications = 20;
    std::size_t P = 3;
    std::uint64_t master_seed = 0;
    std::size_t burn_in = DEFAULT_BURN_IN;

    FitConfig fit; ///< master_seed is ignored; every replication derives its own
    PenaltySpec penalty{PenaltyMode::bic_per_parameter};

    /// All nine (a1, a2) pairs over {0.1, 0.5, 0.9}.
    static GridConfig full()
    {
        GridConfig cfg;
        cfg.a_pairs.clear();
        for (double a1 : {0.1, 0.5, 0.9})
            for (double a2 : {0.1, 0.5, 0.9}) cfg.a_pairs.emplace_back(a1, a2);
        return cfg;
    }
};

inline void validate(const GridConfig& cfg)
{
    using detail::require;
    require(cfg.replications >= 1, "grid: replications must be at least 1");
    require(cfg.P >= 1, "grid: P must be at least 1");
    for (double pi : cfg.pi1_values) require(pi > 0.0 && pi < 1.0, "grid: pi1 values must lie in (0, 1)");
    require(cfg.sigma >= SIGMA_FLOOR && cfg.sigma <= BOUND, "grid: sigma out of range");
    for (auto [a1, a2] : cfg.a_pairs)
        require(detail::within_bound(a1) && detail::within_bound(a2), "grid: leading coefficient out of range");
    for (std::size_t n : cfg.n_values) require(n >= cfg.P + 2, "grid: series length too short for P");
    validate(cfg.fit, cfg.P);
}

struct GridCell {
    double pi1 = 0.0;
    double a1 = 0.0;
    double a2 = 0.0;
    std::size_t n = 0;
    std::vector<std::size_t> counts; ///< counts[p - 1] = replications selecting p
    std::size_t failures = 0;        ///< replications whose selection raised an error
    std::vector<std::string> errors;

    friend bool operator==(const GridCell&, const GridCell&) = default;
};

struct GridReport {
    std::size_t P = 3;
    std::size_t replications = 0;
    std::vector<GridCell> cells; ///< ordered by pi1, then a-pair, then n

    const GridCell* find(double pi1, double a1, double a2, std::size_t n) const noexcept
    {
        for (const auto& c : cells)
            if (c.pi1 == pi1 && c.a1 == a1 && c.a2 == a2 && c.n == n) return &c;
        return nullptr;
    }

    friend bool operator==(const GridReport&, const GridReport&) = default;
};

/// Generative spec of one grid cell.
inline GenerativeSpec grid_cell_spec(const GridConfig& cfg, double pi1, std::pair<double, double> a)
{
    GenerativeSpec spec;
    spec.truth.experts = {ExpertParams::make_linear({a.first}, cfg.b_pair.first, cfg.sigma),
                          ExpertParams::make_linear({a.second}, cfg.b_pair.second, cfg.sigma)};
    spec.truth.weights = {pi1, 1.0 - pi1};
    spec.burn_in = cfg.burn_in;
    return spec;
}

/// Simulates `replications` series per (pi1, a-pair, n) cell and tallies the
/// selected order. Replication seeds hash the master seed with the cell
/// coordinates, so any cell can be reproduced alone.
inline GridReport run_linear_grid(const GridConfig& cfg)
{
    validate(cfg);
    GridReport report;
    report.P = cfg.P;
    report.replications = cfg.replications;

    struct Job {
        std::size_t cell, pi_idx, a_idx, n_idx, rep;
    };
    std::vector<Job> jobs;
    for (std::size_t pi = 0; pi < cfg.pi1_values.size(); ++pi)
        for (std::size_t a = 0; a < cfg.a_pairs.size(); ++a)
            for (std::size_t ni = 0; ni < cfg.n_values.size(); ++ni) {
                GridCell cell;
                cell.pi1 = cfg.pi1_values[pi];
                cell.a1 = cfg.a_pairs[a].first;
                cell.a2 = cfg.a_pairs[a].second;
                cell.n = cfg.n_values[ni];
                cell.counts.assign(cfg.P, 0);
                for (std::size_t r = 0; r < cfg.replications; ++r) jobs.push_back({report.cells.size(), pi, a, ni, r});
                report.cells.push_back(std::move(cell));
            }

    // chosen order per job; 0 marks a failure.
    std::vector<std::size_t> chosen(jobs.size(), 0);
    std::vector<std::string> errors(jobs.size());
    const ExpertShape shape{ExpertKind::linear, 1, 0};
    parallel_for(jobs.size(), [&](std::size_t j) {
        const Job& job = jobs[j];
        const std::uint64_t seed = hash_seed({cfg.master_seed, job.pi_idx, job.a_idx, job.n_idx, job.rep});
        try {
            const auto spec = grid_cell_spec(cfg, cfg.pi1_values[job.pi_idx], cfg.a_pairs[job.a_idx]);
            const auto sim = simulate(spec, cfg.n_values[job.n_idx], hash_seed({seed, 0}));
            FitConfig fit = cfg.fit;
            fit.master_seed = hash_seed({seed, 1});
            chosen[j] = select_order(sim.series, cfg.P, shape, fit, cfg.penalty).chosen;
        } catch (const Error& e) {
            errors[j] = e.what();
        }
    });

    for (std::size_t j = 0; j < jobs.size(); ++j) {
        GridCell& cell = report.cells[jobs[j].cell];
        if (chosen[j] == 0) {
            ++cell.failures;
            cell.errors.push_back("replication " + std::to_string(jobs[j].rep) + ": " + errors[j]);
        } else {
            ++cell.counts[chosen[j] - 1];
        }
    }
    return report;
}

inline std::string render_grid_csv(const GridReport& report)
{
    std::ostringstream out;
    out << "pi1,a1,a2,n";
    for (std::size_t p = 1; p <= report.P; ++p) out << ",count_p" << p;
    out << "\r\n";
    for (const auto& c : report.cells) {
        out << format_short(c.pi1) << ',' << format_short(c.a1) << ',' << format_short(c.a2) << ',' << c.n;
        for (auto k : c.counts) out << ',' << k;
        out << "\r\n";
    }
    return out.str();
}

/// Rows are (a-pair, n); column groups are pi1 values with one column per p.
inline std::string render_grid_markdown(const GridReport& report)
{
    std::vector<double> pis;
    std::vector<std::pair<double, double>> pairs;
    std::vector<std::size_t> ns;
    auto add = [](auto& v, const auto& x) {
        if (std::find(v.begin(), v.end(), x) == v.end()) v.push_back(x);
    };
    for (const auto& c : report.cells) {
        add(pis, c.pi1);
        add(pairs, std::make_pair(c.a1, c.a2));
        add(ns, c.n);
    }

    std::ostringstream out;
    out << "| a1 | a2 | n |";
    for (double pi : pis)
        for (std::size_t p = 1; p <= report.P; ++p) out << " pi1=" << format_short(pi) << " p=" << p << " |";
    out << "\n|---|---|---|";
    for (std::size_t i = 0; i < pis.size() * report.P; ++i) out << "---|";
    out << "\n";
    for (auto [a1, a2] : pairs)
        for (std::size_t n : ns) {
            out << "| " << format_short(a1) << " | " << format_short(a2) << " | " << n << " |";
            for (double pi : pis) {
                const GridCell* cell = report.find(pi, a1, a2, n);
                for (std::size_t p = 0; p < report.P; ++p) {
                    if (cell) out << ' ' << cell->counts[p] << " |";
                    else out << " |";
                }
            }
            out << "\n";
        }
    std::size_t failures = 0;
    for (const auto& c : report.cells) failures += c.failures;
    if (failures) out << "\n" << failures << " replication(s) failed and are not counted.\n";
    return out.str();
}

inline std::string render_report(const GridReport& report, ReportFormat format)
{
    return format == ReportFormat::csv ? render_grid_csv(report) : render_grid_markdown(report);
}

// ---------------------------------------------------------------------------
// Order-selection summaries (select and laser)
// ---------------------------------------------------------------------------

struct OrderRow {
    std::size_t p = 0;
    double loglik = 0.0;
    double penalty = 0.0;
    double criterion = 0.0;
    std::vector<double> weights; ///< canonical order, descending
};

struct OrderReport {
    std::size_t n = 0;
    PenaltyMode penalty = PenaltyMode::bic_per_component;
    std::vector<OrderRow> per_p;
    std::size_t chosen = 1;
    std::vector<std::string> warnings;
};

inline OrderReport summarize(const SelectionResult& sel, std::size_t n, PenaltyMode mode)
{
    OrderReport out;
    out.n = n;
    out.penalty = mode;
    out.chosen = sel.chosen;
    out.warnings = sel.warnings;
    for (std::size_t i = 0; i < sel.per_p.size(); ++i) {
        const auto& s = sel.per_p[i];
        out.per_p.push_back({i + 1, s.loglik, s.penalty, s.criterion, canonical_order(s.fit.model).weights});
    }
    return out;
}

inline std::string render_order_csv(const OrderReport& report)
{
    std::ostringstream out;
    out << "p,loglik,penalty,criterion,weights,chosen\r\n";
    for (const auto& row : report.per_p) {
        std::string w;
        for (std::size_t i = 0; i < row.weights.size(); ++i) w += (i ? "," : "") + format_real(row.weights[i]);
        out << row.p << ',' << format_real(row.loglik) << ',' << format_real(row.penalty) << ','
            << format_real(row.criterion) << ',' << csv_field(w) << ',' << (row.p == report.chosen ? 1 : 0) << "\r\n";
    }
    return out.str();
}

inline std::string render_order_markdown(const OrderReport& report)
{
    std::ostringstream out;
    char buf[96];
    out << "| number of experts | log-likelihood | penalty | criterion | mixture probabilities |\n";
    out << "|---|---|---|---|---|\n";
    for (const auto& row : report.per_p) {
        std::string w = "(";
        for (std::size_t i = 0; i < row.weights.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s%.3f", i ? ", " : "", row.weights[i]);
            w += buf;
        }
        w += ")";
        std::snprintf(buf, sizeof buf, "| %zu%s | %.4f | %.4f | %.4f | ", row.p, row.p == report.chosen ? " *" : "",
                      row.loglik, row.penalty, row.criterion);
        out << buf << w << " |\n";
    }
    out << "\nn = " << report.n << ", penalty " << to_string(report.penalty) << ", chosen p = " << report.chosen << "\n";
    for (const auto& w : report.warnings) out << "\nwarning: " << w << "\n";
    return out.str();
}

inline std::string render_report(const OrderReport& report, ReportFormat format)
{
    return format == ReportFormat::csv ? render_order_csv(report) : render_order_markdown(report);
}

// ---------------------------------------------------------------------------
// Laser study
// ---------------------------------------------------------------------------

enum class Normalization { standardize, none };

struct LaserConfig {
    std::string data_path;
    std::size_t lags = 10;
    std::size_t hidden_units = 5;
    std::size_t P = 3;
    Normalization normalization = Normalization::standardize;
    PenaltySpec penalty{};
    FitConfig fit; ///< restarts default 10; 100 with paper_scale()

    static LaserConfig paper_scale(std::string path)
    {
        LaserConfig cfg;
        cfg.data_path = std::move(path);
        cfg.fit.restarts = 100;
        return cfg;
    }
};

/// Subtracts the mean and divides by the (population) standard deviation.
inline SeriesData standardize(const SeriesData& s)
{
    const auto& v = s.values();
    if (v.empty()) return s;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.size()));
    if (!(sd > 0.0)) throw DomainError("standardize: constant series");
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - mean) / sd;
    return SeriesData(std::move(out));
}

/// Loads the series, optionally standardizes it, and selects among 1..P
/// perceptron experts.
inline OrderReport run_laser(const LaserConfig& cfg)
{
    if (cfg.lags < 1) throw DomainError("laser: lags must be positive");
    SeriesData raw = read_series(cfg.data_path);
    const std::size_t need = cfg.lags + cfg.P + 1;
    if (raw.size() < std::max(need, cfg.lags + 2))
        throw IngestionError(cfg.data_path + ": only " + std::to_string(raw.size()) + " values, need at least "
                                 + std::to_string(std::max(need, cfg.lags + 2)),
                             raw.size());
    const SeriesData series = cfg.normalization == Normalization::standardize ? standardize(raw) : raw;
    const ExpertShape shape{ExpertKind::mlp, cfg.lags, cfg.hidden_units};
    const auto sel = select_order(series, cfg.P, shape, cfg.fit, cfg.penalty);
    return summarize(sel, series.size(), cfg.penalty.mode);
}

} // namespace mixar
