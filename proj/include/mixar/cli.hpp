#pragma once

/** @file
 * The `mixar` command line.
 *
 *     mixar simulate --spec <file> --n <int> --seed <int> --out <file> [--hidden-out <file>]
 *     mixar fit      --data <file> --p <int> --kind linear|mlp --lags <int> --hidden <int> --out <model-file>
 *     mixar select   --data <file> --pmax <int> --kind ... --penalty per-component|per-parameter --report <file>
 *     mixar grid     [--full] [--seed <int>] --report <file> [--format csv|md]
 *     mixar laser    --data <file> [--paper-scale] [--no-normalize] --report <file>
 *
 * Exit codes: 0 success, 1 usage error, 2 data/ingestion error, 3 numerical
 * failure. Every error is printed as one line starting with `ERROR <code>:`.
 * Report-producing commands write `<report>.manifest.json` alongside.
 */

#include "mixar/mixar.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mixar::cli {

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, numerical_error = 3 };

namespace detail {

inline std::string utc_now()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IngestionError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IngestionError("write to '" + path + "' failed");
}

inline const std::map<std::string, ExpertKind> kind_names{{"linear", ExpertKind::linear}, {"mlp", ExpertKind::mlp}};
inline const std::map<std::string, PenaltyMode> penalty_names{{"per-component", PenaltyMode::bic_per_component},
                                                              {"per-parameter", PenaltyMode::bic_per_parameter}};
inline const std::map<std::string, ReportFormat> format_names{{"csv", ReportFormat::csv},
                                                              {"md", ReportFormat::markdown}};

inline nlohmann::json fit_json(const FitConfig& f)
{
    return {{"max_em_iterations", f.max_em_iterations}, {"rel_tolerance", f.rel_tolerance},
            {"restarts", f.restarts},                   {"eta", f.eta},
            {"inner_max_iterations", f.inner_max_iterations}, {"inner_tolerance", f.inner_tolerance},
            {"master_seed", f.master_seed}};
}

inline void add_fit_flags(CLI::App& cmd, FitConfig& fit)
{
    cmd.add_option("--seed", fit.master_seed, "Master seed for restarts");
    cmd.add_option("--restarts", fit.restarts, "EM restarts")->check(CLI::PositiveNumber);
    cmd.add_option("--max-iter", fit.max_em_iterations, "EM iteration cap")->check(CLI::PositiveNumber);
    cmd.add_option("--tol", fit.rel_tolerance, "Relative log-likelihood tolerance")->check(CLI::PositiveNumber);
    cmd.add_option("--eta", fit.eta, "Mixing-weight floor")->check(CLI::PositiveNumber);
    cmd.add_option("--inner-max-iter", fit.inner_max_iterations, "Perceptron M-step iteration cap")
        ->check(CLI::PositiveNumber);
    cmd.add_option("--inner-tol", fit.inner_tolerance, "Perceptron M-step improvement threshold")
        ->check(CLI::PositiveNumber);
}

class Runner {
public:
    Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

    int run(int argc, const char* const* argv);

private:
    void simulate_cmd();
    void fit_cmd();
    void select_cmd();
    void grid_cmd();
    void laser_cmd();

    void finish_report(const std::string& command, const std::string& report_path, const std::string& text,
                       const nlohmann::json& config, std::uint64_t seed);

    std::ostream& out_;
    std::ostream& err_;
    std::string started_;

    // simulate
    std::string spec_path_, out_path_, hidden_out_;
    std::size_t n_ = 0;
    std::uint64_t seed_ = 0;

    // fit / select / laser
    std::string data_path_, report_path_;
    std::size_t p_ = 1;
    std::size_t lags_ = 1;
    std::size_t hidden_ = 0;
    ExpertKind kind_ = ExpertKind::linear;
    PenaltyMode penalty_ = PenaltyMode::bic_per_component;
    ReportFormat format_ = ReportFormat::csv;
    FitConfig fit_;

    // grid
    bool full_ = false;
    std::optional<std::size_t> replications_;
    PenaltyMode grid_penalty_ = PenaltyMode::bic_per_parameter;

    // laser
    bool paper_scale_ = false;
    bool no_normalize_ = false;
};

inline void Runner::finish_report(const std::string& command, const std::string& report_path,
                                  const std::string& text, const nlohmann::json& config, std::uint64_t seed)
{
    write_text(report_path, text);
    RunManifest m;
    m.command = command;
    m.config = config;
    m.master_seed = seed;
    m.tool_version = VERSION;
    m.started = started_;
    m.finished = utc_now();
    write_manifest(report_path, m);
}

inline void Runner::simulate_cmd()
{
    const GenerativeSpec spec = load_spec(spec_path_);
    const SimulationOutput sim = simulate(spec, n_, seed_);
    std::ostringstream series;
    write_series(series, sim.series);
    write_text(out_path_, series.str());
    if (!hidden_out_.empty()) {
        std::ostringstream path;
        for (int x : sim.hidden_path) path << x << '\n';
        write_text(hidden_out_, path.str());
    }
}

inline void Runner::fit_cmd()
{
    const SeriesData series = read_series(data_path_);
    const ExpertShape shape{kind_, lags_, kind_ == ExpertKind::linear ? 0 : hidden_};
    if (series.size() < shape.lags + p_ + 1)
        throw InsufficientDataError("fit: " + std::to_string(series.size()) + " values are too few for p="
                                    + std::to_string(p_) + " and lags=" + std::to_string(shape.lags));
    const FitResult fit = em_run(series, p_, shape, fit_);
    std::ostringstream text;
    save_model(text, canonical_order(fit.model));
    write_text(out_path_, text.str());
    out_ << "loglik " << format_real(fit.loglik) << " iterations " << fit.em_iterations << " converged "
         << (fit.converged ? "yes" : "no") << " restart " << fit.best_restart << '\n';
}

inline void Runner::select_cmd()
{
    const SeriesData series = read_series(data_path_);
    const ExpertShape shape{kind_, lags_, kind_ == ExpertKind::linear ? 0 : hidden_};
    if (series.size() < shape.lags + p_ + 1)
        throw InsufficientDataError("select: " + std::to_string(series.size()) + " values are too few for pmax="
                                    + std::to_string(p_));
    const auto sel = select_order(series, p_, shape, fit_, {penalty_});
    const OrderReport report = summarize(sel, series.size(), penalty_);
    for (const auto& w : report.warnings) err_ << "warning: " << w << '\n';
    nlohmann::json config{{"data", data_path_},       {"pmax", p_},
                          {"kind", to_string(kind_)}, {"lags", shape.lags},
                          {"hidden", shape.hidden_units}, {"penalty", to_string(penalty_)},
                          {"fit", fit_json(fit_)}};
    finish_report("select", report_path_, render_report(report, format_), config, fit_.master_seed);
    out_ << "chosen " << report.chosen << '\n';
}

inline void Runner::grid_cmd()
{
    GridConfig cfg = full_ ? GridConfig::full() : GridConfig{};
    cfg.master_seed = seed_;
    cfg.penalty.mode = grid_penalty_;
    cfg.fit = fit_;
    if (replications_) cfg.replications = *replications_;
    const GridReport report = run_linear_grid(cfg);
    std::size_t failures = 0;
    for (const auto& c : report.cells)
        for (const auto& e : c.errors) {
            err_ << "warning: cell pi1=" << format_short(c.pi1) << " a=(" << format_short(c.a1) << ","
                 << format_short(c.a2) << ") n=" << c.n << " " << e << '\n';
            ++failures;
        }

    nlohmann::json pairs = nlohmann::json::array();
    for (auto [a1, a2] : cfg.a_pairs) pairs.push_back({a1, a2});
    nlohmann::json config{{"full", full_},
                          {"pi1_values", cfg.pi1_values},
                          {"a_pairs", pairs},
                          {"b_pair", {cfg.b_pair.first, cfg.b_pair.second}},
                          {"sigma", cfg.sigma},
                          {"n_values", cfg.n_values},
                          {"replications", cfg.replications},
                          {"P", cfg.P},
                          {"burn_in", cfg.burn_in},
                          {"penalty", to_string(cfg.penalty.mode)},
                          {"fit", fit_json(cfg.fit)},
                          {"master_seed", cfg.master_seed}};
    finish_report("grid", report_path_, render_report(report, format_), config, cfg.master_seed);
    out_ << "cells " << report.cells.size() << " failures " << failures << '\n';
}

inline void Runner::laser_cmd()
{
    LaserConfig cfg = paper_scale_ ? LaserConfig::paper_scale(data_path_) : LaserConfig{};
    cfg.data_path = data_path_;
    const std::size_t restarts = cfg.fit.restarts;
    cfg.fit = fit_;
    if (paper_scale_) cfg.fit.restarts = restarts;
    cfg.normalization = no_normalize_ ? Normalization::none : Normalization::standardize;
    cfg.penalty.mode = penalty_;
    const OrderReport report = run_laser(cfg);
    for (const auto& w : report.warnings) err_ << "warning: " << w << '\n';
    nlohmann::json config{{"data", cfg.data_path},
                          {"lags", cfg.lags},
                          {"hidden", cfg.hidden_units},
                          {"P", cfg.P},
                          {"normalization", no_normalize_ ? "none" : "standardize"},
                          {"penalty", to_string(cfg.penalty.mode)},
                          {"paper_scale", paper_scale_},
                          {"fit", fit_json(cfg.fit)}};
    finish_report("laser", report_path_, render_report(report, format_), config, cfg.fit.master_seed);
    out_ << "chosen " << report.chosen << '\n';
}

inline int Runner::run(int argc, const char* const* argv)
{
    started_ = utc_now();
    CLI::App app{"Order selection for mixtures of autoregressive experts", "mixar"};
    app.require_subcommand(1);
    app.set_version_flag("--version", VERSION);

    auto* sim = app.add_subcommand("simulate", "Sample a series from a generative spec");
    sim->add_option("--spec", spec_path_, "Generative spec (JSON)")->required();
    sim->add_option("--n", n_, "Recorded length")->required()->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed_, "Seed")->required();
    sim->add_option("--out", out_path_, "Series output file")->required();
    sim->add_option("--hidden-out", hidden_out_, "Hidden regime output file");

    auto* fit = app.add_subcommand("fit", "Fit a p-component mixture by multi-start EM");
    fit->add_option("--data", data_path_, "Series file")->required();
    fit->add_option("--p", p_, "Number of components")->required()->check(CLI::PositiveNumber);
    fit->add_option("--kind", kind_, "Expert kind")->required()->transform(CLI::CheckedTransformer(kind_names));
    fit->add_option("--lags", lags_, "Window length")->check(CLI::PositiveNumber);
    fit->add_option("--hidden", hidden_, "Hidden units (mlp)");
    fit->add_option("--out", out_path_, "Model output file")->required();
    add_fit_flags(*fit, fit_);

    auto* sel = app.add_subcommand("select", "Choose the number of components");
    sel->add_option("--data", data_path_, "Series file")->required();
    sel->add_option("--pmax", p_, "Largest order tried")->required()->check(CLI::PositiveNumber);
    sel->add_option("--kind", kind_, "Expert kind")->required()->transform(CLI::CheckedTransformer(kind_names));
    sel->add_option("--lags", lags_, "Window length")->check(CLI::PositiveNumber);
    sel->add_option("--hidden", hidden_, "Hidden units (mlp)");
    sel->add_option("--penalty", penalty_, "Penalty")->transform(CLI::CheckedTransformer(penalty_names));
    sel->add_option("--report", report_path_, "Report file")->required();
    sel->add_option("--format", format_, "Report format")->transform(CLI::CheckedTransformer(format_names));
    add_fit_flags(*sel, fit_);

    auto* grid = app.add_subcommand("grid", "Run the linear two-regime selection grid");
    grid->add_flag("--full", full_, "All nine (a1, a2) pairs");
    grid->add_option("--seed", seed_, "Master seed");
    grid->add_option("--report", report_path_, "Report file")->required();
    grid->add_option("--format", format_, "Report format")->transform(CLI::CheckedTransformer(format_names));
    grid->add_option("--replications", replications_, "Replications per cell")->check(CLI::PositiveNumber);
    grid->add_option("--penalty", grid_penalty_, "Penalty")->transform(CLI::CheckedTransformer(penalty_names));
    grid->add_option("--restarts", fit_.restarts, "EM restarts")->check(CLI::PositiveNumber);
    grid->add_option("--max-iter", fit_.max_em_iterations, "EM iteration cap")->check(CLI::PositiveNumber);

    auto* laser = app.add_subcommand("laser", "Perceptron-mixture study of a laser-type series");
    laser->add_option("--data", data_path_, "Series file")->required();
    laser->add_flag("--paper-scale", paper_scale_, "100 restarts");
    laser->add_flag("--no-normalize", no_normalize_, "Fit the raw series");
    laser->add_option("--report", report_path_, "Report file")->required();
    laser->add_option("--format", format_, "Report format")->transform(CLI::CheckedTransformer(format_names));
    laser->add_option("--penalty", penalty_, "Penalty")->transform(CLI::CheckedTransformer(penalty_names));
    add_fit_flags(*laser, fit_);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out_ << app.help();
        return ok;
    } catch (const CLI::CallForAllHelp&) {
        out_ << app.help("", CLI::AppFormatMode::All);
        return ok;
    } catch (const CLI::CallForVersion&) {
        out_ << VERSION << '\n';
        return ok;
    } catch (const CLI::ParseError& e) {
        err_ << "ERROR " << usage_error << ": " << e.what() << '\n';
        return usage_error;
    }

    if ((*fit || *sel) && kind_ == ExpertKind::mlp && hidden_ == 0) {
        err_ << "ERROR " << usage_error << ": --kind mlp needs --hidden of at least 1\n";
        return usage_error;
    }

    try {
        if (*sim) simulate_cmd();
        else if (*fit) fit_cmd();
        else if (*sel) select_cmd();
        else if (*grid) grid_cmd();
        else if (*laser) laser_cmd();
    } catch (const IngestionError& e) {
        err_ << "ERROR " << data_error << ": " << e.what() << '\n';
        return data_error;
    } catch (const InsufficientDataError& e) {
        err_ << "ERROR " << data_error << ": " << e.what() << '\n';
        return data_error;
    } catch (const InvariantError& e) {
        err_ << "ERROR " << data_error << ": " << e.what() << '\n';
        return data_error;
    } catch (const DomainError& e) {
        err_ << "ERROR " << data_error << ": " << e.what() << '\n';
        return data_error;
    } catch (const std::exception& e) {
        err_ << "ERROR " << numerical_error << ": " << e.what() << '\n';
        return numerical_error;
    }
    return ok;
}

} // namespace detail

/// Entry point shared by the executable and the tests.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr)
{
    detail::Runner runner(out, err);
    return runner.run(argc, argv);
}

} // namespace mixar::cli
