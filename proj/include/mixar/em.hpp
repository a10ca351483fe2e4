#pragma once

/** @file
 * Maximum-likelihood fitting of a p-component mixture by EM.
 *
 * The E-step computes posterior component probabilities per transition.
 * The M-step maximizes the expected complete-data log-likelihood: mixing
 * weights in closed form under the floor constraint, linear experts by
 * weighted least squares, perceptron experts by backtracking gradient ascent
 * with the noise scale refreshed in closed form. Several independently
 * seeded chains are run and the best final likelihood wins.
 */

#include "mixar/error.hpp"
#include "mixar/model.hpp"
#include "mixar/parallel.hpp"
#include "mixar/random.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace mixar {

struct FitConfig {
    std::size_t max_em_iterations = 200;
    double rel_tolerance = 1e-6;
    std::size_t restarts = 10;
    double eta = 1e-3;
    std::size_t inner_max_iterations = 50;
    double inner_tolerance = 1e-8;
    std::uint64_t master_seed = 0;
};

inline void validate(const FitConfig& cfg, std::size_t p)
{
    using detail::require;
    require(cfg.max_em_iterations >= 1, "fit config: max_em_iterations must be positive");
    require(cfg.restarts >= 1, "fit config: restarts must be positive");
    require(cfg.inner_max_iterations >= 1, "fit config: inner_max_iterations must be positive");
    require(cfg.rel_tolerance > 0.0 && cfg.inner_tolerance > 0.0, "fit config: tolerances must be positive");
    require(cfg.eta > 0.0 && cfg.eta * static_cast<double>(p) < 1.0, "fit config: eta must lie in (0, 1/p)");
}

/// Posterior component probabilities, (n - l) rows by p columns, stored by column.
class Responsibilities {
public:
    Responsibilities() = default;
    Responsibilities(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& at(std::size_t t, std::size_t i) noexcept { return data_[i * rows_ + t]; }
    double at(std::size_t t, std::size_t i) const noexcept { return data_[i * rows_ + t]; }

    std::span<const double> column(std::size_t i) const noexcept
    {
        return std::span<const double>(data_).subspan(i * rows_, rows_);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace detail {

inline void check_fit_input(const SeriesData& series, std::size_t lags, std::size_t min_length, const char* who)
{
    if (series.size() < min_length)
        throw InsufficientDataError(std::string(who) + ": series of length " + std::to_string(series.size())
                                    + " is too short (need at least " + std::to_string(min_length) + ")");
    if (lags == 0) throw DomainError(std::string(who) + ": lags must be positive");
}

inline void check_column(const SeriesData& series, std::span<const double> column, std::size_t lags, const char* who)
{
    check_fit_input(series, lags, lags + 1, who);
    if (column.size() != series.transitions(lags))
        throw DimensionError(std::string(who) + ": weight column length differs from n - lags");
}

} // namespace detail

/// E-step. Also returns the log-likelihood of `model` through `loglik` when non-null.
inline Responsibilities e_step(const MixtureModel& model, const SeriesData& series, double* loglik = nullptr)
{
    const std::size_t l = model.lags();
    const std::size_t p = model.size();
    if (series.size() < l + 1) throw InsufficientDataError("e_step: series shorter than lags + 1");

    // ln(pi_i) - ln(sigma_i) - ln(2 pi)/2 and 1/sigma_i, hoisted out of the loop.
    std::vector<double> offset(p), inv_sigma(p);
    for (std::size_t i = 0; i < p; ++i) {
        offset[i] = std::log(model.weights[i]) - std::log(model.experts[i].sigma) - HALF_LOG_TWO_PI;
        inv_sigma[i] = 1.0 / model.experts[i].sigma;
    }

    Responsibilities resp(series.transitions(l), p);
    std::vector<double> terms(p);
    double total = 0.0;
    for (std::size_t t = l; t < series.size(); ++t) {
        const auto window = series.window(t, l);
        double top = -std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < p; ++i) {
            const double z = (series[t] - expert_predict(model.experts[i], window)) * inv_sigma[i];
            terms[i] = offset[i] - 0.5 * z * z;
            top = std::max(top, terms[i]);
        }
        double acc = 0.0;
        for (std::size_t i = 0; i < p; ++i) {
            terms[i] = std::exp(terms[i] - top);
            acc += terms[i];
        }
        total += top + std::log(acc);
        const double inv_acc = 1.0 / acc;
        for (std::size_t i = 0; i < p; ++i) resp.at(t - l, i) = terms[i] * inv_acc;
    }
    if (!std::isfinite(total)) throw NumericalError("e_step: non-finite log-likelihood");
    if (loglik) *loglik = total;
    return resp;
}

/// Maximizer of sum_i c_i ln(pi_i) over the simplex with every pi_i >= eta,
/// where c_i are the column sums of `resp`. Components whose unconstrained
/// share falls under the floor are pinned at eta and the rest rescaled.
inline std::vector<double> m_step_weights(const Responsibilities& resp, double eta)
{
    const std::size_t p = resp.cols();
    if (!(eta >= 0.0) || eta * static_cast<double>(p) >= 1.0)
        throw DomainError("m_step_weights: eta must lie in [0, 1/p)");

    std::vector<double> mass(p, 0.0);
    for (std::size_t i = 0; i < p; ++i)
        for (double r : resp.column(i)) mass[i] += r;

    std::vector<bool> pinned(p, false);
    std::vector<double> w(p, eta);
    for (;;) {
        double free_mass = 0.0;
        std::size_t n_pinned = 0;
        for (std::size_t i = 0; i < p; ++i) {
            if (pinned[i]) ++n_pinned;
            else free_mass += mass[i];
        }
        const double budget = 1.0 - static_cast<double>(n_pinned) * eta;
        bool changed = false;
        for (std::size_t i = 0; i < p; ++i) {
            if (pinned[i]) continue;
            w[i] = free_mass > 0.0 ? budget * mass[i] / free_mass
                                   : budget / static_cast<double>(p - n_pinned);
            if (w[i] < eta) {
                pinned[i] = true;
                changed = true;
            }
        }
        if (!changed) break;
        for (std::size_t i = 0; i < p; ++i)
            if (pinned[i]) w[i] = eta;
    }
    return w;
}

/// Diagnostics of the weighted least-squares solve.
struct LinearSolveInfo {
    bool ridge_used = false;
};

inline constexpr double RIDGE_JITTER = 1e-8;

/// Exact maximizer of the weighted Gaussian log-likelihood for a linear
/// expert: weighted least squares on (window, 1), then the weighted residual
/// variance. Falls back to a ridge-regularized solve when the normal matrix is
/// numerically singular.
inline ExpertParams m_step_linear(const SeriesData& series, std::span<const double> column, std::size_t lags,
                                  LinearSolveInfo* info = nullptr)
{
    detail::check_column(series, column, lags, "m_step_linear");
    const std::size_t d = lags + 1;

    double wsum = 0.0;
    for (double w : column) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("m_step_linear: weights must be finite and >= 0");
        wsum += w;
    }
    if (!(wsum > 0.0)) throw DomainError("m_step_linear: weights sum to zero");

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    Eigen::VectorXd x(static_cast<Eigen::Index>(d));
    for (std::size_t t = lags; t < series.size(); ++t) {
        const double w = column[t - lags] / wsum;
        if (w == 0.0) continue;
        const auto win = series.window(t, lags);
        for (std::size_t m = 0; m < lags; ++m) x[static_cast<Eigen::Index>(m)] = win[m];
        x[static_cast<Eigen::Index>(lags)] = 1.0;
        gram.selfadjointView<Eigen::Lower>().rankUpdate(x, w);
        rhs += w * series[t] * x;
    }
    gram = gram.selfadjointView<Eigen::Lower>();

    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    const Eigen::VectorXd pivots = ldlt.vectorD().cwiseAbs();
    bool ridge = ldlt.info() != Eigen::Success || !ldlt.isPositive()
                 || pivots.minCoeff() <= 1e-12 * pivots.maxCoeff() || ldlt.rcond() < 1e-12;
    if (ridge) {
        const double scale = std::max(1.0, gram.diagonal().maxCoeff());
        gram.diagonal().array() += RIDGE_JITTER * scale;
        ldlt.compute(gram);
    }
    const Eigen::VectorXd coef = ldlt.solve(rhs);
    if (info) info->ridge_used = ridge;

    std::vector<double> a(lags);
    for (std::size_t m = 0; m < lags; ++m) a[m] = coef[static_cast<Eigen::Index>(m)];
    ExpertParams e = ExpertParams::make_linear(std::move(a), coef[static_cast<Eigen::Index>(lags)], 1.0);
    clamp_to_bounds(e);

    double sse = 0.0;
    for (std::size_t t = lags; t < series.size(); ++t) {
        const double w = column[t - lags];
        if (w == 0.0) continue;
        const double r = series[t] - expert_predict(e, series.window(t, lags));
        sse += w * r * r;
    }
    e.sigma = std::clamp(std::sqrt(sse / wsum), SIGMA_FLOOR, BOUND);
    return e;
}

/// sum_t w_t ln f_sigma(y_t - F(window_t)) for one expert.
inline double weighted_expert_loglik(const SeriesData& series, std::span<const double> column, const ExpertParams& e)
{
    detail::check_column(series, column, e.lags, "weighted_expert_loglik");
    double total = 0.0;
    for (std::size_t t = e.lags; t < series.size(); ++t) {
        const double w = column[t - e.lags];
        if (w == 0.0) continue;
        total += w * gaussian_log_density(series[t] - expert_predict(e, series.window(t, e.lags)), e.sigma);
    }
    return total;
}

namespace detail {

/// Weighted mean squared residual, normalized by the weight sum.
inline double weighted_mse(const SeriesData& series, std::span<const double> column, double wsum,
                           const ExpertParams& e)
{
    double sse = 0.0;
    for (std::size_t t = e.lags; t < series.size(); ++t) {
        const double w = column[t - e.lags];
        if (w == 0.0) continue;
        const double r = series[t] - expert_predict(e, series.window(t, e.lags));
        sse += w * r * r;
    }
    return sse / wsum;
}

} // namespace detail

/// Partial M-step for a perceptron expert.
///
/// Takes backtracking gradient steps on the weighted mean squared residual
/// (starting step 0.1, at most 20 halvings, only improving steps accepted),
/// then sets sigma to the weighted residual standard deviation. For a fixed
/// sigma a smaller weighted residual raises the expected log-likelihood and
/// the closed-form sigma maximizes it, so the result never scores below
/// `start`.
inline ExpertParams m_step_mlp(const SeriesData& series, std::span<const double> column, const ExpertParams& start,
                               const FitConfig& cfg)
{
    if (start.kind != ExpertKind::mlp) throw DomainError("m_step_mlp: start expert is not a perceptron");
    detail::check_column(series, column, start.lags, "m_step_mlp");
    double wsum = 0.0;
    for (double w : column) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw DomainError("m_step_mlp: weights must be finite and >= 0");
        wsum += w;
    }
    if (!(wsum > 0.0)) throw DomainError("m_step_mlp: weights sum to zero");

    constexpr double initial_step = 0.1;
    constexpr int max_halvings = 20;

    const std::size_t l = start.lags;
    const std::size_t dim = parameter_count(start) - 1;
    ExpertParams current = start;
    std::vector<double> flat = flatten(current);
    std::vector<double> grad(dim), local(dim), trial(flat.size());
    double mse = detail::weighted_mse(series, column, wsum, current);

    for (std::size_t it = 0; it < cfg.inner_max_iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t t = l; t < series.size(); ++t) {
            const double w = column[t - l];
            if (w == 0.0) continue;
            const double r = series[t] - predict_with_gradient(current, series.window(t, l), local);
            const double c = -2.0 * w * r / wsum;
            for (std::size_t q = 0; q < dim; ++q) grad[q] += c * local[q];
        }
        double norm2 = 0.0;
        for (double g : grad) norm2 += g * g;
        if (!(norm2 > 0.0) || !std::isfinite(norm2)) break;

        bool accepted = false;
        double step = initial_step;
        for (int h = 0; h <= max_halvings; ++h, step *= 0.5) {
            for (std::size_t q = 0; q < dim; ++q) trial[q] = flat[q] - step * grad[q];
            trial[dim] = flat[dim];
            ExpertParams candidate = unflatten(current, trial);
            clamp_to_bounds(candidate);
            const double candidate_mse = detail::weighted_mse(series, column, wsum, candidate);
            if (candidate_mse < mse) {
                // Per unit weight, the profiled log-likelihood gain is 0.5 * ln(mse ratio).
                const double gain = 0.5 * std::log(mse / candidate_mse);
                current = std::move(candidate);
                flat = flatten(current);
                mse = candidate_mse;
                accepted = gain >= cfg.inner_tolerance;
                break;
            }
        }
        if (!accepted) break;
    }

    current.sigma = std::clamp(std::sqrt(mse), SIGMA_FLOOR, BOUND);
    return current;
}

namespace detail {

inline constexpr std::uint64_t INIT_STREAM = 3;

inline double ols_residual_sd(const SeriesData& series, std::size_t lags)
{
    std::vector<double> ones(series.transitions(lags), 1.0);
    return m_step_linear(series, ones, lags).sigma;
}

} // namespace detail

/// Starting point of one EM chain; a pure function of its arguments.
///
/// Linear experts start from the full-series least-squares fit with Gaussian
/// jitter of scale 0.5|c| + 0.1 on every coefficient c. Perceptron weights
/// are uniform on [-0.7, 0.7]. Every sigma starts at the least-squares
/// residual standard deviation and the mixing weights are uniform.
inline MixtureModel initialize(const SeriesData& series, std::size_t p, const ExpertShape& shape, std::uint64_t seed)
{
    if (p == 0) throw DomainError("initialize: p must be positive");
    detail::check_fit_input(series, shape.lags, shape.lags + 2, "initialize");

    std::vector<double> ones(series.transitions(shape.lags), 1.0);
    const ExpertParams ols = m_step_linear(series, ones, shape.lags);
    CounterRng rng(seed, detail::INIT_STREAM);

    MixtureModel model;
    model.weights.assign(p, 1.0 / static_cast<double>(p));
    for (std::size_t i = 0; i < p; ++i) {
        ExpertParams e;
        if (shape.kind == ExpertKind::linear) {
            e = ols;
            for (double& a : e.linear_a) a += rng.normal() * (0.5 * std::abs(a) + 0.1);
            e.linear_b += rng.normal() * (0.5 * std::abs(e.linear_b) + 0.1);
        } else {
            const std::size_t k = shape.hidden_units;
            auto draw = [&](std::size_t count) {
                std::vector<double> v(count);
                for (double& x : v) x = rng.uniform(-0.7, 0.7);
                return v;
            };
            const double alpha0 = rng.uniform(-0.7, 0.7);
            auto alpha = draw(k);
            auto beta0 = draw(k);
            auto beta = draw(k * shape.lags);
            e = ExpertParams::make_mlp(alpha0, std::move(alpha), std::move(beta0), std::move(beta), shape.lags,
                                       ols.sigma);
        }
        clamp_to_bounds(e);
        model.experts.push_back(std::move(e));
    }
    return model;
}

struct FitResult {
    MixtureModel model;
    double loglik = -std::numeric_limits<double>::infinity();
    std::size_t em_iterations = 0;
    bool converged = false;
    std::size_t best_restart = 0;
    std::vector<double> loglik_trace;

    std::vector<double> restart_logliks; ///< final l_n per restart, -inf for failed chains
    std::size_t failed_restarts = 0;
    std::size_t ridge_fallbacks = 0; ///< over the winning chain
};

/// Runs one EM chain from `initial` (no restarts). EM never reorders components.
inline FitResult em_from(const SeriesData& series, const MixtureModel& initial, const FitConfig& cfg)
{
    validate(initial);
    validate(cfg, initial.size());
    const std::size_t l = initial.lags();
    detail::check_fit_input(series, l, l + 2, "em_from");

    FitResult out;
    out.model = initial;
    double ll = 0.0;
    Responsibilities resp = e_step(out.model, series, &ll);
    out.loglik_trace.push_back(ll);

    for (std::size_t it = 1; it <= cfg.max_em_iterations; ++it) {
        MixtureModel next;
        next.weights = m_step_weights(resp, cfg.eta);
        next.experts.reserve(out.model.size());
        for (std::size_t i = 0; i < out.model.size(); ++i) {
            const auto column = resp.column(i);
            double mass = 0.0;
            for (double r : column) mass += r;
            const ExpertParams& old = out.model.experts[i];
            if (!(mass > 0.0)) {
                next.experts.push_back(old);
            } else if (old.kind == ExpertKind::linear) {
                LinearSolveInfo info;
                next.experts.push_back(m_step_linear(series, column, l, &info));
                out.ridge_fallbacks += info.ridge_used ? 1 : 0;
            } else {
                next.experts.push_back(m_step_mlp(series, column, old, cfg));
            }
        }

        double next_ll = 0.0;
        Responsibilities next_resp = e_step(next, series, &next_ll);
        if (!std::isfinite(next_ll))
            throw NumericalError("em: non-finite log-likelihood at iteration " + std::to_string(it));
        out.loglik_trace.push_back(next_ll);
        out.em_iterations = it;
        out.model = std::move(next);
        resp = std::move(next_resp);

        const double gain = next_ll - ll;
        ll = next_ll;
        if (gain < cfg.rel_tolerance * std::abs(ll)) {
            out.converged = true;
            break;
        }
    }
    out.loglik = ll;
    return out;
}

/// Multi-start EM. Restart r is seeded with hash(master_seed, r); the result
/// is the chain with the highest final log-likelihood (lowest index on ties)
/// and does not depend on how restarts are scheduled.
inline FitResult em_run(const SeriesData& series, std::size_t p, const ExpertShape& shape, const FitConfig& cfg)
{
    if (p == 0) throw DomainError("em_run: p must be positive");
    validate(cfg, p);
    detail::check_fit_input(series, shape.lags, shape.lags + p + 1, "em_run");

    std::vector<FitResult> chains(cfg.restarts);
    std::vector<bool> ok(cfg.restarts, false);
    parallel_for(cfg.restarts, [&](std::size_t r) {
        try {
            const auto init = initialize(series, p, shape, hash_seed({cfg.master_seed, r}));
            chains[r] = em_from(series, init, cfg);
            ok[r] = std::isfinite(chains[r].loglik);
        } catch (const NumericalError&) {
            ok[r] = false;
        } catch (const DomainError&) {
            ok[r] = false;
        }
    });

    std::size_t best = cfg.restarts;
    std::vector<double> finals(cfg.restarts, -std::numeric_limits<double>::infinity());
    std::size_t failed = 0;
    for (std::size_t r = 0; r < cfg.restarts; ++r) {
        if (!ok[r]) {
            ++failed;
            continue;
        }
        finals[r] = chains[r].loglik;
        if (best == cfg.restarts || chains[r].loglik > chains[best].loglik) best = r;
    }
    if (best == cfg.restarts)
        throw NumericalError("em_run: all " + std::to_string(cfg.restarts) + " restarts failed for p="
                             + std::to_string(p));

    FitResult out = std::move(chains[best]);
    out.best_restart = best;
    out.restart_logliks = std::move(finals);
    out.failed_restarts = failed;
    return out;
}

} // namespace mixar
