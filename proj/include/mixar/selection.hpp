#pragma once

/** @file
 * Penalized-likelihood choice of the number of components:
 * T_n(p) = sup l_n(g over p-component mixtures) - a_n(p), p_hat = argmax T_n(p).
 */

#include "mixar/em.hpp"
#include "mixar/error.hpp"
#include "mixar/model.hpp"

#include <cmath>
#include <concepts>
#include <string>
#include <vector>

namespace mixar {

enum class PenaltyMode {
    bic_per_component, ///< a_n(p) = p ln(n) / 2
    bic_per_parameter, ///< a_n(p) = d(p) ln(n) / 2, d(p) = p * expert_dim + p - 1
};

inline const char* to_string(PenaltyMode mode) noexcept
{
    return mode == PenaltyMode::bic_per_component ? "per-component" : "per-parameter";
}

struct PenaltySpec {
    PenaltyMode mode = PenaltyMode::bic_per_component;
};

/// a_n(p). `expert_dim` is the free-parameter count of one expert (sigma
/// included) and only matters in per-parameter mode. The sample size may be
/// fractional here; fits always pass the series length.
inline double penalty(PenaltySpec spec, std::size_t p, double n, std::size_t expert_dim)
{
    if (p < 1) throw DomainError("penalty: p must be positive");
    if (!(n >= 2.0) || !std::isfinite(n)) throw DomainError("penalty: n must be at least 2");
    const double log_n = std::log(n);
    const double pd = static_cast<double>(p);
    if (spec.mode == PenaltyMode::bic_per_component) return 0.5 * pd * log_n;
    return 0.5 * (pd * static_cast<double>(expert_dim) + pd - 1.0) * log_n;
}

template <std::integral N>
double penalty(PenaltySpec spec, std::size_t p, N n, std::size_t expert_dim)
{
    return penalty(spec, p, static_cast<double>(n), expert_dim);
}

struct OrderScore {
    double loglik = 0.0;
    double penalty = 0.0;
    double criterion = 0.0;
    FitResult fit;
};

struct SelectionResult {
    std::vector<OrderScore> per_p; ///< index p - 1
    std::size_t chosen = 1;
    std::vector<std::string> warnings;
};

/// Smallest p attaining the maximum criterion.
inline std::size_t argmax_criterion(const std::vector<OrderScore>& per_p)
{
    std::size_t best = 0;
    for (std::size_t i = 1; i < per_p.size(); ++i)
        if (per_p[i].criterion > per_p[best].criterion) best = i;
    return best + 1;
}

/// Fits p = 1..max_p with em_run and picks the order maximizing
/// loglik - penalty. The penalty uses n = series length.
inline SelectionResult select_order(const SeriesData& series, std::size_t max_p, const ExpertShape& shape,
                                    const FitConfig& cfg, PenaltySpec pen = {})
{
    if (max_p < 1) throw DomainError("select_order: max_p must be positive");
    detail::check_fit_input(series, shape.lags, shape.lags + max_p + 1, "select_order");

    SelectionResult out;
    out.per_p.resize(max_p);
    for (std::size_t p = 1; p <= max_p; ++p) {
        OrderScore& s = out.per_p[p - 1];
        try {
            s.fit = em_run(series, p, shape, cfg);
        } catch (const Error& e) {
            throw NumericalError("select_order: fit failed for p=" + std::to_string(p) + ": " + e.what());
        }
        s.loglik = s.fit.loglik;
        s.penalty = penalty(pen, p, series.size(), shape.dimension());
        s.criterion = s.loglik - s.penalty;
        if (p > 1) {
            const double prev = out.per_p[p - 2].loglik;
            if (s.loglik < prev - 1e-6 * std::abs(prev))
                out.warnings.push_back("loglik decreased from p=" + std::to_string(p - 1) + " to p="
                                       + std::to_string(p) + " (EM local maximum)");
        }
    }
    out.chosen = argmax_criterion(out.per_p);
    return out;
}

} // namespace mixar
