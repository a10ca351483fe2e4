#pragma once

/** @file
 * Sampling from the switching autoregressive model
 *
 *     Y_t = F_{X_t}(Y_{t-l}, ..., Y_{t-1}) + sigma_{X_t} Z_t,
 *
 * with X_t iid over components according to the mixing weights and Z_t iid
 * standard normal, plus the sufficient stationarity check on the linear
 * leading coefficients.
 */

#include "mixar/error.hpp"
#include "mixar/model.hpp"
#include "mixar/random.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace mixar {

inline constexpr std::size_t DEFAULT_BURN_IN = 100;

struct GenerativeSpec {
    MixtureModel truth;
    std::vector<double> initial_window; ///< lags values, most recent last; empty means zeros
    std::size_t burn_in = DEFAULT_BURN_IN;
};

struct SimulationOutput {
    SeriesData series;
    std::vector<int> hidden_path; ///< realized regime per recorded step, 1-based
};

struct SimulationOptions {
    /// Drop the noise term entirely. Test hook for deterministic recursions.
    bool zero_noise = false;
};

struct StationarityCheck {
    double sum = 0.0;
    bool pass = false;
};

/// sum_i pi_i |a_i|^s with |a_i| = sum_j |a_ij| for linear experts and 0 for
/// perceptrons (bounded mean functions); passes when the sum is below one.
inline StationarityCheck check_hs(const GenerativeSpec& spec, double s = 1.0)
{
    if (!(s > 0.0)) throw DomainError("check_hs: exponent s must be positive");
    StationarityCheck out;
    const auto& m = spec.truth;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto& e = m.experts[i];
        if (e.kind != ExpertKind::linear) continue;
        double a = 0.0;
        for (double c : e.linear_a) a += std::abs(c);
        out.sum += m.weights[i] * std::pow(a, s);
    }
    out.pass = out.sum < 1.0;
    return out;
}

inline void validate(const GenerativeSpec& spec)
{
    validate(spec.truth);
    if (!spec.initial_window.empty() && spec.initial_window.size() != spec.truth.lags())
        throw InvariantError("generative spec: initial_window length differs from lags");
    for (double v : spec.initial_window)
        if (!std::isfinite(v)) throw InvariantError("generative spec: non-finite initial_window value");
}

namespace detail {

// Stream identifiers of the counter generator.
inline constexpr std::uint64_t REGIME_STREAM = 1;
inline constexpr std::uint64_t NOISE_STREAM = 2;

inline int draw_regime(const std::vector<double>& weights, double u) noexcept
{
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < weights.size(); ++i) {
        acc += weights[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(weights.size() - 1);
}

} // namespace detail

/// Draws n recorded observations after spec.burn_in discarded steps.
/// Step t (counting burn-in) uses variates at counter t, so the output is a
/// pure function of (spec, n, seed).
inline SimulationOutput simulate(const GenerativeSpec& spec, std::size_t n, std::uint64_t seed,
                                 SimulationOptions options = {})
{
    if (n == 0) throw DomainError("simulate: n must be positive");
    validate(spec);

    const MixtureModel& m = spec.truth;
    const std::size_t l = m.lags();
    const std::size_t total = spec.burn_in + n;

    std::vector<double> y(l + total, 0.0);
    if (!spec.initial_window.empty()) std::copy(spec.initial_window.begin(), spec.initial_window.end(), y.begin());

    std::vector<int> path(n);
    std::vector<double> recorded(n);
    for (std::size_t t = 0; t < total; ++t) {
        const int regime = detail::draw_regime(m.weights, counter_uniform(seed, detail::REGIME_STREAM, t));
        const ExpertParams& e = m.experts[static_cast<std::size_t>(regime)];
        const std::span<const double> window(y.data() + t, l);
        double next = expert_predict(e, window);
        if (!options.zero_noise) next += e.sigma * counter_normal(seed, detail::NOISE_STREAM, t);
        if (!std::isfinite(next)) {
            const std::size_t at = t >= spec.burn_in ? t - spec.burn_in : 0;
            throw DivergenceError(at, "simulate: non-finite value at step " + std::to_string(t)
                                          + " (recorded index " + std::to_string(at)
                                          + "); the spec is likely explosive");
        }
        y[l + t] = next;
        if (t >= spec.burn_in) {
            recorded[t - spec.burn_in] = next;
            path[t - spec.burn_in] = regime + 1;
        }
    }

    return {SeriesData(std::move(recorded)), std::move(path)};
}

} // namespace mixar
