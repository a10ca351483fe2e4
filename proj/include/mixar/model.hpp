#pragma once

/** @file
 * Experts, mixtures of autoregressive experts, and their conditional
 * densities and marginal log-likelihood.
 *
 * An expert maps the last `lags` observations (most recent last) to a
 * predicted mean, either linearly or through a one-hidden-layer tanh
 * perceptron, and carries its own Gaussian noise scale. A mixture draws the
 * active expert iid at every step with probabilities `weights`.
 */

#include "mixar/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace mixar {

/// Smallest admissible noise standard deviation.
inline constexpr double SIGMA_FLOOR = 1e-4;
/// Bound on the absolute value of every parameter.
inline constexpr double BOUND = 1e6;
/// Tolerance on the mixing weights summing to one.
inline constexpr double WEIGHT_SUM_TOLERANCE = 1e-12;

inline constexpr double HALF_LOG_TWO_PI = 0.91893853320467274178; // 0.5 * ln(2*pi)

enum class ExpertKind { linear, mlp };

inline const char* to_string(ExpertKind kind) noexcept
{
    return kind == ExpertKind::linear ? "linear" : "mlp";
}

/// Shape of an expert family: what em_fit needs to build fresh experts.
struct ExpertShape {
    ExpertKind kind = ExpertKind::linear;
    std::size_t lags = 1;
    std::size_t hidden_units = 0; ///< ignored for linear experts

    /// Free parameters of one expert, noise scale included.
    std::size_t dimension() const noexcept
    {
        return kind == ExpertKind::linear ? lags + 2 : hidden_units * (lags + 2) + 2;
    }

    friend bool operator==(const ExpertShape&, const ExpertShape&) = default;
};

/// One regression component.
///
/// For `mlp` experts the hidden-layer input weights are stored row-major in
/// `beta`: entry `j * lags + m` multiplies window element `m` in unit `j`.
struct ExpertParams {
    ExpertKind kind = ExpertKind::linear;
    std::size_t lags = 1;
    std::size_t hidden_units = 0;

    double alpha0 = 0.0;
    std::vector<double> alpha;
    std::vector<double> beta0;
    std::vector<double> beta;

    std::vector<double> linear_a;
    double linear_b = 0.0;

    double sigma = 1.0;

    static ExpertParams make_linear(std::vector<double> a, double b, double sigma)
    {
        ExpertParams e;
        e.kind = ExpertKind::linear;
        e.lags = a.size();
        e.linear_a = std::move(a);
        e.linear_b = b;
        e.sigma = sigma;
        return e;
    }

    static ExpertParams make_mlp(double alpha0, std::vector<double> alpha, std::vector<double> beta0,
                                 std::vector<double> beta, std::size_t lags, double sigma)
    {
        ExpertParams e;
        e.kind = ExpertKind::mlp;
        e.lags = lags;
        e.hidden_units = alpha.size();
        e.alpha0 = alpha0;
        e.alpha = std::move(alpha);
        e.beta0 = std::move(beta0);
        e.beta = std::move(beta);
        e.sigma = sigma;
        return e;
    }

    ExpertShape shape() const noexcept { return {kind, lags, hidden_units}; }

    /// Intercept of the mean function (b for linear, alpha_0 for mlp).
    double intercept() const noexcept { return kind == ExpertKind::linear ? linear_b : alpha0; }

    friend bool operator==(const ExpertParams&, const ExpertParams&) = default;
};

namespace detail {

inline void require(bool ok, const std::string& what)
{
    if (!ok) throw InvariantError(what);
}

inline bool within_bound(double v) noexcept { return std::isfinite(v) && std::abs(v) <= BOUND; }

inline bool all_within_bound(const std::vector<double>& v) noexcept
{
    return std::all_of(v.begin(), v.end(), within_bound);
}

} // namespace detail

/// Throws InvariantError when the expert violates its invariants.
inline void validate(const ExpertParams& e)
{
    using detail::require;
    require(e.lags >= 1, "expert: lags must be positive");
    require(std::isfinite(e.sigma) && e.sigma >= SIGMA_FLOOR && e.sigma <= BOUND,
            "expert: sigma outside [SIGMA_FLOOR, BOUND]");
    if (e.kind == ExpertKind::linear) {
        require(e.hidden_units == 0 && e.alpha.empty() && e.beta0.empty() && e.beta.empty(),
                "expert: linear expert carries perceptron weights");
        require(e.linear_a.size() == e.lags, "expert: linear_a length differs from lags");
        require(detail::all_within_bound(e.linear_a) && detail::within_bound(e.linear_b),
                "expert: linear coefficient outside BOUND");
    } else {
        const std::size_t k = e.hidden_units;
        require(k >= 1, "expert: mlp expert needs at least one hidden unit");
        require(e.alpha.size() == k && e.beta0.size() == k && e.beta.size() == k * e.lags,
                "expert: perceptron weight arrays do not match hidden_units x lags");
        require(e.linear_a.empty(), "expert: mlp expert carries linear coefficients");
        require(detail::within_bound(e.alpha0) && detail::all_within_bound(e.alpha)
                    && detail::all_within_bound(e.beta0) && detail::all_within_bound(e.beta),
                "expert: perceptron weight outside BOUND");
    }
}

/// Ordered scalar observations y_1..y_n.
class SeriesData {
public:
    SeriesData() = default;

    explicit SeriesData(std::vector<double> values) : values_(std::move(values))
    {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i]))
                throw DomainError("series: non-finite value at index " + std::to_string(i));
        }
    }

    std::size_t size() const noexcept { return values_.size(); }
    const std::vector<double>& values() const noexcept { return values_; }
    double operator[](std::size_t t) const noexcept { return values_[t]; }

    /// The `lags` observations preceding index t (0-based), most recent last.
    std::span<const double> window(std::size_t t, std::size_t lags) const noexcept
    {
        return std::span<const double>(values_).subspan(t - lags, lags);
    }

    /// Number of transitions usable with a window of `lags`.
    std::size_t transitions(std::size_t lags) const noexcept
    {
        return values_.size() > lags ? values_.size() - lags : 0;
    }

private:
    std::vector<double> values_;
};

/// p experts sharing one window length, with mixing weights.
struct MixtureModel {
    std::vector<ExpertParams> experts;
    std::vector<double> weights;

    std::size_t lags() const noexcept { return experts.empty() ? 0 : experts.front().lags; }
    std::size_t size() const noexcept { return experts.size(); }

    friend bool operator==(const MixtureModel&, const MixtureModel&) = default;
};

/// Throws InvariantError when the model violates its invariants.
/// `eta` is the weight floor of the enclosing run (0 only requires positivity).
inline void validate(const MixtureModel& m, double eta = 0.0)
{
    using detail::require;
    require(!m.experts.empty(), "model: at least one expert required");
    require(m.weights.size() == m.experts.size(), "model: one weight per expert required");
    double sum = 0.0;
    for (std::size_t i = 0; i < m.experts.size(); ++i) {
        validate(m.experts[i]);
        require(m.experts[i].lags == m.experts.front().lags, "model: experts disagree on lags");
        const double w = m.weights[i];
        require(std::isfinite(w) && w > 0.0 && w >= eta - 1e-15,
                "model: weight " + std::to_string(i) + " below the floor");
        sum += w;
    }
    require(std::abs(sum - 1.0) <= WEIGHT_SUM_TOLERANCE, "model: weights do not sum to 1");
}

/// Structural component count p. Duplicate experts are counted separately;
/// deciding the minimal representation is not attempted.
inline std::size_t num_components(const MixtureModel& m) noexcept { return m.experts.size(); }

/// Mean function F(window).
inline double expert_predict(const ExpertParams& e, std::span<const double> window)
{
    if (window.size() != e.lags)
        throw DimensionError("expert_predict: window length " + std::to_string(window.size())
                             + " differs from lags " + std::to_string(e.lags));
    if (e.kind == ExpertKind::linear)
        return std::inner_product(window.begin(), window.end(), e.linear_a.begin(), e.linear_b);

    double out = e.alpha0;
    for (std::size_t j = 0; j < e.hidden_units; ++j) {
        const double* row = e.beta.data() + j * e.lags;
        const double h = std::inner_product(window.begin(), window.end(), row, e.beta0[j]);
        out += e.alpha[j] * std::tanh(h);
    }
    return out;
}

/// Log density of a centered Gaussian with standard deviation sigma.
inline double gaussian_log_density(double residual, double sigma)
{
    if (!std::isfinite(residual)) throw DomainError("gaussian_log_density: non-finite residual");
    if (!(sigma >= SIGMA_FLOOR)) throw DomainError("gaussian_log_density: sigma below floor");
    const double z = residual / sigma;
    return -HALF_LOG_TWO_PI - std::log(sigma) - 0.5 * z * z;
}

/// Numerically stable log(sum(exp(v))).
inline double log_sum_exp(std::span<const double> v) noexcept
{
    const double top = *std::max_element(v.begin(), v.end());
    if (!std::isfinite(top)) return top;
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - top);
    return top + std::log(acc);
}

namespace detail {

inline void check_window(const MixtureModel& m, std::span<const double> window)
{
    if (window.size() != m.lags())
        throw DimensionError("window length " + std::to_string(window.size()) + " differs from lags "
                             + std::to_string(m.lags()));
}

/// Per-component joint log terms ln(pi_i) + ln f_i(y - F_i(window)).
inline void component_log_terms(const MixtureModel& m, std::span<const double> window, double y,
                                std::span<double> out)
{
    for (std::size_t i = 0; i < m.size(); ++i) {
        const ExpertParams& e = m.experts[i];
        out[i] = std::log(m.weights[i]) + gaussian_log_density(y - expert_predict(e, window), e.sigma);
    }
}

} // namespace detail

/// g(y | window) = sum_i pi_i f_i(y - F_i(window)).
inline double conditional_density(const MixtureModel& m, std::span<const double> window, double y)
{
    detail::check_window(m, window);
    double g = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const ExpertParams& e = m.experts[i];
        g += m.weights[i] * std::exp(gaussian_log_density(y - expert_predict(e, window), e.sigma));
    }
    return g;
}

/// ln g(y | window), computed without underflow.
inline double conditional_log_density(const MixtureModel& m, std::span<const double> window, double y)
{
    detail::check_window(m, window);
    std::vector<double> terms(m.size());
    detail::component_log_terms(m, window, y, terms);
    return log_sum_exp(terms);
}

/// Marginal log-likelihood: sum over t = l+1..n of ln g(y_t | y_{t-l}..y_{t-1}).
inline double log_likelihood(const MixtureModel& m, const SeriesData& series)
{
    const std::size_t l = m.lags();
    if (series.size() < l + 1)
        throw InsufficientDataError("log_likelihood: series of length " + std::to_string(series.size())
                                    + " is shorter than lags + 1 = " + std::to_string(l + 1));
    std::vector<double> terms(m.size());
    double total = 0.0;
    for (std::size_t t = l; t < series.size(); ++t) {
        detail::component_log_terms(m, series.window(t, l), series[t], terms);
        total += log_sum_exp(terms);
    }
    return total;
}

// ---------------------------------------------------------------------------
// Flat parameter layout
//
// linear: a_1..a_l, b, sigma
// mlp:    alpha_0, alpha_1..alpha_k, beta0_1..beta0_k, beta (row-major k x l), sigma
// ---------------------------------------------------------------------------

/// Number of free parameters, sigma included.
inline std::size_t parameter_count(const ExpertParams& e) noexcept { return e.shape().dimension(); }

inline std::vector<double> flatten(const ExpertParams& e)
{
    std::vector<double> out;
    out.reserve(parameter_count(e));
    if (e.kind == ExpertKind::linear) {
        out.insert(out.end(), e.linear_a.begin(), e.linear_a.end());
        out.push_back(e.linear_b);
    } else {
        out.push_back(e.alpha0);
        out.insert(out.end(), e.alpha.begin(), e.alpha.end());
        out.insert(out.end(), e.beta0.begin(), e.beta0.end());
        out.insert(out.end(), e.beta.begin(), e.beta.end());
    }
    out.push_back(e.sigma);
    return out;
}

/// Copy of `e` with its parameters replaced by `flat` (same layout as flatten).
inline ExpertParams unflatten(const ExpertParams& e, std::span<const double> flat)
{
    if (flat.size() != parameter_count(e))
        throw DimensionError("unflatten: expected " + std::to_string(parameter_count(e)) + " parameters");
    ExpertParams out = e;
    auto it = flat.begin();
    auto take = [&](std::vector<double>& dst) {
        std::copy_n(it, dst.size(), dst.begin());
        it += static_cast<std::ptrdiff_t>(dst.size());
    };
    if (e.kind == ExpertKind::linear) {
        take(out.linear_a);
        out.linear_b = *it++;
    } else {
        out.alpha0 = *it++;
        take(out.alpha);
        take(out.beta0);
        take(out.beta);
    }
    out.sigma = *it;
    return out;
}

/// Writes dF/dtheta over the mean parameters (flat layout without sigma)
/// into `grad` and returns F(window).
inline double predict_with_gradient(const ExpertParams& e, std::span<const double> window, std::span<double> grad)
{
    if (window.size() != e.lags) throw DimensionError("predict_with_gradient: window length differs from lags");
    const std::size_t l = e.lags;
    if (e.kind == ExpertKind::linear) {
        std::copy(window.begin(), window.end(), grad.begin());
        grad[l] = 1.0;
        return std::inner_product(window.begin(), window.end(), e.linear_a.begin(), e.linear_b);
    }
    const std::size_t k = e.hidden_units;
    double out = e.alpha0;
    grad[0] = 1.0;
    for (std::size_t j = 0; j < k; ++j) {
        const double* row = e.beta.data() + j * l;
        const double act = std::tanh(std::inner_product(window.begin(), window.end(), row, e.beta0[j]));
        out += e.alpha[j] * act;
        const double back = e.alpha[j] * (1.0 - act * act);
        grad[1 + j] = act;
        grad[1 + k + j] = back;
        double* brow = grad.data() + 1 + 2 * k + j * l;
        for (std::size_t m = 0; m < l; ++m) brow[m] = back * window[m];
    }
    return out;
}

/// weight * gradient of ln f_sigma(y - F(window)) over all free parameters
/// of the expert, in flat layout (sigma last).
inline std::vector<double> responsibility_gradient(const ExpertParams& e, std::span<const double> window, double y,
                                                   double weight)
{
    if (!std::isfinite(weight)) throw DomainError("responsibility_gradient: non-finite weight");
    std::vector<double> grad(parameter_count(e), 0.0);
    std::span<double> mean_part(grad.data(), grad.size() - 1);
    const double r = y - predict_with_gradient(e, window, mean_part);
    const double s2 = e.sigma * e.sigma;
    const double scale = weight * r / s2;
    for (double& g : mean_part) g *= scale;
    grad.back() = weight * (-1.0 / e.sigma + r * r / (s2 * e.sigma));
    return grad;
}

/// Clamps every parameter to [-BOUND, BOUND] and sigma to [SIGMA_FLOOR, BOUND].
inline void clamp_to_bounds(ExpertParams& e) noexcept
{
    auto clamp = [](double& v) { v = std::clamp(v, -BOUND, BOUND); };
    auto clamp_all = [&](std::vector<double>& v) { std::for_each(v.begin(), v.end(), clamp); };
    clamp(e.alpha0);
    clamp_all(e.alpha);
    clamp_all(e.beta0);
    clamp_all(e.beta);
    clamp_all(e.linear_a);
    clamp(e.linear_b);
    e.sigma = std::clamp(e.sigma, SIGMA_FLOOR, BOUND);
}

/// Copy of `m` with components sorted by descending weight, ties broken by
/// ascending intercept. Used for reporting only.
inline MixtureModel canonical_order(const MixtureModel& m)
{
    std::vector<std::size_t> idx(m.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        if (m.weights[a] != m.weights[b]) return m.weights[a] > m.weights[b];
        return m.experts[a].intercept() < m.experts[b].intercept();
    });
    MixtureModel out;
    for (std::size_t i : idx) {
        out.experts.push_back(m.experts[i]);
        out.weights.push_back(m.weights[i]);
    }
    return out;
}

} // namespace mixar
