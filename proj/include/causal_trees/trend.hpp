#pragma once

// Prevalence trend models: exponential decay with residual-bootstrap
// prediction intervals, and the linear-decline gateway simulation.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "causal_trees/errors.hpp"
#include "causal_trees/stats.hpp"

namespace causal_trees {

struct TrendSeries {
    std::vector<int> years;
    std::vector<double> values;

    std::size_t size() const noexcept { return years.size(); }

    std::optional<double> at(int year) const {
        const auto it = std::lower_bound(years.begin(), years.end(), year);
        if (it == years.end() || *it != year) return std::nullopt;
        return values[static_cast<std::size_t>(it - years.begin())];
    }

    void validate() const {
        if (years.size() != values.size()) throw UsageError("series years and values differ in length");
        for (std::size_t i = 1; i < years.size(); ++i)
            if (years[i] <= years[i - 1]) throw UsageError("series years must be strictly increasing");
        for (double v : values)
            if (!std::isfinite(v) || v < 0.0) throw UsageError("series values must be finite and nonnegative");
    }
};

// NYTS current (past 30-day) use among US middle and high school students.
inline TrendSeries nyts_smoking() {
    return {{1999, 2000, 2002, 2004, 2006, 2009, 2011, 2012, 2013, 2014, 2015,
             2016, 2017, 2018, 2019, 2020, 2021, 2022, 2023, 2024, 2025},
            {19.6324, 20.2450, 16.7436, 15.6463, 13.6336, 11.9860, 10.8277, 9.4409, 8.4642, 6.2975, 6.2261,
             5.4710, 5.2713, 5.3594, 4.2741, 3.3151, 2.0098, 1.6320, 1.5762, 1.4155, 1.4356}};
}

inline TrendSeries nyts_ecig() {
    return {{2011, 2012, 2013, 2014, 2015, 2016, 2017, 2018, 2019, 2020, 2021, 2022, 2023, 2024, 2025},
            {1.1042, 2.0472, 3.0660, 9.3020, 11.3053, 8.2246, 8.0604, 13.7767, 20.0187, 13.0610, 9.6654, 9.3972,
             7.6652, 5.9287, 5.2317}};
}

inline double average_annual_decline(double p_start, double p_end, int years) {
    if (years < 1) throw UsageError("decline window must span at least one year");
    return (p_start - p_end) / years;
}

struct GatewaySimConfig {
    double k = 0.0;
    int decline_start = 2006;
    int decline_end = 2009;
    int cutoff = 2009;
};

// Observed values up to the cutoff, then one step per calendar year: previous
// value minus the average decline, plus k times any rise in e-cigarette use.
// Years absent from both input series are stepped through but not emitted.
inline TrendSeries simulate_gateway(const TrendSeries& smoking, const TrendSeries& ecig, const GatewaySimConfig& cfg) {
    smoking.validate();
    ecig.validate();
    if (!(cfg.k >= 0.0)) throw UsageError("gateway proportion k must be nonnegative");
    const auto p_start = smoking.at(cfg.decline_start);
    const auto p_end = smoking.at(cfg.decline_end);
    if (!p_start || !p_end) throw UsageError("smoking series lacks the decline anchor years");
    if (!smoking.at(cfg.cutoff)) throw UsageError("smoking series lacks the cutoff year");
    const double decline = average_annual_decline(*p_start, *p_end, cfg.decline_end - cfg.decline_start);

    TrendSeries out;
    for (std::size_t i = 0; i < smoking.size() && smoking.years[i] <= cfg.cutoff; ++i) {
        out.years.push_back(smoking.years[i]);
        out.values.push_back(smoking.values[i]);
    }
    int last = smoking.years.back();
    if (!ecig.years.empty()) last = std::max(last, ecig.years.back());
    double current = out.values.back();
    for (int year = cfg.cutoff + 1; year <= last; ++year) {
        const auto now = ecig.at(year), before = ecig.at(year - 1);
        const double rise = now && before ? *now - *before : 0.0;
        current = rise > 0.0 ? current - decline + cfg.k * rise : current - decline;
        if (smoking.at(year) || now) {
            out.years.push_back(year);
            out.values.push_back(current);
        }
    }
    return out;
}

struct TrendFit {
    double alpha = 0.0;
    double beta = 0.0;
    int year_center = 0;
    std::vector<double> residuals;
    int iterations = 0;

    double predict(double year) const { return alpha * std::exp(-beta * (year - year_center)); }
};

namespace detail {

inline double exp_decay_sse(std::span<const double> t, std::span<const double> y, double a, double b) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double r = y[i] - a * std::exp(-b * t[i]);
        s += r * r;
    }
    return s;
}

}  // namespace detail

// Least squares fit of alpha exp(-beta (year - min year)). Starts from the
// log-linear fit unless a start is supplied, then Levenberg-Marquardt.
inline TrendFit fit_exp_decay(const TrendSeries& series, std::optional<std::pair<double, double>> start = std::nullopt,
                              int max_iter = 200) {
    if (series.years.size() != series.values.size()) throw UsageError("series years and values differ in length");
    if (series.size() < 3) throw UsageError("exponential fit needs at least three points");
    for (std::size_t i = 1; i < series.size(); ++i)
        if (series.years[i] <= series.years[i - 1]) throw UsageError("series years must be strictly increasing");
    const std::size_t n = series.size();
    TrendFit fit;
    fit.year_center = series.years.front();
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = series.years[i] - fit.year_center;
    const std::span<const double> y(series.values);

    double a = 0.0, b = 0.0;
    if (start) {
        std::tie(a, b) = *start;
    } else {
        for (double v : y)
            if (!(v > 0.0) || !std::isfinite(v)) throw UsageError("exponential fit needs strictly positive values");
        Eigen::MatrixXd A(n, 2);
        Eigen::VectorXd ly(n);
        for (std::size_t i = 0; i < n; ++i) {
            A(static_cast<Eigen::Index>(i), 0) = 1.0;
            A(static_cast<Eigen::Index>(i), 1) = -t[i];
            ly[static_cast<Eigen::Index>(i)] = std::log(y[i]);
        }
        const Eigen::Vector2d c = A.colPivHouseholderQr().solve(ly);
        a = std::exp(c[0]);
        b = c[1];
    }

    double y_norm = 0.0;
    for (double v : y) y_norm += v * v;
    y_norm = std::sqrt(y_norm);
    double lambda = 1e-3;
    double sse = detail::exp_decay_sse(t, y, a, b);
    bool converged = false;
    int it = 0;
    for (; it < max_iter; ++it) {
        Eigen::Matrix2d JtJ = Eigen::Matrix2d::Zero();
        Eigen::Vector2d Jtr = Eigen::Vector2d::Zero();
        double j_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = std::exp(-b * t[i]);
            const Eigen::Vector2d g(e, -a * t[i] * e);
            const double r = y[i] - a * e;
            JtJ += g * g.transpose();
            Jtr += g * r;
            j_norm += g.squaredNorm();
        }
        if (Jtr.norm() <= 1e-10 * std::max(1.0, std::sqrt(j_norm) * y_norm)) {
            converged = true;
            break;
        }
        bool improved = false;
        for (int tries = 0; tries < 60 && !improved; ++tries) {
            Eigen::Matrix2d M = JtJ;
            M.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-300);
            const Eigen::Vector2d step = M.ldlt().solve(Jtr);
            const double a2 = a + step[0], b2 = b + step[1];
            const double sse2 = detail::exp_decay_sse(t, y, a2, b2);
            if (std::isfinite(sse2) && sse2 <= sse) {
                const bool stalled = std::abs(step[0]) <= 1e-15 * std::abs(a) && std::abs(step[1]) <= 1e-15 * (1.0 + std::abs(b));
                a = a2;
                b = b2;
                sse = sse2;
                lambda = std::max(lambda / 10.0, 1e-12);
                improved = true;
                if (stalled) converged = true;
            } else {
                lambda *= 10.0;
            }
        }
        if (converged) break;
        if (!improved) {
            converged = true;
            break;
        }
    }
    if (!converged) throw FitError("exponential fit did not converge within " + std::to_string(max_iter) + " iterations");
    if (!(a > 0.0) || !std::isfinite(a) || !std::isfinite(b)) throw FitError("exponential fit diverged");
    fit.alpha = a;
    fit.beta = b;
    fit.iterations = it;
    fit.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) fit.residuals[i] = y[i] - fit.predict(series.years[i]);
    return fit;
}

struct PredictionBand {
    int year = 0;
    double point = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

struct BootstrapResult {
    std::vector<PredictionBand> bands;
    Eigen::MatrixXd parameters;  // successful iterations x (alpha, beta)
    std::size_t failures = 0;
};

// Type 7 quantile of an unsorted sample.
inline double empirical_quantile(std::vector<double> x, double prob) {
    std::sort(x.begin(), x.end());
    return sorted_quantile(x, prob);
}

inline BootstrapResult bootstrap_prediction_interval(const TrendFit& fit, const TrendSeries& series,
                                                     std::span<const int> horizon, int n_boot = 10000,
                                                     double level = 0.95, std::uint64_t seed = 0) {
    if (n_boot < 100) throw UsageError("bootstrap needs at least 100 iterations");
    if (!(level > 0.0 && level < 1.0)) throw UsageError("interval level must lie in (0,1)");
    if (fit.residuals.size() != series.size()) throw UsageError("fit does not belong to this series");
    const std::size_t n = series.size();
    std::vector<double> fitted(n), centered(n);
    const double shift = mean(fit.residuals);
    for (std::size_t i = 0; i < n; ++i) {
        fitted[i] = fit.predict(series.years[i]);
        centered[i] = fit.residuals[i] - shift;
    }

    const std::size_t h = horizon.size();
    const auto boots = static_cast<std::size_t>(n_boot);
    std::vector<double> draws(boots * h);
    std::vector<double> alpha(boots), beta(boots);
    std::vector<char> ok(boots, 0);
    parallel_for(boots, [&](std::size_t b) {
        Rng rng = make_rng(seed, b + 1);
        TrendSeries resampled{series.years, std::vector<double>(n)};
        for (std::size_t i = 0; i < n; ++i) resampled.values[i] = fitted[i] + centered[uniform_index(rng, n)];
        TrendFit refit;
        try {
            refit = fit_exp_decay(resampled, std::make_pair(fit.alpha, fit.beta));
        } catch (const Error&) {
            return;
        }
        ok[b] = 1;
        alpha[b] = refit.alpha;
        beta[b] = refit.beta;
        for (std::size_t k = 0; k < h; ++k) draws[b * h + k] = refit.predict(horizon[k]) + centered[uniform_index(rng, n)];
    });

    BootstrapResult out;
    std::size_t good = 0;
    for (char c : ok) good += static_cast<std::size_t>(c);
    out.failures = boots - good;
    if (static_cast<double>(out.failures) > 0.05 * static_cast<double>(boots))
        throw BootstrapError(std::to_string(out.failures) + " of " + std::to_string(boots) + " bootstrap refits failed");
    out.parameters.resize(static_cast<Eigen::Index>(good), 2);
    for (std::size_t b = 0, r = 0; b < boots; ++b) {
        if (!ok[b]) continue;
        out.parameters(static_cast<Eigen::Index>(r), 0) = alpha[b];
        out.parameters(static_cast<Eigen::Index>(r), 1) = beta[b];
        ++r;
    }
    const double lo_p = (1.0 - level) / 2.0, hi_p = (1.0 + level) / 2.0;
    for (std::size_t k = 0; k < h; ++k) {
        std::vector<double> column;
        column.reserve(good);
        for (std::size_t b = 0; b < boots; ++b)
            if (ok[b]) column.push_back(draws[b * h + k]);
        std::sort(column.begin(), column.end());
        PredictionBand band;
        band.year = horizon[k];
        band.point = fit.predict(horizon[k]);
        band.lo = std::max(0.0, sorted_quantile(column, lo_p));
        band.hi = sorted_quantile(column, hi_p);
        out.bands.push_back(band);
    }
    return out;
}

}  // namespace causal_trees
