#pragma once

// Survey-weighted logistic and Gaussian regression with sandwich covariance.

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causal_trees/dataset.hpp"
#include "causal_trees/errors.hpp"
#include "causal_trees/stats.hpp"

namespace causal_trees {

enum class Family { logistic, gaussian };

inline std::string to_string(Family f) { return f == Family::logistic ? "logistic" : "gaussian"; }

inline constexpr const char* kInterceptName = "(Intercept)";

struct LinearFit {
    Family family = Family::gaussian;
    std::vector<std::string> names;  // intercept first
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;
    bool converged = true;
    int iterations = 0;
    std::size_t n = 0;
    double weight_sum = 0.0;
    std::vector<double> log_likelihood;  // per accepted IRLS iterate

    double standard_error(std::size_t j) const {
        const auto k = static_cast<Eigen::Index>(j);
        return std::sqrt(std::max(0.0, covariance(k, k)));
    }
};

struct EffectEstimate {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

inline EffectEstimate wald_interval(Family family, double beta, double se, double level = 0.95) {
    if (!(level > 0.0 && level < 1.0)) throw UsageError("interval level must lie in (0,1)");
    const double z = normal_quantile(0.5 + level / 2.0);
    EffectEstimate e{beta, beta - z * se, beta + z * se};
    if (family == Family::logistic) e = {std::exp(e.estimate), std::exp(e.lo), std::exp(e.hi)};
    return e;
}

inline EffectEstimate effect_ci(const LinearFit& fit, const std::string& column, double level = 0.95) {
    const auto it = std::find(fit.names.begin(), fit.names.end(), column);
    if (it == fit.names.end()) throw UsageError("no coefficient named '" + column + "'");
    const auto j = static_cast<std::size_t>(it - fit.names.begin());
    return wald_interval(fit.family, fit.coefficients[static_cast<Eigen::Index>(j)], fit.standard_error(j), level);
}

namespace detail {

struct LinearDesign {
    Eigen::MatrixXd A;  // intercept + columns
    Eigen::VectorXd y;
    Eigen::VectorXd w;
    std::vector<std::string> names;
};

inline LinearDesign linear_design(const DesignMatrix& X, std::span<const double> y, std::span<const double> w) {
    const std::size_t n = X.rows();
    if (y.size() != n) throw UsageError("response length does not match design rows");
    if (!w.empty() && w.size() != n) throw UsageError("weight length does not match design rows");
    LinearDesign d;
    d.A.resize(static_cast<Eigen::Index>(n), X.values.cols() + 1);
    d.A.col(0).setOnes();
    d.A.rightCols(X.values.cols()) = X.values;
    d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(n));
    d.w = w.empty() ? Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n))
                    : Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(n)));
    for (Eigen::Index i = 0; i < d.w.size(); ++i)
        if (!(d.w[i] > 0.0) || !std::isfinite(d.w[i])) throw WeightError("weights must be strictly positive and finite");
    d.names.push_back(kInterceptName);
    d.names.insert(d.names.end(), X.column_names.begin(), X.column_names.end());
    return d;
}

inline void check_rank(const LinearDesign& d) {
    const Eigen::MatrixXd scaled = d.w.cwiseSqrt().asDiagonal() * d.A;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(scaled);
    const Eigen::Index rank = qr.rank();
    if (rank == d.A.cols() && d.A.rows() > d.A.cols()) return;
    std::vector<std::string> offending;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = rank; k < perm.size(); ++k) offending.push_back(d.names[static_cast<std::size_t>(perm[k])]);
    std::string msg = d.A.rows() <= d.A.cols() ? "fewer rows than coefficients" : "design is rank deficient";
    for (std::size_t k = 0; k < offending.size(); ++k) msg += (k == 0 ? ": " : ", ") + offending[k];
    throw RankError(offending, msg);
}

inline Eigen::MatrixXd sandwich(const Eigen::MatrixXd& bread, const Eigen::MatrixXd& A, const Eigen::VectorXd& score_scale) {
    const Eigen::MatrixXd S = score_scale.asDiagonal() * A;
    const Eigen::MatrixXd meat = S.transpose() * S;
    const Eigen::MatrixXd inv = bread.ldlt().solve(Eigen::MatrixXd::Identity(bread.rows(), bread.cols()));
    Eigen::MatrixXd cov = inv * meat * inv;
    return 0.5 * (cov + cov.transpose());
}

inline double logistic_loglik(const LinearDesign& d, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = d.A * beta;
    double ll = 0.0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double e = eta[i];
        const double log1pexp = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
        ll += d.w[i] * (d.y[i] * e - log1pexp);
    }
    return ll;
}

}  // namespace detail

inline LinearFit fit_weighted_logistic(const DesignMatrix& X, std::span<const double> y, std::span<const double> weights = {},
                                       int max_iter = 50) {
    const auto d = detail::linear_design(X, y, weights);
    bool has0 = false, has1 = false;
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        if (d.y[i] == 1.0)
            has1 = true;
        else if (d.y[i] == 0.0)
            has0 = true;
        else
            throw UsageError("logistic response must be 0 or 1");
    }
    if (!has0 || !has1) throw SeparationError("outcome has a single class");
    detail::check_rank(d);

    const Eigen::Index p = d.A.cols();
    std::vector<double> col_sd(static_cast<std::size_t>(p), 0.0);
    for (Eigen::Index j = 1; j < p; ++j) {
        const double m = d.A.col(j).mean();
        col_sd[static_cast<std::size_t>(j)] = std::sqrt((d.A.col(j).array() - m).square().mean());
    }

    LinearFit fit;
    fit.family = Family::logistic;
    fit.names = d.names;
    fit.n = static_cast<std::size_t>(d.A.rows());
    fit.weight_sum = d.w.sum();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    beta[0] = logit(d.w.dot(d.y) / fit.weight_sum);
    double ll = detail::logistic_loglik(d, beta);
    fit.log_likelihood.push_back(ll);
    fit.converged = false;
    for (int it = 1; it <= max_iter; ++it) {
        const Eigen::VectorXd eta = d.A * beta;
        Eigen::VectorXd mu(eta.size()), irls_w(eta.size());
        for (Eigen::Index i = 0; i < eta.size(); ++i) {
            mu[i] = expit(eta[i]);
            irls_w[i] = d.w[i] * mu[i] * (1.0 - mu[i]);
        }
        const Eigen::MatrixXd info = d.A.transpose() * irls_w.asDiagonal() * d.A;
        const Eigen::VectorXd score = d.A.transpose() * (d.w.array() * (d.y - mu).array()).matrix();
        Eigen::VectorXd step = info.ldlt().solve(score);
        fit.iterations = it;
        if (step.cwiseAbs().maxCoeff() < 1e-8) {
            beta += step;
            fit.log_likelihood.push_back(std::max(ll, detail::logistic_loglik(d, beta)));
            fit.converged = true;
            break;
        }
        Eigen::VectorXd next = beta + step;
        double next_ll = detail::logistic_loglik(d, next);
        for (int h = 0; h < 30 && !(next_ll >= ll); ++h) {
            step *= 0.5;
            next = beta + step;
            next_ll = detail::logistic_loglik(d, next);
        }
        if (!(next_ll >= ll)) break;
        beta = next;
        ll = next_ll;
        fit.log_likelihood.push_back(ll);
        for (Eigen::Index j = 1; j < p; ++j)
            if (std::abs(beta[j] * col_sd[static_cast<std::size_t>(j)]) > 15.0)
                throw SeparationError("coefficient for '" + d.names[static_cast<std::size_t>(j)] +
                                      "' diverges; outcome is separated");
        if (step.cwiseAbs().maxCoeff() < 1e-8) {
            fit.converged = true;
            break;
        }
    }
    fit.coefficients = beta;

    const Eigen::VectorXd eta = d.A * beta;
    Eigen::VectorXd irls_w(eta.size()), score_scale(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const double m = expit(eta[i]);
        irls_w[i] = d.w[i] * m * (1.0 - m);
        score_scale[i] = d.w[i] * (d.y[i] - m);
    }
    fit.covariance = detail::sandwich(d.A.transpose() * irls_w.asDiagonal() * d.A, d.A, score_scale);
    return fit;
}

inline LinearFit fit_weighted_gaussian(const DesignMatrix& X, std::span<const double> y, std::span<const double> weights = {}) {
    const auto d = detail::linear_design(X, y, weights);
    detail::check_rank(d);
    const Eigen::VectorXd sw = d.w.cwiseSqrt();
    const Eigen::MatrixXd As = sw.asDiagonal() * d.A;
    const Eigen::VectorXd ys = sw.asDiagonal() * d.y;

    LinearFit fit;
    fit.family = Family::gaussian;
    fit.names = d.names;
    fit.n = static_cast<std::size_t>(d.A.rows());
    fit.weight_sum = d.w.sum();
    fit.coefficients = As.colPivHouseholderQr().solve(ys);
    const Eigen::VectorXd resid = d.y - d.A * fit.coefficients;
    const Eigen::VectorXd score_scale = d.w.cwiseProduct(resid);
    fit.covariance = detail::sandwich(d.A.transpose() * d.w.asDiagonal() * d.A, d.A, score_scale);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < resid.size(); ++i) ll -= 0.5 * d.w[i] * resid[i] * resid[i];
    fit.log_likelihood.push_back(ll);
    return fit;
}

}  // namespace causal_trees
