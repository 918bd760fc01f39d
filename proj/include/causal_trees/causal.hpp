#pragma once

// Counterfactual effect estimation on top of the tree ensemble: propensity
// scores, counterfactual design matrices, common-support suppression, per-draw
// TMLE and per-group summaries.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "causal_trees/bart.hpp"
#include "causal_trees/dataset.hpp"
#include "causal_trees/errors.hpp"
#include "causal_trees/stats.hpp"

namespace causal_trees {

inline constexpr const char* kPropensityColumn = "__ps";

enum class SupportRule { none, sd, chisq };

inline std::string to_string(SupportRule r) {
    switch (r) {
        case SupportRule::none: return "none";
        case SupportRule::sd: return "sd";
        case SupportRule::chisq: return "chisq";
    }
    return "?";
}

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

struct CausalConfig {
    SupportRule support = SupportRule::none;
    double sd_cut = 1.0;
    double chisq_p = 0.05;
    bool use_ps_covariate = true;
    bool use_tmle = true;
    double mcid = 1.0;
    double ps_lo = 0.025;
    double ps_hi = 0.975;
    bool tmle_bayesian_bootstrap = true;
    BartHyperparams hyperparams;

    void validate() const {
        if (!(ps_lo > 0.0 && ps_lo < ps_hi && ps_hi < 1.0)) throw UsageError("propensity truncation must satisfy 0 < lo < hi < 1");
        if (!(mcid >= 0.0)) throw UsageError("mcid must be nonnegative");
        if (!(sd_cut >= 0.0)) throw UsageError("sd cut must be nonnegative");
        if (!(chisq_p > 0.0 && chisq_p < 1.0)) throw UsageError("chi-squared p must lie in (0,1)");
        hyperparams.validate();
    }
};

struct PropensityScores {
    std::vector<double> mean;
    Eigen::MatrixXd draws;  // draws x rows

    std::vector<double> truncated(double lo, double hi) const {
        std::vector<double> out(mean.size());
        for (std::size_t i = 0; i < mean.size(); ++i) out[i] = std::clamp(mean[i], lo, hi);
        return out;
    }
};

inline std::vector<double> column_means(const Eigen::MatrixXd& draws) {
    std::vector<double> out(static_cast<std::size_t>(draws.cols()));
    for (Eigen::Index i = 0; i < draws.cols(); ++i) out[static_cast<std::size_t>(i)] = draws.col(i).mean();
    return out;
}

inline std::vector<double> column_sds(const Eigen::MatrixXd& draws) {
    std::vector<double> out(static_cast<std::size_t>(draws.cols()));
    const double n = static_cast<double>(draws.rows());
    for (Eigen::Index i = 0; i < draws.cols(); ++i) {
        if (draws.rows() < 2) {
            out[static_cast<std::size_t>(i)] = 0.0;
            continue;
        }
        const double m = draws.col(i).mean();
        out[static_cast<std::size_t>(i)] = std::sqrt((draws.col(i).array() - m).square().sum() / (n - 1.0));
    }
    return out;
}

inline DesignMatrix drop_column(const DesignMatrix& X, const std::string& name) {
    const auto j = X.find(name);
    if (!j) throw UsageError("design matrix has no column '" + name + "'");
    DesignMatrix out;
    out.row_index = X.row_index;
    out.values.resize(X.values.rows(), X.values.cols() - 1);
    for (std::size_t c = 0, k = 0; c < X.cols(); ++c) {
        if (c == *j) continue;
        out.values.col(static_cast<Eigen::Index>(k++)) = X.values.col(static_cast<Eigen::Index>(c));
        out.column_names.push_back(X.column_names[c]);
    }
    return out;
}

// Probit fit of treatment on X; X must not contain the treatment column.
inline PropensityScores fit_propensity(const DesignMatrix& X, std::span<const double> treatment,
                                       std::span<const double> weights, const BartHyperparams& hp) {
    const BartPosterior post = fit_bart_probit(X, treatment, weights, hp, MatrixRefs{std::cref(X)});
    PropensityScores ps;
    ps.draws = post.predictions.front();
    ps.mean = column_means(ps.draws);
    return ps;
}

inline DesignMatrix augment_with_ps(const DesignMatrix& X, std::span<const double> scores) {
    if (scores.size() != X.rows()) throw UsageError("propensity score length does not match design rows");
    if (X.find(kPropensityColumn)) throw UsageError("design matrix already has a propensity column");
    DesignMatrix out = X;
    out.values.conservativeResize(Eigen::NoChange, X.values.cols() + 1);
    for (std::size_t i = 0; i < scores.size(); ++i)
        out.values(static_cast<Eigen::Index>(i), X.values.cols()) = scores[i];
    out.column_names.push_back(kPropensityColumn);
    return out;
}

inline std::pair<DesignMatrix, DesignMatrix> counterfactual_matrices(const DesignMatrix& X, std::size_t treatment_col) {
    if (treatment_col >= X.cols()) throw UsageError("treatment column index out of range");
    const auto col = static_cast<Eigen::Index>(treatment_col);
    for (Eigen::Index i = 0; i < X.values.rows(); ++i) {
        const double v = X.values(i, col);
        if (v != 0.0 && v != 1.0) throw UsageError("treatment column is not binary");
    }
    std::pair<DesignMatrix, DesignMatrix> out{X, X};
    out.first.values.col(col).setOnes();
    out.second.values.col(col).setZero();
    return out;
}

inline Eigen::MatrixXd individual_effects(const BartPosterior& post, std::size_t treated_idx, std::size_t control_idx) {
    return predict_posterior(post, treated_idx) - predict_posterior(post, control_idx);
}

using KeepMask = std::vector<char>;

inline KeepMask support_rule_sd(std::span<const double> sigma_f, std::span<const double> sigma_cf, double cut) {
    if (sigma_f.size() != sigma_cf.size()) throw UsageError("support rule inputs differ in length");
    if (sigma_f.empty()) throw SupportError("support rule applied to an empty group");
    const double limit = *std::max_element(sigma_f.begin(), sigma_f.end()) + cut * sample_sd(sigma_f);
    KeepMask keep(sigma_f.size());
    for (std::size_t i = 0; i < sigma_cf.size(); ++i) keep[i] = sigma_cf[i] <= limit;
    return keep;
}

inline KeepMask support_rule_chisq(std::span<const double> sigma_f, std::span<const double> sigma_cf, double p) {
    if (sigma_f.size() != sigma_cf.size()) throw UsageError("support rule inputs differ in length");
    if (sigma_f.empty()) throw SupportError("support rule applied to an empty group");
    const double q = chi_squared_upper_quantile(1.0, p);
    KeepMask keep(sigma_f.size());
    for (std::size_t i = 0; i < sigma_f.size(); ++i) {
        if (!(sigma_f[i] > 0.0)) throw SupportError("factual posterior sd is zero at row " + std::to_string(i + 1));
        const double ratio = sigma_cf[i] / sigma_f[i];
        keep[i] = ratio * ratio <= q;
    }
    return keep;
}

// Shortest window holding ceil(mass n) sorted samples; earliest window on ties.
inline Interval hdi(std::span<const double> samples, double mass = 0.95) {
    if (samples.size() < 2) throw UsageError("hdi needs at least two samples");
    if (!(mass > 0.0 && mass < 1.0)) throw UsageError("hdi mass must lie in (0,1)");
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    const std::size_t k = std::clamp<std::size_t>(static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n))), 1, n);
    std::size_t best = 0;
    double width = s[k - 1] - s[0];
    for (std::size_t i = 1; i + k <= n; ++i) {
        const double w = s[i + k - 1] - s[i];
        if (w < width) {
            width = w;
            best = i;
        }
    }
    return {s[best], s[best + k - 1]};
}

inline double rmse(std::span<const double> pred, std::span<const double> obs, std::span<const double> weights = {}) {
    if (pred.size() != obs.size() || pred.empty()) throw UsageError("rmse inputs must have equal nonzero length");
    if (!weights.empty() && weights.size() != pred.size()) throw UsageError("rmse weights differ in length");
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        num += w * (pred[i] - obs[i]) * (pred[i] - obs[i]);
        den += w;
    }
    return std::sqrt(num / den);
}

inline double rhat(std::span<const std::vector<double>> chains) {
    if (chains.size() < 2) throw UsageError("rhat needs at least two chains");
    std::size_t n = chains.front().size();
    for (const auto& c : chains) n = std::min(n, c.size());
    if (n < 4) throw UsageError("rhat needs at least four draws per chain");
    const std::size_t half = n / 2;
    std::vector<double> means, vars;
    for (const auto& c : chains) {
        for (std::size_t start : {std::size_t{0}, c.size() - half}) {
            const std::span<const double> piece(c.data() + start, half);
            means.push_back(mean(piece));
            const double sd = sample_sd(piece);
            vars.push_back(sd * sd);
        }
    }
    const double within = mean(vars);
    const double between_sd = sample_sd(means);
    const double between = static_cast<double>(half) * between_sd * between_sd;
    if (within == 0.0) return between == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    const double h = static_cast<double>(half);
    const double pooled = (h - 1.0) / h * within + between / h;
    return std::sqrt(pooled / within);
}

inline double rhat(std::span<const double> draws, std::span<const int> chain) {
    if (draws.size() != chain.size()) throw UsageError("rhat chain labels differ in length");
    int n_chains = 0;
    for (int c : chain) n_chains = std::max(n_chains, c + 1);
    std::vector<std::vector<double>> split(static_cast<std::size_t>(n_chains));
    for (std::size_t d = 0; d < draws.size(); ++d) split[static_cast<std::size_t>(chain[d])].push_back(draws[d]);
    return rhat(split);
}

struct TmleResult {
    std::vector<double> ate;
    std::vector<double> epsilon;  // NaN where the fluctuation failed
    std::vector<char> fallback;
    std::size_t n_fallback = 0;
};

namespace detail {

inline constexpr double kTmleBound = 1e-5;

struct FluctuationRows {
    std::span<const double> offset;  // logit of factual prediction
    std::span<const double> clever;
    std::span<const double> target;
    std::span<const double> weight;
};

inline double fluctuation_loglik(const FluctuationRows& rows, double eps) {
    double ll = 0.0;
    for (std::size_t i = 0; i < rows.offset.size(); ++i) {
        const double eta = rows.offset[i] + eps * rows.clever[i];
        const double log_p = -std::log1p(std::exp(-eta));
        const double log_q = -std::log1p(std::exp(eta));
        ll += rows.weight[i] * (rows.target[i] * log_p + (1.0 - rows.target[i]) * log_q);
    }
    return ll;
}

}  // namespace detail

// Weighted logistic fluctuation of target on the clever covariate with a fixed
// offset, by damped Newton.
inline double solve_fluctuation(std::span<const double> offset, std::span<const double> clever,
                                std::span<const double> target, std::span<const double> weight, int max_iter = 100) {
    const detail::FluctuationRows rows{offset, clever, target, weight};
    double eps = 0.0;
    double ll = detail::fluctuation_loglik(rows, eps);
    for (int it = 0; it < max_iter; ++it) {
        double score = 0.0, info = 0.0;
        for (std::size_t i = 0; i < offset.size(); ++i) {
            const double p = expit(offset[i] + eps * clever[i]);
            score += weight[i] * clever[i] * (target[i] - p);
            info += weight[i] * clever[i] * clever[i] * p * (1.0 - p);
        }
        if (!(info > 0.0) || !std::isfinite(info)) throw TmleError("fluctuation information is degenerate");
        double step = score / info;
        if (std::abs(step) < 1e-10 * (1.0 + std::abs(eps)) || score * step <= 1e-12 * (1.0 + std::abs(ll)))
            return eps + step;
        double next_ll = detail::fluctuation_loglik(rows, eps + step);
        int halvings = 0;
        while (!(next_ll >= ll) && halvings < 40) {
            step *= 0.5;
            next_ll = detail::fluctuation_loglik(rows, eps + step);
            ++halvings;
        }
        if (!(next_ll >= ll)) throw TmleError("fluctuation step failed to improve the likelihood");
        eps += step;
        ll = next_ll;
    }
    throw TmleError("fluctuation did not converge");
}

// Rows of the treated/control prediction matrices listed in `rows` are used.
// With a resampling seed, each draw also reweights rows by Dirichlet(1,...,1)
// multipliers so the draws carry sampling as well as model uncertainty.
inline TmleResult tmle_adjust(const Eigen::MatrixXd& treated, const Eigen::MatrixXd& control, std::span<const std::size_t> rows,
                              std::span<const double> outcome, std::span<const double> treatment,
                              std::span<const double> propensity, std::span<const double> weights,
                              std::pair<double, double> bounds, std::optional<std::uint64_t> resampling_seed = std::nullopt) {
    const auto [a, b] = bounds;
    if (!(a < b)) throw UsageError("outcome bounds must satisfy a < b");
    if (rows.empty()) throw SupportError("no rows retained for the fluctuation");
    const double range = b - a;
    const std::size_t n = rows.size();
    const std::size_t n_draws = static_cast<std::size_t>(treated.rows());

    std::vector<double> target(n), clever(n), base_weight(n), h1(n), h0(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = rows[k];
        const double g = propensity[i];
        if (!(g > 0.0 && g < 1.0)) throw UsageError("propensity scores must lie strictly inside (0,1)");
        h1[k] = 1.0 / g;
        h0[k] = -1.0 / (1.0 - g);
        clever[k] = treatment[i] == 1.0 ? h1[k] : h0[k];
        target[k] = std::clamp((outcome[i] - a) / range, 0.0, 1.0);
        base_weight[k] = weights[i];
    }

    TmleResult out;
    out.ate.resize(n_draws);
    out.epsilon.resize(n_draws);
    out.fallback.assign(n_draws, 0);
    parallel_for(n_draws, [&](std::size_t d) {
        const auto row = static_cast<Eigen::Index>(d);
        std::vector<double> l1(n), l0(n), offset(n), weight(base_weight);
        if (resampling_seed) {
            Rng rng = make_rng(*resampling_seed, d + 1);
            std::exponential_distribution<double> gamma1(1.0);
            for (auto& v : weight) v *= gamma1(rng);
        }
        double raw = 0.0, weight_sum = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const auto i = static_cast<Eigen::Index>(rows[k]);
            const double q1 = std::clamp((treated(row, i) - a) / range, detail::kTmleBound, 1.0 - detail::kTmleBound);
            const double q0 = std::clamp((control(row, i) - a) / range, detail::kTmleBound, 1.0 - detail::kTmleBound);
            l1[k] = logit(q1);
            l0[k] = logit(q0);
            offset[k] = treatment[rows[k]] == 1.0 ? l1[k] : l0[k];
            raw += weight[k] * (treated(row, i) - control(row, i));
            weight_sum += weight[k];
        }
        try {
            const double eps = solve_fluctuation(offset, clever, target, weight);
            double sum = 0.0;
            for (std::size_t k = 0; k < n; ++k)
                sum += weight[k] * (expit(l1[k] + eps * h1[k]) - expit(l0[k] + eps * h0[k]));
            out.ate[d] = range * sum / weight_sum;
            out.epsilon[d] = eps;
        } catch (const TmleError&) {
            out.ate[d] = raw / weight_sum;
            out.epsilon[d] = std::numeric_limits<double>::quiet_NaN();
            out.fallback[d] = 1;
        }
    });
    for (char f : out.fallback) out.n_fallback += static_cast<std::size_t>(f);
    return out;
}

struct CausalResult {
    std::string group;
    std::size_t n = 0;
    std::size_t n_treated = 0;
    std::size_t n_control = 0;
    std::vector<double> ate_draws;
    double ate = 0.0;
    Interval ate_hdi;
    std::optional<std::vector<double>> att_draws;
    std::optional<double> att;
    std::optional<Interval> att_hdi;
    std::vector<std::size_t> retained_rows;
    std::vector<double> icate_mean;
    std::vector<double> icate_lo;
    std::vector<double> icate_hi;
    std::size_t suppressed_treated = 0;
    std::size_t suppressed_control = 0;
    std::vector<double> tmle_epsilon;
    std::size_t tmle_fallbacks = 0;
    double rmse = 0.0;
    std::optional<double> rhat;
    bool clinical_flag = false;
};

// Everything summarize needs, indexed by dataset row. Predictions are draws x rows.
struct EffectInputs {
    const Eigen::MatrixXd& treated;
    const Eigen::MatrixXd& control;
    std::span<const double> outcome;
    std::span<const double> treatment;
    std::span<const double> weights;
    std::span<const double> propensity;  // truncated; may be empty when TMLE is off
    std::span<const int> chain;
    std::pair<double, double> outcome_bounds;
};

// Factual (observed assignment) and counterfactual posterior sds per listed row.
inline std::pair<std::vector<double>, std::vector<double>> assignment_sds(const EffectInputs& in,
                                                                          std::span<const std::size_t> rows) {
    const double n = static_cast<double>(in.treated.rows());
    std::vector<double> f(rows.size(), 0.0), cf(rows.size(), 0.0);
    if (in.treated.rows() < 2) return {f, cf};
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(rows[k]);
        const auto sd = [&](const Eigen::MatrixXd& m) {
            const double mu = m.col(i).mean();
            return std::sqrt((m.col(i).array() - mu).square().sum() / (n - 1.0));
        };
        const double s1 = sd(in.treated), s0 = sd(in.control);
        const bool treated = in.treatment[rows[k]] == 1.0;
        f[k] = treated ? s1 : s0;
        cf[k] = treated ? s0 : s1;
    }
    return {f, cf};
}

inline KeepMask apply_support_rule(const EffectInputs& in, std::span<const std::size_t> rows, const CausalConfig& cfg) {
    if (rows.empty()) throw SupportError("support rule applied to an empty group");
    if (cfg.support == SupportRule::none) return KeepMask(rows.size(), 1);
    const auto [f, cf] = assignment_sds(in, rows);
    return cfg.support == SupportRule::sd ? support_rule_sd(f, cf, cfg.sd_cut) : support_rule_chisq(f, cf, cfg.chisq_p);
}

inline CausalResult summarize(const EffectInputs& in, std::string group, std::span<const std::size_t> rows,
                              const KeepMask& keep, const CausalConfig& cfg) {
    if (keep.size() != rows.size()) throw UsageError("keep mask does not match group rows");
    if (rows.empty()) throw SupportError("group '" + group + "' is empty");
    CausalResult r;
    r.group = std::move(group);
    r.n = rows.size();
    std::vector<std::size_t> treated_rows;
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const bool t = in.treatment[rows[k]] == 1.0;
        ++(t ? r.n_treated : r.n_control);
        if (keep[k]) {
            r.retained_rows.push_back(rows[k]);
            if (t) treated_rows.push_back(rows[k]);
        } else {
            ++(t ? r.suppressed_treated : r.suppressed_control);
        }
    }
    if (r.retained_rows.empty()) throw SupportError("every row of group '" + r.group + "' was suppressed");

    const Eigen::Index n_draws = in.treated.rows();
    const auto weighted_effect = [&](std::span<const std::size_t> subset) {
        std::vector<double> out(static_cast<std::size_t>(n_draws));
        double wsum = 0.0;
        for (std::size_t i : subset) wsum += in.weights[i];
        for (Eigen::Index d = 0; d < n_draws; ++d) {
            double s = 0.0;
            for (std::size_t i : subset) {
                const auto c = static_cast<Eigen::Index>(i);
                s += in.weights[i] * (in.treated(d, c) - in.control(d, c));
            }
            out[static_cast<std::size_t>(d)] = s / wsum;
        }
        return out;
    };

    if (cfg.use_tmle) {
        std::optional<std::uint64_t> resampling;
        if (cfg.tmle_bayesian_bootstrap) resampling = cfg.hyperparams.seed ^ 0xd1b54a32d192ed03ULL;
        auto tmle = tmle_adjust(in.treated, in.control, r.retained_rows, in.outcome, in.treatment, in.propensity,
                                in.weights, in.outcome_bounds, resampling);
        r.ate_draws = std::move(tmle.ate);
        r.tmle_epsilon = std::move(tmle.epsilon);
        r.tmle_fallbacks = tmle.n_fallback;
    } else {
        r.ate_draws = weighted_effect(r.retained_rows);
    }
    r.ate = mean(r.ate_draws);
    r.ate_hdi = n_draws >= 2 ? hdi(r.ate_draws) : Interval{r.ate, r.ate};

    if (!treated_rows.empty()) {
        r.att_draws = weighted_effect(treated_rows);
        r.att = mean(*r.att_draws);
        r.att_hdi = n_draws >= 2 ? hdi(*r.att_draws) : Interval{*r.att, *r.att};
    }

    std::vector<double> tau(static_cast<std::size_t>(n_draws));
    for (std::size_t i : r.retained_rows) {
        const auto c = static_cast<Eigen::Index>(i);
        for (Eigen::Index d = 0; d < n_draws; ++d)
            tau[static_cast<std::size_t>(d)] = in.treated(d, c) - in.control(d, c);
        const double m = mean(tau);
        const Interval iv = n_draws >= 2 ? hdi(tau) : Interval{m, m};
        r.icate_mean.push_back(m);
        r.icate_lo.push_back(iv.lo);
        r.icate_hi.push_back(iv.hi);
    }

    std::vector<double> fitted, observed;
    for (std::size_t i : rows) {
        const auto c = static_cast<Eigen::Index>(i);
        fitted.push_back(in.treatment[i] == 1.0 ? in.treated.col(c).mean() : in.control.col(c).mean());
        observed.push_back(in.outcome[i]);
    }
    r.rmse = rmse(fitted, observed);

    int n_chains = 0;
    for (int c : in.chain) n_chains = std::max(n_chains, c + 1);
    if (n_chains >= 2 && n_draws / n_chains >= 4) r.rhat = rhat(r.ate_draws, in.chain);
    r.clinical_flag = std::abs(r.ate) >= cfg.mcid;
    return r;
}

struct CausalAnalysis {
    DesignMatrix design;  // response design, including the propensity column when used
    std::optional<PropensityScores> propensity;
    BartPosterior response;  // predictions[0] all treated, predictions[1] all control
    std::pair<double, double> outcome_bounds;
    std::vector<CausalResult> groups;
};

// Group labels per row: level names of the group column, or a single "all".
inline std::pair<std::vector<std::string>, std::vector<std::size_t>> group_labels(const Dataset& data) {
    const auto j = data.index_of_role(Role::group);
    if (!j) return {{"all"}, std::vector<std::size_t>(data.rows(), 0)};
    const auto& spec = data.spec(*j);
    std::vector<std::string> names = spec.kind == Kind::categorical ? spec.levels : std::vector<std::string>{"0", "1"};
    std::vector<std::size_t> label(data.rows());
    for (std::size_t i = 0; i < data.rows(); ++i) label[i] = static_cast<std::size_t>(data.column(*j)[i]);
    return {names, label};
}

inline std::pair<double, double> observed_bounds(std::span<const double> outcome) {
    const auto [lo, hi] = std::minmax_element(outcome.begin(), outcome.end());
    if (*lo == *hi) return {*lo - 0.5, *hi + 0.5};
    return {*lo, *hi};
}

// One joint fit on all rows, summarized within each group. `outcome` replaces
// the response column (e.g. a change score); bounds default to its observed range.
inline CausalAnalysis run_causal_analysis(const Dataset& data, std::span<const double> outcome, const CausalConfig& cfg,
                                          std::optional<std::pair<double, double>> bounds = std::nullopt) {
    cfg.validate();
    if (outcome.size() != data.rows()) throw UsageError("outcome length does not match dataset rows");
    if (data.rows() == 0) throw FitError("dataset has no rows");
    const auto t_col = data.index_of_role(Role::treatment);
    const std::string t_name = data.spec(*t_col).name;
    const std::vector<double>& treatment = data.column(*t_col);
    const std::vector<double> weights = rescale_weights(data.weights());

    CausalAnalysis out;
    out.outcome_bounds = bounds ? *bounds : observed_bounds(outcome);
    {
        const auto [lo, hi] = std::minmax_element(outcome.begin(), outcome.end());
        if (*lo < out.outcome_bounds.first || *hi > out.outcome_bounds.second || !(out.outcome_bounds.first < out.outcome_bounds.second))
            throw UsageError("outcome values fall outside the declared outcome bounds");
    }

    out.design = encode_design_matrix(data, Encoding::full_one_hot);
    if (cfg.use_ps_covariate || cfg.use_tmle) {
        BartHyperparams ps_hp = cfg.hyperparams;
        ps_hp.seed = cfg.hyperparams.seed ^ 0x9e3779b97f4a7c15ULL;
        out.propensity = fit_propensity(drop_column(out.design, t_name), treatment, weights, ps_hp);
    }
    if (cfg.use_ps_covariate) out.design = augment_with_ps(out.design, out.propensity->mean);

    const auto [all_treated, all_control] = counterfactual_matrices(out.design, *out.design.find(t_name));
    out.response = fit_bart_continuous(out.design, outcome, weights, cfg.hyperparams,
                                       MatrixRefs{std::cref(all_treated), std::cref(all_control)});

    const std::vector<double> g = out.propensity ? out.propensity->truncated(cfg.ps_lo, cfg.ps_hi) : std::vector<double>{};
    const EffectInputs in{out.response.predictions[0], out.response.predictions[1], outcome, treatment, weights, g,
                          out.response.chain, out.outcome_bounds};
    const auto [names, label] = group_labels(data);
    for (std::size_t gi = 0; gi < names.size(); ++gi) {
        std::vector<std::size_t> rows;
        for (std::size_t i = 0; i < label.size(); ++i)
            if (label[i] == gi) rows.push_back(i);
        if (rows.empty()) continue;
        const KeepMask keep = apply_support_rule(in, rows, cfg);
        out.groups.push_back(summarize(in, names[gi], rows, keep, cfg));
    }
    return out;
}

}  // namespace causal_trees
