#include "causal_trees/causal.hpp"

#include <random>

#include <gtest/gtest.h>

namespace causal_trees {
namespace {

DesignMatrix Matrix(const Eigen::MatrixXd& values, std::vector<std::string> names) {
    DesignMatrix dm;
    dm.values = values;
    dm.column_names = std::move(names);
    dm.row_index.resize(static_cast<std::size_t>(values.rows()));
    for (std::size_t i = 0; i < dm.row_index.size(); ++i) dm.row_index[i] = i;
    return dm;
}

BartHyperparams Fast(std::uint64_t seed) {
    auto hp = BartHyperparams::fast();
    hp.seed = seed;
    return hp;
}

Interval BruteForceHdi(std::vector<double> s, double mass) {
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    const auto k = static_cast<std::size_t>(std::ceil(mass * static_cast<double>(n)));
    Interval best{s[0], s[k - 1]};
    for (std::size_t i = 0; i + k <= n; ++i)
        if (s[i + k - 1] - s[i] < best.hi - best.lo) best = {s[i], s[i + k - 1]};
    return best;
}

TEST(Hdi, ConstantSamples) {
    const std::vector<double> s(50, 3.25);
    const auto iv = hdi(s);
    EXPECT_EQ(iv.lo, 3.25);
    EXPECT_EQ(iv.hi, 3.25);
}

TEST(Hdi, StandardNormal) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::vector<double> s(4000);
    for (auto& v : s) v = nd(rng);
    const auto iv = hdi(s);
    EXPECT_NEAR(iv.lo, -1.96, 0.1);
    EXPECT_NEAR(iv.hi, 1.96, 0.1);
}

TEST(Hdi, MatchesExhaustiveScan) {
    std::mt19937_64 rng(2);
    std::gamma_distribution<double> gd(2.0, 1.0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> s(100);
        for (auto& v : s) v = gd(rng);
        const auto a = hdi(s, 0.9), b = BruteForceHdi(s, 0.9);
        EXPECT_EQ(a.lo, b.lo);
        EXPECT_EQ(a.hi, b.hi);
    }
}

TEST(Hdi, TooFewSamples) {
    EXPECT_THROW(hdi(std::vector<double>{1.0}), UsageError);
}

TEST(Rmse, Examples) {
    EXPECT_EQ(rmse(std::vector<double>{1, 2}, std::vector<double>{1, 2}), 0.0);
    EXPECT_NEAR(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}), std::sqrt(12.5), 1e-15);
    EXPECT_EQ(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}, std::vector<double>{1, 0}), 3.0);
    EXPECT_THROW(rmse(std::vector<double>{0}, std::vector<double>{3, 4}), UsageError);
}

TEST(Rhat, DegenerateAndMonteCarlo) {
    const std::vector<std::vector<double>> constant(4, std::vector<double>(100, 2.0));
    EXPECT_EQ(rhat(constant), 1.0);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::vector<std::vector<double>> iid(4, std::vector<double>(1000));
    for (auto& c : iid)
        for (auto& v : c) v = nd(rng);
    EXPECT_LT(rhat(iid), 1.01);
    for (auto& v : iid[2]) v += 5.0;
    EXPECT_GT(rhat(iid), 1.5);

    EXPECT_THROW(rhat(std::vector<std::vector<double>>(1, std::vector<double>(10))), UsageError);
    EXPECT_THROW(rhat(std::vector<std::vector<double>>(2, std::vector<double>(3))), UsageError);
}

TEST(SupportRuleSd, Examples) {
    const std::vector<double> f = {1, 1, 1, 1}, cf = {1, 1, 1, 5};
    EXPECT_EQ(support_rule_sd(f, cf, 1.0), (KeepMask{1, 1, 1, 0}));
    EXPECT_EQ(support_rule_sd(cf, cf, 1.0), (KeepMask{1, 1, 1, 1}));
    const std::vector<double> f2 = {0.2, 0.4, 0.3}, cf2 = {3.0, 9.0, 0.1};
    EXPECT_EQ(support_rule_sd(f2, cf2, 1e9), (KeepMask{1, 1, 1}));
    EXPECT_THROW(support_rule_sd(std::vector<double>{}, std::vector<double>{}, 1.0), SupportError);
}

TEST(SupportRuleSd, LargerCutKeepsSuperset) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    std::vector<double> f(200), cf(200);
    for (auto& v : f) v = u(rng);
    for (auto& v : cf) v = 2.0 * u(rng);
    KeepMask prev = support_rule_sd(f, cf, 0.0);
    for (double cut : {0.5, 1.0, 2.0, 4.0}) {
        const auto next = support_rule_sd(f, cf, cut);
        for (std::size_t i = 0; i < f.size(); ++i)
            if (prev[i]) {
                EXPECT_TRUE(next[i]);
            }
        prev = next;
    }
}

TEST(SupportRuleChisq, QuantileAndExamples) {
    EXPECT_NEAR(chi_squared_upper_quantile(1.0, 0.05), 3.8414588206941254, 1e-9);
    const std::vector<double> f = {1.0, 1.0, 1.0}, cf = {1.0, 2.0, 1.9};
    EXPECT_EQ(support_rule_chisq(f, cf, 0.05), (KeepMask{1, 0, 1}));
    EXPECT_THROW(support_rule_chisq(std::vector<double>{0.0}, std::vector<double>{1.0}, 0.05), SupportError);
}

TEST(SupportRuleChisq, LargerPKeepsSubset) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.5, 2.5);
    std::vector<double> f(300, 1.0), cf(300);
    for (auto& v : cf) v = u(rng);
    KeepMask prev = support_rule_chisq(f, cf, 0.01);
    for (double p : {0.05, 0.1, 0.3, 0.6}) {
        const auto next = support_rule_chisq(f, cf, p);
        for (std::size_t i = 0; i < f.size(); ++i)
            if (next[i]) {
                EXPECT_TRUE(prev[i]);
            }
        prev = next;
    }
}

TEST(AugmentWithPs, AppendsColumn) {
    const auto X = Matrix(Eigen::MatrixXd::Random(5, 3), {"a", "b", "c"});
    const std::vector<double> g = {0.1, 0.2, 0.3, 0.4, 0.5};
    const auto aug = augment_with_ps(X, g);
    ASSERT_EQ(aug.cols(), 4u);
    EXPECT_EQ(aug.column_names.back(), "__ps");
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(aug.values(static_cast<Eigen::Index>(i), 3), g[i]);
    EXPECT_EQ(aug.values.leftCols(3), X.values);
    EXPECT_THROW(augment_with_ps(aug, g), UsageError);
    EXPECT_THROW(augment_with_ps(X, std::vector<double>{0.5}), UsageError);
}

TEST(CounterfactualMatrices, SetsOnlyTreatment) {
    Eigen::MatrixXd v(4, 3);
    v << 1, 0.5, 2, 0, 0.1, 3, 1, 0.7, 4, 0, 0.2, 5;
    const auto X = Matrix(v, {"t", "x", "z"});
    const auto [treated, control] = counterfactual_matrices(X, 0);
    EXPECT_EQ(treated.values.col(0).sum(), 4.0);
    EXPECT_EQ(control.values.col(0).sum(), 0.0);
    EXPECT_EQ(treated.values.row(0), X.values.row(0));
    EXPECT_EQ(treated.values.rightCols(2), X.values.rightCols(2));
    EXPECT_EQ(control.values.rightCols(2), X.values.rightCols(2));
    EXPECT_THROW(counterfactual_matrices(X, 1), UsageError);
}

// ---------------------------------------------------------------------------

TEST(SolveFluctuation, AlreadySolvedScoreGivesZero) {
    // Cell means of the target equal the initial fit, so the score is zero at epsilon 0.
    const std::vector<double> q = {0.3, 0.3, 0.6, 0.6};
    const std::vector<double> target = {0.1, 0.5, 0.4, 0.8};
    const std::vector<double> clever = {2, 2, -2, -2};
    const std::vector<double> w(4, 1.0);
    std::vector<double> offset;
    for (double v : q) offset.push_back(logit(v));
    EXPECT_NEAR(solve_fluctuation(offset, clever, target, w), 0.0, 1e-12);
}

TEST(TmleAdjust, CorrectOutcomeModelLeavesAteUnchanged) {
    std::mt19937_64 rng(8);
    std::bernoulli_distribution coin(0.5);
    const std::size_t n = 400;
    std::vector<double> t(n), x(n), y(n), g(n, 0.5), w(n, 1.0);
    Eigen::MatrixXd q1(1, n), q0(1, n);
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = coin(rng);
        x[i] = coin(rng);
        q1(0, static_cast<Eigen::Index>(i)) = 10.0 + 5.0 * x[i];
        q0(0, static_cast<Eigen::Index>(i)) = 4.0 + 2.0 * x[i];
    }
    // Paired residuals of +-1 within each (t, x) cell keep the score at zero.
    std::vector<int> parity(4, 0);
    for (std::size_t i = 0; i < n; ++i) {
        const int cell = static_cast<int>(2 * t[i] + x[i]);
        const double fit = t[i] == 1.0 ? q1(0, static_cast<Eigen::Index>(i)) : q0(0, static_cast<Eigen::Index>(i));
        y[i] = fit + (parity[static_cast<std::size_t>(cell)]++ % 2 == 0 ? 1.0 : -1.0);
    }
    for (int c = 0; c < 4; ++c) ASSERT_EQ(parity[static_cast<std::size_t>(c)] % 2, 0) << "unbalanced cell " << c;
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    const auto res = tmle_adjust(q1, q0, rows, y, t, g, w, {-30.0, 30.0});
    double unadjusted = 0.0;
    for (std::size_t i = 0; i < n; ++i) unadjusted += (q1(0, static_cast<Eigen::Index>(i)) - q0(0, static_cast<Eigen::Index>(i))) / n;
    EXPECT_NEAR(res.epsilon[0], 0.0, 1e-9);
    EXPECT_NEAR(res.ate[0], unadjusted, 1e-3);
    EXPECT_EQ(res.n_fallback, 0u);
}

TEST(TmleAdjust, ConstantOutcomeModelWithCorrectPropensity) {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::normal_distribution<double> nd;
    const std::size_t n = 2000;
    std::vector<double> t(n), y(n), g(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = u(rng);
        g[i] = expit(1.5 * x);
        t[i] = uniform01(rng) < g[i] ? 1.0 : 0.0;
        y[i] = 2.0 * t[i] + 3.0 * x + nd(rng);
    }
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    const double ybar = mean(y);
    Eigen::MatrixXd q(1, n);
    q.setConstant(ybar);
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    const auto res = tmle_adjust(q, q, rows, y, t, g, w, {*lo, *hi});
    EXPECT_NEAR(res.ate[0], 2.0, 0.15);
}

// ---------------------------------------------------------------------------

struct Fixture {
    Eigen::MatrixXd treated, control;
    std::vector<double> y, t, w;
    std::vector<int> chain;
};

TEST(Summarize, DegeneratePosterior) {
    Fixture f;
    f.treated = Eigen::MatrixXd::Constant(20, 6, 5.0);
    f.control = Eigen::MatrixXd::Constant(20, 6, 3.0);
    f.y = {5, 3, 5, 3, 3, 3};
    f.t = {1, 0, 1, 0, 0, 0};
    f.w = std::vector<double>(6, 1.0);
    f.chain.resize(20);
    for (int d = 0; d < 20; ++d) f.chain[static_cast<std::size_t>(d)] = d / 10;
    CausalConfig cfg;
    cfg.use_tmle = false;
    const EffectInputs in{f.treated, f.control, f.y, f.t, f.w, {}, f.chain, {0.0, 10.0}};
    const std::vector<std::size_t> rows = {0, 1, 2, 3, 4, 5};
    const auto r = summarize(in, "all", rows, KeepMask(6, 1), cfg);
    EXPECT_EQ(r.ate, 2.0);
    EXPECT_EQ(*r.att, 2.0);
    EXPECT_EQ(r.ate_hdi.lo, 2.0);
    EXPECT_EQ(r.ate_hdi.hi, 2.0);
    EXPECT_EQ(r.rmse, 0.0);
    EXPECT_EQ(*r.rhat, 1.0);
    EXPECT_TRUE(r.clinical_flag);
}

TEST(Summarize, AteAndAttMatchDirectReaveraging) {
    std::mt19937_64 rng(10);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uw(0.5, 2.0);
    const std::size_t n = 60, draws = 40;
    Fixture f;
    f.treated.resize(draws, n);
    f.control.resize(draws, n);
    f.y.resize(n);
    f.t.resize(n);
    f.w.resize(n);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = nd(rng);
        f.t[i] = x[i] > 0.3 ? 1.0 : 0.0;
        f.w[i] = uw(rng);
        f.y[i] = nd(rng);
        for (std::size_t d = 0; d < draws; ++d) {
            f.control(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) = nd(rng);
            f.treated(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) =
                f.control(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) + 1.0 + 2.0 * x[i] + 0.1 * nd(rng);
        }
    }
    f.chain.assign(draws, 0);
    CausalConfig cfg;
    cfg.use_tmle = false;
    KeepMask keep(n, 1);
    keep[3] = keep[17] = 0;
    std::vector<std::size_t> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = i;
    const EffectInputs in{f.treated, f.control, f.y, f.t, f.w, {}, f.chain, {-10.0, 10.0}};
    const auto r = summarize(in, "g", rows, keep, cfg);

    double ate = 0.0, att = 0.0;
    for (std::size_t d = 0; d < draws; ++d) {
        double sa = 0.0, wa = 0.0, st = 0.0, wt = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (!keep[i]) continue;
            const double tau = f.treated(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i)) -
                               f.control(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(i));
            sa += f.w[i] * tau;
            wa += f.w[i];
            if (f.t[i] == 1.0) {
                st += f.w[i] * tau;
                wt += f.w[i];
            }
        }
        ate += sa / wa / draws;
        att += st / wt / draws;
    }
    EXPECT_NEAR(r.ate, ate, 1e-10);
    EXPECT_NEAR(*r.att, att, 1e-10);
    EXPECT_GT(*r.att - r.ate, 0.5);
    EXPECT_EQ(r.retained_rows.size() + r.suppressed_treated + r.suppressed_control, n);
    EXPECT_FALSE(r.rhat.has_value());
    EXPECT_GE(r.ate, r.ate_hdi.lo);
    EXPECT_LE(r.ate, r.ate_hdi.hi);
}

TEST(Summarize, ClinicalFlagAndMissingAtt) {
    Fixture f;
    f.treated = Eigen::MatrixXd::Constant(4, 3, 0.3);
    f.control = Eigen::MatrixXd::Zero(4, 3);
    f.y = {0, 0, 0};
    f.t = {0, 0, 0};
    f.w = {1, 1, 1};
    f.chain.assign(4, 0);
    CausalConfig cfg;
    cfg.use_tmle = false;
    const std::vector<std::size_t> rows = {0, 1, 2};
    const auto small = summarize({f.treated, f.control, f.y, f.t, f.w, {}, f.chain, {0, 1}}, "g", rows, KeepMask(3, 1), cfg);
    EXPECT_FALSE(small.clinical_flag);
    EXPECT_FALSE(small.att.has_value());
    f.treated.setConstant(-1.7);
    const auto big = summarize({f.treated, f.control, f.y, f.t, f.w, {}, f.chain, {0, 1}}, "g", rows, KeepMask(3, 1), cfg);
    EXPECT_TRUE(big.clinical_flag);
    EXPECT_THROW(summarize({f.treated, f.control, f.y, f.t, f.w, {}, f.chain, {0, 1}}, "g", rows, KeepMask(3, 0), cfg),
                 SupportError);
}

// ---------------------------------------------------------------------------

TEST(FitPropensity, RandomizedTreatment) {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.5);
    const std::size_t n = 1000;
    Eigen::MatrixXd x(n, 3);
    std::vector<double> t(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) x(static_cast<Eigen::Index>(i), j) = nd(rng);
        t[i] = coin(rng);
    }
    const auto ps = fit_propensity(Matrix(x, {"a", "b", "c"}), t, w, Fast(1));
    std::size_t inside = 0;
    for (double g : ps.mean) inside += (g >= 0.4 && g <= 0.6);
    EXPECT_GE(inside, 900u);
    EXPECT_EQ(ps.draws.rows(), 500);
}

TEST(FitPropensity, DeterministicAssignmentIsTruncated) {
    const std::size_t n = 400;
    Eigen::MatrixXd x(n, 1);
    std::vector<double> t(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        x(static_cast<Eigen::Index>(i), 0) = -2.0 + 4.0 * static_cast<double>(i) / (n - 1);
        t[i] = x(static_cast<Eigen::Index>(i), 0) > 0.0;
    }
    const auto ps = fit_propensity(Matrix(x, {"x"}), t, w, Fast(2));
    const auto g = ps.truncated(0.025, 0.975);
    EXPECT_EQ(g.front(), 0.025);
    EXPECT_EQ(g.back(), 0.975);
    EXPECT_THROW(fit_propensity(Matrix(x, {"x"}), std::vector<double>(n, 1.0), w, Fast(2)), FitError);
}

TEST(IndividualEffects, RecoversConstantAndZeroEffects) {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.5);
    const std::size_t n = 500;
    Eigen::MatrixXd x(n, 3);
    std::vector<double> y_effect(n), y_null(n), w(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        x(r, 0) = coin(rng);
        x(r, 1) = nd(rng);
        x(r, 2) = nd(rng);
        y_effect[i] = 2.0 * x(r, 0) + x(r, 1) + 0.1 * nd(rng);
        y_null[i] = x(r, 1) + 0.1 * nd(rng);
    }
    const auto X = Matrix(x, {"t", "x1", "x2"});
    const auto [treated, control] = counterfactual_matrices(X, 0);
    const MatrixRefs refs{std::cref(treated), std::cref(control)};

    const auto post = fit_bart_continuous(X, y_effect, w, Fast(3), refs);
    const Eigen::MatrixXd tau = individual_effects(post, 0, 1);
    EXPECT_EQ(tau.rows(), 500);
    EXPECT_EQ(tau.cols(), 500);
    EXPECT_NEAR(tau.mean(), 2.0, 0.3);

    const auto null_post = fit_bart_continuous(X, y_null, w, Fast(4), refs);
    const Eigen::MatrixXd tau0 = individual_effects(null_post, 0, 1);
    std::size_t near_zero = 0;
    for (Eigen::Index i = 0; i < tau0.cols(); ++i) near_zero += std::abs(tau0.col(i).mean()) <= 0.3;
    EXPECT_GE(near_zero, 450u);
    EXPECT_THROW(individual_effects(post, 0, 2), UsageError);
}

// ---------------------------------------------------------------------------

Dataset RandomizedDataset(std::uint64_t seed, std::size_t n, double effect) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::bernoulli_distribution coin(0.5);
    Schema schema = {
        {"y", Role::response, Kind::numeric, {}, {}, {}},
        {"t", Role::treatment, Kind::binary, {}, {}, {}},
        {"x1", Role::confounder, Kind::numeric, {}, {}, {}},
        {"x2", Role::confounder, Kind::numeric, {}, {}, {}},
        {"smoker", Role::group, Kind::categorical, {}, {}, {"never", "ever"}},
    };
    std::vector<std::vector<double>> cols(5, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        cols[1][i] = coin(rng);
        cols[2][i] = nd(rng);
        cols[3][i] = nd(rng);
        cols[4][i] = coin(rng);
        cols[0][i] = effect * cols[1][i] + std::sin(cols[2][i]) + 0.5 * cols[3][i] + 0.5 * nd(rng);
    }
    return Dataset(schema, cols, {}, {}, {});
}

TEST(RunCausalAnalysis, PlainDifferencingWhenAdjustmentsOff) {
    const auto data = RandomizedDataset(13, 300, 1.0);
    CausalConfig cfg;
    cfg.use_tmle = false;
    cfg.use_ps_covariate = false;
    cfg.hyperparams = Fast(5);
    const auto res = run_causal_analysis(data, data.column("y"), cfg);
    EXPECT_FALSE(res.propensity.has_value());
    ASSERT_EQ(res.groups.size(), 2u);
    const Eigen::MatrixXd tau = individual_effects(res.response, 0, 1);
    for (const auto& g : res.groups) {
        double direct = 0.0;
        for (std::size_t i : g.retained_rows) direct += tau.col(static_cast<Eigen::Index>(i)).mean();
        direct /= static_cast<double>(g.retained_rows.size());
        EXPECT_NEAR(g.ate, direct, 1e-10);
        EXPECT_EQ(g.suppressed_treated + g.suppressed_control, 0u);
    }
}

TEST(RunCausalAnalysis, RandomizedDesignFullPipeline) {
    const auto data = RandomizedDataset(14, 400, 1.5);
    CausalConfig cfg;
    cfg.support = SupportRule::sd;
    cfg.hyperparams = Fast(6);
    const auto res = run_causal_analysis(data, data.column("y"), cfg);
    ASSERT_TRUE(res.propensity.has_value());
    EXPECT_EQ(res.design.column_names.back(), "__ps");
    double sd_y = sample_sd(data.column("y"));
    for (const auto& g : res.groups) {
        EXPECT_EQ(g.retained_rows.size() + g.suppressed_treated + g.suppressed_control, g.n);
        EXPECT_NEAR(g.ate, 1.5, 0.5);
        EXPECT_LT(std::abs(g.ate - *g.att), 0.2 * sd_y);
        EXPECT_EQ(g.tmle_epsilon.size(), 500u);
        ASSERT_TRUE(g.rhat.has_value());
        EXPECT_LT(*g.rhat, 1.1);
        EXPECT_GT(g.rmse, 0.0);
    }
}

TEST(RunCausalAnalysis, IsReproducible) {
    const auto data = RandomizedDataset(15, 150, 1.0);
    CausalConfig cfg;
    cfg.hyperparams = Fast(7);
    cfg.hyperparams.n_trees = 20;
    const auto a = run_causal_analysis(data, data.column("y"), cfg);
    const auto b = run_causal_analysis(data, data.column("y"), cfg);
    ASSERT_EQ(a.groups.size(), b.groups.size());
    for (std::size_t g = 0; g < a.groups.size(); ++g) EXPECT_EQ(a.groups[g].ate_draws, b.groups[g].ate_draws);
}

TEST(CausalConfig, Validation) {
    CausalConfig cfg;
    cfg.ps_lo = 0.6;
    cfg.ps_hi = 0.4;
    EXPECT_THROW(cfg.validate(), UsageError);
    cfg = CausalConfig{};
    cfg.mcid = -1.0;
    EXPECT_THROW(cfg.validate(), UsageError);
}

}  // namespace
}  // namespace causal_trees
