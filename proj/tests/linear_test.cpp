#include "causal_trees/linear.hpp"

#include <random>

#include <gtest/gtest.h>

namespace causal_trees {
namespace {

DesignMatrix Matrix(const Eigen::MatrixXd& values, std::vector<std::string> names) {
    DesignMatrix dm;
    dm.values = values;
    dm.column_names = std::move(names);
    dm.row_index.resize(static_cast<std::size_t>(values.rows()));
    return dm;
}

// 30/70 events/non-events among exposed, 10/90 among unexposed.
void TwoByTwo(Eigen::MatrixXd& x, std::vector<double>& y) {
    x.resize(200, 1);
    y.clear();
    for (int i = 0; i < 200; ++i) {
        const bool exposed = i < 100;
        const int k = exposed ? i : i - 100;
        x(i, 0) = exposed ? 1.0 : 0.0;
        y.push_back(exposed ? (k < 30 ? 1.0 : 0.0) : (k < 10 ? 1.0 : 0.0));
    }
}

TEST(FitWeightedLogistic, TwoByTwoOddsRatio) {
    Eigen::MatrixXd x;
    std::vector<double> y;
    TwoByTwo(x, y);
    const auto fit = fit_weighted_logistic(Matrix(x, {"exposed"}), y);
    EXPECT_TRUE(fit.converged);
    const double or_exact = (30.0 * 90.0) / (70.0 * 10.0);
    EXPECT_NEAR(std::exp(fit.coefficients[1]), or_exact, 1e-6);
    EXPECT_NEAR(fit.coefficients[1], std::log(or_exact), 1e-8);
    EXPECT_NEAR(fit.coefficients[0], std::log(10.0 / 90.0), 1e-8);
    EXPECT_NEAR(effect_ci(fit, "exposed").estimate, 3.857142857142857, 1e-6);
}

TEST(FitWeightedLogistic, SandwichMatchesClosedFormOnSaturatedDesign) {
    Eigen::MatrixXd x;
    std::vector<double> y;
    TwoByTwo(x, y);
    const auto fit = fit_weighted_logistic(Matrix(x, {"exposed"}), y);
    // Saturated binary model: robust variance equals the Woolf variance 1/a + 1/b + 1/c + 1/d.
    EXPECT_NEAR(fit.covariance(1, 1), 1.0 / 30 + 1.0 / 70 + 1.0 / 10 + 1.0 / 90, 1e-8);
}

TEST(FitWeightedLogistic, WeightInvariances) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uw(0.2, 3.0);
    const int n = 300;
    Eigen::MatrixXd x(n, 2);
    std::vector<double> y(n), w(n), w_scaled(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = nd(rng);
        x(i, 1) = nd(rng) > 0.0;
        y[static_cast<std::size_t>(i)] = uniform01(rng) < expit(-0.5 + 0.8 * x(i, 0) + 0.6 * x(i, 1));
        w[static_cast<std::size_t>(i)] = uw(rng);
        w_scaled[static_cast<std::size_t>(i)] = 7.3 * w[static_cast<std::size_t>(i)];
    }
    const auto X = Matrix(x, {"a", "b"});
    const auto base = fit_weighted_logistic(X, y, w);
    const auto scaled = fit_weighted_logistic(X, y, w_scaled);
    for (Eigen::Index j = 0; j < 3; ++j) {
        EXPECT_NEAR(scaled.coefficients[j], base.coefficients[j], 1e-10);
        EXPECT_NEAR(scaled.standard_error(static_cast<std::size_t>(j)), base.standard_error(static_cast<std::size_t>(j)), 1e-10);
    }

    Eigen::MatrixXd x2(2 * n, 2);
    std::vector<double> y2, w2;
    for (int i = 0; i < n; ++i) {
        x2.row(2 * i) = x.row(i);
        x2.row(2 * i + 1) = x.row(i);
        for (int r = 0; r < 2; ++r) {
            y2.push_back(y[static_cast<std::size_t>(i)]);
            w2.push_back(w[static_cast<std::size_t>(i)] / 2.0);
        }
    }
    const auto dup = fit_weighted_logistic(Matrix(x2, {"a", "b"}), y2, w2);
    for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(dup.coefficients[j], base.coefficients[j], 1e-10);
}

TEST(FitWeightedLogistic, IndependentOutcomeWithinTwoSe) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd;
    const int n = 500, reps = 100;
    int inside = 0;
    for (int rep = 0; rep < reps; ++rep) {
        Eigen::MatrixXd x(n, 3);
        std::vector<double> y(n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < 3; ++j) x(i, j) = nd(rng);
            y[static_cast<std::size_t>(i)] = uniform01(rng) < 0.3;
        }
        const auto fit = fit_weighted_logistic(Matrix(x, {"a", "b", "c"}), y);
        for (std::size_t j = 1; j < 4; ++j)
            inside += std::abs(fit.coefficients[static_cast<Eigen::Index>(j)]) <= 2.0 * fit.standard_error(j);
        for (std::size_t i = 1; i < fit.log_likelihood.size(); ++i)
            EXPECT_GE(fit.log_likelihood[i], fit.log_likelihood[i - 1]);
    }
    EXPECT_GE(inside, static_cast<int>(0.9 * 3 * reps));
}

TEST(FitWeightedLogistic, SeparationAndSingleClass) {
    Eigen::MatrixXd x(40, 1);
    std::vector<double> y(40);
    for (int i = 0; i < 40; ++i) {
        x(i, 0) = i - 19.5;
        y[static_cast<std::size_t>(i)] = i >= 20;
    }
    EXPECT_THROW(fit_weighted_logistic(Matrix(x, {"x"}), y), SeparationError);
    EXPECT_THROW(fit_weighted_logistic(Matrix(x, {"x"}), std::vector<double>(40, 1.0)), SeparationError);
}

TEST(FitWeightedLogistic, RankDeficiencyNamesColumn) {
    Eigen::MatrixXd x(50, 2);
    std::vector<double> y(50);
    for (int i = 0; i < 50; ++i) {
        x(i, 0) = i % 7;
        x(i, 1) = 2.0 * (i % 7);
        y[static_cast<std::size_t>(i)] = i % 3 == 0;
    }
    try {
        fit_weighted_logistic(Matrix(x, {"a", "twice_a"}), y);
        FAIL() << "expected RankError";
    } catch (const RankError& e) {
        ASSERT_EQ(e.columns().size(), 1u);
        EXPECT_TRUE(e.columns()[0] == "a" || e.columns()[0] == "twice_a");
    }
}

// ---------------------------------------------------------------------------

TEST(FitWeightedGaussian, ExactFit) {
    Eigen::MatrixXd x(10, 1);
    std::vector<double> y(10);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = i;
        y[static_cast<std::size_t>(i)] = 2.0 * i;
    }
    const auto fit = fit_weighted_gaussian(Matrix(x, {"x"}), y);
    EXPECT_NEAR(fit.coefficients[1], 2.0, 1e-12);
    EXPECT_NEAR(fit.coefficients[0], 0.0, 1e-12);
    EXPECT_NEAR(fit.standard_error(1), 0.0, 1e-12);
}

TEST(FitWeightedGaussian, NoisySlopeAndNormalEquations) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> uw(0.5, 2.0);
    const int n = 2000;
    Eigen::MatrixXd x(n, 1);
    std::vector<double> y(n), w(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = nd(rng);
        y[static_cast<std::size_t>(i)] = 3.0 + 1.5 * x(i, 0) + nd(rng);
        w[static_cast<std::size_t>(i)] = uw(rng);
    }
    const auto fit = fit_weighted_gaussian(Matrix(x, {"x"}), y, w);
    EXPECT_NEAR(fit.coefficients[1], 1.5, 0.1);

    Eigen::MatrixXd A(n, 2);
    A.col(0).setOnes();
    A.col(1) = x.col(0);
    const Eigen::VectorXd W = Eigen::Map<Eigen::VectorXd>(w.data(), n);
    const Eigen::VectorXd Y = Eigen::Map<Eigen::VectorXd>(y.data(), n);
    const Eigen::Vector2d normal = (A.transpose() * W.asDiagonal() * A).inverse() * (A.transpose() * W.asDiagonal() * Y);
    EXPECT_NEAR(fit.coefficients[0], normal[0], 1e-8);
    EXPECT_NEAR(fit.coefficients[1], normal[1], 1e-8);
}

TEST(FitWeightedGaussian, ConcentratedWeightsInterpolate) {
    Eigen::MatrixXd x(6, 1);
    x << 0, 1, 2, 3, 4, 5;
    const std::vector<double> y = {1.0, 9.0, -4.0, 7.0, 2.0, 11.0};
    const std::vector<double> w = {1e12, 1e-6, 1e-6, 1e-6, 1e-6, 1e12};
    const auto fit = fit_weighted_gaussian(Matrix(x, {"x"}), y, w);
    EXPECT_NEAR(fit.coefficients[0], 1.0, 1e-6);
    EXPECT_NEAR(fit.coefficients[0] + 5.0 * fit.coefficients[1], 11.0, 1e-6);
}

TEST(FitWeightedGaussian, RankDeficiency) {
    Eigen::MatrixXd x(5, 2);
    x << 1, 0, 0, 1, 1, 0, 0, 1, 1, 0;
    const std::vector<double> y = {1, 2, 3, 4, 5};
    EXPECT_THROW(fit_weighted_gaussian(Matrix(x, {"a", "b"}), y), RankError);
    Eigen::MatrixXd tiny(2, 2);
    tiny << 1, 2, 3, 5;
    EXPECT_THROW(fit_weighted_gaussian(Matrix(tiny, {"a", "b"}), std::vector<double>{1, 2}), RankError);
}

// ---------------------------------------------------------------------------

TEST(EffectCi, Examples) {
    const auto a = wald_interval(Family::logistic, 0.0, 0.5);
    EXPECT_DOUBLE_EQ(a.estimate, 1.0);
    EXPECT_NEAR(a.lo, std::exp(-1.959963984540054 * 0.5), 1e-12);
    EXPECT_NEAR(a.hi, std::exp(1.959963984540054 * 0.5), 1e-12);
    EXPECT_NEAR(a.lo, 0.375, 5e-4);
    EXPECT_NEAR(a.hi, 2.664, 5e-4);

    const auto b = wald_interval(Family::logistic, std::log(2.0), 0.0);
    EXPECT_NEAR(b.lo, 2.0, 1e-12);
    EXPECT_NEAR(b.hi, 2.0, 1e-12);

    const auto c = wald_interval(Family::gaussian, -2.1, 0.9184);
    EXPECT_NEAR(c.lo, -3.9, 0.05);
    EXPECT_NEAR(c.hi, -0.3, 0.05);

    LinearFit fit;
    fit.names = {"(Intercept)", "x"};
    fit.coefficients = Eigen::Vector2d(0.0, 1.0);
    fit.covariance = Eigen::Matrix2d::Identity();
    EXPECT_THROW(effect_ci(fit, "z"), UsageError);
}

}  // namespace
}  // namespace causal_trees
