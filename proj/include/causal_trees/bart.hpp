#pragma once

// Sum-of-trees regression fitted by Metropolis-within-Gibbs (Bayesian
// backfitting), for continuous responses and, through latent-variable
// augmentation, binary responses under a probit link.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "causal_trees/dataset.hpp"
#include "causal_trees/errors.hpp"
#include "causal_trees/stats.hpp"

namespace causal_trees {

struct BartHyperparams {
    int n_trees = 200;
    double alpha = 0.95;  // depth prior: P(split at depth d) = alpha (1 + d)^-beta
    double beta = 2.0;
    double k = 2.0;  // leaf prior scale
    double nu = 3.0;  // sigma prior degrees of freedom
    double q = 0.90;  // sigma prior quantile
    int n_chains = 4;
    int draws_per_chain = 1000;
    int burn_in = 1500;
    int n_cutpoints = 100;
    std::uint64_t seed = 0;

    // 2 chains x 250 draws, 500 burn-in, 50 trees.
    static BartHyperparams fast() {
        BartHyperparams hp;
        hp.n_trees = 50;
        hp.n_chains = 2;
        hp.draws_per_chain = 250;
        hp.burn_in = 500;
        return hp;
    }

    void validate() const {
        if (n_trees < 1) throw UsageError("n_trees must be positive");
        if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("alpha must lie in (0,1)");
        if (!(beta >= 0.0)) throw UsageError("beta must be nonnegative");
        if (!(k > 0.0)) throw UsageError("k must be positive");
        if (!(nu > 0.0)) throw UsageError("nu must be positive");
        if (!(q > 0.0 && q < 1.0)) throw UsageError("q must lie in (0,1)");
        if (n_chains < 1) throw UsageError("n_chains must be positive");
        if (draws_per_chain < 1) throw UsageError("draws_per_chain must be positive");
        if (burn_in < 0) throw UsageError("burn_in must be nonnegative");
        if (n_cutpoints < 1) throw UsageError("n_cutpoints must be positive");
    }
};

// ---------------------------------------------------------------------------
// Response standardization

struct StandardizedResponse {
    std::vector<double> values;
    double shift = 0.0;
    double scale = 1.0;

    double restore(double v) const { return shift + scale * v; }
};

// Maps y affinely onto [-0.5, 0.5] using the midrange and range; a constant
// response keeps scale 1.
inline StandardizedResponse standardize_response(std::span<const double> y) {
    if (y.empty()) throw FitError("cannot standardize an empty response");
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    StandardizedResponse out;
    out.shift = 0.5 * (*hi + *lo);
    out.scale = *hi > *lo ? *hi - *lo : 1.0;
    out.values.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out.values[i] = (y[i] - out.shift) / out.scale;
    return out;
}

// ---------------------------------------------------------------------------
// Cutpoint grid and binned training data

class CutGrid {
public:
    CutGrid() = default;

    // n_cuts equally spaced interior points over each column's observed range.
    CutGrid(const Eigen::MatrixXd& X, int n_cuts) : n_vars_(static_cast<int>(X.cols())), n_cuts_(n_cuts) {
        cuts_.resize(static_cast<std::size_t>(n_vars_) * static_cast<std::size_t>(n_cuts_));
        for (int v = 0; v < n_vars_; ++v) {
            const double lo = X.rows() ? X.col(v).minCoeff() : 0.0;
            const double hi = X.rows() ? X.col(v).maxCoeff() : 0.0;
            for (int c = 0; c < n_cuts_; ++c)
                cuts_[index(v, c)] = lo + (hi - lo) * static_cast<double>(c + 1) / static_cast<double>(n_cuts_ + 1);
        }
    }

    int n_vars() const noexcept { return n_vars_; }
    int n_cuts() const noexcept { return n_cuts_; }
    double n_rules() const noexcept { return static_cast<double>(n_vars_) * static_cast<double>(n_cuts_); }
    double value(int var, int cut) const { return cuts_[index(var, cut)]; }

    // Number of cutpoints strictly below x, so that x <= value(var, c) iff bin <= c.
    int bin(int var, double x) const {
        const auto first = cuts_.begin() + static_cast<std::ptrdiff_t>(index(var, 0));
        return static_cast<int>(std::lower_bound(first, first + n_cuts_, x) - first);
    }

private:
    std::size_t index(int var, int cut) const {
        return static_cast<std::size_t>(var) * static_cast<std::size_t>(n_cuts_) + static_cast<std::size_t>(cut);
    }

    int n_vars_ = 0;
    int n_cuts_ = 0;
    std::vector<double> cuts_;
};

// Column-major bin indices of a training matrix against a grid.
class BinnedMatrix {
public:
    BinnedMatrix(const Eigen::MatrixXd& X, const CutGrid& grid)
        : rows_(static_cast<std::size_t>(X.rows())), bins_(rows_ * static_cast<std::size_t>(X.cols())) {
        for (int v = 0; v < grid.n_vars(); ++v)
            for (std::size_t i = 0; i < rows_; ++i)
                bins_[static_cast<std::size_t>(v) * rows_ + i] =
                    static_cast<std::uint16_t>(grid.bin(v, X(static_cast<Eigen::Index>(i), v)));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::span<const std::uint16_t> column(int var) const {
        return {bins_.data() + static_cast<std::size_t>(var) * rows_, rows_};
    }
    int at(std::size_t row, int var) const { return bins_[static_cast<std::size_t>(var) * rows_ + row]; }

private:
    std::size_t rows_;
    std::vector<std::uint16_t> bins_;
};

// ---------------------------------------------------------------------------
// Trees

struct TreeNode {
    int split_column = -1;
    int cut = -1;  // index into the cutpoint grid
    double split_value = 0.0;
    int left = -1;
    int right = -1;
    int parent = -1;
    int depth = 0;
    double mu = 0.0;
    bool live = true;

    bool is_leaf() const noexcept { return left < 0; }
};

// Binary tree stored in a node pool; index 0 is the root. Rows go left when
// x[split_column] <= split_value.
class Tree {
public:
    Tree() : nodes_(1) {}

    static constexpr int kRoot = 0;

    const TreeNode& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }
    TreeNode& node(int i) { return nodes_[static_cast<std::size_t>(i)]; }
    std::size_t capacity() const noexcept { return nodes_.size(); }
    bool is_stump() const { return nodes_[kRoot].is_leaf(); }

    std::vector<int> leaves() const {
        std::vector<int> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].live && nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
        return out;
    }

    std::vector<int> internal_nodes() const {
        std::vector<int> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].live && !nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
        return out;
    }

    // Internal nodes whose two children are both leaves.
    std::vector<int> prunable_nodes() const {
        std::vector<int> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            if (n.live && !n.is_leaf() && node(n.left).is_leaf() && node(n.right).is_leaf())
                out.push_back(static_cast<int>(i));
        }
        return out;
    }

    std::size_t n_leaves() const { return leaves().size(); }

    // Splits a leaf; returns the (left, right) child indices.
    std::pair<int, int> grow(int leaf, int column, int cut, double split_value) {
        const int l = allocate();
        const int r = allocate();
        auto& n = node(leaf);
        n.split_column = column;
        n.cut = cut;
        n.split_value = split_value;
        n.left = l;
        n.right = r;
        for (int c : {l, r}) {
            auto& child = node(c);
            child = TreeNode{};
            child.parent = leaf;
            child.depth = n.depth + 1;
        }
        return {l, r};
    }

    // Collapses an internal node whose children are leaves.
    void prune(int i) {
        auto& n = node(i);
        node(n.left).live = false;
        node(n.right).live = false;
        n.left = n.right = -1;
        n.split_column = n.cut = -1;
        n.split_value = 0.0;
        n.mu = 0.0;
    }

    void set_rule(int i, int column, int cut, double split_value) {
        auto& n = node(i);
        n.split_column = column;
        n.cut = cut;
        n.split_value = split_value;
    }

    // Leaf reached by a row given through an accessor x(column).
    template <typename RowAccess>
    int route(RowAccess&& x, int from = kRoot) const {
        int i = from;
        while (!node(i).is_leaf()) {
            const auto& n = node(i);
            i = x(n.split_column) <= n.split_value ? n.left : n.right;
        }
        return i;
    }

    int route_binned(const BinnedMatrix& bins, std::size_t row, int from = kRoot) const {
        int i = from;
        while (!node(i).is_leaf()) {
            const auto& n = node(i);
            i = bins.at(row, n.split_column) <= n.cut ? n.left : n.right;
        }
        return i;
    }

    // Canonical topology string: "(col:cut L R)" for splits, "." for leaves.
    std::string topology(int i = kRoot) const {
        const auto& n = node(i);
        if (n.is_leaf()) return ".";
        return "(" + std::to_string(n.split_column) + ":" + std::to_string(n.cut) + " " + topology(n.left) + " " +
               topology(n.right) + ")";
    }

private:
    int allocate() {
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            if (!nodes_[i].live) {
                nodes_[i] = TreeNode{};
                return static_cast<int>(i);
            }
        nodes_.emplace_back();
        return static_cast<int>(nodes_.size() - 1);
    }

    std::vector<TreeNode> nodes_;
};

// Sum of routed leaf values per row of X.
inline Eigen::VectorXd predict_trees(std::span<const Tree> trees, const Eigen::MatrixXd& X) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(X.rows());
    for (const auto& tree : trees) {
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            const int leaf = tree.route([&](int c) { return X(i, c); });
            out[i] += tree.node(leaf).mu;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Priors and conjugate pieces

struct TreePrior {
    double alpha = 0.95;
    double beta = 2.0;
    double n_rules = 1.0;  // split rules available per node (columns x cutpoints)

    double split_probability(int depth) const { return alpha * std::pow(1.0 + depth, -beta); }
};

// log p(T): depth-dependent split probabilities with a uniform rule prior.
inline double log_tree_prior(const Tree& tree, const TreePrior& prior) {
    double lp = 0.0;
    for (std::size_t i = 0; i < tree.capacity(); ++i) {
        const auto& n = tree.node(static_cast<int>(i));
        if (!n.live) continue;
        const double ps = prior.split_probability(n.depth);
        if (n.is_leaf())
            lp += std::log1p(-ps);
        else
            lp += std::log(ps) - std::log(prior.n_rules);
    }
    return lp;
}

struct LeafStats {
    double sum_w = 0.0;
    double sum_wr = 0.0;
    std::size_t count = 0;

    void add(double w, double r) {
        sum_w += w;
        sum_wr += w * r;
        ++count;
    }
};

// Topology-dependent part of a leaf's log marginal likelihood; the terms
// depending only on the data cancel in any Metropolis-Hastings ratio.
inline double leaf_log_marginal_kernel(const LeafStats& s, double sigma2, double sigma_mu2) {
    const double precision = s.sum_w / sigma2 + 1.0 / sigma_mu2;
    const double b = s.sum_wr / sigma2;
    return -0.5 * std::log(sigma_mu2 * precision) + 0.5 * b * b / precision;
}

// log of the integral over mu of prod_i N(r_i | mu, sigma^2 / w_i) N(mu | 0, sigma_mu^2).
inline double leaf_log_marginal(std::span<const double> residuals, std::span<const double> weights, double sigma,
                                double sigma_mu) {
    if (residuals.empty()) throw SupportError("leaf has no observations");
    if (residuals.size() != weights.size()) throw UsageError("residual and weight lengths differ");
    if (!(sigma > 0.0) || !(sigma_mu > 0.0)) throw UsageError("sigma and sigma_mu must be positive");
    const double sigma2 = sigma * sigma;
    LeafStats s;
    double log_w = 0.0, sum_wrr = 0.0;
    for (std::size_t i = 0; i < residuals.size(); ++i) {
        s.add(weights[i], residuals[i]);
        log_w += std::log(weights[i]);
        sum_wrr += weights[i] * residuals[i] * residuals[i];
    }
    const double n = static_cast<double>(residuals.size());
    return 0.5 * log_w - 0.5 * n * std::log(2.0 * kPi * sigma2) - 0.5 * sum_wrr / sigma2 +
           leaf_log_marginal_kernel(s, sigma2, sigma_mu * sigma_mu);
}

struct LeafPosterior {
    double mean;
    double variance;
};

inline LeafPosterior leaf_posterior(const LeafStats& s, double sigma2, double sigma_mu2) {
    const double precision = s.sum_w / sigma2 + 1.0 / sigma_mu2;
    return {(s.sum_wr / sigma2) / precision, 1.0 / precision};
}

// sigma^2 ~ scaled-inverse-chi^2(nu + n, (nu lambda + sum w r^2) / (nu + n)).
inline double draw_sigma(std::span<const double> residuals, std::span<const double> weights, double nu,
                         double lambda, Rng& rng) {
    double ss = 0.0;
    for (std::size_t i = 0; i < residuals.size(); ++i) ss += weights[i] * residuals[i] * residuals[i];
    const double df = nu + static_cast<double>(residuals.size());
    return std::sqrt((nu * lambda + ss) / chi_squared_draw(rng, df));
}

// ---------------------------------------------------------------------------
// Tree proposals

enum class Move { grow, prune, change };

inline std::string to_string(Move m) {
    switch (m) {
        case Move::grow: return "grow";
        case Move::prune: return "prune";
        case Move::change: return "change";
    }
    return "grow";
}

struct Proposal {
    Move move = Move::grow;
    Tree candidate;
    int node = -1;  // leaf grown, node pruned, or node whose rule changed
    double log_proposal_ratio = 0.0;  // log q(candidate -> tree) - log q(tree -> candidate)
};

inline constexpr double kGrowProb = 0.25;
inline constexpr double kPruneProb = 0.25;

inline double grow_probability(const Tree& t) { return t.is_stump() ? 1.0 : kGrowProb; }

// GROW / PRUNE / CHANGE with probabilities 0.25 / 0.25 / 0.5; a stump always grows.
inline Proposal propose_tree_move(const Tree& tree, const CutGrid& grid, Rng& rng) {
    Proposal p;
    p.candidate = tree;
    const double log_rules = std::log(grid.n_rules());
    const double u = tree.is_stump() ? 0.0 : uniform01(rng);
    if (u < kGrowProb || tree.is_stump()) {
        const auto leaves = tree.leaves();
        p.move = Move::grow;
        p.node = leaves[uniform_index(rng, leaves.size())];
        const int col = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(grid.n_vars())));
        const int cut = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(grid.n_cuts())));
        p.candidate.grow(p.node, col, cut, grid.value(col, cut));
        const double nog_after = static_cast<double>(p.candidate.prunable_nodes().size());
        p.log_proposal_ratio = std::log(kPruneProb / nog_after) -
                               (std::log(grow_probability(tree) / static_cast<double>(leaves.size())) - log_rules);
    } else if (u < kGrowProb + kPruneProb) {
        const auto nogs = tree.prunable_nodes();
        p.move = Move::prune;
        p.node = nogs[uniform_index(rng, nogs.size())];
        p.candidate.prune(p.node);
        const double leaves_after = static_cast<double>(p.candidate.n_leaves());
        p.log_proposal_ratio = (std::log(grow_probability(p.candidate) / leaves_after) - log_rules) -
                               std::log(kPruneProb / static_cast<double>(nogs.size()));
    } else {
        const auto internal = tree.internal_nodes();
        p.move = Move::change;
        p.node = internal[uniform_index(rng, internal.size())];
        const int col = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(grid.n_vars())));
        const int cut = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(grid.n_cuts())));
        p.candidate.set_rule(p.node, col, cut, grid.value(col, cut));
        p.log_proposal_ratio = 0.0;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Single-tree kernel: one MH topology step followed by conjugate leaf draws,
// against fixed partial residuals.

class TreeKernel {
public:
    TreeKernel(const BinnedMatrix& bins, const CutGrid& grid, TreePrior prior)
        : bins_(&bins), grid_(&grid), prior_(prior), scratch_(bins.rows()) {}

    // Returns the move attempted and whether it was accepted. leaf_of_row is
    // kept in sync with the tree.
    std::pair<Move, bool> metropolis_step(Tree& tree, std::vector<int>& leaf_of_row, std::span<const double> r,
                                          std::span<const double> w, double sigma2, double sigma_mu2, Rng& rng) {
        Proposal p = propose_tree_move(tree, *grid_, rng);
        const std::size_t n = bins_->rows();
        double delta = 0.0;
        bool empty = false;
        switch (p.move) {
            case Move::grow: {
                const auto& split = p.candidate.node(p.node);
                const auto bins = bins_->column(split.split_column);
                LeafStats parent, left, right;
                for (std::size_t i = 0; i < n; ++i) {
                    if (leaf_of_row[i] != p.node) continue;
                    parent.add(w[i], r[i]);
                    (bins[i] <= split.cut ? left : right).add(w[i], r[i]);
                }
                empty = left.count == 0 || right.count == 0;
                if (!empty)
                    delta = leaf_log_marginal_kernel(left, sigma2, sigma_mu2) +
                            leaf_log_marginal_kernel(right, sigma2, sigma_mu2) -
                            leaf_log_marginal_kernel(parent, sigma2, sigma_mu2);
                break;
            }
            case Move::prune: {
                const auto& n_old = tree.node(p.node);
                LeafStats merged, left, right;
                for (std::size_t i = 0; i < n; ++i) {
                    if (leaf_of_row[i] == n_old.left) {
                        left.add(w[i], r[i]);
                        merged.add(w[i], r[i]);
                    } else if (leaf_of_row[i] == n_old.right) {
                        right.add(w[i], r[i]);
                        merged.add(w[i], r[i]);
                    }
                }
                delta = leaf_log_marginal_kernel(merged, sigma2, sigma_mu2) -
                        leaf_log_marginal_kernel(left, sigma2, sigma_mu2) -
                        leaf_log_marginal_kernel(right, sigma2, sigma_mu2);
                break;
            }
            case Move::change: {
                in_subtree_.assign(tree.capacity(), 0);
                mark_subtree(tree, p.node);
                old_stats_.assign(tree.capacity(), LeafStats{});
                new_stats_.assign(tree.capacity(), LeafStats{});
                for (std::size_t i = 0; i < n; ++i) {
                    scratch_[i] = leaf_of_row[i];
                    if (!in_subtree_[static_cast<std::size_t>(leaf_of_row[i])]) continue;
                    old_stats_[static_cast<std::size_t>(leaf_of_row[i])].add(w[i], r[i]);
                    const int nl = p.candidate.route_binned(*bins_, i, p.node);
                    scratch_[i] = nl;
                    new_stats_[static_cast<std::size_t>(nl)].add(w[i], r[i]);
                }
                for (std::size_t j = 0; j < tree.capacity(); ++j) {
                    if (!in_subtree_[j] || !tree.node(static_cast<int>(j)).is_leaf()) continue;
                    if (new_stats_[j].count == 0) {
                        empty = true;
                        break;
                    }
                    delta += leaf_log_marginal_kernel(new_stats_[j], sigma2, sigma_mu2) -
                             leaf_log_marginal_kernel(old_stats_[j], sigma2, sigma_mu2);
                }
                break;
            }
        }
        if (empty) return {p.move, false};
        const double log_ratio =
            delta + log_tree_prior(p.candidate, prior_) - log_tree_prior(tree, prior_) + p.log_proposal_ratio;
        if (!(std::log(uniform01(rng)) < log_ratio)) return {p.move, false};

        switch (p.move) {
            case Move::grow: {
                const auto& split = p.candidate.node(p.node);
                const auto bins = bins_->column(split.split_column);
                for (std::size_t i = 0; i < n; ++i)
                    if (leaf_of_row[i] == p.node) leaf_of_row[i] = bins[i] <= split.cut ? split.left : split.right;
                break;
            }
            case Move::prune: {
                const auto& n_old = tree.node(p.node);
                for (std::size_t i = 0; i < n; ++i)
                    if (leaf_of_row[i] == n_old.left || leaf_of_row[i] == n_old.right) leaf_of_row[i] = p.node;
                break;
            }
            case Move::change: std::copy(scratch_.begin(), scratch_.end(), leaf_of_row.begin()); break;
        }
        tree = std::move(p.candidate);
        return {p.move, true};
    }

    // Gibbs draw of every leaf mu from its conjugate normal posterior.
    void draw_leaf_values(Tree& tree, const std::vector<int>& leaf_of_row, std::span<const double> r,
                          std::span<const double> w, double sigma2, double sigma_mu2, Rng& rng) {
        new_stats_.assign(tree.capacity(), LeafStats{});
        for (std::size_t i = 0; i < leaf_of_row.size(); ++i)
            new_stats_[static_cast<std::size_t>(leaf_of_row[i])].add(w[i], r[i]);
        for (int leaf : tree.leaves()) {
            const auto& s = new_stats_[static_cast<std::size_t>(leaf)];
            if (s.count == 0) throw SupportError("empty leaf in draw_leaf_values");
            const auto post = leaf_posterior(s, sigma2, sigma_mu2);
            tree.node(leaf).mu = post.mean + std::sqrt(post.variance) * standard_normal(rng);
        }
    }

private:
    void mark_subtree(const Tree& t, int i) {
        in_subtree_[static_cast<std::size_t>(i)] = 1;
        const auto& n = t.node(i);
        if (n.is_leaf()) return;
        mark_subtree(t, n.left);
        mark_subtree(t, n.right);
    }

    const BinnedMatrix* bins_;
    const CutGrid* grid_;
    TreePrior prior_;
    std::vector<int> scratch_;
    std::vector<char> in_subtree_;
    std::vector<LeafStats> old_stats_;
    std::vector<LeafStats> new_stats_;
};

// Single-tree draw of leaf values (convenience wrapper that routes rows itself).
inline Tree draw_leaf_values(const Tree& tree, const Eigen::MatrixXd& X, std::span<const double> residuals,
                             std::span<const double> weights, double sigma, double sigma_mu, Rng& rng) {
    Tree out = tree;
    std::vector<LeafStats> stats(tree.capacity());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const int leaf = tree.route([&](int c) { return X(i, c); });
        stats[static_cast<std::size_t>(leaf)].add(weights[static_cast<std::size_t>(i)],
                                                  residuals[static_cast<std::size_t>(i)]);
    }
    for (int leaf : tree.leaves()) {
        const auto& s = stats[static_cast<std::size_t>(leaf)];
        if (s.count == 0) throw SupportError("empty leaf in draw_leaf_values");
        const auto post = leaf_posterior(s, sigma * sigma, sigma_mu * sigma_mu);
        out.node(leaf).mu = post.mean + std::sqrt(post.variance) * standard_normal(rng);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chains

enum class ResponseModel { continuous, probit };

struct ChainSetup {
    ResponseModel model = ResponseModel::continuous;
    double sigma_mu = 1.0;  // leaf prior sd on the fitting scale
    double lambda = 1.0;  // sigma prior scale (continuous only)
    double nu = 3.0;
    double initial_sigma = 1.0;
    double offset = 0.0;  // probit: latent mean offset
};

// State of one Markov chain. For continuous models the target is the
// standardized response; for probit it is the latent variable minus offset.
class ChainSampler {
public:
    ChainSampler(const BinnedMatrix& bins, const CutGrid& grid, std::span<const double> response,
                 std::span<const double> weights, int n_trees, TreePrior prior, ChainSetup setup, Rng rng)
        : bins_(&bins),
          response_(response.begin(), response.end()),
          weights_(weights.begin(), weights.end()),
          setup_(setup),
          kernel_(bins, grid, prior),
          rng_(std::move(rng)),
          trees_(static_cast<std::size_t>(n_trees)),
          leaf_of_row_(static_cast<std::size_t>(n_trees), std::vector<int>(bins.rows(), Tree::kRoot)),
          target_(bins.rows(), 0.0),
          fit_(bins.rows(), 0.0),
          residual_(bins.rows(), 0.0),
          partial_(bins.rows(), 0.0),
          sigma_(setup.model == ResponseModel::probit ? 1.0 : setup.initial_sigma) {
        const std::size_t n = bins.rows();
        double start = 0.0;
        if (setup_.model == ResponseModel::continuous) {
            target_ = response_;
            start = weighted_mean(target_, weights_) / static_cast<double>(n_trees);
        } else {
            for (std::size_t i = 0; i < n; ++i) target_[i] = response_[i] > 0.5 ? 1.0 : -1.0;
        }
        for (auto& t : trees_) t.node(Tree::kRoot).mu = start;
        for (std::size_t i = 0; i < n; ++i) {
            fit_[i] = start * static_cast<double>(n_trees);
            residual_[i] = target_[i] - fit_[i];
        }
    }

    void sweep() {
        const std::size_t n = bins_->rows();
        if (setup_.model == ResponseModel::probit) {
            for (std::size_t i = 0; i < n; ++i) {
                const double sd = 1.0 / std::sqrt(weights_[i]);
                const double latent = truncated_normal_by_sign(setup_.offset + fit_[i], sd, response_[i] > 0.5, rng_);
                target_[i] = latent - setup_.offset;
                residual_[i] = target_[i] - fit_[i];
            }
        }
        const double sigma2 = sigma_ * sigma_;
        const double sigma_mu2 = setup_.sigma_mu * setup_.sigma_mu;
        for (std::size_t t = 0; t < trees_.size(); ++t) {
            auto& tree = trees_[t];
            auto& leaves = leaf_of_row_[t];
            for (std::size_t i = 0; i < n; ++i) {
                const double old = tree.node(leaves[i]).mu;
                partial_[i] = residual_[i] + old;
                fit_[i] -= old;
            }
            kernel_.metropolis_step(tree, leaves, partial_, weights_, sigma2, sigma_mu2, rng_);
            kernel_.draw_leaf_values(tree, leaves, partial_, weights_, sigma2, sigma_mu2, rng_);
            for (std::size_t i = 0; i < n; ++i) {
                const double mu = tree.node(leaves[i]).mu;
                residual_[i] = partial_[i] - mu;
                fit_[i] += mu;
            }
        }
        if (setup_.model == ResponseModel::continuous)
            sigma_ = draw_sigma(residual_, weights_, setup_.nu, setup_.lambda, rng_);
    }

    const std::vector<Tree>& trees() const noexcept { return trees_; }
    double sigma() const noexcept { return sigma_; }
    // Ensemble fit on training rows, from the incremental bookkeeping.
    const std::vector<double>& fitted() const noexcept { return fit_; }

    // Ensemble fit recomputed by routing every row through every tree.
    std::vector<double> recompute_fitted() const {
        std::vector<double> out(bins_->rows(), 0.0);
        for (const auto& tree : trees_)
            for (std::size_t i = 0; i < out.size(); ++i) out[i] += tree.node(tree.route_binned(*bins_, i)).mu;
        return out;
    }

private:
    const BinnedMatrix* bins_;
    std::vector<double> response_;
    std::vector<double> weights_;
    ChainSetup setup_;
    TreeKernel kernel_;
    Rng rng_;
    std::vector<Tree> trees_;
    std::vector<std::vector<int>> leaf_of_row_;
    std::vector<double> target_;
    std::vector<double> fit_;
    std::vector<double> residual_;
    std::vector<double> partial_;
    double sigma_;
};

// ---------------------------------------------------------------------------
// Posterior

struct BartPosterior {
    // One (draws x rows) matrix per registered prediction matrix, on the response
    // scale (probabilities for probit fits). Draws are grouped by chain.
    std::vector<Eigen::MatrixXd> predictions;
    std::vector<double> sigma;  // response scale; 1 for probit fits
    std::vector<int> chain;
    BartHyperparams hyperparams;
    ResponseModel model = ResponseModel::continuous;

    std::size_t n_draws() const noexcept { return sigma.size(); }
};

inline const Eigen::MatrixXd& predict_posterior(const BartPosterior& post, std::size_t which_matrix) {
    if (which_matrix >= post.predictions.size())
        throw UsageError("prediction matrix " + std::to_string(which_matrix) + " was not registered at fit time");
    return post.predictions[which_matrix];
}

using MatrixRefs = std::vector<std::reference_wrapper<const DesignMatrix>>;

namespace detail {

// Residual sd of a weighted least-squares fit of y on [1, X] (rank-revealing;
// collinear one-hot blocks are tolerated). Falls back to the weighted sd of y
// when too few residual degrees of freedom remain.
inline double least_squares_sigma(const Eigen::MatrixXd& X, std::span<const double> y, std::span<const double> w) {
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd A(n, X.cols() + 1);
    Eigen::VectorXd b(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double sw = std::sqrt(w[static_cast<std::size_t>(i)]);
        A(i, 0) = sw;
        A.row(i).tail(X.cols()) = sw * X.row(i);
        b[i] = sw * y[static_cast<std::size_t>(i)];
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
    const Eigen::Index rank = qr.rank();
    if (n - rank >= 1) {
        const Eigen::VectorXd resid = b - A * qr.solve(b);
        return std::sqrt(resid.squaredNorm() / static_cast<double>(n - rank));
    }
    const double m = weighted_mean(y, w);
    double ss = 0.0, sw = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        ss += w[i] * (y[i] - m) * (y[i] - m);
        sw += w[i];
    }
    return std::sqrt(ss / sw);
}

inline void check_inputs(const DesignMatrix& X, std::size_t n_response, std::span<const double> weights,
                         const MatrixRefs& predict_on) {
    if (X.rows() != n_response || X.rows() != weights.size())
        throw FitError("design rows, response length and weight length must agree");
    if (X.rows() < 2) throw FitError("at least two rows are required to fit");
    if (X.cols() == 0) throw FitError("design matrix has no columns");
    for (const auto& m : predict_on)
        if (m.get().cols() != X.cols()) throw FitError("prediction matrix column count differs from training");
    for (double w : weights)
        if (!(w > 0.0) || !std::isfinite(w)) throw FitError("weights must be strictly positive and finite");
}

template <typename Transform>
BartPosterior run_chains(const DesignMatrix& X, std::span<const double> response, std::span<const double> weights,
                         const BartHyperparams& hp, const MatrixRefs& predict_on, const ChainSetup& setup,
                         Transform&& to_response_scale, double sigma_scale) {
    const CutGrid grid(X.values, hp.n_cutpoints);
    const BinnedMatrix bins(X.values, grid);
    const TreePrior prior{hp.alpha, hp.beta, grid.n_rules()};
    const std::size_t n_draws = static_cast<std::size_t>(hp.n_chains) * static_cast<std::size_t>(hp.draws_per_chain);

    BartPosterior post;
    post.hyperparams = hp;
    post.model = setup.model;
    post.sigma.assign(n_draws, 1.0);
    post.chain.resize(n_draws);
    for (const auto& m : predict_on)
        post.predictions.emplace_back(static_cast<Eigen::Index>(n_draws), static_cast<Eigen::Index>(m.get().rows()));

    parallel_for(static_cast<std::size_t>(hp.n_chains), [&](std::size_t c) {
        ChainSampler chain(bins, grid, response, weights, hp.n_trees, prior, setup,
                           make_rng(hp.seed, static_cast<std::uint64_t>(c) + 1));
        for (int s = 0; s < hp.burn_in; ++s) chain.sweep();
        for (int d = 0; d < hp.draws_per_chain; ++d) {
            chain.sweep();
            const std::size_t row = c * static_cast<std::size_t>(hp.draws_per_chain) + static_cast<std::size_t>(d);
            post.chain[row] = static_cast<int>(c);
            post.sigma[row] = sigma_scale * chain.sigma();
            for (std::size_t m = 0; m < predict_on.size(); ++m) {
                const Eigen::VectorXd f = predict_trees(chain.trees(), predict_on[m].get().values);
                auto out = post.predictions[m].row(static_cast<Eigen::Index>(row));
                for (Eigen::Index i = 0; i < f.size(); ++i) out[i] = to_response_scale(f[i]);
            }
        }
    });
    return post;
}

}  // namespace detail

// Continuous-response fit. Retained predictions and sigma are on the original
// response scale.
inline BartPosterior fit_bart_continuous(const DesignMatrix& X, std::span<const double> y,
                                         std::span<const double> weights, const BartHyperparams& hp,
                                         const MatrixRefs& predict_on) {
    hp.validate();
    detail::check_inputs(X, y.size(), weights, predict_on);
    const auto standardized = standardize_response(y);
    double sigma_hat = detail::least_squares_sigma(X.values, standardized.values, weights);
    sigma_hat = std::max(sigma_hat, 1e-6);

    ChainSetup setup;
    setup.model = ResponseModel::continuous;
    setup.sigma_mu = 0.5 / (hp.k * std::sqrt(static_cast<double>(hp.n_trees)));
    setup.nu = hp.nu;
    setup.lambda = sigma_hat * sigma_hat * chi_squared_upper_quantile(hp.nu, hp.q) / hp.nu;
    setup.initial_sigma = sigma_hat;
    return detail::run_chains(
        X, standardized.values, weights, hp, predict_on, setup,
        [&](double f) { return standardized.restore(f); }, standardized.scale);
}

// Binary-response fit through probit latent augmentation; retained
// predictions are probabilities Phi(offset + f(x)).
inline BartPosterior fit_bart_probit(const DesignMatrix& X, std::span<const double> z, std::span<const double> weights,
                                     const BartHyperparams& hp, const MatrixRefs& predict_on) {
    hp.validate();
    detail::check_inputs(X, z.size(), weights, predict_on);
    bool has0 = false, has1 = false;
    for (double v : z) {
        if (v == 1.0)
            has1 = true;
        else if (v == 0.0)
            has0 = true;
        else
            throw FitError("probit response must be 0 or 1");
    }
    if (!has0 || !has1) throw FitError("probit response has a single class");

    ChainSetup setup;
    setup.model = ResponseModel::probit;
    setup.sigma_mu = 3.0 / (hp.k * std::sqrt(static_cast<double>(hp.n_trees)));
    setup.offset = normal_quantile(weighted_mean(z, weights));
    const double lo = std::numeric_limits<double>::min();
    const double hi = std::nextafter(1.0, 0.0);
    return detail::run_chains(
        X, z, weights, hp, predict_on, setup,
        [&, lo, hi](double f) { return std::clamp(normal_cdf(setup.offset + f), lo, hi); }, 1.0);
}

}  // namespace causal_trees
