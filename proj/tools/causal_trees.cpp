// causal_trees command-line interface.
//
//   causal_trees causal DATA.csv SCHEMA.json --out-dir DIR [options]
//   causal_trees baseline DATA.csv SCHEMA.json --family logistic --outcome binary --out-dir DIR
//   causal_trees trend fit SERIES.csv --horizon 2030 --out-dir DIR
//   causal_trees trend simulate --k 0.09 --out-dir DIR
//
// Exit codes: 0 success, 2 schema/usage, 3 fit, 4 I/O. Failures print a JSON
// object {"error", "message"} on stderr and leave --out-dir untouched.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "causal_trees/causal.hpp"
#include "causal_trees/dataset.hpp"
#include "causal_trees/linear.hpp"
#include "causal_trees/plot.hpp"
#include "causal_trees/trend.hpp"
#include "causal_trees/version.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace causal_trees;

namespace {

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("IoError", message) {}
};

int exit_code(const Error& e) {
    const auto& k = e.kind();
    if (k == "IoError") return 4;
    if (k == "FitError" || k == "SupportError" || k == "TmleError" || k == "SeparationError" ||
        k == "BootstrapError" || k == "RankError")
        return 3;
    return 2;
}

// ---------------------------------------------------------------------------
// Serialization

std::string number(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void dump(const json& j, std::string& out, int depth) {
    const std::string pad(static_cast<std::size_t>(2 * (depth + 1)), ' ');
    const std::string close(static_cast<std::size_t>(2 * depth), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                out += "{}";
                return;
            }
            out += "{\n";
            bool first = true;
            for (const auto& [key, value] : j.items()) {
                if (!first) out += ",\n";
                first = false;
                out += pad + json(key).dump() + ": ";
                dump(value, out, depth + 1);
            }
            out += "\n" + close + "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                out += "[]";
                return;
            }
            const bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
            if (flat) {
                out += "[";
                for (std::size_t i = 0; i < j.size(); ++i) {
                    if (i) out += ", ";
                    dump(j[i], out, depth + 1);
                }
                out += "]";
                return;
            }
            out += "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) out += ",\n";
                out += pad;
                dump(j[i], out, depth + 1);
            }
            out += "\n" + close + "]";
            return;
        }
        case json::value_t::number_float: out += number(j.get<double>()); return;
        default: out += j.dump(); return;
    }
}

std::string to_text(const json& j) {
    std::string out;
    dump(j, out, 0);
    out += "\n";
    return out;
}

json nullable(std::optional<double> v) { return v && std::isfinite(*v) ? json(*v) : json(nullptr); }

json interval(const Interval& i) { return json::array({i.lo, i.hi}); }

class CsvWriter {
public:
    explicit CsvWriter(std::initializer_list<std::string> header) {
        bool first = true;
        for (const auto& h : header) {
            os_ << (first ? "" : ",") << h;
            first = false;
        }
        os_ << "\n";
    }

    template <typename... Cells>
    void row(const Cells&... cells) {
        bool first = true;
        ((os_ << (first ? "" : ",") << cell(cells), first = false), ...);
        os_ << "\n";
    }

    std::string str() const { return os_.str(); }

private:
    static std::string cell(double v) { return std::isfinite(v) ? number(v) : ""; }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(const std::string& v) { return v; }

    std::ostringstream os_;
};

// ---------------------------------------------------------------------------
// Output staging: everything is rendered in memory and written at the end, so a
// failing command never leaves partial results behind.

class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& f : files_) out.push_back(f.first);
        return out;
    }

    void commit() const {
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw IoError("cannot create output directory '" + dir_.string() + "': " + ec.message());
        for (const auto& [name, content] : files_) {
            const fs::path path = dir_ / name;
            std::ofstream out(path, std::ios::binary);
            out << content;
            if (!out) throw IoError("cannot write '" + path.string() + "'");
        }
    }

private:
    fs::path dir_;
    std::vector<std::pair<std::string, std::string>> files_;
};

std::string slug(const std::string& label) {
    std::string s;
    for (char c : label) s += std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.' ? c : '_';
    return s.empty() ? "_" : s;
}

std::string read_file(const std::string& path, bool schema) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (schema) throw SchemaMismatch("cannot read schema file '" + path + "'");
        throw IoError("cannot read '" + path + "'");
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

Schema read_schema(const std::string& path) {
    json doc;
    try {
        doc = json::parse(read_file(path, true));
    } catch (const json::parse_error& e) {
        throw SchemaMismatch("schema file '" + path + "' is not valid JSON: " + e.what());
    }
    return parse_schema(doc);
}

Dataset read_dataset(const std::string& path, const Schema& schema, bool drop_incomplete) {
    std::istringstream in(read_file(path, false));
    return load_dataset(in, schema, drop_incomplete);
}

TrendSeries read_series(const std::string& path) {
    std::istringstream in(read_file(path, false));
    const auto records = detail::parse_csv(in);
    if (records.size() < 2) throw UsageError("series '" + path + "' has no data rows");
    TrendSeries s;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() < 2) throw UsageError("series '" + path + "' row " + std::to_string(r) + " needs year and value");
        const double year = detail::parse_number(rec[0], r, "year");
        if (year != std::floor(year)) throw UsageError("series '" + path + "' has a non-integer year");
        s.years.push_back(static_cast<int>(year));
        s.values.push_back(detail::parse_number(rec[1], r, "prevalence"));
    }
    s.validate();
    return s;
}

json manifest(const std::string& command, json inputs, json config, std::uint64_t seed, double wall,
              std::vector<std::string> outputs) {
    json m;
    m["command"] = command;
    m["tool_version"] = kVersion;
    m["inputs"] = std::move(inputs);
    m["config"] = std::move(config);
    m["seed"] = seed;
    m["outputs"] = outputs;
    m["wall_time_seconds"] = wall;
    return m;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------------------
// Outcomes

struct OutcomeColumn {
    std::vector<double> values;
    std::optional<std::pair<double, double>> bounds;
    std::string label;
};

OutcomeColumn outcome_column(const Dataset& data, const std::string& mode, const std::string& baseline_col) {
    const auto r = *data.index_of_role(Role::response);
    const auto& rspec = data.spec(r);
    OutcomeColumn out;
    if (mode == "raw" || mode == "binary") {
        out.values = data.column(r);
        out.label = rspec.name;
        if (rspec.kind == Kind::binary) out.bounds = std::make_pair(0.0, 1.0);
        else if (rspec.min && rspec.max && *rspec.min < *rspec.max) out.bounds = std::make_pair(*rspec.min, *rspec.max);
        if (mode == "binary") {
            out.values = binarize_outcome(data.column(r));
            out.bounds = std::make_pair(0.0, 1.0);
        }
        return out;
    }
    if (baseline_col.empty()) throw UsageError("--outcome delta requires --baseline-col");
    const auto b = data.index_of(baseline_col);
    const auto& bspec = data.spec(b);
    if (bspec.role == Role::ignore || bspec.kind != Kind::numeric)
        throw UsageError("baseline column '" + baseline_col + "' must be a loaded numeric column");
    if (rspec.kind != Kind::numeric) throw UsageError("delta outcome needs a numeric response");
    const double lo = std::min(rspec.min.value_or(-HUGE_VAL), bspec.min.value_or(-HUGE_VAL));
    const double hi = std::max(rspec.max.value_or(HUGE_VAL), bspec.max.value_or(HUGE_VAL));
    out.values = delta_outcome(data.column(b), data.column(r), lo, hi);
    out.label = rspec.name + " - " + baseline_col;
    if (std::isfinite(lo) && std::isfinite(hi)) out.bounds = std::make_pair(lo - hi, hi - lo);
    return out;
}

// ---------------------------------------------------------------------------
// causal

struct CausalOptions {
    std::string data, schema, out_dir;
    std::string support = "none";
    double cut = 1.0, p = 0.05, mcid = 1.0;
    bool no_tmle = false, no_ps = false, fast = false, dump_posterior = false, require_complete = false;
    std::optional<int> chains, draws, burnin, trees;
    std::uint64_t seed = 0;
    std::string outcome = "raw", baseline_col;
};

void run_causal(const CausalOptions& o) {
    const auto start = std::chrono::steady_clock::now();
    const auto schema = read_schema(o.schema);
    const auto data = read_dataset(o.data, schema, !o.require_complete);

    CausalConfig cfg;
    cfg.support = o.support == "sd" ? SupportRule::sd : o.support == "chisq" ? SupportRule::chisq : SupportRule::none;
    cfg.sd_cut = o.cut;
    cfg.chisq_p = o.p;
    cfg.use_tmle = !o.no_tmle;
    cfg.use_ps_covariate = !o.no_ps;
    cfg.mcid = o.mcid;
    cfg.hyperparams = o.fast ? BartHyperparams::fast() : BartHyperparams{};
    if (o.chains) cfg.hyperparams.n_chains = *o.chains;
    if (o.draws) cfg.hyperparams.draws_per_chain = *o.draws;
    if (o.burnin) cfg.hyperparams.burn_in = *o.burnin;
    if (o.trees) cfg.hyperparams.n_trees = *o.trees;
    cfg.hyperparams.seed = o.seed;
    cfg.hyperparams.validate();

    const auto outcome = outcome_column(data, o.outcome, o.baseline_col);
    const auto analysis = run_causal_analysis(data, outcome.values, cfg, outcome.bounds);

    Outputs files(o.out_dir);
    json result;
    result["command"] = "causal";
    result["outcome"] = outcome.label;
    result["support_rule"] = to_string(cfg.support);
    result["n"] = data.rows();
    result["dropped_incomplete"] = data.dropped_rows();
    result["outcome_bounds"] = json::array({analysis.outcome_bounds.first, analysis.outcome_bounds.second});
    json groups = json::array();
    for (const auto& g : analysis.groups) {
        json r;
        r["group"] = g.group;
        r["n"] = g.n;
        r["n_treated"] = g.n_treated;
        r["n_control"] = g.n_control;
        r["ate"] = g.ate;
        r["ate_hdi"] = interval(g.ate_hdi);
        r["att"] = nullable(g.att);
        r["att_hdi"] = g.att_hdi ? interval(*g.att_hdi) : json(nullptr);
        r["suppressed_treated"] = g.suppressed_treated;
        r["suppressed_control"] = g.suppressed_control;
        r["retained"] = g.retained_rows.size();
        r["rmse"] = g.rmse;
        r["rhat"] = nullable(g.rhat);
        r["clinical_flag"] = g.clinical_flag;
        r["tmle_fallbacks"] = g.tmle_fallbacks;
        groups.push_back(std::move(r));

        const std::string tag = slug(g.group);
        CsvWriter trace({"chain", "draw", "ate"});
        std::map<int, int> seen;
        for (std::size_t d = 0; d < g.ate_draws.size(); ++d) {
            const int c = analysis.response.chain[d];
            trace.row(c + 1, ++seen[c], g.ate_draws[d]);
        }
        files.add("trace-" + tag + ".csv", trace.str());
        files.add("trace-" + tag + ".svg",
                  trace_plot(g.ate_draws, analysis.response.chain,
                             {"ATE trace, group " + g.group, "draw", "average treatment effect"}));

        std::vector<std::size_t> order(g.retained_rows.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return g.icate_mean[a] < g.icate_mean[b]; });
        CsvWriter waterfall({"row", "icate_mean", "icate_lo", "icate_hi"});
        for (std::size_t k : order)
            waterfall.row(data.source_rows()[g.retained_rows[k]] + 1, g.icate_mean[k], g.icate_lo[k], g.icate_hi[k]);
        files.add("waterfall-" + tag + ".csv", waterfall.str());
        files.add("waterfall-" + tag + ".svg",
                  waterfall_plot(g.icate_mean, g.icate_lo, g.icate_hi,
                                 {"Individual effects, group " + g.group, "rows sorted by effect", "individual effect"}));
    }
    result["groups"] = std::move(groups);
    if (analysis.propensity) {
        const auto& ps = analysis.propensity->mean;
        result["propensity"] = {{"min", *std::min_element(ps.begin(), ps.end())},
                                {"max", *std::max_element(ps.begin(), ps.end())},
                                {"truncation", json::array({cfg.ps_lo, cfg.ps_hi})}};
    }
    files.add("result.json", to_text(result));

    if (o.dump_posterior) {
        CsvWriter sigma({"chain", "draw", "sigma"});
        std::map<int, int> seen;
        for (std::size_t d = 0; d < analysis.response.sigma.size(); ++d) {
            const int c = analysis.response.chain[d];
            sigma.row(c + 1, ++seen[c], analysis.response.sigma[d]);
        }
        files.add("posterior-sigma.csv", sigma.str());
        const char* names[] = {"posterior-treated.csv", "posterior-control.csv"};
        for (std::size_t m = 0; m < 2; ++m) {
            const auto& pred = analysis.response.predictions[m];
            std::ostringstream os;
            os << "draw";
            for (Eigen::Index i = 0; i < pred.cols(); ++i) os << ",row" << data.source_rows()[static_cast<std::size_t>(i)] + 1;
            os << "\n";
            for (Eigen::Index d = 0; d < pred.rows(); ++d) {
                os << d + 1;
                for (Eigen::Index i = 0; i < pred.cols(); ++i) os << ',' << number(pred(d, i));
                os << "\n";
            }
            files.add(names[m], os.str());
        }
    }

    const auto& hp = cfg.hyperparams;
    json config = {{"support", to_string(cfg.support)}, {"cut", cfg.sd_cut}, {"p", cfg.chisq_p},
                   {"tmle", cfg.use_tmle}, {"ps_covariate", cfg.use_ps_covariate}, {"mcid", cfg.mcid},
                   {"outcome", o.outcome}, {"baseline_col", o.baseline_col},
                   {"chains", hp.n_chains}, {"draws", hp.draws_per_chain}, {"burnin", hp.burn_in},
                   {"trees", hp.n_trees}, {"alpha", hp.alpha}, {"beta", hp.beta}, {"k", hp.k}, {"nu", hp.nu},
                   {"q", hp.q}, {"cutpoints", hp.n_cutpoints}};
    files.add("manifest.json", to_text(manifest("causal", {{"data", o.data}, {"schema", o.schema}}, config, o.seed,
                                                seconds_since(start), files.names())));
    files.commit();
}

// ---------------------------------------------------------------------------
// baseline

struct BaselineOptions {
    std::string data, schema, out_dir;
    std::string family = "logistic", outcome = "binary", baseline_col;
    double level = 0.95;
    bool require_complete = false;
};

void run_baseline(const BaselineOptions& o) {
    const auto start = std::chrono::steady_clock::now();
    const Family family = o.family == "logistic" ? Family::logistic : Family::gaussian;
    if ((family == Family::logistic) != (o.outcome == "binary"))
        throw UsageError("--family " + o.family + " is incompatible with --outcome " + o.outcome +
                         " (binary pairs with logistic, delta with gaussian)");
    const auto schema = read_schema(o.schema);
    const auto data = read_dataset(o.data, schema, !o.require_complete);
    const auto outcome = outcome_column(data, o.outcome, o.baseline_col);
    const std::string treatment = data.spec(*data.index_of_role(Role::treatment)).name;

    static const std::vector<Role> roles = {Role::treatment, Role::confounder};
    const DesignMatrix full = encode_design_matrix(data, Encoding::reference_coded, roles);
    const auto [names, label] = group_labels(data);

    json groups = json::array();
    for (std::size_t gi = 0; gi < names.size(); ++gi) {
        std::vector<Eigen::Index> rows;
        for (std::size_t i = 0; i < label.size(); ++i)
            if (label[i] == gi) rows.push_back(static_cast<Eigen::Index>(i));
        if (rows.empty()) continue;
        DesignMatrix X;
        json dropped = json::array();
        std::vector<Eigen::Index> keep_cols;
        for (Eigen::Index c = 0; c < full.values.cols(); ++c) {
            const double first = full.values(rows.front(), c);
            const bool constant = std::all_of(rows.begin(), rows.end(), [&](Eigen::Index i) { return full.values(i, c) == first; });
            if (!constant) {
                keep_cols.push_back(c);
                continue;
            }
            if (full.column_names[static_cast<std::size_t>(c)] == treatment)
                throw RankError({treatment}, "treatment is constant within group '" + names[gi] + "'");
            dropped.push_back(full.column_names[static_cast<std::size_t>(c)]);
        }
        X.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(keep_cols.size()));
        std::vector<double> y, w;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            for (std::size_t c = 0; c < keep_cols.size(); ++c)
                X.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = full.values(rows[r], keep_cols[c]);
            y.push_back(outcome.values[static_cast<std::size_t>(rows[r])]);
            w.push_back(data.weights()[static_cast<std::size_t>(rows[r])]);
            X.row_index.push_back(static_cast<std::size_t>(rows[r]));
        }
        for (auto c : keep_cols) X.column_names.push_back(full.column_names[static_cast<std::size_t>(c)]);

        const LinearFit fit = family == Family::logistic ? fit_weighted_logistic(X, y, w) : fit_weighted_gaussian(X, y, w);
        json terms = json::array();
        for (std::size_t j = 0; j < fit.names.size(); ++j) {
            const auto e = effect_ci(fit, fit.names[j], o.level);
            terms.push_back({{"term", fit.names[j]},
                             {"beta", fit.coefficients[static_cast<Eigen::Index>(j)]},
                             {"se", fit.standard_error(j)},
                             {"estimate", e.estimate},
                             {"lo", e.lo},
                             {"hi", e.hi}});
        }
        const auto te = effect_ci(fit, treatment, o.level);
        json g;
        g["group"] = names[gi];
        g["n"] = fit.n;
        g["weight_sum"] = fit.weight_sum;
        g["converged"] = fit.converged;
        g["iterations"] = fit.iterations;
        g["dropped_columns"] = dropped;
        g["treatment"] = {{"term", treatment}, {"estimate", te.estimate}, {"lo", te.lo}, {"hi", te.hi}};
        g["coefficients"] = std::move(terms);
        groups.push_back(std::move(g));
    }

    json result;
    result["command"] = "baseline";
    result["family"] = to_string(family);
    result["outcome"] = outcome.label;
    result["scale"] = family == Family::logistic ? "odds ratio" : "coefficient";
    result["level"] = o.level;
    result["groups"] = std::move(groups);

    Outputs files(o.out_dir);
    files.add("result.json", to_text(result));
    json config = {{"family", o.family}, {"outcome", o.outcome}, {"baseline_col", o.baseline_col}, {"level", o.level}};
    files.add("manifest.json", to_text(manifest("baseline", {{"data", o.data}, {"schema", o.schema}}, config, 0,
                                                seconds_since(start), files.names())));
    files.commit();
}

// ---------------------------------------------------------------------------
// trend

struct TrendFitOptions {
    std::string series, out_dir;
    int horizon = 0;
    std::optional<int> cutoff;
    int boot = 10000;
    double level = 0.95;
    std::uint64_t seed = 0;
};

void run_trend_fit(const TrendFitOptions& o) {
    const auto start = std::chrono::steady_clock::now();
    const TrendSeries observed = read_series(o.series);
    TrendSeries window;
    for (std::size_t i = 0; i < observed.size(); ++i)
        if (!o.cutoff || observed.years[i] <= *o.cutoff) {
            window.years.push_back(observed.years[i]);
            window.values.push_back(observed.values[i]);
        }
    const int last = std::max(o.horizon, observed.years.back());
    std::vector<int> years;
    for (int y = window.years.empty() ? observed.years.front() : window.years.front(); y <= last; ++y) years.push_back(y);

    const TrendFit fit = fit_exp_decay(window);
    const auto boot = bootstrap_prediction_interval(fit, window, years, o.boot, o.level, o.seed);

    CsvWriter csv({"year", "point", "lo", "hi"});
    PlotSeries obs{"observed", {}, {}, {}, {}, false}, model{"exponential fit", {}, {}, {}, {}, true};
    for (const auto& b : boot.bands) {
        csv.row(b.year, b.point, b.lo, b.hi);
        model.x.push_back(b.year);
        model.y.push_back(b.point);
        model.lo.push_back(b.lo);
        model.hi.push_back(b.hi);
    }
    for (std::size_t i = 0; i < observed.size(); ++i) {
        obs.x.push_back(observed.years[i]);
        obs.y.push_back(observed.values[i]);
    }
    const std::vector<PlotSeries> series = {obs, model};

    json summary = {{"command", "trend fit"},
                    {"alpha", fit.alpha},
                    {"beta", fit.beta},
                    {"year_center", fit.year_center},
                    {"iterations", fit.iterations},
                    {"fit_years", json::array({window.years.front(), window.years.back()})},
                    {"bootstrap", {{"replicates", o.boot}, {"failures", boot.failures}, {"level", o.level}}}};

    Outputs files(o.out_dir);
    files.add("trend.csv", csv.str());
    files.add("trend.svg", line_chart(series, {"Exponential decay fit", "year", "prevalence (%)"}));
    files.add("fit.json", to_text(summary));
    json config = {{"horizon", o.horizon}, {"cutoff", o.cutoff ? json(*o.cutoff) : json(nullptr)}, {"boot", o.boot}, {"level", o.level}};
    files.add("manifest.json", to_text(manifest("trend fit", {{"series", o.series}}, config, o.seed, seconds_since(start),
                                                files.names())));
    files.commit();
}

struct TrendSimulateOptions {
    std::string smoking, ecig, out_dir;
    std::vector<double> k;
    int cutoff = 2009, decline_start = 2006, decline_end = 2009;
};

std::string k_label(double k) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", k);
    return buf;
}

void run_trend_simulate(TrendSimulateOptions o) {
    const auto start = std::chrono::steady_clock::now();
    const TrendSeries smoking = o.smoking.empty() ? nyts_smoking() : read_series(o.smoking);
    const TrendSeries ecig = o.ecig.empty() ? nyts_ecig() : read_series(o.ecig);
    if (o.k.empty()) o.k = {0.0, 0.09, 0.25};

    Outputs files(o.out_dir);
    std::vector<PlotSeries> series;
    series.push_back({"observed smoking", {smoking.years.begin(), smoking.years.end()}, smoking.values, {}, {}, false});
    series.push_back({"observed e-cigarettes", {ecig.years.begin(), ecig.years.end()}, ecig.values, {}, {}, false});
    for (double k : o.k) {
        GatewaySimConfig cfg;
        cfg.k = k;
        cfg.cutoff = o.cutoff;
        cfg.decline_start = o.decline_start;
        cfg.decline_end = o.decline_end;
        const auto sim = simulate_gateway(smoking, ecig, cfg);
        CsvWriter csv({"year", "point", "lo", "hi"});
        PlotSeries line{"simulated, k = " + k_label(k), {}, {}, {}, {}, true};
        for (std::size_t i = 0; i < sim.size(); ++i) {
            csv.row(sim.years[i], sim.values[i], sim.values[i], sim.values[i]);
            if (sim.years[i] >= o.cutoff) {
                line.x.push_back(sim.years[i]);
                line.y.push_back(sim.values[i]);
            }
        }
        files.add("simulate-k" + k_label(k) + ".csv", csv.str());
        series.push_back(std::move(line));
    }
    files.add("simulate.svg", line_chart(series, {"Counterfactual gateway simulation", "year", "prevalence (%)"}));
    json config = {{"k", o.k}, {"cutoff", o.cutoff}, {"decline_window", json::array({o.decline_start, o.decline_end})}};
    json inputs = {{"smoking", o.smoking.empty() ? json("embedded") : json(o.smoking)},
                   {"ecig", o.ecig.empty() ? json("embedded") : json(o.ecig)}};
    files.add("manifest.json", to_text(manifest("trend simulate", inputs, config, 0, seconds_since(start), files.names())));
    files.commit();
}

void report(const std::string& kind, const std::string& message) {
    json err = {{"error", kind}, {"message", message}};
    std::cerr << err.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian causal trees, linear baselines and prevalence trend models"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    CausalOptions co;
    auto* causal = app.add_subcommand("causal", "BART counterfactual effect estimation");
    causal->add_option("data", co.data, "input CSV")->required();
    causal->add_option("schema", co.schema, "schema JSON")->required();
    causal->add_option("--out-dir", co.out_dir, "output directory")->required();
    causal->add_option("--support", co.support, "common-support rule")->check(CLI::IsMember({"none", "sd", "chisq"}));
    causal->add_option("--cut", co.cut, "sd rule slack in standard deviations");
    causal->add_option("--p", co.p, "chi-squared rule p-value");
    causal->add_flag("--no-tmle", co.no_tmle, "skip the targeted fluctuation");
    causal->add_flag("--no-ps-covariate", co.no_ps, "do not add the propensity score as a covariate");
    causal->add_option("--mcid", co.mcid, "minimal clinically important difference");
    causal->add_option("--chains", co.chains, "MCMC chains");
    causal->add_option("--draws", co.draws, "posterior draws per chain");
    causal->add_option("--burnin", co.burnin, "burn-in sweeps per chain");
    causal->add_option("--trees", co.trees, "trees in the ensemble");
    causal->add_option("--seed", co.seed, "random seed");
    causal->add_flag("--fast", co.fast, "2 chains x 250 draws, 500 burn-in, 50 trees");
    causal->add_option("--outcome", co.outcome, "raw response or follow-up minus baseline")
        ->check(CLI::IsMember({"raw", "delta"}));
    causal->add_option("--baseline-col", co.baseline_col, "baseline column for --outcome delta");
    causal->add_flag("--dump-posterior", co.dump_posterior, "write sigma and prediction draws");
    causal->add_flag("--require-complete", co.require_complete, "fail on missing cells instead of dropping rows");

    BaselineOptions bo;
    auto* baseline = app.add_subcommand("baseline", "survey-weighted logistic or Gaussian regression");
    baseline->add_option("data", bo.data, "input CSV")->required();
    baseline->add_option("schema", bo.schema, "schema JSON")->required();
    baseline->add_option("--out-dir", bo.out_dir, "output directory")->required();
    baseline->add_option("--family", bo.family, "model family")->check(CLI::IsMember({"logistic", "gaussian"}));
    baseline->add_option("--outcome", bo.outcome, "binarized follow-up or follow-up minus baseline")
        ->check(CLI::IsMember({"binary", "delta"}));
    baseline->add_option("--baseline-col", bo.baseline_col, "baseline column for --outcome delta");
    baseline->add_option("--level", bo.level, "confidence level");
    baseline->add_flag("--require-complete", bo.require_complete, "fail on missing cells instead of dropping rows");

    auto* trend = app.add_subcommand("trend", "prevalence trend models");
    trend->require_subcommand(1);
    TrendFitOptions fo;
    auto* fit = trend->add_subcommand("fit", "exponential decay with bootstrap prediction intervals");
    fit->add_option("series", fo.series, "CSV with year and prevalence columns")->required();
    fit->add_option("--out-dir", fo.out_dir, "output directory")->required();
    fit->add_option("--horizon", fo.horizon, "last year to project");
    fit->add_option("--cutoff", fo.cutoff, "fit only years up to this one");
    fit->add_option("--boot", fo.boot, "bootstrap replicates");
    fit->add_option("--level", fo.level, "interval level");
    fit->add_option("--seed", fo.seed, "random seed");
    TrendSimulateOptions so;
    auto* sim = trend->add_subcommand("simulate", "counterfactual gateway simulation");
    sim->add_option("--out-dir", so.out_dir, "output directory")->required();
    sim->add_option("--k", so.k, "gateway strength (repeatable)");
    sim->add_option("--cutoff", so.cutoff, "last observed year");
    sim->add_option("--decline-start", so.decline_start, "first year of the decline window");
    sim->add_option("--decline-end", so.decline_end, "last year of the decline window");
    sim->add_option("--smoking", so.smoking, "smoking series CSV (default: embedded NYTS)");
    sim->add_option("--ecig", so.ecig, "e-cigarette series CSV (default: embedded NYTS)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        report("UsageError", e.what());
        return 2;
    }

    try {
        if (causal->parsed()) run_causal(co);
        else if (baseline->parsed()) run_baseline(bo);
        else if (fit->parsed()) run_trend_fit(fo);
        else if (sim->parsed()) run_trend_simulate(so);
    } catch (const Error& e) {
        report(e.kind(), e.what());
        return exit_code(e);
    } catch (const std::exception& e) {
        report("InternalError", e.what());
        return 3;
    }
    return 0;
}
