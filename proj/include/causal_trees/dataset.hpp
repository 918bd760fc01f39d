#pragma once

// Schema-typed tabular data: CSV loading, validation, and encoding into the
// numeric design matrices consumed by the models.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "causal_trees/errors.hpp"

namespace causal_trees {

enum class Role { response, treatment, confounder, group, weight, ignore };
enum class Kind { numeric, binary, categorical };
enum class Encoding { full_one_hot, reference_coded };

inline std::string to_string(Role r) {
    switch (r) {
        case Role::response: return "response";
        case Role::treatment: return "treatment";
        case Role::confounder: return "confounder";
        case Role::group: return "group";
        case Role::weight: return "weight";
        case Role::ignore: return "ignore";
    }
    return "ignore";
}

inline std::string to_string(Kind k) {
    switch (k) {
        case Kind::numeric: return "numeric";
        case Kind::binary: return "binary";
        case Kind::categorical: return "categorical";
    }
    return "numeric";
}

struct ColumnSpec {
    std::string name;
    Role role = Role::confounder;
    Kind kind = Kind::numeric;
    std::optional<double> min;  // numeric only
    std::optional<double> max;
    std::vector<std::string> levels;  // categorical only, in declared order
};

using Schema = std::vector<ColumnSpec>;

inline void validate_schema(const Schema& schema) {
    std::set<std::string> names;
    int n_response = 0, n_treatment = 0, n_group = 0, n_weight = 0;
    for (const auto& c : schema) {
        if (c.name.empty()) throw SchemaMismatch("column with empty name");
        if (!names.insert(c.name).second) throw SchemaMismatch("duplicate column '" + c.name + "'");
        if (c.kind == Kind::categorical) {
            if (c.levels.empty()) throw SchemaMismatch("categorical column '" + c.name + "' has no levels");
            std::set<std::string> seen(c.levels.begin(), c.levels.end());
            if (seen.size() != c.levels.size())
                throw SchemaMismatch("categorical column '" + c.name + "' has duplicate levels");
        }
        if (c.min && c.max && *c.min > *c.max)
            throw SchemaMismatch("column '" + c.name + "' has min > max");
        switch (c.role) {
            case Role::response: ++n_response; break;
            case Role::treatment:
                ++n_treatment;
                if (c.kind != Kind::binary) throw SchemaMismatch("treatment column '" + c.name + "' must be binary");
                break;
            case Role::group:
                ++n_group;
                if (c.kind == Kind::numeric)
                    throw SchemaMismatch("group column '" + c.name + "' must be categorical or binary");
                break;
            case Role::weight:
                ++n_weight;
                if (c.kind != Kind::numeric) throw SchemaMismatch("weight column '" + c.name + "' must be numeric");
                break;
            default: break;
        }
    }
    if (n_response != 1) throw SchemaMismatch("schema needs exactly one response column");
    if (n_treatment != 1) throw SchemaMismatch("schema needs exactly one treatment column");
    if (n_group > 1) throw SchemaMismatch("schema allows at most one group column");
    if (n_weight > 1) throw SchemaMismatch("schema allows at most one weight column");
}

// Schema document: an object mapping column name -> {role, kind, min, max, levels}.
// Declaration order is preserved and determines design-matrix column order.
inline Schema parse_schema(const nlohmann::ordered_json& doc) {
    if (!doc.is_object()) throw SchemaMismatch("schema must be a JSON object");
    static const std::map<std::string, Role> roles = {
        {"response", Role::response}, {"treatment", Role::treatment}, {"confounder", Role::confounder},
        {"group", Role::group},       {"weight", Role::weight},       {"ignore", Role::ignore}};
    static const std::map<std::string, Kind> kinds = {
        {"numeric", Kind::numeric}, {"binary", Kind::binary}, {"categorical", Kind::categorical}};
    Schema schema;
    for (const auto& [name, entry] : doc.items()) {
        if (!entry.is_object()) throw SchemaMismatch("schema entry '" + name + "' must be an object");
        ColumnSpec c;
        c.name = name;
        try {
            const auto role = entry.value("role", std::string("confounder"));
            const auto kind = entry.value("kind", std::string("numeric"));
            if (!roles.count(role)) throw SchemaMismatch("unknown role '" + role + "' for '" + name + "'");
            if (!kinds.count(kind)) throw SchemaMismatch("unknown kind '" + kind + "' for '" + name + "'");
            c.role = roles.at(role);
            c.kind = kinds.at(kind);
            if (entry.contains("min")) c.min = entry.at("min").get<double>();
            if (entry.contains("max")) c.max = entry.at("max").get<double>();
            if (entry.contains("bounds")) {
                const auto& b = entry.at("bounds");
                if (!b.is_array() || b.size() != 2) throw SchemaMismatch("bounds for '" + name + "' must be [min, max]");
                c.min = b[0].get<double>();
                c.max = b[1].get<double>();
            }
            if (entry.contains("levels")) c.levels = entry.at("levels").get<std::vector<std::string>>();
        } catch (const nlohmann::json::exception& e) {
            throw SchemaMismatch("malformed schema entry '" + name + "': " + e.what());
        }
        schema.push_back(std::move(c));
    }
    validate_schema(schema);
    return schema;
}

// Immutable, validated table. Categorical cells are stored as level indices;
// ignored columns are not materialized.
class Dataset {
public:
    Dataset() = default;

    Dataset(Schema schema, std::vector<std::vector<double>> columns, std::vector<double> weights,
            std::vector<std::size_t> source_rows = {}, std::map<std::string, std::size_t> dropped = {})
        : schema_(std::move(schema)),
          columns_(std::move(columns)),
          weights_(std::move(weights)),
          source_rows_(std::move(source_rows)),
          dropped_(std::move(dropped)) {
        validate_schema(schema_);
        if (columns_.size() != schema_.size()) throw SchemaMismatch("column count does not match schema");
        n_rows_ = weights_.size();
        if (weights_.empty()) {
            for (std::size_t j = 0; j < schema_.size(); ++j)
                if (schema_[j].role != Role::ignore) n_rows_ = std::max(n_rows_, columns_[j].size());
            weights_.assign(n_rows_, 1.0);
        }
        if (source_rows_.empty()) {
            source_rows_.resize(n_rows_);
            for (std::size_t i = 0; i < n_rows_; ++i) source_rows_[i] = i;
        }
        for (std::size_t j = 0; j < schema_.size(); ++j) {
            const auto& spec = schema_[j];
            if (spec.role == Role::ignore) continue;
            if (columns_[j].size() != n_rows_) throw SchemaMismatch("column '" + spec.name + "' has wrong length");
            for (std::size_t i = 0; i < n_rows_; ++i) check_cell(spec, columns_[j][i], i);
        }
        for (std::size_t i = 0; i < n_rows_; ++i)
            if (!(weights_[i] > 0.0) || !std::isfinite(weights_[i]))
                throw WeightError("weight at row " + std::to_string(i + 1) + " is not strictly positive and finite");
    }

    const Schema& schema() const noexcept { return schema_; }
    std::size_t rows() const noexcept { return n_rows_; }
    const std::vector<double>& weights() const noexcept { return weights_; }
    const std::vector<std::size_t>& source_rows() const noexcept { return source_rows_; }
    // Rows removed by complete-case filtering, keyed by the column with the missing cell.
    const std::map<std::string, std::size_t>& dropped_rows() const noexcept { return dropped_; }

    std::size_t index_of(const std::string& name) const {
        for (std::size_t j = 0; j < schema_.size(); ++j)
            if (schema_[j].name == name) return j;
        throw SchemaMismatch("no column named '" + name + "'");
    }

    std::optional<std::size_t> index_of_role(Role role) const {
        for (std::size_t j = 0; j < schema_.size(); ++j)
            if (schema_[j].role == role) return j;
        return std::nullopt;
    }

    const std::vector<double>& column(std::size_t j) const { return columns_.at(j); }
    const std::vector<double>& column(const std::string& name) const { return columns_[index_of(name)]; }
    const ColumnSpec& spec(std::size_t j) const { return schema_.at(j); }

    Dataset with_weights(std::vector<double> weights) const {
        return Dataset(schema_, columns_, std::move(weights), source_rows_, dropped_);
    }

    static void check_cell(const ColumnSpec& spec, double v, std::size_t row) {
        if (!std::isfinite(v)) throw CellError(row + 1, spec.name, "non-finite value");
        switch (spec.kind) {
            case Kind::numeric:
                if ((spec.min && v < *spec.min) || (spec.max && v > *spec.max)) {
                    std::ostringstream os;
                    os << "value " << v << " outside declared bounds";
                    throw CellError(row + 1, spec.name, os.str());
                }
                break;
            case Kind::binary:
                if (v != 0.0 && v != 1.0) throw CellError(row + 1, spec.name, "binary cell must be 0 or 1");
                break;
            case Kind::categorical:
                if (v < 0.0 || v != std::floor(v) || v >= static_cast<double>(spec.levels.size()))
                    throw CellError(row + 1, spec.name, "level index outside declared levels");
                break;
        }
    }

private:
    Schema schema_;
    std::vector<std::vector<double>> columns_;
    std::vector<double> weights_;
    std::vector<std::size_t> source_rows_;
    std::map<std::string, std::size_t> dropped_;
    std::size_t n_rows_ = 0;
};

namespace detail {

// RFC-4180 style records: comma separated, double-quote quoting with "" escapes.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) text.erase(0, 3);
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> record;
    std::string field;
    bool in_quotes = false, field_started = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char ch = text[i];
        if (in_quotes) {
            if (ch == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.push_back(ch);
            }
            continue;
        }
        switch (ch) {
            case '"':
                in_quotes = true;
                field_started = true;
                break;
            case ',':
                record.push_back(std::move(field));
                field.clear();
                field_started = true;
                break;
            case '\r': break;
            case '\n':
                if (field_started || !field.empty() || !record.empty()) {
                    record.push_back(std::move(field));
                    records.push_back(std::move(record));
                }
                record.clear();
                field.clear();
                field_started = false;
                break;
            default:
                field.push_back(ch);
                field_started = true;
        }
    }
    if (field_started || !field.empty() || !record.empty()) {
        record.push_back(std::move(field));
        records.push_back(std::move(record));
    }
    return records;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline bool is_missing(const std::string& cell) {
    const auto t = trim(cell);
    return t.empty() || t == "NA" || t == "na" || t == "NaN" || t == "nan";
}

inline double parse_number(const std::string& cell, std::size_t row, const std::string& column) {
    const auto t = trim(cell);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size() || !std::isfinite(v))
        throw CellError(row, column, "cannot parse '" + t + "' as a number");
    return v;
}

}  // namespace detail

// Reads a CSV with a header row against a schema. With drop_incomplete set,
// rows missing any non-ignored cell are removed and tallied per column;
// otherwise the first missing cell raises IncompleteData.
inline Dataset load_dataset(std::istream& csv, const Schema& schema, bool drop_incomplete) {
    validate_schema(schema);
    const auto records = detail::parse_csv(csv);
    if (records.empty()) throw SchemaMismatch("CSV has no header row");
    const auto& header = records.front();
    std::vector<std::size_t> position(schema.size(), 0);
    for (std::size_t j = 0; j < schema.size(); ++j) {
        const auto it = std::find_if(header.begin(), header.end(),
                                     [&](const std::string& h) { return detail::trim(h) == schema[j].name; });
        if (it == header.end()) throw SchemaMismatch("schema column '" + schema[j].name + "' not in CSV header");
        position[j] = static_cast<std::size_t>(it - header.begin());
    }
    const auto weight_col = [&]() -> std::optional<std::size_t> {
        for (std::size_t j = 0; j < schema.size(); ++j)
            if (schema[j].role == Role::weight) return j;
        return std::nullopt;
    }();

    std::vector<std::vector<double>> columns(schema.size());
    std::vector<double> weights;
    std::vector<std::size_t> source_rows;
    std::map<std::string, std::size_t> dropped;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        const std::size_t row = r;  // 1-based data row number
        bool missing = false;
        for (std::size_t j = 0; j < schema.size(); ++j) {
            if (schema[j].role == Role::ignore) continue;
            const bool absent = position[j] >= rec.size() || detail::is_missing(rec[position[j]]);
            if (absent) {
                if (!drop_incomplete)
                    throw IncompleteData("missing value at row " + std::to_string(row) + ", column '" +
                                         schema[j].name + "'");
                ++dropped[schema[j].name];
                missing = true;
            }
        }
        if (missing) continue;
        for (std::size_t j = 0; j < schema.size(); ++j) {
            const auto& spec = schema[j];
            if (spec.role == Role::ignore) continue;
            const auto cell = detail::trim(rec[position[j]]);
            double v = 0.0;
            if (spec.kind == Kind::categorical) {
                const auto it = std::find(spec.levels.begin(), spec.levels.end(), cell);
                if (it == spec.levels.end())
                    throw CellError(row, spec.name, "'" + cell + "' is not a declared level");
                v = static_cast<double>(it - spec.levels.begin());
            } else {
                v = detail::parse_number(cell, row, spec.name);
            }
            Dataset::check_cell(spec, v, row - 1);
            columns[j].push_back(v);
        }
        if (weight_col) {
            const double w = columns[*weight_col].back();
            if (!(w > 0.0)) throw WeightError("weight at row " + std::to_string(row) + " is not strictly positive");
            weights.push_back(w);
        } else {
            weights.push_back(1.0);
        }
        source_rows.push_back(row - 1);
    }
    return Dataset(schema, std::move(columns), std::move(weights), std::move(source_rows), std::move(dropped));
}

struct DesignMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> column_names;
    std::vector<std::size_t> row_index;

    std::size_t rows() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t cols() const { return static_cast<std::size_t>(values.cols()); }

    std::optional<std::size_t> find(const std::string& name) const {
        const auto it = std::find(column_names.begin(), column_names.end(), name);
        if (it == column_names.end()) return std::nullopt;
        return static_cast<std::size_t>(it - column_names.begin());
    }
};

inline const std::vector<Role>& default_predictor_roles() {
    static const std::vector<Role> roles = {Role::treatment, Role::confounder, Role::group};
    return roles;
}

// Encodes columns whose role is in `roles`, in schema order. Numeric and
// binary columns pass through unscaled; categoricals expand to "<col>=<level>"
// indicators (all levels, or all but the first under reference coding).
inline DesignMatrix encode_design_matrix(const Dataset& data, Encoding scheme,
                                         std::span<const Role> roles = default_predictor_roles()) {
    struct Block {
        std::size_t source;
        std::size_t first_level;
    };
    std::vector<Block> blocks;
    DesignMatrix dm;
    for (std::size_t j = 0; j < data.schema().size(); ++j) {
        const auto& spec = data.spec(j);
        if (std::find(roles.begin(), roles.end(), spec.role) == roles.end()) continue;
        if (spec.kind == Kind::categorical) {
            const std::size_t first = scheme == Encoding::reference_coded ? 1 : 0;
            for (std::size_t l = first; l < spec.levels.size(); ++l) {
                dm.column_names.push_back(spec.name + "=" + spec.levels[l]);
                blocks.push_back({j, l});
            }
        } else {
            dm.column_names.push_back(spec.name);
            blocks.push_back({j, static_cast<std::size_t>(-1)});
        }
    }
    const std::size_t n = data.rows();
    dm.values.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(blocks.size()));
    for (std::size_t c = 0; c < blocks.size(); ++c) {
        const auto& spec = data.spec(blocks[c].source);
        const auto& col = data.column(blocks[c].source);
        for (std::size_t i = 0; i < n; ++i) {
            double v = col[i];
            if (spec.kind == Kind::categorical) {
                if (v < 0.0 || v >= static_cast<double>(spec.levels.size()))
                    throw CellError(i + 1, spec.name, "level index outside declared levels");
                v = static_cast<std::size_t>(v) == blocks[c].first_level ? 1.0 : 0.0;
            }
            dm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
        }
    }
    dm.row_index.resize(n);
    for (std::size_t i = 0; i < n; ++i) dm.row_index[i] = i;
    return dm;
}

// w'_i = w_i * N / sum(w).
inline std::vector<double> rescale_weights(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw WeightError("weights must be strictly positive and finite");
        total += w;
    }
    const double factor = static_cast<double>(weights.size()) / total;
    std::vector<double> out(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) out[i] = weights[i] * factor;
    return out;
}

inline Dataset rescale_weights(const Dataset& data) {
    if (data.rows() == 0) return data;
    return data.with_weights(rescale_weights(data.weights()));
}

// Per-row follow-up minus baseline; both inputs must lie within [lo, hi].
inline std::vector<double> delta_outcome(std::span<const double> baseline, std::span<const double> followup,
                                         double lo = 0.0, double hi = 30.0) {
    if (baseline.size() != followup.size()) throw UsageError("delta_outcome: columns differ in length");
    std::vector<double> out(baseline.size());
    for (std::size_t i = 0; i < baseline.size(); ++i) {
        if (baseline[i] < lo || baseline[i] > hi) throw CellError(i + 1, "baseline", "outside outcome bounds");
        if (followup[i] < lo || followup[i] > hi) throw CellError(i + 1, "followup", "outside outcome bounds");
        out[i] = followup[i] - baseline[i];
    }
    return out;
}

// Any positive day count is coded 1.
inline std::vector<double> binarize_outcome(std::span<const double> followup) {
    std::vector<double> out(followup.size());
    for (std::size_t i = 0; i < followup.size(); ++i) out[i] = followup[i] > 0.0 ? 1.0 : 0.0;
    return out;
}

}  // namespace causal_trees
