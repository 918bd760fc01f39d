#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace causal_trees {

// Every failure raised by the library derives from Error and carries a stable
// kind name, which the CLI serializes into its error payload.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

#define CAUSAL_TREES_DEFINE_ERROR(Name)                                      \
    class Name : public Error {                                              \
    public:                                                                  \
        explicit Name(const std::string& message) : Error(#Name, message) {} \
    };

// dataset
CAUSAL_TREES_DEFINE_ERROR(SchemaMismatch)
CAUSAL_TREES_DEFINE_ERROR(IncompleteData)
CAUSAL_TREES_DEFINE_ERROR(WeightError)

// fitting
CAUSAL_TREES_DEFINE_ERROR(FitError)
CAUSAL_TREES_DEFINE_ERROR(SupportError)
CAUSAL_TREES_DEFINE_ERROR(TmleError)
CAUSAL_TREES_DEFINE_ERROR(SeparationError)
CAUSAL_TREES_DEFINE_ERROR(BootstrapError)

// caller misuse
CAUSAL_TREES_DEFINE_ERROR(UsageError)

#undef CAUSAL_TREES_DEFINE_ERROR

class CellError : public Error {
public:
    CellError(std::size_t row, std::string column, const std::string& message)
        : Error("CellError", "row " + std::to_string(row) + ", column '" + column + "': " + message),
          row_(row),
          column_(std::move(column)) {}

    std::size_t row() const noexcept { return row_; }
    const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

class RankError : public Error {
public:
    RankError(std::vector<std::string> columns, const std::string& message)
        : Error("RankError", message), columns_(std::move(columns)) {}

    const std::vector<std::string>& columns() const noexcept { return columns_; }

private:
    std::vector<std::string> columns_;
};

}  // namespace causal_trees
