#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace dispar {

/// Immutable column-major numeric table.
class Dataset {
public:
    Dataset() = default;

    static Dataset from_columns(std::vector<std::string> names,
                                std::vector<std::vector<double>> columns);

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return names_.size(); }
    const std::vector<std::string>& names() const { return names_; }

    bool has_column(const std::string& name) const;
    /// Throws ValidationError naming the column when absent.
    std::size_t column_index(const std::string& name) const;

    const std::vector<double>& column(std::size_t idx) const { return cols_[idx]; }
    const std::vector<double>& column(const std::string& name) const {
        return cols_[column_index(name)];
    }
    double value(std::size_t row, std::size_t col) const { return cols_[col][row]; }

    /// New dataset holding the given rows (duplicates allowed), same columns.
    Dataset select_rows(const std::vector<std::size_t>& rows) const;

    /// Indices of rows where the column equals `v` exactly.
    std::vector<std::size_t> rows_equal(const std::string& column, double v) const;

    /// True when every value in the column is 0.0 or 1.0.
    bool column_is_binary(std::size_t idx) const;

private:
    std::vector<std::string> names_;
    std::vector<std::vector<double>> cols_;
    std::size_t n_rows_ = 0;
};

/// Assigns analysis roles to dataset columns.
///
/// `confounders` are the intermediate variables that sit between exposure and
/// the mediators; `mediators` are listed in their working order, which fixes
/// the factorization order used by the sequential models.
struct RoleMap {
    std::string exposure;
    std::string outcome;
    std::vector<std::string> covariates;    // baseline C
    std::vector<std::string> confounders;   // exposure-induced L
    std::vector<std::string> mediators;     // M_1..M_K in working order

    /// All role columns in a stable order: exposure, outcome, C, L, M.
    std::vector<std::string> all_columns() const;

    /// Checks existence, uniqueness, disjointness and a binary exposure.
    /// Throws ValidationError with the offending name (and row for the
    /// exposure check).
    void validate(const Dataset& d) const;
};

/// Row predicate applied at ingestion, e.g. {"wage", ">=", 1.0}.
struct Filter {
    std::string column;
    std::string op;  // one of == != < <= > >=
    double value = 0.0;

    bool matches(double x) const;
};

struct IngestResult {
    Dataset data;
    std::size_t rows_dropped_gaps = 0;      // short rows, blanks, bad numbers
    std::size_t rows_dropped_filtered = 0;  // failed a filter
    std::size_t rows_dropped() const { return rows_dropped_gaps + rows_dropped_filtered; }
};

/// Parse delimited text (comma or tab, autodetected from the header row).
/// Rows with gaps or failing a filter are dropped and counted; the exposure
/// column must be strictly {0,1} in the retained rows.
IngestResult ingest_delimited_text(const std::string& text, const RoleMap& roles,
                                   const std::vector<Filter>& filters);

/// Same, reading from a file path.
IngestResult ingest_delimited_file(const std::string& path, const RoleMap& roles,
                                   const std::vector<Filter>& filters);

/// Write a dataset as delimited text (tab separator, header row).
std::string to_delimited_text(const Dataset& d);

/// Per-group summary of a dataset under a role map.
struct GroupStats {
    std::size_t n_exposed = 0;
    std::size_t n_control = 0;
    double mean_outcome_exposed = 0.0;
    double mean_outcome_control = 0.0;
    /// mean(Y | A=1) - mean(Y | A=0)
    double disparity = 0.0;
    /// column -> {mean in A=1, mean in A=0} for C, L and M columns.
    std::map<std::string, std::pair<double, double>> column_means;
};

/// Group sizes, group means and the raw outcome disparity.
/// Throws DegenerateGroupError when either exposure group is empty.
GroupStats group_stats(const Dataset& d, const RoleMap& roles);

/// Mean of a column over the given rows, accumulated in index order.
double mean_over_rows(const Dataset& d, std::size_t col, const std::vector<std::size_t>& rows);

}  // namespace dispar
