#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dispar/dataset.hpp"
#include "dispar/rng.hpp"

namespace dispar {

enum class Family { linear, logistic };

/// Regression structure: main effects plus optional two-way products.
/// Interactions are kept normalized (alphabetical within a pair, pairs
/// sorted) and must satisfy the hierarchy rule: both parents appear in
/// `mains`.
struct TermSet {
    std::vector<std::string> mains;
    std::vector<std::pair<std::string, std::string>> interactions;

    static TermSet mains_only(std::vector<std::string> mains);

    /// Sorts and deduplicates interactions; throws ValidationError on a
    /// duplicate main, a self-interaction or a hierarchy violation.
    void normalize();

    /// Number of coefficients including the intercept.
    std::size_t n_coef() const { return 1 + mains.size() + interactions.size(); }

    /// Human-readable term names: "(intercept)", mains, "a:b" products.
    std::vector<std::string> coef_names() const;
};

/// A fitted regression with its evaluation plan resolved against a dataset
/// column layout, so predictions read straight from a row buffer.
struct FittedModel {
    Family family = Family::linear;
    std::string response;
    std::string stratum_label;  // e.g. "A=1", "A=0", "pooled"
    TermSet terms;
    std::vector<double> coef;       // intercept, mains, interactions
    std::vector<double> coef_se;    // same order
    double residual_sd = 0.0;       // linear family only
    double loglik = 0.0;
    double aic = 0.0;
    std::size_t n_obs = 0;

    // evaluation plan: dataset column indices
    int response_col = -1;
    std::vector<int> main_cols;
    std::vector<std::pair<int, int>> inter_cols;
    std::vector<std::pair<double, double>> main_ranges;  // training min/max

    /// Linear predictor for a full-width row buffer.
    double linear_predictor(const double* row) const;
    /// Mean response (identity or inverse-logit link).
    double predict_mean(const double* row) const;
    /// Stochastic draw from the fitted conditional law.
    double draw(const double* row, CounterRng& rng) const;
    /// True if any main-effect value lies outside the training range.
    bool out_of_range(const double* row) const;
};

/// Fit by OLS (linear) or IRLS (logistic) on the given rows.
///
/// Throws SingularDesignError naming the collinear columns, ConvergenceError
/// when IRLS stalls or diverges (quasi-separation), ValidationError when the
/// logistic response is not {0,1} or n <= number of coefficients.
FittedModel fit_glm(const Dataset& d, const std::vector<std::size_t>& rows,
                    const std::string& response, const TermSet& terms, Family family,
                    const std::string& stratum_label);

enum class SelectionPolicy { none, greedy, exhaustive };

struct SelectResult {
    FittedModel model;
    std::vector<std::string> notes;  // skipped candidates, ties, fallbacks
};

/// Forward selection of two-way interactions by AIC.
///
/// Mains are always kept.  Candidates default to every pair of mains; an
/// explicit candidate list restricts the search.  Greedy adds the best
/// strictly-improving candidate per round; the exhaustive policy scores
/// every subset (allowed for at most 10 candidates).  Ties break toward the
/// earlier candidate in alphabetical order; candidates whose fit fails are
/// skipped and noted.
SelectResult select_interactions(
    const Dataset& d, const std::vector<std::size_t>& rows, const std::string& response,
    const std::vector<std::string>& mains, Family family, const std::string& stratum_label,
    SelectionPolicy policy,
    const std::optional<std::vector<std::pair<std::string, std::string>>>& candidates =
        std::nullopt);

/// True when the column takes only the values 0 and 1 over the rows.
bool is_binary_over_rows(const Dataset& d, std::size_t col, const std::vector<std::size_t>& rows);

}  // namespace dispar
