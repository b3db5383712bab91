#pragma once

#include <map>
#include <string>

#include "dispar/assumptions.hpp"
#include "dispar/dataset.hpp"
#include "dispar/glm.hpp"

namespace dispar {

/// Twofold regression decomposition of a group mean difference.
///
/// Stratified linear models with identical structure are fitted in both
/// exposure groups: Y ~ M + L + M:L + C, where M is a single mediator, L the
/// exposure-induced confounders and C the baseline covariates.  `explained`
/// prices the exposed-vs-control gap in regressor means at the exposed
/// group's coefficients; `unexplained` is the coefficient-difference part.
struct ObDecomposition {
    std::string mediator;
    double disparity = 0.0;
    double explained = 0.0;
    double unexplained = 0.0;
    std::map<std::string, double> explained_by_term;    // non-intercept terms
    std::map<std::string, double> unexplained_by_term;  // includes "(intercept)"
    FittedModel model_exposed;
    FittedModel model_control;
};

/// Mediator-targeted split of the same disparity: `ob_m` collects every
/// term of the exposed-group model that moves when the mediator's mean is
/// aligned across groups (holding the exposed confounder distribution);
/// `ob_re` is the remainder, so ob_m + ob_re equals the disparity exactly.
struct ObMediatorSplit {
    std::string mediator;
    double disparity = 0.0;
    double ob_m = 0.0;
    double ob_re = 0.0;
    std::map<std::string, double> ob_m_by_term;
    std::map<std::string, double> ob_re_by_term;
};

ObDecomposition decompose_classic(const Dataset& d, const RoleMap& roles,
                                  const std::string& mediator);

ObMediatorSplit decompose_ob_m(const Dataset& d, const RoleMap& roles,
                               const std::string& mediator);

/// Causal reading of a decomposition under asserted assumptions.
struct Interpretation {
    /// Strongest supported reading of (ob_m, ob_re).
    std::string label;
    /// Assumption flags the reading rests on.
    std::vector<std::string> used;
    /// What would be needed for the next-stronger reading (empty at the top).
    std::vector<std::string> missing_for_next;
};

/// Walks the ladder: descriptive contrast -> observed-disparity reduction ->
/// counterfactual disparity reduction -> marginal natural-effect equality.
Interpretation interpret(const std::string& mediator, const AssumptionLedger& ledger);

}  // namespace dispar
