#pragma once

#include <string>
#include <vector>

namespace dispar {

/// Identification assumptions the analyst is willing to assert.
///
/// a1:  no unmeasured exposure-outcome confounding given C
/// a2:  no unmeasured mediator-outcome confounding given exposure, C, L
/// a3:  no unmeasured exposure-mediator confounding given C
/// a4_no_confounders:        no exposure-induced mediator-outcome confounders
/// a5_no_lm_interaction:     no mediator-confounder interaction in the
///                           outcome mean
/// exogeneity: exposure independent of the counterfactuals (randomized-like)
struct AssumptionLedger {
    bool consistency = false;
    bool positivity = false;
    bool a1 = false;
    bool a2 = false;
    bool a3 = false;
    bool a4_no_confounders = false;
    bool a5_no_lm_interaction = false;
    bool exogeneity = false;
    bool linearity = false;
    bool correct_specification = false;

    std::vector<std::string> asserted() const;
};

}  // namespace dispar
