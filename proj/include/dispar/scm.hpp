#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dispar/dataset.hpp"

namespace dispar {

enum class VarRole { covariate, latent, exposure, confounder, mediator, outcome };

/// One node of a discrete structural causal model.
///
/// Non-outcome variables carry a conditional probability table: one row per
/// parent configuration (parents in declared order, last parent varying
/// fastest), each row a distribution over `support`.  The outcome may either
/// be discrete (same layout) or continuous, in which case `mean_table` holds
/// E[Y | parents] and `noise_sd` the sampling noise around it.
struct ScmVariable {
    std::string name;
    VarRole role = VarRole::covariate;
    std::vector<double> support;
    std::vector<std::string> parents;
    std::vector<std::vector<double>> table;
    std::vector<double> mean_table;
    double noise_sd = 0.0;

    bool is_continuous_outcome() const { return !mean_table.empty(); }
};

/// Fully specified discrete model over covariates, optional latents, a
/// binary exposure, exposure-induced confounders, mediators and an outcome,
/// in that declaration order.  The joint state space (outcome excluded when
/// continuous) is capped at 4096 configurations.
class DiscreteScm {
public:
    static DiscreteScm build(std::vector<ScmVariable> vars);

    const std::vector<ScmVariable>& variables() const { return vars_; }
    std::size_t var_index(const std::string& name) const;

    /// Role map over the observable columns (latents are not observable).
    RoleMap role_map() const;

    /// Ancestral sampling of the observational law; latents are simulated
    /// but not emitted.  Column order: covariates, exposure, confounders,
    /// mediators, outcome.
    Dataset sample_observational(std::size_t n, std::uint64_t seed) const;

    // index lists per role, in declaration order
    const std::vector<int>& covariate_vars() const { return cs_; }
    const std::vector<int>& latent_vars() const { return us_; }
    const std::vector<int>& confounder_vars() const { return ls_; }
    const std::vector<int>& mediator_vars() const { return ms_; }
    int exposure_var() const { return a_; }
    int outcome_var() const { return y_; }

private:
    std::vector<ScmVariable> vars_;
    std::vector<int> cs_, us_, ls_, ms_;
    int a_ = -1;
    int y_ = -1;

    friend struct ScmEngine;
};

/// Which closed-form observational functional to evaluate.
///
/// `target` names the intervened mediator block I; the remaining mediators
/// form the untouched block R unless they appear in `held_mediators`, which
/// are kept at their observed values and added to the draw's conditioning
/// set (used by observed-disparity queries).
enum class IdentifiedKind {
    iie_conditional,      // stochastic-draw indirect effect, draws given C
    ie_conditional,       // disparity reduction under exposure intervention
    re_conditional,       // matching remaining disparity
    ie_observed,          // observed-disparity reduction, no exposure intervention
    re_observed,          // matching remaining disparity
    iie_marginal,         // draws from stratum marginals, target must be all mediators
    ie_mean_observed,     // target fixed at its observed control-group mean
    ie_mean_conditional,  // target fixed at its counterfactual control mean
    cde,                  // all mediators fixed at given support values
    te,                   // g-formula contrast
    ey_group,             // observational E[Y | A=a]
    ey_do,                // g-formula E[Y_a]
};

enum class DrawSource { control_given_c, pooled_marginal };

struct IdentifiedQuery {
    IdentifiedKind kind = IdentifiedKind::te;
    std::vector<std::string> target;          // I block
    std::vector<std::string> held_mediators;  // observed-value conditioning block
    DrawSource i_source = DrawSource::control_given_c;
    std::vector<double> fixed_values;         // cde: one per mediator, support values
    int a = 1;                                // ey_group / ey_do level
};

/// Evaluate the identified observational formula exactly by enumeration.
/// Throws PositivityError naming the first empty conditioning cell.
double enumerate_identified(const DiscreteScm& scm, const IdentifiedQuery& q);

/// True counterfactual value of an estimand, computed from the structural
/// model itself (latents enumerated exactly, no identification assumptions).
enum class TruthKind {
    ey_do,
    te,
    cde,
    iie,           // draws of I from counterfactual law given C; R drawn given C
    iie_r,         // same but contrasting the R draw's group
    ide,           // joint mediator draw from the control counterfactual law given C
    ie,            // exposure-intervention disparity reduction
    re,
    ie_observed,
    re_observed,
    iie_marginal,  // draws from stratum marginal counterfactual laws
    ide_marginal,
    ie_mean_observed,
    ie_mean_conditional,
    nie,           // cross-world natural effects under the comonotone coupling;
    nde,           //   representation-dependent, reported for reference only
    ey_group,
};

struct TruthQuery {
    TruthKind kind = TruthKind::te;
    std::vector<std::string> target;
    std::vector<std::string> held_mediators;
    DrawSource i_source = DrawSource::control_given_c;
    std::vector<double> fixed_values;
    int a = 1;
};

double counterfactual_truth(const DiscreteScm& scm, const TruthQuery& q);

}  // namespace dispar
