#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dispar/assumptions.hpp"
#include "dispar/dataset.hpp"
#include "dispar/glm.hpp"

namespace dispar {

/// Monte Carlo simulation-based g-computation for group-disparity analysis.
/// Estimates expected counterfactual outcomes under stochastic, degenerate,
/// or pooled mediator interventions, with and without exposure intervention,
/// and assembles the disparity-reduction estimands built on them.

// --- query vocabulary -------------------------------------------------------

enum class SourceKind {
    observed_group,        // draw from the observational law of group a*, given conditioning
    counterfactual_group,  // draw from the group-a* law given covariates (exposure-intervened)
    pooled,                // resample the block jointly from the whole sample
    fix_constant,          // set the block to given constants
    fix_group_mean,        // set each target to its observed group-a* mean
};

struct InterventionSpec {
    std::vector<std::string> target;  // intervened mediator block I
    SourceKind source = SourceKind::observed_group;
    int source_group = 0;  // a* for observed_group / counterfactual_group / fix_group_mean
    // columns whose observed values the draw law conditions on; mediators
    // listed here are held fixed at their observed values and never redrawn
    std::vector<std::string> conditioning;
    std::vector<double> constants;  // aligned with target (fix_constant)
};

enum class EffectKind {
    te,
    nie,  // rejected by the estimator: representation-dependent, oracle-only
    nde,  // rejected likewise
    iie,
    ide,
    ie,
    re,
    ie_obs,
    re_obs,
    cde,
    joint_reduction,   // both-group intervention; components A (exposed), B (control)
    te_decomposition,  // TE = IIE_I + IIE_R + IDE + dependence remainder
};

enum class Population { exposed_only, control_only, whole_population };

struct CounterfactualQuery {
    std::string name;  // report label
    EffectKind kind = EffectKind::ie_obs;
    InterventionSpec intervention;
    std::optional<Population> population;   // validated against the kind's canonical value
    std::optional<int> exposure_set_to;     // required (=1) for exposure-intervened kinds
    bool sweep = false;                     // expand into one query per eligible mediator
};

const char* effect_kind_name(EffectKind k);
EffectKind effect_kind_from_name(const std::string& name);
bool kind_intervenes_on_exposure(EffectKind k);

/// Canonical simulation population for a kind.
Population canonical_population(EffectKind k);

/// Throws ValidationError when the query is malformed for the given roles.
void validate_query(const RoleMap& r, const CounterfactualQuery& q);

/// Expands a sweep template into per-mediator queries (mediators listed in
/// the conditioning set are skipped).
std::vector<CounterfactualQuery> expand_sweep(const RoleMap& r, const CounterfactualQuery& tmpl);

// --- settings & results -----------------------------------------------------

struct GcompSettings {
    std::size_t z_draws = 300;
    std::size_t b_bootstrap = 1000;
    std::uint64_t seed = 0;
    unsigned parallel_workers = 1;
    double positivity_abort_fraction = 0.01;
    bool outcome_draw = true;  // stochastic outcome draw; false = mean fast path
    SelectionPolicy selection = SelectionPolicy::none;
    bool reselect_per_replicate = false;
    bool debug_dumps = false;
    std::string debug_dir;
};

struct ComponentEstimate {
    std::string name;
    double point = 0.0;
    double mc_se = 0.0;
    bool has_ci = false;
    double ci_low = 0.0;
    double ci_high = 0.0;
};

struct EffectEstimate {
    std::string name;
    EffectKind kind = EffectKind::ie_obs;
    std::string target_label;
    bool failed = false;
    std::string error;

    double point = 0.0;
    double mc_se = 0.0;
    bool has_ci = false;
    double ci_low = 0.0;
    double ci_high = 0.0;
    double boot_se = 0.0;
    bool point_outside_ci = false;  // possible with percentile CIs; reported, never reordered

    bool has_percent = false;
    double percent_of_gap = 0.0;
    bool has_percent_ci = false;
    double percent_ci_low = 0.0;
    double percent_ci_high = 0.0;

    std::vector<ComponentEstimate> components;

    std::size_t positivity_flagged = 0;  // units with conditioning outside fitted ranges
    std::size_t positivity_units = 0;
    std::size_t bootstrap_failures = 0;
    std::vector<std::string> notes;
};

struct ModelSummary {
    std::string response;
    std::string stratum;
    std::string family;
    std::vector<std::string> terms;
    std::vector<double> coef;
    double aic = 0.0;
    std::size_t n_obs = 0;
    std::vector<std::string> notes;
};

struct GcompOutput {
    std::vector<EffectEstimate> estimates;
    std::vector<ModelSummary> models;  // full-sample fits, in first-use order
    GroupStats stats;
};

// --- operations --------------------------------------------------------------

struct MediatorModelChain {
    std::vector<std::string> mediators;  // chain members in working order
    std::vector<FittedModel> models;
};

/// Fits a factorized chain for `block` (subset of mediators, working order):
/// member k is regressed on `conditioning` plus the prior block members, on
/// the rows of `stratum` (0/1; -1 = all rows).  Families follow variable
/// type: logistic for binary columns, linear otherwise.
MediatorModelChain fit_chain(const Dataset& d, const RoleMap& r, int stratum,
                             const std::vector<std::string>& conditioning,
                             const std::vector<std::string>& block,
                             SelectionPolicy selection = SelectionPolicy::none);

struct SimResult {
    double mean = 0.0;
    std::vector<double> repetition_means;
    std::size_t flagged_units = 0;
    std::size_t n_units = 0;
};

/// Runs the query's primary counterfactual simulation (the expected
/// counterfactual outcome its intervention defines on its population) and
/// returns the Monte Carlo mean and per-repetition means.  Contrast kinds
/// are composed from several such runs by estimate_effect.
SimResult simulate_counterfactual_mean(const Dataset& d, const RoleMap& r,
                                       const CounterfactualQuery& q, const GcompSettings& s);

/// Point estimate, mc_se and (when b_bootstrap >= 2) percentile CIs for one
/// query.  Bootstrap resampling is stratified by exposure group with a full
/// model refit per replicate.
EffectEstimate estimate_effect(const Dataset& d, const RoleMap& r, const CounterfactualQuery& q,
                               const GcompSettings& s, const AssumptionLedger& ledger = {});

/// Evaluates several queries on shared bootstrap replicates (and a shared
/// full-sample model cache).  Per-query failures are recorded on the
/// estimate, not thrown.
GcompOutput run_queries(const Dataset& d, const RoleMap& r,
                        const std::vector<CounterfactualQuery>& queries, const GcompSettings& s,
                        const AssumptionLedger& ledger = {});

/// Expands the template over each eligible mediator and evaluates the whole
/// sweep on shared replicates.
std::vector<EffectEstimate> sweep_single_mediators(const Dataset& d, const RoleMap& r,
                                                   const CounterfactualQuery& tmpl,
                                                   const GcompSettings& s,
                                                   const AssumptionLedger& ledger = {});

}  // namespace dispar
