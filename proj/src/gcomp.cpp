#include "dispar/gcomp.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "dispar/error.hpp"
#include "dispar/parallel.hpp"
#include "dispar/rng.hpp"

namespace dispar {

namespace {
constexpr std::uint64_t kSimTag = 0xd15c0000u;   // per-unit simulation streams
constexpr std::uint64_t kBootTag = 0xb0075u;     // bootstrap resampling streams
}  // namespace

// --- kind vocabulary ---------------------------------------------------------

const char* effect_kind_name(EffectKind k) {
    switch (k) {
        case EffectKind::te: return "te";
        case EffectKind::nie: return "nie";
        case EffectKind::nde: return "nde";
        case EffectKind::iie: return "iie";
        case EffectKind::ide: return "ide";
        case EffectKind::ie: return "ie";
        case EffectKind::re: return "re";
        case EffectKind::ie_obs: return "ie_obs";
        case EffectKind::re_obs: return "re_obs";
        case EffectKind::cde: return "cde";
        case EffectKind::joint_reduction: return "joint_reduction";
        case EffectKind::te_decomposition: return "te_decomposition";
    }
    return "?";
}

EffectKind effect_kind_from_name(const std::string& name) {
    static const std::map<std::string, EffectKind> kinds = {
        {"te", EffectKind::te},
        {"nie", EffectKind::nie},
        {"nde", EffectKind::nde},
        {"iie", EffectKind::iie},
        {"ide", EffectKind::ide},
        {"ie", EffectKind::ie},
        {"re", EffectKind::re},
        {"ie_obs", EffectKind::ie_obs},
        {"re_obs", EffectKind::re_obs},
        {"cde", EffectKind::cde},
        {"joint_reduction", EffectKind::joint_reduction},
        {"te_decomposition", EffectKind::te_decomposition},
    };
    auto it = kinds.find(name);
    if (it == kinds.end()) throw ValidationError("unknown estimand kind: " + name);
    return it->second;
}

bool kind_intervenes_on_exposure(EffectKind k) {
    switch (k) {
        case EffectKind::ie_obs:
        case EffectKind::re_obs:
        case EffectKind::joint_reduction: return false;
        default: return true;
    }
}

Population canonical_population(EffectKind k) {
    switch (k) {
        case EffectKind::ie_obs:
        case EffectKind::re_obs: return Population::exposed_only;
        default: return Population::whole_population;
    }
}

void validate_query(const RoleMap& r, const CounterfactualQuery& q) {
    const InterventionSpec& iv = q.intervention;
    if (q.kind == EffectKind::nie || q.kind == EffectKind::nde)
        throw ValidationError(
            "natural-effect contrasts depend on cross-world noise couplings that a simulation "
            "from fitted observational models cannot target; use the exact enumeration oracle");

    if (q.sweep) {
        if (!iv.target.empty())
            throw ValidationError("sweep templates leave the target empty; it is filled per mediator");
        if (q.kind == EffectKind::te || q.kind == EffectKind::cde ||
            q.kind == EffectKind::te_decomposition || q.kind == EffectKind::ide)
            throw ValidationError(std::string("estimand kind '") + effect_kind_name(q.kind) +
                                  "' cannot be swept over single mediators");
        if (iv.source == SourceKind::fix_constant)
            throw ValidationError("sweeps cannot use fixed constants; use fix_group_mean");
        return;  // remaining checks run on the expanded queries
    }

    if (q.population && *q.population != canonical_population(q.kind))
        throw ValidationError(std::string("population inconsistent with estimand kind '") +
                              effect_kind_name(q.kind) + "'");

    if (kind_intervenes_on_exposure(q.kind)) {
        if (!q.exposure_set_to || *q.exposure_set_to != 1)
            throw ValidationError(
                "exposure-intervened estimands require exposure_set_to = 1 (contrasts are "
                "defined against a* = 0)");
    } else if (q.exposure_set_to) {
        throw ValidationError(
            "observed-disparity estimands do not intervene on the exposure; drop exposure_set_to");
    }

    const std::set<std::string> meds(r.mediators.begin(), r.mediators.end());
    std::set<std::string> tset;
    for (const auto& t : iv.target) {
        if (!meds.count(t)) throw ValidationError("target '" + t + "' is not a declared mediator");
        if (!tset.insert(t).second) throw ValidationError("duplicate target '" + t + "'");
    }
    if (q.kind == EffectKind::te) {
        if (!iv.target.empty())
            throw ValidationError("total-effect queries take no mediator target");
        if (!iv.conditioning.empty() || !iv.constants.empty())
            throw ValidationError("total-effect queries take no intervention fields");
        return;
    }
    if (iv.target.empty()) throw ValidationError("query needs a nonempty target block");
    if ((q.kind == EffectKind::cde || q.kind == EffectKind::ide) && tset.size() != r.mediators.size())
        throw ValidationError(std::string("'") + effect_kind_name(q.kind) +
                              "' requires every mediator in the target");

    std::set<std::string> cset;
    for (const auto& c : iv.conditioning) {
        const bool known = std::count(r.covariates.begin(), r.covariates.end(), c) ||
                           std::count(r.confounders.begin(), r.confounders.end(), c) ||
                           meds.count(c);
        if (!known)
            throw ValidationError("conditioning column '" + c +
                                  "' is not a covariate, confounder or mediator");
        if (tset.count(c))
            throw ValidationError("'" + c + "' cannot be both target and conditioning");
        if (!cset.insert(c).second) throw ValidationError("duplicate conditioning column '" + c + "'");
    }

    switch (q.kind) {
        case EffectKind::ie_obs:
        case EffectKind::re_obs:
        case EffectKind::joint_reduction:
            if (iv.source == SourceKind::counterfactual_group)
                throw ValidationError(
                    "observed-disparity estimands draw from observational laws; "
                    "counterfactual_group applies to exposure-intervened kinds only");
            if (iv.source == SourceKind::pooled && !iv.conditioning.empty())
                throw ValidationError("pooled draws are unconditional; drop the conditioning set");
            if (iv.source == SourceKind::fix_constant && iv.constants.size() != iv.target.size())
                throw ValidationError("fix_constant needs one constant per target mediator");
            if ((iv.source == SourceKind::observed_group ||
                 iv.source == SourceKind::fix_group_mean) &&
                iv.source_group != 0 && iv.source_group != 1)
                throw ValidationError("source_group must be 0 or 1");
            break;
        case EffectKind::cde:
            if (iv.source != SourceKind::fix_constant)
                throw ValidationError("controlled-effect queries fix constants (source fix_constant)");
            if (iv.constants.size() != iv.target.size())
                throw ValidationError("fix_constant needs one constant per target mediator");
            if (!iv.conditioning.empty())
                throw ValidationError("controlled-effect queries take no conditioning set");
            break;
        default:  // iie, ide, ie, re, te_decomposition
            if (iv.source != SourceKind::counterfactual_group)
                throw ValidationError(
                    "exposure-intervened estimands draw from counterfactual group laws "
                    "(source counterfactual_group)");
            if (iv.source_group != 0)
                throw ValidationError("contrasts are defined against a* = 0; set source_group = 0");
            if (!iv.conditioning.empty())
                throw ValidationError(
                    "counterfactual draws condition on the baseline covariates implicitly; "
                    "drop the conditioning set");
            break;
    }
}

std::vector<CounterfactualQuery> expand_sweep(const RoleMap& r, const CounterfactualQuery& tmpl) {
    if (!tmpl.sweep) return {tmpl};
    CounterfactualQuery probe = tmpl;
    validate_query(r, probe);  // template-level checks
    const std::set<std::string> cond(tmpl.intervention.conditioning.begin(),
                                     tmpl.intervention.conditioning.end());
    std::vector<CounterfactualQuery> out;
    for (const auto& m : r.mediators) {
        if (cond.count(m)) continue;
        CounterfactualQuery q = tmpl;
        q.sweep = false;
        q.intervention.target = {m};
        q.name = tmpl.name.empty() ? m : tmpl.name + ":" + m;
        out.push_back(std::move(q));
    }
    if (out.empty()) throw ValidationError("sweep has no eligible mediators");
    return out;
}

// --- internal context --------------------------------------------------------

namespace {

struct Ctx {
    const Dataset& d;
    const RoleMap& r;
    std::size_t a_col = 0, y_col = 0;
    std::vector<std::size_t> c_cols, l_cols, m_cols;
    std::vector<std::size_t> rows0, rows1, all_rows;
    GroupStats stats;

    Ctx(const Dataset& dd, const RoleMap& rr) : d(dd), r(rr), stats(group_stats(dd, rr)) {
        a_col = d.column_index(r.exposure);
        y_col = d.column_index(r.outcome);
        for (const auto& nm : r.covariates) c_cols.push_back(d.column_index(nm));
        for (const auto& nm : r.confounders) l_cols.push_back(d.column_index(nm));
        for (const auto& nm : r.mediators) m_cols.push_back(d.column_index(nm));
        all_rows.resize(d.n_rows());
        for (std::size_t i = 0; i < d.n_rows(); ++i) all_rows[i] = i;
        const auto& a = d.column(a_col);
        for (std::size_t i = 0; i < a.size(); ++i) (a[i] == 1.0 ? rows1 : rows0).push_back(i);
    }

    const std::vector<std::size_t>& stratum_rows(int g) const {
        return g < 0 ? all_rows : (g == 1 ? rows1 : rows0);
    }
};

struct ModelCache {
    explicit ModelCache(const Ctx& c) : ctx(c) {}

    const Ctx& ctx;
    SelectionPolicy policy = SelectionPolicy::none;
    bool allow_select = false;
    std::map<std::string, TermSet>* term_store = nullptr;  // written only when allow_select
    const std::map<std::string, bool>* binary_map = nullptr;
    std::map<std::string, FittedModel> fitted;
    std::map<std::string, std::vector<std::string>> notes_by_sig;
    std::vector<std::string> order;  // signatures in first-use order

    static std::string signature(const std::string& response, int stratum,
                                 const std::vector<std::string>& regs) {
        std::string s = response;
        s += "|";
        s += stratum < 0 ? "all" : (stratum == 1 ? "A=1" : "A=0");
        s += "|";
        for (const auto& g : regs) {
            s += g;
            s += ',';
        }
        return s;
    }

    const FittedModel& get(const std::string& response, int stratum,
                           const std::vector<std::string>& regs) {
        const std::string sig = signature(response, stratum, regs);
        auto it = fitted.find(sig);
        if (it != fitted.end()) return it->second;

        const auto& rows = ctx.stratum_rows(stratum);
        const std::string label = stratum < 0 ? "all" : (stratum == 1 ? "A=1" : "A=0");
        Family fam = Family::linear;
        if (binary_map) {
            auto b = binary_map->find(response);
            if (b != binary_map->end() && b->second) fam = Family::logistic;
        }
        FittedModel model;
        std::vector<std::string> notes;
        const TermSet* stored = nullptr;
        if (term_store) {
            auto t = term_store->find(sig);
            if (t != term_store->end()) stored = &t->second;
        }
        try {
            if (stored) {
                model = fit_glm(ctx.d, rows, response, *stored, fam, label);
            } else if (allow_select && policy != SelectionPolicy::none) {
                SelectResult sr =
                    select_interactions(ctx.d, rows, response, regs, fam, label, policy);
                model = std::move(sr.model);
                notes = std::move(sr.notes);
                if (term_store) (*term_store)[sig] = model.terms;
            } else {
                model = fit_glm(ctx.d, rows, response, TermSet::mains_only(regs), fam, label);
            }
        } catch (const Error& e) {
            throw EstimationError("model for " + response + " (" + label + "): " + e.what());
        }
        order.push_back(sig);
        notes_by_sig[sig] = std::move(notes);
        return fitted.emplace(sig, std::move(model)).first->second;
    }
};

enum class Act : std::uint8_t { keep, chain, fix, resample };

struct RunSpec {
    std::uint64_t t_id = 0;
    int population = 1;  // -1 = whole sample, else exposure stratum
    int a_value = 1;
    bool draw_l = false;
    std::vector<const FittedModel*> l_models;  // per confounder, when draw_l
    std::vector<Act> act;                      // per mediator, working order
    std::vector<const FittedModel*> med_model;
    std::vector<double> fix_vals;
    const FittedModel* y_model = nullptr;
    const std::vector<std::size_t>* resample_rows = nullptr;
};

struct Contrast {
    std::string name;  // "" = the query's main estimate
    std::vector<std::pair<double, int>> terms;
    double constant = 0.0;
};

struct QueryPlan {
    std::vector<RunSpec> runs;
    std::vector<Contrast> contrasts;
    int primary_run = 0;
};

std::vector<std::size_t> mediator_positions(const RoleMap& r, const std::vector<std::string>& names) {
    std::vector<std::size_t> pos;
    for (std::size_t k = 0; k < r.mediators.size(); ++k)
        if (std::count(names.begin(), names.end(), r.mediators[k])) pos.push_back(k);
    return pos;
}

// Appends chain members for `block` (working-order positions): member k is
// modeled on `stratum` rows given `regs` plus the prior block members.
void set_block_chain(RunSpec& rs, const Ctx& ctx, ModelCache& cache,
                     const std::vector<std::size_t>& block, int stratum,
                     std::vector<std::string> regs) {
    for (std::size_t pos : block) {
        const std::string& name = ctx.r.mediators[pos];
        rs.act[pos] = Act::chain;
        rs.med_model[pos] = &cache.get(name, stratum, regs);
        regs.push_back(name);
    }
}

void set_l_chain(RunSpec& rs, const Ctx& ctx, ModelCache& cache, int stratum) {
    rs.draw_l = true;
    std::vector<std::string> regs = ctx.r.covariates;
    for (const auto& name : ctx.r.confounders) {
        rs.l_models.push_back(&cache.get(name, stratum, regs));
        regs.push_back(name);
    }
}

const FittedModel* y_model(const Ctx& ctx, ModelCache& cache, int stratum) {
    std::vector<std::string> regs = ctx.r.covariates;
    regs.insert(regs.end(), ctx.r.confounders.begin(), ctx.r.confounders.end());
    regs.insert(regs.end(), ctx.r.mediators.begin(), ctx.r.mediators.end());
    return &cache.get(ctx.r.outcome, stratum, regs);
}

QueryPlan build_plan(const Ctx& ctx, ModelCache& cache, const CounterfactualQuery& q) {
    const InterventionSpec& iv = q.intervention;
    const std::size_t K = ctx.r.mediators.size();
    const std::vector<std::size_t> T = mediator_positions(ctx.r, iv.target);
    const std::vector<std::size_t> H = mediator_positions(ctx.r, iv.conditioning);
    std::vector<std::size_t> all_pos(K);
    for (std::size_t k = 0; k < K; ++k) all_pos[k] = k;
    std::vector<std::size_t> R;  // untouched block
    {
        std::set<std::size_t> skip(T.begin(), T.end());
        skip.insert(H.begin(), H.end());
        for (std::size_t k = 0; k < K; ++k)
            if (!skip.count(k)) R.push_back(k);
    }
    std::vector<std::string> cl_regs = ctx.r.covariates;
    cl_regs.insert(cl_regs.end(), ctx.r.confounders.begin(), ctx.r.confounders.end());

    QueryPlan plan;
    std::uint64_t next_t = 0;
    auto base_run = [&](int pop, int a) {
        RunSpec rs;
        rs.t_id = next_t++;
        rs.population = pop;
        rs.a_value = a;
        rs.act.assign(K, Act::keep);
        rs.med_model.assign(K, nullptr);
        rs.fix_vals.assign(K, 0.0);
        return rs;
    };

    // Table-5-style simulation on the rows of group g: observed C, L (and
    // held mediators) kept; target block per the intervention source; the
    // untouched block from its natural group-g chain given C and L.
    auto obs_sim_run = [&](int g) {
        RunSpec rs = base_run(g, g);
        switch (iv.source) {
            case SourceKind::fix_constant:
                for (std::size_t i = 0; i < iv.target.size(); ++i) {
                    const auto pos = mediator_positions(ctx.r, {iv.target[i]});
                    rs.act[pos[0]] = Act::fix;
                    rs.fix_vals[pos[0]] = iv.constants[i];
                }
                break;
            case SourceKind::fix_group_mean:
                for (std::size_t pos : T) {
                    rs.act[pos] = Act::fix;
                    rs.fix_vals[pos] = mean_over_rows(ctx.d, ctx.m_cols[pos],
                                                      ctx.stratum_rows(iv.source_group));
                }
                break;
            case SourceKind::pooled:
                for (std::size_t pos : T) rs.act[pos] = Act::resample;
                rs.resample_rows = &ctx.all_rows;
                break;
            case SourceKind::observed_group:
                if (iv.conditioning.empty()) {
                    for (std::size_t pos : T) rs.act[pos] = Act::resample;
                    rs.resample_rows = &ctx.stratum_rows(iv.source_group);
                } else {
                    set_block_chain(rs, ctx, cache, T, iv.source_group, iv.conditioning);
                }
                break;
            case SourceKind::counterfactual_group: break;  // excluded by validation
        }
        set_block_chain(rs, ctx, cache, R, g, cl_regs);
        rs.y_model = y_model(ctx, cache, g);
        return rs;
    };

    // Exposure-intervened runs (Table-A1 style): whole sample, observed C.
    auto ey_do_run = [&](int a) {  // natural full chain under A=a
        RunSpec rs = base_run(-1, a);
        set_l_chain(rs, ctx, cache, a);
        set_block_chain(rs, ctx, cache, all_pos, a, cl_regs);
        rs.y_model = y_model(ctx, cache, a);
        return rs;
    };
    auto iie_run = [&](int i_stratum, int r_stratum) {  // a = 1; I, R given C only
        RunSpec rs = base_run(-1, 1);
        set_l_chain(rs, ctx, cache, 1);
        set_block_chain(rs, ctx, cache, T, i_stratum, ctx.r.covariates);
        set_block_chain(rs, ctx, cache, R, r_stratum, ctx.r.covariates);
        rs.y_model = y_model(ctx, cache, 1);
        return rs;
    };
    auto joint_m_run = [&](int a) {  // all mediators from the a*=0 law given C
        RunSpec rs = base_run(-1, a);
        set_l_chain(rs, ctx, cache, a);
        set_block_chain(rs, ctx, cache, all_pos, 0, ctx.r.covariates);
        rs.y_model = y_model(ctx, cache, a);
        return rs;
    };
    auto ie_sim_run = [&]() {  // I from a*=0 given C; R from a=1 given C and drawn L
        RunSpec rs = base_run(-1, 1);
        set_l_chain(rs, ctx, cache, 1);
        set_block_chain(rs, ctx, cache, T, 0, ctx.r.covariates);
        set_block_chain(rs, ctx, cache, R, 1, cl_regs);
        rs.y_model = y_model(ctx, cache, 1);
        return rs;
    };
    auto cde_run = [&](int a) {
        RunSpec rs = base_run(-1, a);
        set_l_chain(rs, ctx, cache, a);
        for (std::size_t i = 0; i < iv.target.size(); ++i) {
            const auto pos = mediator_positions(ctx.r, {iv.target[i]});
            rs.act[pos[0]] = Act::fix;
            rs.fix_vals[pos[0]] = iv.constants[i];
        }
        rs.y_model = y_model(ctx, cache, a);
        return rs;
    };

    const double y1 = ctx.stats.mean_outcome_exposed;
    const double y0 = ctx.stats.mean_outcome_control;
    switch (q.kind) {
        case EffectKind::ie_obs:
            plan.runs.push_back(obs_sim_run(1));
            plan.contrasts.push_back({"", {{-1.0, 0}}, y1});
            break;
        case EffectKind::re_obs:
            plan.runs.push_back(obs_sim_run(1));
            plan.contrasts.push_back({"", {{1.0, 0}}, -y0});
            break;
        case EffectKind::joint_reduction:
            plan.runs.push_back(obs_sim_run(1));
            plan.runs.push_back(obs_sim_run(0));
            plan.contrasts.push_back({"", {{-1.0, 0}, {1.0, 1}}, y1 - y0});
            plan.contrasts.push_back({"component_exposed", {{-1.0, 0}}, y1});
            plan.contrasts.push_back({"component_control", {{1.0, 1}}, -y0});
            break;
        case EffectKind::te:
            plan.runs.push_back(ey_do_run(1));
            plan.runs.push_back(ey_do_run(0));
            plan.contrasts.push_back({"", {{1.0, 0}, {-1.0, 1}}, 0.0});
            break;
        case EffectKind::iie:
            plan.runs.push_back(iie_run(1, 1));
            plan.runs.push_back(iie_run(0, 1));
            plan.contrasts.push_back({"", {{1.0, 0}, {-1.0, 1}}, 0.0});
            plan.primary_run = 1;
            break;
        case EffectKind::ide:
            plan.runs.push_back(joint_m_run(1));
            plan.runs.push_back(joint_m_run(0));
            plan.contrasts.push_back({"", {{1.0, 0}, {-1.0, 1}}, 0.0});
            break;
        case EffectKind::ie:
            plan.runs.push_back(ey_do_run(1));
            plan.runs.push_back(ie_sim_run());
            plan.contrasts.push_back({"", {{1.0, 0}, {-1.0, 1}}, 0.0});
            plan.primary_run = 1;
            break;
        case EffectKind::re:
            plan.runs.push_back(ie_sim_run());
            plan.runs.push_back(ey_do_run(0));
            plan.contrasts.push_back({"", {{1.0, 0}, {-1.0, 1}}, 0.0});
            break;
        case EffectKind::cde:
            plan.runs.push_back(cde_run(1));
            plan.runs.push_back(cde_run(0));
            plan.contrasts.push_back({"", {{1.0, 0}, {-1.0, 1}}, 0.0});
            break;
        case EffectKind::te_decomposition: {
            // every term from its own runs, so the closure check is a
            // statistical property rather than an arithmetic identity
            plan.runs.push_back(ey_do_run(1));    // 0
            plan.runs.push_back(ey_do_run(0));    // 1
            plan.runs.push_back(iie_run(1, 1));   // 2
            plan.runs.push_back(iie_run(0, 1));   // 3
            plan.runs.push_back(iie_run(0, 1));   // 4
            plan.runs.push_back(iie_run(0, 0));   // 5
            plan.runs.push_back(joint_m_run(1));  // 6
            plan.runs.push_back(joint_m_run(0));  // 7
            plan.runs.push_back(ey_do_run(1));    // 8
            plan.runs.push_back(iie_run(1, 1));   // 9
            plan.runs.push_back(iie_run(0, 0));   // 10
            plan.runs.push_back(joint_m_run(1));  // 11
            plan.runs.push_back(joint_m_run(0));  // 12
            plan.runs.push_back(ey_do_run(0));    // 13
            plan.contrasts.push_back({"", {{1.0, 0}, {-1.0, 1}}, 0.0});
            plan.contrasts.push_back({"iie_i", {{1.0, 2}, {-1.0, 3}}, 0.0});
            plan.contrasts.push_back({"iie_r", {{1.0, 4}, {-1.0, 5}}, 0.0});
            plan.contrasts.push_back({"ide", {{1.0, 6}, {-1.0, 7}}, 0.0});
            plan.contrasts.push_back({"dependence_remainder",
                                      {{1.0, 8}, {-1.0, 9}, {1.0, 10}, {-1.0, 11}, {1.0, 12}, {-1.0, 13}},
                                      0.0});
            plan.contrasts.push_back({"closure_gap",
                                      {{1.0, 0}, {-1.0, 1}, {-1.0, 2}, {1.0, 3}, {-1.0, 4}, {1.0, 5},
                                       {-1.0, 6}, {1.0, 7}, {-1.0, 8}, {1.0, 9}, {-1.0, 10}, {1.0, 11},
                                       {-1.0, 12}, {1.0, 13}},
                                      0.0});
            break;
        }
        case EffectKind::nie:
        case EffectKind::nde: break;  // excluded by validation
    }
    return plan;
}

// --- the Monte Carlo core ------------------------------------------------------

struct RunOutput {
    std::vector<double> v_z;  // per-repetition means
    std::size_t flagged = 0;  // units needing extrapolation (first repetition)
    std::size_t n_units = 0;
};

std::string sanitize_tag(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
    return out.empty() ? std::string("query") : out;
}

RunOutput simulate_run(const Ctx& ctx, const RunSpec& rs, const GcompSettings& s,
                       std::uint64_t b_index, bool count_flags, unsigned workers,
                       const std::string* dump_path) {
    const auto& pop = ctx.stratum_rows(rs.population);
    const std::size_t n = pop.size();
    if (n == 0) throw DegenerateGroupError("simulation population is empty");
    RunOutput out;
    out.n_units = n;
    out.v_z.assign(s.z_draws, 0.0);
    std::size_t flagged_first = 0;
    const std::size_t n_cols = ctx.d.n_cols();

    parallel_for(s.z_draws, workers, [&](std::size_t z) {
        std::vector<double> buf(n_cols);
        CounterRng rng({0});
        const bool flags_here = count_flags && z == 0;
        const bool dump_here = dump_path != nullptr && z == 0;
        std::vector<std::vector<double>> dump_cols;
        if (dump_here) dump_cols.assign(n_cols, {});
        double sum = 0.0;
        std::size_t flagged = 0;
        for (std::size_t u = 0; u < n; ++u) {
            const std::size_t row = pop[u];
            rng.reset(CounterRng::fold({s.seed, kSimTag, rs.t_id, b_index, z, u}));
            for (std::size_t c = 0; c < n_cols; ++c) buf[c] = ctx.d.value(row, c);
            buf[ctx.a_col] = static_cast<double>(rs.a_value);
            bool unit_flag = false;
            if (rs.draw_l) {
                for (std::size_t j = 0; j < rs.l_models.size(); ++j) {
                    const FittedModel& m = *rs.l_models[j];
                    if (flags_here && m.out_of_range(buf.data())) unit_flag = true;
                    buf[ctx.l_cols[j]] = m.draw(buf.data(), rng);
                }
            }
            bool resampled = false;
            for (std::size_t k = 0; k < rs.act.size(); ++k) {
                switch (rs.act[k]) {
                    case Act::keep: break;
                    case Act::fix: buf[ctx.m_cols[k]] = rs.fix_vals[k]; break;
                    case Act::resample:
                        if (!resampled) {
                            const auto& src_rows = *rs.resample_rows;
                            const std::size_t src = src_rows[rng.next_index(src_rows.size())];
                            for (std::size_t k2 = k; k2 < rs.act.size(); ++k2)
                                if (rs.act[k2] == Act::resample)
                                    buf[ctx.m_cols[k2]] = ctx.d.value(src, ctx.m_cols[k2]);
                            resampled = true;
                        }
                        break;
                    case Act::chain: {
                        const FittedModel& m = *rs.med_model[k];
                        if (flags_here && m.out_of_range(buf.data())) unit_flag = true;
                        buf[ctx.m_cols[k]] = m.draw(buf.data(), rng);
                        break;
                    }
                }
            }
            if (flags_here && rs.y_model->out_of_range(buf.data())) unit_flag = true;
            const double yv = s.outcome_draw ? rs.y_model->draw(buf.data(), rng)
                                             : rs.y_model->predict_mean(buf.data());
            sum += yv;
            if (unit_flag) ++flagged;
            if (dump_here) {
                buf[ctx.y_col] = yv;
                for (std::size_t c = 0; c < n_cols; ++c) dump_cols[c].push_back(buf[c]);
            }
        }
        out.v_z[z] = sum / static_cast<double>(n);
        if (flags_here) flagged_first = flagged;
        if (dump_here) {
            Dataset sim = Dataset::from_columns(ctx.d.names(), std::move(dump_cols));
            std::ofstream f(*dump_path);
            f << to_delimited_text(sim);
        }
    });
    out.flagged = count_flags ? flagged_first : 0;
    return out;
}

struct QueryEval {
    std::vector<std::string> names;          // contrast names, "" first
    std::vector<double> points;
    std::vector<std::vector<double>> reps;   // per-name repetition values (when requested)
    std::size_t flagged = 0, units = 0;
};

QueryEval evaluate_query(const Ctx& ctx, ModelCache& cache, const CounterfactualQuery& q,
                         const GcompSettings& s, std::uint64_t b_index, bool count_flags,
                         bool want_reps, unsigned workers, const std::string* dump_dir) {
    const QueryPlan plan = build_plan(ctx, cache, q);
    std::vector<RunOutput> outs;
    outs.reserve(plan.runs.size());
    for (const RunSpec& rs : plan.runs) {
        std::string path;
        const std::string* dp = nullptr;
        if (dump_dir && b_index == 0) {
            path = *dump_dir + "/sim_" + sanitize_tag(q.name.empty() ? effect_kind_name(q.kind)
                                                                     : q.name) +
                   "_run" + std::to_string(rs.t_id) + ".tsv";
            dp = &path;
        }
        RunOutput ro = simulate_run(ctx, rs, s, b_index, count_flags, workers, dp);
        if (count_flags && ro.n_units > 0 &&
            static_cast<double>(ro.flagged) >
                s.positivity_abort_fraction * static_cast<double>(ro.n_units)) {
            std::ostringstream os;
            os << "positivity: " << ro.flagged << " of " << ro.n_units
               << " units required extrapolation beyond fitted covariate ranges (limit "
               << s.positivity_abort_fraction * 100.0 << "%)";
            throw PositivityError(os.str());
        }
        outs.push_back(std::move(ro));
    }

    QueryEval ev;
    for (const auto& ro : outs) {
        ev.flagged += ro.flagged;
        ev.units += ro.n_units;
    }
    std::vector<double> run_means(outs.size(), 0.0);
    for (std::size_t i = 0; i < outs.size(); ++i) {
        double t = 0.0;
        for (double v : outs[i].v_z) t += v;
        run_means[i] = t / static_cast<double>(outs[i].v_z.size());
    }
    for (const Contrast& c : plan.contrasts) {
        double point = c.constant;
        for (const auto& [coef, run] : c.terms) point += coef * run_means[static_cast<std::size_t>(run)];
        ev.names.push_back(c.name);
        ev.points.push_back(point);
        if (want_reps) {
            std::vector<double> cz(s.z_draws, c.constant);
            for (const auto& [coef, run] : c.terms)
                for (std::size_t z = 0; z < s.z_draws; ++z)
                    cz[z] += coef * outs[static_cast<std::size_t>(run)].v_z[z];
            ev.reps.push_back(std::move(cz));
        }
    }
    if (q.kind == EffectKind::joint_reduction) {
        // keep total = component_exposed + component_control exact in floating
        // point, not just in exact arithmetic
        auto idx = [&](const char* n) {
            return static_cast<std::size_t>(
                std::find(ev.names.begin(), ev.names.end(), n) - ev.names.begin());
        };
        const std::size_t it = idx(""), ia = idx("component_exposed"), ib = idx("component_control");
        ev.points[it] = ev.points[ia] + ev.points[ib];
        if (want_reps)
            for (std::size_t z = 0; z < s.z_draws; ++z)
                ev.reps[it][z] = ev.reps[ia][z] + ev.reps[ib][z];
    }
    return ev;
}

// Derived values appended after the raw contrasts: shares and the remaining
// disparity, both functions of the raw values and the group disparity.
void append_derived(EffectKind kind, std::vector<std::string>& names, std::vector<double>& vals,
                    double disparity) {
    auto value_of = [&](const std::string& n) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return vals[i];
        return std::numeric_limits<double>::quiet_NaN();
    };
    if (kind == EffectKind::joint_reduction) {
        const double total = value_of("");
        names.push_back("share_exposed");
        vals.push_back(100.0 * value_of("component_exposed") / total);
        names.push_back("share_control");
        vals.push_back(100.0 * value_of("component_control") / total);
    }
    if (kind == EffectKind::ie_obs || kind == EffectKind::joint_reduction) {
        names.push_back("remaining_disparity");
        vals.push_back(disparity - value_of(""));
    }
}

double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.empty()) return 0.0;
    const double pos = p * static_cast<double>(v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    if (lo + 1 >= v.size()) return v.back();
    const double frac = pos - static_cast<double>(lo);
    return v[lo] + frac * (v[lo + 1] - v[lo]);
}

std::string default_name(const CounterfactualQuery& q) {
    std::string n = effect_kind_name(q.kind);
    if (!q.intervention.target.empty()) {
        n += "(";
        for (std::size_t i = 0; i < q.intervention.target.size(); ++i) {
            if (i) n += ",";
            n += q.intervention.target[i];
        }
        n += ")";
    }
    return n;
}

struct RepQueryOut {
    bool ok = false;
    std::vector<double> values;  // aligned with full-pass names (raw + derived)
};

struct RepOut {
    bool ok = false;
    double disparity = 0.0;
    std::vector<RepQueryOut> queries;
};

GcompOutput run_queries_impl(const Dataset& d, const RoleMap& r,
                             const std::vector<CounterfactualQuery>& queries,
                             const GcompSettings& s, const AssumptionLedger& ledger,
                             bool propagate) {
    r.validate(d);
    if (s.z_draws < 1) throw ValidationError("z_draws must be at least 1");
    if (queries.empty()) throw ValidationError("no queries given");

    const Ctx ctx0(d, r);
    std::map<std::string, bool> binary_map;
    for (const auto& nm : r.confounders) binary_map[nm] = d.column_is_binary(d.column_index(nm));
    for (const auto& nm : r.mediators) binary_map[nm] = d.column_is_binary(d.column_index(nm));
    binary_map[r.outcome] = false;  // the outcome is modeled on its continuous scale

    GcompOutput out;
    out.stats = ctx0.stats;
    out.estimates.resize(queries.size());
    std::vector<std::exception_ptr> errors(queries.size());
    std::vector<QueryEval> evals(queries.size());

    std::map<std::string, TermSet> term_store;
    ModelCache cache0(ctx0);
    cache0.policy = s.selection;
    cache0.allow_select = true;
    cache0.term_store = &term_store;
    cache0.binary_map = &binary_map;

    const std::string* dump_dir = (s.debug_dumps && !s.debug_dir.empty()) ? &s.debug_dir : nullptr;

    for (std::size_t qi = 0; qi < queries.size(); ++qi) {
        const CounterfactualQuery& q = queries[qi];
        EffectEstimate& est = out.estimates[qi];
        est.kind = q.kind;
        est.name = q.name.empty() ? default_name(q) : q.name;
        for (std::size_t i = 0; i < q.intervention.target.size(); ++i)
            est.target_label += (i ? "," : "") + q.intervention.target[i];
        try {
            validate_query(r, q);
            if (q.sweep) throw ValidationError("sweep templates must be expanded before estimation");
            evals[qi] = evaluate_query(ctx0, cache0, q, s, 0, true, true,
                                       s.parallel_workers, dump_dir);
        } catch (...) {
            errors[qi] = std::current_exception();
            est.failed = true;
            try {
                std::rethrow_exception(errors[qi]);
            } catch (const std::exception& e) {
                est.error = e.what();
            }
            continue;
        }
        QueryEval& ev = evals[qi];
        append_derived(q.kind, ev.names, ev.points, ctx0.stats.disparity);
        est.positivity_flagged = ev.flagged;
        est.positivity_units = ev.units;
        est.point = ev.points[0];
        est.mc_se = sd_of(ev.reps[0]) / std::sqrt(static_cast<double>(s.z_draws));
        if (std::fabs(ctx0.stats.disparity) > 1e-12) {
            est.has_percent = true;
            est.percent_of_gap = 100.0 * est.point / ctx0.stats.disparity;
        } else {
            est.notes.push_back("marginal disparity is zero; percent_of_gap undefined");
        }
        for (std::size_t i = 1; i < ev.names.size(); ++i) {
            ComponentEstimate ce;
            ce.name = ev.names[i];
            ce.point = ev.points[i];
            if (i < ev.reps.size()) {
                ce.mc_se = sd_of(ev.reps[i]) / std::sqrt(static_cast<double>(s.z_draws));
            } else {
                // derived per-repetition series from the raw ones
                std::vector<std::string> nm2;
                std::vector<double> v2;
                std::vector<double> series(s.z_draws, 0.0);
                for (std::size_t z = 0; z < s.z_draws; ++z) {
                    nm2.assign(ev.names.begin(), ev.names.begin() + static_cast<long>(ev.reps.size()));
                    v2.clear();
                    for (const auto& repv : ev.reps) v2.push_back(repv[z]);
                    append_derived(q.kind, nm2, v2, ctx0.stats.disparity);
                    series[z] = v2[i];
                }
                ce.mc_se = sd_of(series) / std::sqrt(static_cast<double>(s.z_draws));
            }
            est.components.push_back(std::move(ce));
        }
        if (kind_intervenes_on_exposure(q.kind) && !(ledger.a1 && ledger.a2 && ledger.a3)) {
            est.notes.push_back(
                "exposure/mediator exchangeability flags (a1, a2, a3) not asserted; the estimate "
                "is reported without its counterfactual reading");
        }
    }

    // bootstrap
    const std::size_t B = s.b_bootstrap;
    if (B == 1) {
        for (auto& est : out.estimates)
            if (!est.failed) est.notes.push_back("b_bootstrap = 1 gives no interval; set 0 or >= 2");
    }
    if (B >= 2) {
        std::vector<RepOut> reps(B);
        parallel_for(B, s.parallel_workers, [&](std::size_t b) {
            RepOut& ro = reps[b];
            ro.queries.resize(queries.size());
            CounterRng rng({s.seed, kBootTag, static_cast<std::uint64_t>(b) + 1});
            std::vector<std::size_t> rows;
            rows.reserve(d.n_rows());
            for (int g : {1, 0}) {
                const auto& src = ctx0.stratum_rows(g);
                for (std::size_t i = 0; i < src.size(); ++i)
                    rows.push_back(src[rng.next_index(src.size())]);
            }
            try {
                const Dataset dv = d.select_rows(rows);
                const Ctx ctx(dv, r);
                ro.disparity = ctx.stats.disparity;
                ModelCache cache(ctx);
                cache.policy = s.selection;
                cache.allow_select = s.reselect_per_replicate;
                cache.term_store = s.reselect_per_replicate ? nullptr : &term_store;
                cache.binary_map = &binary_map;
                for (std::size_t qi = 0; qi < queries.size(); ++qi) {
                    if (out.estimates[qi].failed) continue;
                    try {
                        QueryEval ev = evaluate_query(ctx, cache, queries[qi], s,
                                                      static_cast<std::uint64_t>(b) + 1, false,
                                                      false, 1, nullptr);
                        append_derived(queries[qi].kind, ev.names, ev.points, ctx.stats.disparity);
                        ro.queries[qi].ok = true;
                        ro.queries[qi].values = std::move(ev.points);
                    } catch (...) {
                        ro.queries[qi].ok = false;
                    }
                }
                ro.ok = true;
            } catch (...) {
                ro.ok = false;
            }
        });

        for (std::size_t qi = 0; qi < queries.size(); ++qi) {
            EffectEstimate& est = out.estimates[qi];
            if (est.failed) continue;
            const std::size_t n_names = evals[qi].names.size();
            std::vector<std::vector<double>> by_name(n_names);
            std::vector<double> percent_vals;
            std::size_t failures = 0;
            bool percent_ok = est.has_percent;
            for (std::size_t b = 0; b < B; ++b) {
                const RepQueryOut& rq = reps[b].queries[qi];
                if (!reps[b].ok || !rq.ok) {
                    ++failures;
                    continue;
                }
                for (std::size_t i = 0; i < n_names; ++i) by_name[i].push_back(rq.values[i]);
                if (std::fabs(reps[b].disparity) > 1e-12)
                    percent_vals.push_back(100.0 * rq.values[0] / reps[b].disparity);
                else
                    percent_ok = false;
            }
            est.bootstrap_failures = failures;
            if (static_cast<double>(failures) > 0.02 * static_cast<double>(B)) {
                est.failed = true;
                est.error = "bootstrap: " + std::to_string(failures) + " of " + std::to_string(B) +
                            " replicates failed (limit 2%)";
                errors[qi] = std::make_exception_ptr(EstimationError(est.error));
                continue;
            }
            est.has_ci = true;
            est.ci_low = percentile(by_name[0], 0.025);
            est.ci_high = percentile(by_name[0], 0.975);
            est.boot_se = sd_of(by_name[0]);
            est.point_outside_ci = est.point < est.ci_low || est.point > est.ci_high;
            if (est.point_outside_ci)
                est.notes.push_back("point estimate outside the percentile interval");
            if (percent_ok && !percent_vals.empty()) {
                est.has_percent_ci = true;
                est.percent_ci_low = percentile(percent_vals, 0.025);
                est.percent_ci_high = percentile(percent_vals, 0.975);
            }
            for (std::size_t i = 1; i < n_names; ++i) {
                ComponentEstimate& ce = est.components[i - 1];
                bool finite = !by_name[i].empty();
                for (double v : by_name[i])
                    if (!std::isfinite(v)) finite = false;
                if (!finite) continue;
                ce.has_ci = true;
                ce.ci_low = percentile(by_name[i], 0.025);
                ce.ci_high = percentile(by_name[i], 0.975);
            }
        }
    }

    for (const auto& sig : cache0.order) {
        const FittedModel& m = cache0.fitted.at(sig);
        ModelSummary ms;
        ms.response = m.response;
        ms.stratum = m.stratum_label;
        ms.family = m.family == Family::logistic ? "logistic" : "linear";
        ms.terms = m.terms.coef_names();
        ms.coef = m.coef;
        ms.aic = m.aic;
        ms.n_obs = m.n_obs;
        ms.notes = cache0.notes_by_sig.at(sig);
        out.models.push_back(std::move(ms));
    }

    if (propagate) {
        for (std::size_t qi = 0; qi < queries.size(); ++qi)
            if (errors[qi]) std::rethrow_exception(errors[qi]);
    }
    return out;
}

}  // namespace

// --- public operations ---------------------------------------------------------

MediatorModelChain fit_chain(const Dataset& d, const RoleMap& r, int stratum,
                             const std::vector<std::string>& conditioning,
                             const std::vector<std::string>& block, SelectionPolicy selection) {
    r.validate(d);
    MediatorModelChain chain;
    std::vector<std::size_t> rows;
    if (stratum < 0) {
        rows.resize(d.n_rows());
        for (std::size_t i = 0; i < d.n_rows(); ++i) rows[i] = i;
    } else {
        rows = d.rows_equal(r.exposure, static_cast<double>(stratum));
        if (rows.empty())
            throw DegenerateGroupError("no rows with " + r.exposure + "=" + std::to_string(stratum));
    }
    std::vector<std::string> regs = conditioning;
    const std::string label = stratum < 0 ? "all" : "A=" + std::to_string(stratum);
    for (const auto& name : block) {
        if (!std::count(r.mediators.begin(), r.mediators.end(), name))
            throw ValidationError("chain member '" + name + "' is not a declared mediator");
        const Family fam = is_binary_over_rows(d, d.column_index(name), rows) ? Family::logistic
                                                                              : Family::linear;
        try {
            if (selection != SelectionPolicy::none) {
                chain.models.push_back(
                    select_interactions(d, rows, name, regs, fam, label, selection).model);
            } else {
                chain.models.push_back(fit_glm(d, rows, name, TermSet::mains_only(regs), fam, label));
            }
        } catch (const Error& e) {
            throw EstimationError("model for " + name + " (" + label + "): " + e.what());
        }
        chain.mediators.push_back(name);
        regs.push_back(name);
    }
    return chain;
}

SimResult simulate_counterfactual_mean(const Dataset& d, const RoleMap& r,
                                       const CounterfactualQuery& q, const GcompSettings& s) {
    r.validate(d);
    validate_query(r, q);
    if (q.sweep) throw ValidationError("sweep templates must be expanded before simulation");
    if (s.z_draws < 1) throw ValidationError("z_draws must be at least 1");
    const Ctx ctx(d, r);
    std::map<std::string, bool> binary_map;
    for (const auto& nm : r.confounders) binary_map[nm] = d.column_is_binary(d.column_index(nm));
    for (const auto& nm : r.mediators) binary_map[nm] = d.column_is_binary(d.column_index(nm));
    binary_map[r.outcome] = false;
    ModelCache cache(ctx);
    cache.policy = s.selection;
    cache.allow_select = true;
    cache.binary_map = &binary_map;
    const QueryPlan plan = build_plan(ctx, cache, q);
    const RunSpec& rs = plan.runs[static_cast<std::size_t>(plan.primary_run)];
    RunOutput ro = simulate_run(ctx, rs, s, 0, true, s.parallel_workers, nullptr);
    SimResult res;
    res.repetition_means = std::move(ro.v_z);
    res.flagged_units = ro.flagged;
    res.n_units = ro.n_units;
    double t = 0.0;
    for (double v : res.repetition_means) t += v;
    res.mean = t / static_cast<double>(res.repetition_means.size());
    return res;
}

EffectEstimate estimate_effect(const Dataset& d, const RoleMap& r, const CounterfactualQuery& q,
                               const GcompSettings& s, const AssumptionLedger& ledger) {
    GcompOutput out = run_queries_impl(d, r, {q}, s, ledger, true);
    return std::move(out.estimates[0]);
}

GcompOutput run_queries(const Dataset& d, const RoleMap& r,
                        const std::vector<CounterfactualQuery>& queries, const GcompSettings& s,
                        const AssumptionLedger& ledger) {
    return run_queries_impl(d, r, queries, s, ledger, false);
}

std::vector<EffectEstimate> sweep_single_mediators(const Dataset& d, const RoleMap& r,
                                                   const CounterfactualQuery& tmpl,
                                                   const GcompSettings& s,
                                                   const AssumptionLedger& ledger) {
    const std::vector<CounterfactualQuery> queries = expand_sweep(r, tmpl);
    return run_queries_impl(d, r, queries, s, ledger, false).estimates;
}

}  // namespace dispar
