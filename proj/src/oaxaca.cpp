#include "dispar/oaxaca.hpp"

#include <algorithm>

#include "dispar/error.hpp"

namespace dispar {

std::vector<std::string> AssumptionLedger::asserted() const {
    std::vector<std::string> out;
    auto add = [&](bool v, const char* name) {
        if (v) out.push_back(name);
    };
    add(consistency, "consistency");
    add(positivity, "positivity");
    add(a1, "a1");
    add(a2, "a2");
    add(a3, "a3");
    add(a4_no_confounders, "a4_no_confounders");
    add(a5_no_lm_interaction, "a5_no_lm_interaction");
    add(exogeneity, "exogeneity");
    add(linearity, "linearity");
    add(correct_specification, "correct_specification");
    return out;
}

namespace {

struct StratumFit {
    FittedModel model;
    std::vector<std::size_t> rows;
};

TermSet ob_terms(const RoleMap& roles, const std::string& mediator) {
    TermSet t;
    t.mains.push_back(mediator);
    for (const auto& l : roles.confounders) t.mains.push_back(l);
    for (const auto& c : roles.covariates) t.mains.push_back(c);
    for (const auto& l : roles.confounders) t.interactions.emplace_back(mediator, l);
    t.normalize();
    return t;
}

double term_mean(const Dataset& d, const std::vector<std::size_t>& rows, int c1, int c2) {
    const auto& v1 = d.column(static_cast<std::size_t>(c1));
    double s = 0.0;
    if (c2 < 0) {
        for (std::size_t r : rows) s += v1[r];
    } else {
        const auto& v2 = d.column(static_cast<std::size_t>(c2));
        for (std::size_t r : rows) s += v1[r] * v2[r];
    }
    return s / static_cast<double>(rows.size());
}

struct ObContext {
    StratumFit exposed, control;
    std::vector<std::string> names;               // coefficient names
    std::vector<double> mean1, mean0;             // term means per group (index 0 = intercept)
    double ybar1 = 0.0, ybar0 = 0.0;
};

ObContext prepare(const Dataset& d, const RoleMap& roles, const std::string& mediator) {
    roles.validate(d);
    if (std::find(roles.mediators.begin(), roles.mediators.end(), mediator) ==
        roles.mediators.end())
        throw ValidationError("decomposition mediator '" + mediator + "' is not a mediator role");
    const TermSet terms = ob_terms(roles, mediator);

    ObContext ctx;
    ctx.exposed.rows = d.rows_equal(roles.exposure, 1.0);
    ctx.control.rows = d.rows_equal(roles.exposure, 0.0);
    if (ctx.exposed.rows.empty() || ctx.control.rows.empty())
        throw DegenerateGroupError("decomposition requires both exposure groups");
    ctx.exposed.model = fit_glm(d, ctx.exposed.rows, roles.outcome, terms, Family::linear, "A=1");
    ctx.control.model = fit_glm(d, ctx.control.rows, roles.outcome, terms, Family::linear, "A=0");

    ctx.names = ctx.exposed.model.terms.coef_names();
    const std::size_t p = ctx.names.size();
    ctx.mean1.assign(p, 1.0);
    ctx.mean0.assign(p, 1.0);
    std::size_t k = 1;
    for (int col : ctx.exposed.model.main_cols) {
        ctx.mean1[k] = term_mean(d, ctx.exposed.rows, col, -1);
        ctx.mean0[k] = term_mean(d, ctx.control.rows, col, -1);
        ++k;
    }
    for (auto [c1, c2] : ctx.exposed.model.inter_cols) {
        ctx.mean1[k] = term_mean(d, ctx.exposed.rows, c1, c2);
        ctx.mean0[k] = term_mean(d, ctx.control.rows, c1, c2);
        ++k;
    }
    const std::size_t ycol = d.column_index(roles.outcome);
    ctx.ybar1 = mean_over_rows(d, ycol, ctx.exposed.rows);
    ctx.ybar0 = mean_over_rows(d, ycol, ctx.control.rows);
    return ctx;
}

}  // namespace

ObDecomposition decompose_classic(const Dataset& d, const RoleMap& roles,
                                  const std::string& mediator) {
    ObContext ctx = prepare(d, roles, mediator);
    const auto& alpha = ctx.exposed.model.coef;
    const auto& omega = ctx.control.model.coef;

    ObDecomposition out;
    out.mediator = mediator;
    out.disparity = ctx.ybar1 - ctx.ybar0;
    for (std::size_t k = 1; k < ctx.names.size(); ++k) {
        const double contrib = alpha[k] * (ctx.mean1[k] - ctx.mean0[k]);
        out.explained_by_term[ctx.names[k]] = contrib;
        out.explained += contrib;
    }
    out.unexplained_by_term["(intercept)"] = alpha[0] - omega[0];
    out.unexplained = alpha[0] - omega[0];
    for (std::size_t k = 1; k < ctx.names.size(); ++k) {
        const double contrib = (alpha[k] - omega[k]) * ctx.mean0[k];
        out.unexplained_by_term[ctx.names[k]] = contrib;
        out.unexplained += contrib;
    }
    out.model_exposed = std::move(ctx.exposed.model);
    out.model_control = std::move(ctx.control.model);
    return out;
}

ObMediatorSplit decompose_ob_m(const Dataset& d, const RoleMap& roles,
                               const std::string& mediator) {
    ObContext ctx = prepare(d, roles, mediator);
    const auto& alpha = ctx.exposed.model.coef;
    const auto& omega = ctx.control.model.coef;
    const auto& names = ctx.names;
    const std::size_t n_mains = ctx.exposed.model.main_cols.size();

    // locate the mediator main and stratum means of each plain column
    const std::size_t med_idx = [&] {
        for (std::size_t k = 0; k < ctx.exposed.model.terms.mains.size(); ++k)
            if (ctx.exposed.model.terms.mains[k] == mediator) return k + 1;
        throw ValidationError("mediator term lost during fitting");
    }();
    const double m1 = ctx.mean1[med_idx];
    const double m0 = ctx.mean0[med_idx];

    auto main_mean = [&](const std::string& name, bool exposed) -> double {
        for (std::size_t k = 0; k < ctx.exposed.model.terms.mains.size(); ++k)
            if (ctx.exposed.model.terms.mains[k] == name)
                return exposed ? ctx.mean1[k + 1] : ctx.mean0[k + 1];
        throw ValidationError("unknown main effect: " + name);
    };

    ObMediatorSplit out;
    out.mediator = mediator;
    out.disparity = ctx.ybar1 - ctx.ybar0;

    // mediator-driven part, evaluated at exposed-group coefficients
    out.ob_m_by_term[mediator] = alpha[med_idx] * (m1 - m0);
    out.ob_m = out.ob_m_by_term[mediator];
    const auto& inters = ctx.exposed.model.terms.interactions;
    for (std::size_t j = 0; j < inters.size(); ++j) {
        const std::size_t k = 1 + n_mains + j;
        const std::string other =
            inters[j].first == mediator ? inters[j].second : inters[j].first;
        const double contrib = alpha[k] * (ctx.mean1[k] - m0 * main_mean(other, true));
        out.ob_m_by_term[names[k]] = contrib;
        out.ob_m += contrib;
    }

    // remainder, term by term
    out.ob_re_by_term["(intercept)"] = alpha[0] - omega[0];
    out.ob_re_by_term[mediator] = (alpha[med_idx] - omega[med_idx]) * m0;
    for (std::size_t k = 1; k <= n_mains; ++k) {
        if (k == med_idx) continue;
        out.ob_re_by_term[names[k]] = alpha[k] * ctx.mean1[k] - omega[k] * ctx.mean0[k];
    }
    for (std::size_t j = 0; j < inters.size(); ++j) {
        const std::size_t k = 1 + n_mains + j;
        const std::string other =
            inters[j].first == mediator ? inters[j].second : inters[j].first;
        out.ob_re_by_term[names[k]] =
            alpha[k] * m0 * main_mean(other, true) - omega[k] * ctx.mean0[k];
    }
    for (const auto& [name, v] : out.ob_re_by_term) out.ob_re += v;
    return out;
}

Interpretation interpret(const std::string& mediator, const AssumptionLedger& ledger) {
    const bool rung1 = ledger.consistency && ledger.positivity && ledger.a2 &&
                       ledger.linearity && ledger.correct_specification;
    const bool rung2 = rung1 && (ledger.exogeneity || (ledger.a1 && ledger.a3));
    const bool rung3 = rung2 && (ledger.a4_no_confounders || ledger.a5_no_lm_interaction);

    Interpretation out;
    if (rung3) {
        out.label = "ob_m equals the marginal natural (randomized-draw) indirect effect of '" +
                    mediator + "'; ob_re equals the matching direct effect";
        out.used = {"consistency", "positivity", "a2", "linearity", "correct_specification",
                    "exogeneity/a1+a3",
                    ledger.a4_no_confounders ? "a4_no_confounders" : "a5_no_lm_interaction"};
        return out;
    }
    if (rung2) {
        out.label = "ob_m estimates the counterfactual disparity reduction from aligning '" +
                    mediator + "' across groups; ob_re the remaining disparity";
        out.used = {"consistency", "positivity", "a2", "linearity", "correct_specification",
                    "exogeneity/a1+a3"};
        out.missing_for_next = {"a4_no_confounders or a5_no_lm_interaction"};
        return out;
    }
    if (rung1) {
        out.label = "ob_m estimates the observed-disparity reduction from shifting the mean of '" +
                    mediator + "' to the control group's; ob_re the remaining disparity";
        out.used = {"consistency", "positivity", "a2", "linearity", "correct_specification"};
        out.missing_for_next = {"exogeneity (or a1 and a3)"};
        return out;
    }
    out.label = "descriptive regression contrast; no causal reading asserted";
    out.used = ledger.asserted();
    out.missing_for_next = {"consistency", "positivity", "a2", "linearity",
                            "correct_specification"};
    return out;
}

}  // namespace dispar
