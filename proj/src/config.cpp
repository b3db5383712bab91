#include "dispar/config.hpp"

#include <initializer_list>
#include <map>

#include <json.hpp>

#include "dispar/error.hpp"

namespace dispar {

namespace {

using nlohmann::json;

constexpr int kSchemaVersion = 1;

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw SchemaError(where + ": " + what);
}

const json& need(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) fail(where, std::string("missing key '") + key + "'");
    return *it;
}

void check_object(const json& j, const std::string& where) {
    if (!j.is_object()) fail(where, "expected an object");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) fail(where, "unknown key '" + it.key() + "'");
    }
}

std::string get_str(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_string()) fail(where, std::string("'") + key + "' must be a string");
    return v.get<std::string>();
}

std::vector<std::string> get_str_list(const json& j, const char* key, const std::string& where,
                                      bool required) {
    auto it = j.find(key);
    if (it == j.end()) {
        if (required) fail(where, std::string("missing key '") + key + "'");
        return {};
    }
    if (!it->is_array()) fail(where, std::string("'") + key + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& v : *it) {
        if (!v.is_string()) fail(where, std::string("'") + key + "' must be an array of strings");
        out.push_back(v.get<std::string>());
    }
    return out;
}

std::vector<double> get_num_list(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return {};
    if (!it->is_array()) fail(where, std::string("'") + key + "' must be an array of numbers");
    std::vector<double> out;
    for (const auto& v : *it) {
        if (!v.is_number()) fail(where, std::string("'") + key + "' must be an array of numbers");
        out.push_back(v.get<double>());
    }
    return out;
}

double get_num(const json& j, const char* key, double dflt, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    if (!it->is_number()) fail(where, std::string("'") + key + "' must be a number");
    return it->get<double>();
}

bool get_bool(const json& j, const char* key, bool dflt, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    if (!it->is_boolean()) fail(where, std::string("'") + key + "' must be true or false");
    return it->get<bool>();
}

std::uint64_t get_u64(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        fail(where, std::string("'") + key + "' must be a non-negative integer");
    return v.get<std::uint64_t>();
}

std::size_t get_size(const json& j, const char* key, std::size_t dflt, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) return dflt;
    if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0))
        fail(where, std::string("'") + key + "' must be a non-negative integer");
    return it->get<std::size_t>();
}

json parse_text(const std::string& text, const std::string& where) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(where, e.what());
    }
}

SelectionPolicy selection_from_name(const std::string& s, const std::string& where) {
    if (s == "none") return SelectionPolicy::none;
    if (s == "greedy") return SelectionPolicy::greedy;
    if (s == "exhaustive") return SelectionPolicy::exhaustive;
    fail(where, "unknown selection policy '" + s + "' (none|greedy|exhaustive)");
}

const char* selection_name(SelectionPolicy p) {
    switch (p) {
        case SelectionPolicy::none: return "none";
        case SelectionPolicy::greedy: return "greedy";
        case SelectionPolicy::exhaustive: return "exhaustive";
    }
    return "none";
}

SourceKind source_from_name(const std::string& s, const std::string& where) {
    static const std::map<std::string, SourceKind> kinds = {
        {"observed_group", SourceKind::observed_group},
        {"counterfactual_group", SourceKind::counterfactual_group},
        {"pooled", SourceKind::pooled},
        {"fix_constant", SourceKind::fix_constant},
        {"fix_group_mean", SourceKind::fix_group_mean},
    };
    auto it = kinds.find(s);
    if (it == kinds.end()) fail(where, "unknown draw source '" + s + "'");
    return it->second;
}

const char* source_name(SourceKind k) {
    switch (k) {
        case SourceKind::observed_group: return "observed_group";
        case SourceKind::counterfactual_group: return "counterfactual_group";
        case SourceKind::pooled: return "pooled";
        case SourceKind::fix_constant: return "fix_constant";
        case SourceKind::fix_group_mean: return "fix_group_mean";
    }
    return "observed_group";
}

Population population_from_name(const std::string& s, const std::string& where) {
    if (s == "exposed_only") return Population::exposed_only;
    if (s == "control_only") return Population::control_only;
    if (s == "whole_population") return Population::whole_population;
    fail(where, "unknown population '" + s + "'");
}

const char* population_name(Population p) {
    switch (p) {
        case Population::exposed_only: return "exposed_only";
        case Population::control_only: return "control_only";
        case Population::whole_population: return "whole_population";
    }
    return "whole_population";
}

CounterfactualQuery query_from_json(const json& j, const std::string& where) {
    check_object(j, where);
    check_keys(j,
               {"name", "kind", "target", "conditioning", "source", "source_group", "constants",
                "exposure_set_to", "population", "sweep"},
               where);
    CounterfactualQuery q;
    q.name = j.contains("name") ? get_str(j, "name", where) : "";
    const std::string kind = get_str(j, "kind", where);
    try {
        q.kind = effect_kind_from_name(kind);
    } catch (const Error& e) {
        fail(where, e.what());
    }
    q.intervention.target = get_str_list(j, "target", where, false);
    q.intervention.conditioning = get_str_list(j, "conditioning", where, false);
    if (j.contains("source"))
        q.intervention.source = source_from_name(get_str(j, "source", where), where);
    else if (kind_intervenes_on_exposure(q.kind) && q.kind != EffectKind::cde)
        q.intervention.source = SourceKind::counterfactual_group;
    q.intervention.source_group = static_cast<int>(get_num(j, "source_group", 0.0, where));
    q.intervention.constants = get_num_list(j, "constants", where);
    if (j.contains("exposure_set_to")) {
        const json& v = j["exposure_set_to"];
        if (!v.is_null()) {
            if (!v.is_number_integer()) fail(where, "'exposure_set_to' must be an integer");
            q.exposure_set_to = v.get<int>();
        }
    } else if (kind_intervenes_on_exposure(q.kind)) {
        q.exposure_set_to = 1;
    }
    if (j.contains("population") && !j["population"].is_null())
        q.population = population_from_name(get_str(j, "population", where), where);
    q.sweep = get_bool(j, "sweep", false, where);
    return q;
}

json query_to_json(const CounterfactualQuery& q) {
    json j;
    j["name"] = q.name;
    j["kind"] = effect_kind_name(q.kind);
    j["target"] = q.intervention.target;
    j["conditioning"] = q.intervention.conditioning;
    j["source"] = source_name(q.intervention.source);
    j["source_group"] = q.intervention.source_group;
    j["constants"] = q.intervention.constants;
    if (q.exposure_set_to)
        j["exposure_set_to"] = *q.exposure_set_to;
    else
        j["exposure_set_to"] = nullptr;
    if (q.population)
        j["population"] = population_name(*q.population);
    else
        j["population"] = nullptr;
    j["sweep"] = q.sweep;
    return j;
}

}  // namespace

AnalysisConfig AnalysisConfig::from_json_text(const std::string& text) {
    const json root = parse_text(text, "config");
    check_object(root, "config");
    check_keys(root,
               {"schema_version", "data", "roles", "filters", "settings", "assumptions", "queries",
                "output"},
               "config");
    const json& sv = need(root, "schema_version", "config");
    if (!sv.is_number_integer() || sv.get<int>() != kSchemaVersion)
        fail("config", "schema_version must be " + std::to_string(kSchemaVersion));

    AnalysisConfig cfg;
    {
        const json& jd = need(root, "data", "config");
        check_object(jd, "config.data");
        check_keys(jd, {"path"}, "config.data");
        cfg.data_path = get_str(jd, "path", "config.data");
    }
    {
        const json& jr = need(root, "roles", "config");
        check_object(jr, "config.roles");
        check_keys(jr, {"exposure", "outcome", "covariates", "confounders", "mediators"},
                   "config.roles");
        cfg.roles.exposure = get_str(jr, "exposure", "config.roles");
        cfg.roles.outcome = get_str(jr, "outcome", "config.roles");
        cfg.roles.covariates = get_str_list(jr, "covariates", "config.roles", false);
        cfg.roles.confounders = get_str_list(jr, "confounders", "config.roles", false);
        cfg.roles.mediators = get_str_list(jr, "mediators", "config.roles", true);
    }
    if (root.contains("filters")) {
        const json& jf = root["filters"];
        if (!jf.is_array()) fail("config.filters", "expected an array");
        for (std::size_t i = 0; i < jf.size(); ++i) {
            const std::string where = "config.filters[" + std::to_string(i) + "]";
            check_object(jf[i], where);
            check_keys(jf[i], {"column", "op", "value"}, where);
            Filter f;
            f.column = get_str(jf[i], "column", where);
            f.op = get_str(jf[i], "op", where);
            const json& v = need(jf[i], "value", where);
            if (!v.is_number()) fail(where, "'value' must be a number");
            f.value = v.get<double>();
            cfg.filters.push_back(std::move(f));
        }
    }
    {
        const json& js = need(root, "settings", "config");
        check_object(js, "config.settings");
        check_keys(js,
                   {"z_draws", "b_bootstrap", "seed", "parallel_workers",
                    "positivity_abort_fraction", "outcome_draw", "selection",
                    "reselect_per_replicate"},
                   "config.settings");
        GcompSettings& s = cfg.settings;
        s.z_draws = get_size(js, "z_draws", s.z_draws, "config.settings");
        s.b_bootstrap = get_size(js, "b_bootstrap", s.b_bootstrap, "config.settings");
        s.seed = get_u64(js, "seed", "config.settings");  // mandatory, no wall-clock default
        s.parallel_workers = static_cast<unsigned>(
            get_size(js, "parallel_workers", s.parallel_workers, "config.settings"));
        s.positivity_abort_fraction = get_num(js, "positivity_abort_fraction",
                                              s.positivity_abort_fraction, "config.settings");
        s.outcome_draw = get_bool(js, "outcome_draw", s.outcome_draw, "config.settings");
        if (js.contains("selection"))
            s.selection = selection_from_name(get_str(js, "selection", "config.settings"),
                                              "config.settings");
        s.reselect_per_replicate = get_bool(js, "reselect_per_replicate",
                                            s.reselect_per_replicate, "config.settings");
    }
    if (root.contains("assumptions")) {
        const json& ja = root["assumptions"];
        check_object(ja, "config.assumptions");
        check_keys(ja,
                   {"consistency", "positivity", "a1", "a2", "a3", "a4_no_confounders",
                    "a5_no_lm_interaction", "exogeneity", "linearity", "correct_specification"},
                   "config.assumptions");
        AssumptionLedger& a = cfg.assumptions;
        a.consistency = get_bool(ja, "consistency", false, "config.assumptions");
        a.positivity = get_bool(ja, "positivity", false, "config.assumptions");
        a.a1 = get_bool(ja, "a1", false, "config.assumptions");
        a.a2 = get_bool(ja, "a2", false, "config.assumptions");
        a.a3 = get_bool(ja, "a3", false, "config.assumptions");
        a.a4_no_confounders = get_bool(ja, "a4_no_confounders", false, "config.assumptions");
        a.a5_no_lm_interaction = get_bool(ja, "a5_no_lm_interaction", false, "config.assumptions");
        a.exogeneity = get_bool(ja, "exogeneity", false, "config.assumptions");
        a.linearity = get_bool(ja, "linearity", false, "config.assumptions");
        a.correct_specification =
            get_bool(ja, "correct_specification", false, "config.assumptions");
    }
    {
        const json& jq = need(root, "queries", "config");
        if (!jq.is_array() || jq.empty()) fail("config.queries", "expected a nonempty array");
        for (std::size_t i = 0; i < jq.size(); ++i)
            cfg.queries.push_back(
                query_from_json(jq[i], "config.queries[" + std::to_string(i) + "]"));
    }
    if (root.contains("output")) {
        const json& jo = root["output"];
        check_object(jo, "config.output");
        check_keys(jo, {"directory", "debug_dumps"}, "config.output");
        if (jo.contains("directory")) cfg.output_dir = get_str(jo, "directory", "config.output");
        cfg.settings.debug_dumps = get_bool(jo, "debug_dumps", false, "config.output");
    }
    return cfg;
}

std::string AnalysisConfig::to_json_text() const {
    json root;
    root["schema_version"] = kSchemaVersion;
    root["data"]["path"] = data_path;
    root["roles"]["exposure"] = roles.exposure;
    root["roles"]["outcome"] = roles.outcome;
    root["roles"]["covariates"] = roles.covariates;
    root["roles"]["confounders"] = roles.confounders;
    root["roles"]["mediators"] = roles.mediators;
    root["filters"] = json::array();
    for (const auto& f : filters)
        root["filters"].push_back({{"column", f.column}, {"op", f.op}, {"value", f.value}});
    json& js = root["settings"];
    js["z_draws"] = settings.z_draws;
    js["b_bootstrap"] = settings.b_bootstrap;
    js["seed"] = settings.seed;
    js["parallel_workers"] = settings.parallel_workers;
    js["positivity_abort_fraction"] = settings.positivity_abort_fraction;
    js["outcome_draw"] = settings.outcome_draw;
    js["selection"] = selection_name(settings.selection);
    js["reselect_per_replicate"] = settings.reselect_per_replicate;
    json& ja = root["assumptions"];
    ja["consistency"] = assumptions.consistency;
    ja["positivity"] = assumptions.positivity;
    ja["a1"] = assumptions.a1;
    ja["a2"] = assumptions.a2;
    ja["a3"] = assumptions.a3;
    ja["a4_no_confounders"] = assumptions.a4_no_confounders;
    ja["a5_no_lm_interaction"] = assumptions.a5_no_lm_interaction;
    ja["exogeneity"] = assumptions.exogeneity;
    ja["linearity"] = assumptions.linearity;
    ja["correct_specification"] = assumptions.correct_specification;
    root["queries"] = json::array();
    for (const auto& q : queries) root["queries"].push_back(query_to_json(q));
    root["output"]["directory"] = output_dir;
    root["output"]["debug_dumps"] = settings.debug_dumps;
    return root.dump(2) + "\n";
}

std::vector<std::string> AnalysisConfig::validate() const {
    std::vector<std::string> diags;
    auto error = [&](const std::string& m) { diags.push_back("error: " + m); };
    auto warn = [&](const std::string& m) { diags.push_back("warning: " + m); };

    if (data_path.empty()) error("data.path is empty");
    if (roles.exposure.empty()) error("roles.exposure is empty");
    if (roles.outcome.empty()) error("roles.outcome is empty");
    if (roles.mediators.empty()) error("roles.mediators is empty");
    {
        std::map<std::string, int> seen;
        for (const auto& n : roles.all_columns())
            if (++seen[n] == 2) error("role column '" + n + "' appears in more than one role");
    }
    if (settings.z_draws < 1) error("settings.z_draws must be at least 1");
    if (settings.parallel_workers < 1) error("settings.parallel_workers must be at least 1");
    if (settings.positivity_abort_fraction < 0.0 || settings.positivity_abort_fraction > 1.0)
        error("settings.positivity_abort_fraction must lie in [0, 1]");
    static const char* ops[] = {"==", "!=", "<", "<=", ">", ">="};
    for (const auto& f : filters) {
        bool ok = false;
        for (const char* op : ops)
            if (f.op == op) ok = true;
        if (!ok) error("filter op '" + f.op + "' is not one of == != < <= > >=");
        if (f.column.empty()) error("filter with empty column");
    }

    std::map<std::string, int> names;
    bool any_exposure_kind = false;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const CounterfactualQuery& q = queries[i];
        const std::string where = "queries[" + std::to_string(i) + "]";
        try {
            validate_query(roles, q);
        } catch (const Error& e) {
            error(where + ": " + e.what());
        }
        if (!q.name.empty() && ++names[q.name] == 2)
            error("duplicate query name '" + q.name + "'");
        if (kind_intervenes_on_exposure(q.kind)) any_exposure_kind = true;
    }
    if (any_exposure_kind && !(assumptions.a1 && assumptions.a2 && assumptions.a3))
        warn(
            "exposure-intervened estimands are requested but the assumption ledger does not "
            "assert a1, a2 and a3; estimates will carry no counterfactual reading");
    return diags;
}

// --- simulate-verb config ---------------------------------------------------

namespace {

VarRole role_from_name(const std::string& s, const std::string& where) {
    static const std::map<std::string, VarRole> roles = {
        {"covariate", VarRole::covariate}, {"latent", VarRole::latent},
        {"exposure", VarRole::exposure},   {"confounder", VarRole::confounder},
        {"mediator", VarRole::mediator},   {"outcome", VarRole::outcome},
    };
    auto it = roles.find(s);
    if (it == roles.end()) fail(where, "unknown role '" + s + "'");
    return it->second;
}

TruthKind truth_kind_from_name(const std::string& s, const std::string& where) {
    static const std::map<std::string, TruthKind> kinds = {
        {"ey_do", TruthKind::ey_do},
        {"te", TruthKind::te},
        {"cde", TruthKind::cde},
        {"iie", TruthKind::iie},
        {"iie_r", TruthKind::iie_r},
        {"ide", TruthKind::ide},
        {"ie", TruthKind::ie},
        {"re", TruthKind::re},
        {"ie_observed", TruthKind::ie_observed},
        {"re_observed", TruthKind::re_observed},
        {"iie_marginal", TruthKind::iie_marginal},
        {"ide_marginal", TruthKind::ide_marginal},
        {"ie_mean_observed", TruthKind::ie_mean_observed},
        {"ie_mean_conditional", TruthKind::ie_mean_conditional},
        {"nie", TruthKind::nie},
        {"nde", TruthKind::nde},
        {"ey_group", TruthKind::ey_group},
    };
    auto it = kinds.find(s);
    if (it == kinds.end()) fail(where, "unknown truth kind '" + s + "'");
    return it->second;
}

}  // namespace

SimulateConfig SimulateConfig::from_json_text(const std::string& text) {
    const json root = parse_text(text, "dgp");
    check_object(root, "dgp");
    check_keys(root, {"schema_version", "n", "seed", "variables", "truths"}, "dgp");
    const json& sv = need(root, "schema_version", "dgp");
    if (!sv.is_number_integer() || sv.get<int>() != kSchemaVersion)
        fail("dgp", "schema_version must be " + std::to_string(kSchemaVersion));

    SimulateConfig cfg;
    cfg.n = get_size(root, "n", 0, "dgp");
    if (root.contains("seed")) {
        cfg.seed = get_u64(root, "seed", "dgp");
        cfg.has_seed = true;
    }
    const json& jv = need(root, "variables", "dgp");
    if (!jv.is_array() || jv.empty()) fail("dgp.variables", "expected a nonempty array");
    std::vector<ScmVariable> vars;
    for (std::size_t i = 0; i < jv.size(); ++i) {
        const std::string where = "dgp.variables[" + std::to_string(i) + "]";
        const json& v = jv[i];
        check_object(v, where);
        check_keys(v, {"name", "role", "support", "parents", "table", "mean_table", "noise_sd"},
                   where);
        ScmVariable sv2;
        sv2.name = get_str(v, "name", where);
        sv2.role = role_from_name(get_str(v, "role", where), where);
        sv2.support = get_num_list(v, "support", where);
        sv2.parents = get_str_list(v, "parents", where, false);
        if (v.contains("table")) {
            const json& t = v["table"];
            if (!t.is_array()) fail(where, "'table' must be an array of rows");
            for (const auto& row : t) {
                if (!row.is_array()) fail(where, "'table' must be an array of rows");
                std::vector<double> r;
                for (const auto& x : row) {
                    if (!x.is_number()) fail(where, "'table' rows must hold numbers");
                    r.push_back(x.get<double>());
                }
                sv2.table.push_back(std::move(r));
            }
        }
        sv2.mean_table = get_num_list(v, "mean_table", where);
        sv2.noise_sd = get_num(v, "noise_sd", 0.0, where);
        vars.push_back(std::move(sv2));
    }
    try {
        cfg.scm = DiscreteScm::build(std::move(vars));
    } catch (const Error& e) {
        fail("dgp.variables", e.what());
    }
    if (root.contains("truths")) {
        const json& jt = root["truths"];
        if (!jt.is_array()) fail("dgp.truths", "expected an array");
        for (std::size_t i = 0; i < jt.size(); ++i) {
            const std::string where = "dgp.truths[" + std::to_string(i) + "]";
            const json& t = jt[i];
            check_object(t, where);
            check_keys(t, {"name", "kind", "target", "held", "i_source", "fixed_values", "a"},
                       where);
            Truth tr;
            tr.name = get_str(t, "name", where);
            tr.query.kind = truth_kind_from_name(get_str(t, "kind", where), where);
            tr.query.target = get_str_list(t, "target", where, false);
            tr.query.held_mediators = get_str_list(t, "held", where, false);
            if (t.contains("i_source")) {
                const std::string s = get_str(t, "i_source", where);
                if (s == "control_given_c")
                    tr.query.i_source = DrawSource::control_given_c;
                else if (s == "pooled_marginal")
                    tr.query.i_source = DrawSource::pooled_marginal;
                else
                    fail(where, "unknown i_source '" + s + "'");
            }
            tr.query.fixed_values = get_num_list(t, "fixed_values", where);
            tr.query.a = static_cast<int>(get_num(t, "a", 1.0, where));
            cfg.truths.push_back(std::move(tr));
        }
    }
    return cfg;
}

}  // namespace dispar
