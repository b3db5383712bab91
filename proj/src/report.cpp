#include "dispar/report.hpp"

#include <charconv>
#include <cstdint>

#include <json.hpp>

namespace dispar {

namespace {

using nlohmann::json;

// shortest round-trip decimal form, locale-independent
std::string num(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

json estimate_to_json(const EffectEstimate& e) {
    json j;
    j["name"] = e.name;
    j["kind"] = effect_kind_name(e.kind);
    j["target"] = e.target_label;
    j["failed"] = e.failed;
    if (e.failed) {
        j["error"] = e.error;
        return j;
    }
    j["point"] = e.point;
    j["mc_se"] = e.mc_se;
    if (e.has_ci) {
        j["ci"] = {e.ci_low, e.ci_high};
        j["boot_se"] = e.boot_se;
        j["point_outside_ci"] = e.point_outside_ci;
    } else {
        j["ci"] = nullptr;
    }
    if (e.has_percent) {
        j["percent_of_gap"] = e.percent_of_gap;
        if (e.has_percent_ci) j["percent_ci"] = {e.percent_ci_low, e.percent_ci_high};
    } else {
        j["percent_of_gap"] = nullptr;
    }
    j["components"] = json::array();
    for (const auto& c : e.components) {
        json jc;
        jc["name"] = c.name;
        jc["point"] = c.point;
        jc["mc_se"] = c.mc_se;
        if (c.has_ci)
            jc["ci"] = {c.ci_low, c.ci_high};
        else
            jc["ci"] = nullptr;
        j["components"].push_back(std::move(jc));
    }
    j["positivity"] = {{"flagged", e.positivity_flagged}, {"units", e.positivity_units}};
    j["bootstrap_failures"] = e.bootstrap_failures;
    j["notes"] = e.notes;
    return j;
}

}  // namespace

std::string fingerprint_hex(const std::string& bytes) {
    std::uint64_t h = 1469598103934665603ull;  // FNV offset basis
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;  // FNV prime
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[h & 0xf];
        h >>= 4;
    }
    return std::string(buf, 16);
}

std::string render_report(const AnalysisConfig& cfg, const std::string& config_fingerprint,
                          const std::string& data_fingerprint, std::size_t rows_used,
                          std::size_t rows_dropped_gaps, std::size_t rows_dropped_filtered,
                          const GcompOutput& out) {
    json root;
    root["schema_version"] = 1;
    root["kind"] = "run_report";
    root["fingerprints"] = {{"config", config_fingerprint}, {"data", data_fingerprint}};

    // config echo, minus execution details that do not affect the numbers
    json echo = json::parse(cfg.to_json_text());
    echo["settings"].erase("parallel_workers");
    echo["output"].erase("debug_dumps");
    root["config"] = std::move(echo);
    root["seed"] = cfg.settings.seed;

    root["data"] = {{"rows_used", rows_used},
                    {"rows_dropped_gaps", rows_dropped_gaps},
                    {"rows_dropped_filtered", rows_dropped_filtered}};

    const GroupStats& gs = out.stats;
    json jg;
    jg["n_exposed"] = gs.n_exposed;
    jg["n_control"] = gs.n_control;
    jg["mean_outcome_exposed"] = gs.mean_outcome_exposed;
    jg["mean_outcome_control"] = gs.mean_outcome_control;
    jg["disparity"] = gs.disparity;
    json jm;
    for (const auto& [name, means] : gs.column_means)
        jm[name] = {{"exposed", means.first}, {"control", means.second}};
    jg["column_means"] = std::move(jm);
    root["group_stats"] = std::move(jg);

    root["models"] = json::array();
    for (const auto& m : out.models) {
        json j;
        j["response"] = m.response;
        j["stratum"] = m.stratum;
        j["family"] = m.family;
        j["terms"] = m.terms;
        j["coef"] = m.coef;
        j["aic"] = m.aic;
        j["n_obs"] = m.n_obs;
        j["notes"] = m.notes;
        root["models"].push_back(std::move(j));
    }

    root["estimates"] = json::array();
    for (const auto& e : out.estimates) root["estimates"].push_back(estimate_to_json(e));

    return root.dump(2) + "\n";
}

std::string render_sweep_table(const std::vector<const EffectEstimate*>& rows) {
    std::string t =
        "mediator\treduction_outcome_units\tci_low\tci_high\tpercent_of_gap\t"
        "percent_ci_low\tpercent_ci_high\tmc_se\tboot_se\n";
    for (const EffectEstimate* e : rows) {
        if (e->failed) continue;
        t += e->target_label;
        t += '\t';
        t += num(e->point);
        t += '\t';
        t += e->has_ci ? num(e->ci_low) : "nan";
        t += '\t';
        t += e->has_ci ? num(e->ci_high) : "nan";
        t += '\t';
        t += e->has_percent ? num(e->percent_of_gap) : "nan";
        t += '\t';
        t += e->has_percent_ci ? num(e->percent_ci_low) : "nan";
        t += '\t';
        t += e->has_percent_ci ? num(e->percent_ci_high) : "nan";
        t += '\t';
        t += num(e->mc_se);
        t += '\t';
        t += e->has_ci ? num(e->boot_se) : "nan";
        t += '\n';
    }
    return t;
}

std::string render_component_table(const std::vector<const EffectEstimate*>& rows) {
    std::string t =
        "query\ttotal_outcome_units\tcomponent_exposed\tcomponent_control\t"
        "share_exposed_percent\tshare_control_percent\n";
    for (const EffectEstimate* e : rows) {
        if (e->failed) continue;
        auto comp = [&](const std::string& name) {
            for (const auto& c : e->components)
                if (c.name == name) return num(c.point);
            return std::string("nan");
        };
        t += e->name;
        t += '\t';
        t += num(e->point);
        t += '\t';
        t += comp("component_exposed");
        t += '\t';
        t += comp("component_control");
        t += '\t';
        t += comp("share_exposed");
        t += '\t';
        t += comp("share_control");
        t += '\n';
    }
    return t;
}

}  // namespace dispar
