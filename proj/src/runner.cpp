#include "dispar/runner.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "dispar/config.hpp"
#include "dispar/error.hpp"
#include "dispar/report.hpp"

namespace dispar {

namespace {

namespace fs = std::filesystem;

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw SchemaError("cannot read file: " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f.good()) throw EstimationError("cannot write file: " + path);
}

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) != 0) ? c : '_';
    return out.empty() ? std::string("x") : out;
}

}  // namespace

int cmd_run(const std::string& config_path, const CliOverrides& ov, std::ostream& log) {
    const auto t0 = std::chrono::steady_clock::now();
    AnalysisConfig cfg;
    std::string config_text;
    try {
        config_text = read_file(config_path);
        cfg = AnalysisConfig::from_json_text(config_text);
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    }
    if (ov.out_dir) cfg.output_dir = *ov.out_dir;
    if (ov.seed) cfg.settings.seed = *ov.seed;
    if (ov.workers) cfg.settings.parallel_workers = *ov.workers;
    if (ov.debug_dumps) cfg.settings.debug_dumps = true;

    bool config_bad = false;
    for (const auto& d : cfg.validate()) {
        log << d << "\n";
        if (d.rfind("error:", 0) == 0) config_bad = true;
    }
    if (config_bad) return 2;

    std::string data_text;
    IngestResult ingest;
    try {
        data_text = read_file(cfg.data_path);
        ingest = ingest_delimited_text(data_text, cfg.roles, cfg.filters);
        cfg.roles.validate(ingest.data);
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    }
    log << "note: " << ingest.data.n_rows() << " rows used, " << ingest.rows_dropped_gaps
        << " dropped for gaps, " << ingest.rows_dropped_filtered << " filtered\n";

    // expand sweep templates, remembering which expanded block each came from
    std::vector<CounterfactualQuery> expanded;
    struct SweepBlock {
        std::string name;
        std::size_t begin = 0, count = 0;
    };
    std::vector<SweepBlock> sweeps;
    try {
        for (const auto& q : cfg.queries) {
            if (q.sweep) {
                auto qs = expand_sweep(cfg.roles, q);
                sweeps.push_back({q.name.empty() ? std::string("sweep") : q.name, expanded.size(),
                                  qs.size()});
                for (auto& e : qs) expanded.push_back(std::move(e));
            } else {
                expanded.push_back(q);
            }
        }
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    }

    GcompOutput out;
    try {
        fs::create_directories(cfg.output_dir);
        if (cfg.settings.debug_dumps) {
            cfg.settings.debug_dir = cfg.output_dir + "/debug";
            fs::create_directories(cfg.settings.debug_dir);
        }
        out = run_queries(ingest.data, cfg.roles, expanded, cfg.settings, cfg.assumptions);
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        const std::string report =
            render_report(cfg, fingerprint_hex(config_text), fingerprint_hex(data_text),
                          ingest.data.n_rows(), ingest.rows_dropped_gaps,
                          ingest.rows_dropped_filtered, out);
        write_file(cfg.output_dir + "/report.json", report);
        log << "note: wrote " << cfg.output_dir << "/report.json\n";

        for (const auto& blk : sweeps) {
            std::vector<const EffectEstimate*> rows;
            for (std::size_t i = 0; i < blk.count; ++i)
                rows.push_back(&out.estimates[blk.begin + i]);
            const std::string path = cfg.output_dir + "/sweep_" + sanitize(blk.name) + ".tsv";
            write_file(path, render_sweep_table(rows));
            log << "note: wrote " << path << "\n";
        }

        std::vector<const EffectEstimate*> split_rows;
        for (const auto& e : out.estimates)
            if (e.kind == EffectKind::joint_reduction && !e.failed) split_rows.push_back(&e);
        if (!split_rows.empty()) {
            const std::string path = cfg.output_dir + "/components.tsv";
            write_file(path, render_component_table(split_rows));
            log << "note: wrote " << path << "\n";
        }
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    }

    std::size_t failed = 0;
    for (const auto& e : out.estimates) {
        if (e.failed) {
            ++failed;
            log << "failed: " << e.name << ": " << e.error << "\n";
        } else {
            log << "estimate: " << e.name << " = " << e.point;
            if (e.has_ci) log << " [" << e.ci_low << ", " << e.ci_high << "]";
            log << "\n";
        }
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    log << "note: " << out.estimates.size() - failed << " of " << out.estimates.size()
        << " queries estimated in " << ms << " ms\n";
    return failed == 0 ? 0 : 1;
}

int cmd_validate(const std::string& config_path, std::ostream& log) {
    AnalysisConfig cfg;
    try {
        cfg = AnalysisConfig::from_json_text(read_file(config_path));
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    }
    std::vector<std::string> diags = cfg.validate();

    // header-only data check: the file must exist and declare every role column
    std::ifstream f(cfg.data_path);
    if (!f) {
        diags.push_back("error: data file not readable: " + cfg.data_path);
    } else {
        std::string header;
        std::getline(f, header);
        if (!header.empty() && header.back() == '\r') header.pop_back();
        const char sep = header.find('\t') != std::string::npos ? '\t' : ',';
        std::vector<std::string> cols;
        std::string tok;
        std::istringstream hs(header);
        while (std::getline(hs, tok, sep)) cols.push_back(tok);
        auto has = [&](const std::string& n) {
            return std::count(cols.begin(), cols.end(), n) > 0;
        };
        for (const auto& n : cfg.roles.all_columns())
            if (!has(n)) diags.push_back("error: data header lacks role column '" + n + "'");
        for (const auto& flt : cfg.filters)
            if (!has(flt.column))
                diags.push_back("error: data header lacks filter column '" + flt.column + "'");
    }

    bool bad = false;
    for (const auto& d : diags) {
        log << d << "\n";
        if (d.rfind("error:", 0) == 0) bad = true;
    }
    if (diags.empty()) log << "ok: config valid\n";
    return bad ? 2 : 0;
}

int cmd_simulate(const std::string& config_path, std::optional<std::size_t> n_override,
                 std::optional<std::uint64_t> seed_override, const std::string& out_path,
                 std::ostream& log) {
    try {
        SimulateConfig cfg = SimulateConfig::from_json_text(read_file(config_path));
        if (n_override) cfg.n = *n_override;
        if (seed_override) {
            cfg.seed = *seed_override;
            cfg.has_seed = true;
        }
        if (cfg.n == 0) throw ValidationError("n must be positive");
        if (!cfg.has_seed) throw ValidationError("no seed given (config key 'seed' or --seed)");

        const Dataset data = cfg.scm.sample_observational(cfg.n, cfg.seed);
        if (const fs::path dir = fs::path(out_path).parent_path(); !dir.empty())
            fs::create_directories(dir);
        write_file(out_path, to_delimited_text(data));
        log << "note: wrote " << out_path << " (" << data.n_rows() << " rows)\n";

        nlohmann::json side;
        side["schema_version"] = 1;
        side["kind"] = "truth_sidecar";
        side["n"] = cfg.n;
        side["seed"] = cfg.seed;
        side["truths"] = nlohmann::json::array();
        for (const auto& t : cfg.truths) {
            nlohmann::json j;
            j["name"] = t.name;
            j["counterfactual"] = counterfactual_truth(cfg.scm, t.query);
            // matching closed-form observational value, where one exists
            IdentifiedQuery iq;
            iq.target = t.query.target;
            iq.held_mediators = t.query.held_mediators;
            iq.i_source = t.query.i_source;
            iq.fixed_values = t.query.fixed_values;
            iq.a = t.query.a;
            bool mapped = true;
            switch (t.query.kind) {
                case TruthKind::ey_do: iq.kind = IdentifiedKind::ey_do; break;
                case TruthKind::te: iq.kind = IdentifiedKind::te; break;
                case TruthKind::cde: iq.kind = IdentifiedKind::cde; break;
                case TruthKind::iie: iq.kind = IdentifiedKind::iie_conditional; break;
                case TruthKind::ie: iq.kind = IdentifiedKind::ie_conditional; break;
                case TruthKind::re: iq.kind = IdentifiedKind::re_conditional; break;
                case TruthKind::ie_observed: iq.kind = IdentifiedKind::ie_observed; break;
                case TruthKind::re_observed: iq.kind = IdentifiedKind::re_observed; break;
                case TruthKind::iie_marginal: iq.kind = IdentifiedKind::iie_marginal; break;
                case TruthKind::ie_mean_observed: iq.kind = IdentifiedKind::ie_mean_observed; break;
                case TruthKind::ie_mean_conditional:
                    iq.kind = IdentifiedKind::ie_mean_conditional;
                    break;
                case TruthKind::ey_group: iq.kind = IdentifiedKind::ey_group; break;
                default: mapped = false; break;
            }
            if (mapped)
                j["identified"] = enumerate_identified(cfg.scm, iq);
            else
                j["identified"] = nullptr;
            side["truths"].push_back(std::move(j));
        }
        write_file(out_path + ".truth.json", side.dump(2) + "\n");
        log << "note: wrote " << out_path << ".truth.json\n";
        return 0;
    } catch (const Error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    } catch (const fs::filesystem_error& e) {
        log << "error: " << e.what() << "\n";
        return 2;
    }
}

}  // namespace dispar
