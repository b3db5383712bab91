#pragma once

#include <string>
#include <vector>

#include "dispar/assumptions.hpp"
#include "dispar/dataset.hpp"
#include "dispar/gcomp.hpp"
#include "dispar/scm.hpp"

namespace dispar {

/// A complete, replayable description of one batch analysis.
///
/// The on-disk form is a JSON document with a versioned key set (see
/// README).  Parsing is strict: unknown keys, missing seeds and malformed
/// queries raise SchemaError with a path-like location.
struct AnalysisConfig {
    std::string data_path;
    RoleMap roles;
    std::vector<Filter> filters;
    GcompSettings settings;
    AssumptionLedger assumptions;
    std::vector<CounterfactualQuery> queries;
    std::string output_dir = "out";

    static AnalysisConfig from_json_text(const std::string& text);
    /// Stable serialization: parse(to_json_text()) reproduces the config.
    std::string to_json_text() const;

    /// Structural diagnostics that need no data access.  "error:" lines make
    /// the config unusable; "warning:" lines flag assumption-ledger gaps.
    std::vector<std::string> validate() const;
};

/// Generator description for the `simulate` verb: a discrete structural
/// model plus the closed-form truths to enumerate into the sidecar.
struct SimulateConfig {
    DiscreteScm scm;
    std::size_t n = 0;
    std::uint64_t seed = 0;
    bool has_seed = false;
    struct Truth {
        std::string name;
        TruthQuery query;
    };
    std::vector<Truth> truths;

    static SimulateConfig from_json_text(const std::string& text);
};

}  // namespace dispar
