#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

namespace dispar {

/// Command-line overrides applied on top of the config file.
struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    bool debug_dumps = false;
};

/// Execute a full analysis run: ingest, fit, estimate, bootstrap, write the
/// report and plot-data tables under the output directory.
/// Exit code: 0 when every query succeeded, 1 when some failed (partial
/// report still written), 2 on config/schema/data errors.
int cmd_run(const std::string& config_path, const CliOverrides& ov, std::ostream& log);

/// Print structural diagnostics for a config without running it.  Touches
/// the data file only to check that the header declares the role columns.
/// Exit code: 0 when no error-level diagnostic, else 2.
int cmd_validate(const std::string& config_path, std::ostream& log);

/// Sample a dataset from a discrete generator config and write it with a
/// sidecar of exact effect values.  `out_path` names the data file; the
/// sidecar is `<out_path>.truth.json`.
/// Exit code: 0 on success, 2 on config or generator errors.
int cmd_simulate(const std::string& config_path, std::optional<std::size_t> n_override,
                 std::optional<std::uint64_t> seed_override, const std::string& out_path,
                 std::ostream& log);

}  // namespace dispar
