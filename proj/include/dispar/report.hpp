#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dispar/config.hpp"
#include "dispar/gcomp.hpp"

namespace dispar {

/// FNV-1a 64-bit hash rendered as 16 hex digits.
std::string fingerprint_hex(const std::string& bytes);

/// Assemble the run report: a schema-versioned JSON document holding the
/// config echo, input fingerprints, group stats, fitted-model summaries and
/// every estimate.  Execution details that may legitimately differ between
/// equivalent runs (worker count, wall-clock, dump switches) are excluded,
/// so a rerun with the same seed is byte-identical.
std::string render_report(const AnalysisConfig& cfg, const std::string& config_fingerprint,
                          const std::string& data_fingerprint, std::size_t rows_used,
                          std::size_t rows_dropped_gaps, std::size_t rows_dropped_filtered,
                          const GcompOutput& out);

/// Flat plot-data table for a single-mediator sweep: one line per mediator
/// with the point estimate, interval, percent of the marginal disparity and
/// both error scales.  Tab-separated, header row, "." decimal point.
std::string render_sweep_table(const std::vector<const EffectEstimate*>& rows);

/// Flat component-split table for estimates that carry exposed-side and
/// control-side contributions.
std::string render_component_table(const std::vector<const EffectEstimate*>& rows);

}  // namespace dispar
