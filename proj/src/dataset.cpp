#include "dispar/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "dispar/error.hpp"

namespace dispar {

Dataset Dataset::from_columns(std::vector<std::string> names,
                              std::vector<std::vector<double>> columns) {
    if (names.size() != columns.size())
        throw SchemaError("column name count does not match column count");
    std::set<std::string> seen;
    for (const auto& n : names) {
        if (n.empty()) throw SchemaError("empty column name");
        if (!seen.insert(n).second) throw SchemaError("duplicate column name: " + n);
    }
    Dataset d;
    d.n_rows_ = columns.empty() ? 0 : columns.front().size();
    for (const auto& c : columns) {
        if (c.size() != d.n_rows_) throw SchemaError("ragged columns");
    }
    d.names_ = std::move(names);
    d.cols_ = std::move(columns);
    return d;
}

bool Dataset::has_column(const std::string& name) const {
    return std::find(names_.begin(), names_.end(), name) != names_.end();
}

std::size_t Dataset::column_index(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) throw ValidationError("unknown column: " + name);
    return static_cast<std::size_t>(it - names_.begin());
}

Dataset Dataset::select_rows(const std::vector<std::size_t>& rows) const {
    Dataset out;
    out.names_ = names_;
    out.n_rows_ = rows.size();
    out.cols_.reserve(cols_.size());
    for (const auto& c : cols_) {
        std::vector<double> nc;
        nc.reserve(rows.size());
        for (std::size_t r : rows) nc.push_back(c[r]);
        out.cols_.push_back(std::move(nc));
    }
    return out;
}

std::vector<std::size_t> Dataset::rows_equal(const std::string& column, double v) const {
    const auto& c = cols_[column_index(column)];
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c[i] == v) out.push_back(i);
    return out;
}

bool Dataset::column_is_binary(std::size_t idx) const {
    for (double v : cols_[idx])
        if (v != 0.0 && v != 1.0) return false;
    return true;
}

std::vector<std::string> RoleMap::all_columns() const {
    std::vector<std::string> out{exposure, outcome};
    out.insert(out.end(), covariates.begin(), covariates.end());
    out.insert(out.end(), confounders.begin(), confounders.end());
    out.insert(out.end(), mediators.begin(), mediators.end());
    return out;
}

void RoleMap::validate(const Dataset& d) const {
    if (exposure.empty()) throw ValidationError("role map: exposure column not set");
    if (outcome.empty()) throw ValidationError("role map: outcome column not set");
    if (mediators.empty()) throw ValidationError("role map: at least one mediator required");
    std::set<std::string> seen;
    for (const auto& name : all_columns()) {
        if (!d.has_column(name)) throw ValidationError("role map names unknown column: " + name);
        if (!seen.insert(name).second)
            throw ValidationError("column assigned to more than one role: " + name);
    }
    const auto& a = d.column(exposure);
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != 0.0 && a[i] != 1.0) {
            throw ValidationError("exposure column '" + exposure + "' is not {0,1} at row " +
                                  std::to_string(i));
        }
    }
}

bool Filter::matches(double x) const {
    if (op == "==") return x == value;
    if (op == "!=") return x != value;
    if (op == "<") return x < value;
    if (op == "<=") return x <= value;
    if (op == ">") return x > value;
    if (op == ">=") return x >= value;
    throw ValidationError("filter on '" + column + "': unknown comparator '" + op + "'");
}

namespace {

bool parse_number(std::string_view tok, double& out) {
    // trim ASCII whitespace and an optional CR
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() &&
           (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
        tok.remove_suffix(1);
    if (tok.empty()) return false;
    if (tok == "NA" || tok == "na" || tok == "NaN" || tok == "nan" || tok == ".") return false;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

std::vector<std::string_view> split_line(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == delim) {
            out.push_back(line.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

std::string trim_token(std::string_view tok) {
    while (!tok.empty() && (tok.front() == ' ' || tok.front() == '\t')) tok.remove_prefix(1);
    while (!tok.empty() &&
           (tok.back() == ' ' || tok.back() == '\t' || tok.back() == '\r'))
        tok.remove_suffix(1);
    return std::string(tok);
}

}  // namespace

IngestResult ingest_delimited_text(const std::string& text, const RoleMap& roles,
                                   const std::vector<Filter>& filters) {
    std::vector<std::string_view> lines;
    {
        std::size_t start = 0;
        for (std::size_t i = 0; i <= text.size(); ++i) {
            if (i == text.size() || text[i] == '\n') {
                lines.emplace_back(text.data() + start, i - start);
                start = i + 1;
            }
        }
        while (!lines.empty() && lines.back().empty()) lines.pop_back();
    }
    if (lines.empty()) throw SchemaError("empty input: no header row");

    const char delim = lines.front().find('\t') != std::string_view::npos ? '\t' : ',';
    std::vector<std::string> header;
    for (auto tok : split_line(lines.front(), delim)) header.push_back(trim_token(tok));
    {
        std::set<std::string> seen;
        for (const auto& h : header) {
            if (h.empty()) throw SchemaError("header row has an empty column name");
            if (!seen.insert(h).second) throw SchemaError("duplicate column in header: " + h);
        }
    }

    std::vector<std::size_t> filter_cols;
    for (const auto& f : filters) {
        auto it = std::find(header.begin(), header.end(), f.column);
        if (it == header.end())
            throw ValidationError("filter references unknown column: " + f.column);
        f.matches(0.0);  // validate the comparator early
        filter_cols.push_back(static_cast<std::size_t>(it - header.begin()));
    }

    IngestResult result;
    std::vector<std::vector<double>> cols(header.size());
    std::vector<double> row(header.size());
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const auto fields = split_line(lines[li], delim);
        bool gap = fields.size() != header.size();
        if (!gap) {
            for (std::size_t c = 0; c < fields.size(); ++c) {
                if (!parse_number(fields[c], row[c])) {
                    gap = true;
                    break;
                }
            }
        }
        if (gap) {
            ++result.rows_dropped_gaps;
            continue;
        }
        bool keep = true;
        for (std::size_t fi = 0; fi < filters.size(); ++fi) {
            if (!filters[fi].matches(row[filter_cols[fi]])) {
                keep = false;
                break;
            }
        }
        if (!keep) {
            ++result.rows_dropped_filtered;
            continue;
        }
        for (std::size_t c = 0; c < header.size(); ++c) cols[c].push_back(row[c]);
    }

    result.data = Dataset::from_columns(std::move(header), std::move(cols));
    roles.validate(result.data);
    return result;
}

IngestResult ingest_delimited_file(const std::string& path, const RoleMap& roles,
                                   const std::vector<Filter>& filters) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open data file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return ingest_delimited_text(buf.str(), roles, filters);
}

std::string to_delimited_text(const Dataset& d) {
    std::ostringstream out;
    for (std::size_t c = 0; c < d.n_cols(); ++c) {
        if (c) out << '\t';
        out << d.names()[c];
    }
    out << '\n';
    out.setf(std::ios::fmtflags(0), std::ios::floatfield);
    out.precision(17);
    for (std::size_t r = 0; r < d.n_rows(); ++r) {
        for (std::size_t c = 0; c < d.n_cols(); ++c) {
            if (c) out << '\t';
            out << d.value(r, c);
        }
        out << '\n';
    }
    return out.str();
}

double mean_over_rows(const Dataset& d, std::size_t col, const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw DegenerateGroupError("mean over empty row set");
    const auto& c = d.column(col);
    double s = 0.0;
    for (std::size_t r : rows) s += c[r];
    return s / static_cast<double>(rows.size());
}

GroupStats group_stats(const Dataset& d, const RoleMap& roles) {
    roles.validate(d);
    const auto exposed = d.rows_equal(roles.exposure, 1.0);
    const auto control = d.rows_equal(roles.exposure, 0.0);
    if (exposed.empty()) throw DegenerateGroupError("exposure group A=1 is empty");
    if (control.empty()) throw DegenerateGroupError("exposure group A=0 is empty");

    GroupStats g;
    g.n_exposed = exposed.size();
    g.n_control = control.size();
    const std::size_t ycol = d.column_index(roles.outcome);
    g.mean_outcome_exposed = mean_over_rows(d, ycol, exposed);
    g.mean_outcome_control = mean_over_rows(d, ycol, control);
    g.disparity = g.mean_outcome_exposed - g.mean_outcome_control;

    auto add = [&](const std::vector<std::string>& names) {
        for (const auto& n : names) {
            const std::size_t c = d.column_index(n);
            g.column_means[n] = {mean_over_rows(d, c, exposed), mean_over_rows(d, c, control)};
        }
    };
    add(roles.covariates);
    add(roles.confounders);
    add(roles.mediators);
    return g;
}

}  // namespace dispar
