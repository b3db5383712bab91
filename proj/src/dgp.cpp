#include "dispar/dgp.hpp"

#include <cmath>
#include <set>

#include "dispar/error.hpp"
#include "dispar/rng.hpp"

namespace dispar {

void ParametricDgp::validate() const {
    if (equations.empty()) throw SchemaError("data-generating process has no equations");
    std::set<std::string> seen;
    for (const auto& eq : equations) {
        if (eq.name.empty()) throw SchemaError("equation without a name");
        // name inserted only after its terms are checked, so self-reference fails
        for (const auto& t : eq.terms)
            for (const auto& v : t.vars)
                if (!seen.count(v))
                    throw SchemaError("equation for '" + eq.name + "' references '" + v +
                                      "', which is not generated earlier");
        if (eq.kind == DgpKind::continuous && eq.noise_sd < 0.0)
            throw SchemaError("negative noise for '" + eq.name + "'");
        if (!seen.insert(eq.name).second) throw SchemaError("duplicate equation: " + eq.name);
    }
}

Dataset ParametricDgp::generate(std::size_t n, std::uint64_t seed) const {
    validate();
    std::vector<std::string> names;
    names.reserve(equations.size());
    for (const auto& eq : equations) names.push_back(eq.name);
    std::vector<std::vector<double>> cols(equations.size(), std::vector<double>(n));

    std::vector<std::size_t> term_var_idx;  // resolved name lookups, flattened
    std::vector<std::size_t> term_begin;
    std::vector<std::size_t> eq_term_begin;
    eq_term_begin.push_back(0);
    for (const auto& eq : equations) {
        for (const auto& t : eq.terms) {
            term_begin.push_back(term_var_idx.size());
            for (const auto& v : t.vars) {
                for (std::size_t k = 0; k < names.size(); ++k)
                    if (names[k] == v) {
                        term_var_idx.push_back(k);
                        break;
                    }
            }
        }
        eq_term_begin.push_back(term_begin.size());
    }
    term_begin.push_back(term_var_idx.size());

    for (std::size_t row = 0; row < n; ++row) {
        std::size_t t_flat = 0;
        for (std::size_t e = 0; e < equations.size(); ++e) {
            const auto& eq = equations[e];
            double lin = 0.0;
            for (const auto& t : eq.terms) {
                double prod = t.coef;
                for (std::size_t k = term_begin[t_flat]; k < term_begin[t_flat + 1]; ++k)
                    prod *= cols[term_var_idx[k]][row];
                lin += prod;
                ++t_flat;
            }
            CounterRng rng({seed, 201, row, e});
            if (eq.kind == DgpKind::binary) {
                const double p = lin >= 0.0 ? 1.0 / (1.0 + std::exp(-lin))
                                            : std::exp(lin) / (1.0 + std::exp(lin));
                cols[e][row] = rng.next_bernoulli(p) ? 1.0 : 0.0;
            } else {
                cols[e][row] = rng.next_normal(lin, eq.noise_sd);
            }
        }
    }
    return Dataset::from_columns(std::move(names), std::move(cols));
}

double ParametricDgp::main_coefficient(const std::string& target, const std::string& var) const {
    for (const auto& eq : equations) {
        if (eq.name != target) continue;
        for (const auto& t : eq.terms)
            if (t.vars.size() == 1 && t.vars[0] == var) return t.coef;
        return 0.0;
    }
    throw ValidationError("no equation for '" + target + "'");
}

}  // namespace dispar
