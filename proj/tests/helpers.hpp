#pragma once

// Shared generators for the test suite: random discrete structural models in
// the standard shape (baseline covariate feeding everything, binary exposure,
// one exposure-induced confounder, a chain of binary mediators, an outcome).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dispar/rng.hpp"
#include "dispar/scm.hpp"

namespace testgen {

enum class CptStyle {
    free_rows,  // every CPT row an independent random simplex
    logistic,   // rows from main-effect coefficients through the logit link
};

struct ScmOptions {
    int c_states = 2;
    int n_mediators = 2;
    bool c_to_a = true;                        // drop for the marginal-draw battery
    bool latent_u_am = false;                  // unmeasured exposure-mediator confounder
    bool continuous_y = true;
    bool mediators_cond_independent = false;   // drop mediator-to-mediator edges
    bool a_in_mediators = true;                // sharp-null toggle
    CptStyle style = CptStyle::free_rows;
    double noise_sd = 0.5;
    double coef_scale = 0.8;
};

inline std::vector<double> random_simplex(dispar::CounterRng& rng, int k) {
    std::vector<double> v(static_cast<std::size_t>(k));
    double t = 0.0;
    for (auto& x : v) {
        x = 0.1 + rng.next_uniform();
        t += x;
    }
    for (auto& x : v) x /= t;
    return v;
}

inline double rcoef(dispar::CounterRng& rng, double scale) {
    return (2.0 * rng.next_uniform() - 1.0) * scale;
}

inline double invlogit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Enumerate parent configurations in table-row order (last parent fastest),
// yielding the parent values for each row.
template <typename Fn>
void for_each_parent_row(const std::vector<std::vector<double>>& parent_supports, Fn&& fn) {
    std::size_t rows = 1;
    for (const auto& s : parent_supports) rows *= s.size();
    std::vector<double> vals(parent_supports.size());
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t rem = r;
        for (std::size_t j = parent_supports.size(); j-- > 0;) {
            const auto& s = parent_supports[j];
            vals[j] = s[rem % s.size()];
            rem /= s.size();
        }
        fn(r, vals);
    }
}

inline dispar::DiscreteScm random_scm(std::uint64_t seed, const ScmOptions& opt) {
    using namespace dispar;
    CounterRng rng({seed, 0x7357u});
    std::vector<ScmVariable> vars;
    std::vector<std::vector<double>> supports;  // by declaration index
    std::vector<std::string> names;

    auto support_of = [&](const std::string& n) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == n) return supports[i];
        throw std::logic_error("unknown parent " + n);
    };

    auto add_discrete = [&](const std::string& name, VarRole role, std::vector<double> support,
                            std::vector<std::string> parents) {
        ScmVariable v;
        v.name = name;
        v.role = role;
        v.support = support;
        v.parents = parents;
        std::vector<std::vector<double>> ps;
        for (const auto& p : parents) ps.push_back(support_of(p));
        const int k = static_cast<int>(support.size());
        if (opt.style == CptStyle::free_rows || parents.empty() || k != 2) {
            std::size_t rows = 1;
            for (const auto& s : ps) rows *= s.size();
            for (std::size_t r = 0; r < rows; ++r) v.table.push_back(random_simplex(rng, k));
        } else {
            const double b0 = rcoef(rng, opt.coef_scale);
            std::vector<double> b(parents.size());
            for (auto& x : b) x = rcoef(rng, opt.coef_scale);
            v.table.resize(1);
            for_each_parent_row(ps, [&](std::size_t r, const std::vector<double>& vals) {
                double lin = b0;
                for (std::size_t j = 0; j < vals.size(); ++j) lin += b[j] * vals[j];
                const double p1 = invlogit(lin);
                if (r >= v.table.size()) v.table.resize(r + 1);
                v.table[r] = {1.0 - p1, p1};
            });
        }
        names.push_back(name);
        supports.push_back(v.support);
        vars.push_back(std::move(v));
    };

    add_discrete("c", VarRole::covariate, [&] {
        std::vector<double> s;
        for (int i = 0; i < opt.c_states; ++i) s.push_back(static_cast<double>(i));
        return s;
    }(), {});
    if (opt.latent_u_am) add_discrete("u", VarRole::latent, {0.0, 1.0}, {});

    std::vector<std::string> a_parents;
    if (opt.c_to_a) a_parents.push_back("c");
    if (opt.latent_u_am) a_parents.push_back("u");
    add_discrete("a", VarRole::exposure, {0.0, 1.0}, a_parents);

    add_discrete("l", VarRole::confounder, {0.0, 1.0}, {"c", "a"});

    std::vector<std::string> med_names;
    for (int k = 0; k < opt.n_mediators; ++k) {
        const std::string name = "m" + std::to_string(k + 1);
        std::vector<std::string> parents = {"c"};
        if (opt.latent_u_am && k == 0) parents.push_back("u");
        if (opt.a_in_mediators) parents.push_back("a");
        parents.push_back("l");
        if (!opt.mediators_cond_independent)
            for (const auto& mp : med_names) parents.push_back(mp);
        add_discrete(name, VarRole::mediator, {0.0, 1.0}, parents);
        med_names.push_back(name);
    }

    {
        ScmVariable y;
        y.name = "y";
        y.role = VarRole::outcome;
        y.parents = {"c", "a", "l"};
        for (const auto& m : med_names) y.parents.push_back(m);
        std::vector<std::vector<double>> ps;
        for (const auto& p : y.parents) ps.push_back(support_of(p));
        if (opt.continuous_y) {
            y.noise_sd = opt.noise_sd;
            if (opt.style == CptStyle::logistic) {
                const double b0 = rcoef(rng, 1.0);
                std::vector<double> b(y.parents.size());
                for (auto& x : b) x = rcoef(rng, 1.0);
                for_each_parent_row(ps, [&](std::size_t, const std::vector<double>& vals) {
                    double lin = b0;
                    for (std::size_t j = 0; j < vals.size(); ++j) lin += b[j] * vals[j];
                    y.mean_table.push_back(lin);
                });
            } else {
                for_each_parent_row(ps, [&](std::size_t, const std::vector<double>&) {
                    y.mean_table.push_back(2.0 * rng.next_uniform());
                });
            }
        } else {
            y.support = {0.0, 1.0};
            for_each_parent_row(ps, [&](std::size_t, const std::vector<double>&) {
                y.table.push_back(random_simplex(rng, 2));
            });
        }
        vars.push_back(std::move(y));
    }
    return dispar::DiscreteScm::build(std::move(vars));
}

}  // namespace testgen
