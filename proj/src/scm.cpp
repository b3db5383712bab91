#include "dispar/scm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>
#include <sstream>

#include "dispar/error.hpp"
#include "dispar/rng.hpp"

namespace dispar {

namespace {

constexpr std::size_t kStateCap = 4096;

int role_rank(VarRole r) {
    switch (r) {
        case VarRole::covariate: return 0;
        case VarRole::latent: return 1;
        case VarRole::exposure: return 2;
        case VarRole::confounder: return 3;
        case VarRole::mediator: return 4;
        case VarRole::outcome: return 5;
    }
    return 6;
}

}  // namespace

std::size_t DiscreteScm::var_index(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i].name == name) return i;
    throw ValidationError("unknown model variable: " + name);
}

DiscreteScm DiscreteScm::build(std::vector<ScmVariable> vars) {
    DiscreteScm s;
    s.vars_ = std::move(vars);
    if (s.vars_.empty()) throw SchemaError("structural model has no variables");

    std::set<std::string> names;
    int prev_rank = -1;
    std::size_t states = 1;
    for (std::size_t i = 0; i < s.vars_.size(); ++i) {
        const auto& v = s.vars_[i];
        if (v.name.empty()) throw SchemaError("variable without a name");
        if (!names.insert(v.name).second) throw SchemaError("duplicate variable: " + v.name);
        const int rank = role_rank(v.role);
        if (rank < prev_rank)
            throw SchemaError("variable '" + v.name +
                              "' out of role order (covariates, latents, exposure, "
                              "confounders, mediators, outcome)");
        prev_rank = rank;
        switch (v.role) {
            case VarRole::covariate: s.cs_.push_back(static_cast<int>(i)); break;
            case VarRole::latent: s.us_.push_back(static_cast<int>(i)); break;
            case VarRole::exposure:
                if (s.a_ >= 0) throw SchemaError("more than one exposure variable");
                s.a_ = static_cast<int>(i);
                break;
            case VarRole::confounder: s.ls_.push_back(static_cast<int>(i)); break;
            case VarRole::mediator: s.ms_.push_back(static_cast<int>(i)); break;
            case VarRole::outcome:
                if (s.y_ >= 0) throw SchemaError("more than one outcome variable");
                s.y_ = static_cast<int>(i);
                break;
        }
    }
    if (s.a_ < 0) throw SchemaError("missing exposure variable");
    if (s.y_ < 0) throw SchemaError("missing outcome variable");
    if (s.ms_.empty()) throw SchemaError("at least one mediator required");
    if (static_cast<std::size_t>(s.y_) != s.vars_.size() - 1)
        throw SchemaError("outcome must be the last variable");
    if (s.vars_[static_cast<std::size_t>(s.a_)].support != std::vector<double>{0.0, 1.0})
        throw SchemaError("exposure support must be {0,1}");

    for (std::size_t i = 0; i < s.vars_.size(); ++i) {
        const auto& v = s.vars_[i];
        const bool cont_y = v.role == VarRole::outcome && v.is_continuous_outcome();
        if (!cont_y) {
            if (v.support.size() < 2)
                throw SchemaError("variable '" + v.name + "' needs at least two support values");
            std::set<double> sup(v.support.begin(), v.support.end());
            if (sup.size() != v.support.size())
                throw SchemaError("variable '" + v.name + "' has duplicate support values");
            states *= v.support.size();
            if (states > kStateCap)
                throw SchemaError("joint state space exceeds " + std::to_string(kStateCap));
        }
        std::size_t n_cfg = 1;
        for (const auto& pn : v.parents) {
            const std::size_t pi = s.var_index(pn);
            if (pi >= i)
                throw SchemaError("parent '" + pn + "' of '" + v.name +
                                  "' is not an earlier variable");
            if (s.vars_[pi].role == VarRole::outcome)
                throw SchemaError("outcome cannot be a parent");
            n_cfg *= s.vars_[pi].support.size();
        }
        if (cont_y) {
            if (v.mean_table.size() != n_cfg)
                throw SchemaError("outcome mean table has " + std::to_string(v.mean_table.size()) +
                                  " rows, expected " + std::to_string(n_cfg));
            if (v.noise_sd < 0.0) throw SchemaError("negative outcome noise");
        } else {
            if (v.table.size() != n_cfg)
                throw SchemaError("table of '" + v.name + "' has " +
                                  std::to_string(v.table.size()) + " rows, expected " +
                                  std::to_string(n_cfg));
            for (const auto& row : v.table) {
                if (row.size() != v.support.size())
                    throw SchemaError("table row width mismatch for '" + v.name + "'");
                double sum = 0.0;
                for (double p : row) {
                    if (p < 0.0 || p > 1.0)
                        throw SchemaError("probability out of [0,1] for '" + v.name + "'");
                    sum += p;
                }
                if (std::fabs(sum - 1.0) > 1e-9)
                    throw SchemaError("table row of '" + v.name + "' does not sum to 1");
            }
        }
    }
    return s;
}

RoleMap DiscreteScm::role_map() const {
    RoleMap r;
    r.exposure = vars_[static_cast<std::size_t>(a_)].name;
    r.outcome = vars_[static_cast<std::size_t>(y_)].name;
    for (int i : cs_) r.covariates.push_back(vars_[static_cast<std::size_t>(i)].name);
    for (int i : ls_) r.confounders.push_back(vars_[static_cast<std::size_t>(i)].name);
    for (int i : ms_) r.mediators.push_back(vars_[static_cast<std::size_t>(i)].name);
    return r;
}

// ---------------------------------------------------------------------------
// evaluation engine
// ---------------------------------------------------------------------------

struct ScmEngine {
    const DiscreteScm& s;
    const std::vector<ScmVariable>& v;
    std::vector<int> parent_idx_flat;   // parents resolved to indices, per var
    std::vector<std::size_t> parent_begin;
    std::size_t nc = 1, nu = 1, nl = 1, nm = 1;

    // observational aggregates over (a, c, l, m); latents marginalized
    std::vector<double> p_cell;   // joint probability
    std::vector<double> py_cell;  // joint probability times E[Y | full state]

    explicit ScmEngine(const DiscreteScm& scm) : s(scm), v(scm.variables()) {
        parent_begin.push_back(0);
        for (const auto& var : v) {
            for (const auto& pn : var.parents)
                parent_idx_flat.push_back(static_cast<int>(s.var_index(pn)));
            parent_begin.push_back(parent_idx_flat.size());
        }
        for (int i : s.covariate_vars()) nc *= v[static_cast<std::size_t>(i)].support.size();
        for (int i : s.latent_vars()) nu *= v[static_cast<std::size_t>(i)].support.size();
        for (int i : s.confounder_vars()) nl *= v[static_cast<std::size_t>(i)].support.size();
        for (int i : s.mediator_vars()) nm *= v[static_cast<std::size_t>(i)].support.size();
        build_cells();
    }

    std::size_t parent_config(std::size_t var, const std::vector<int>& assign) const {
        std::size_t cfg = 0;
        for (std::size_t k = parent_begin[var]; k < parent_begin[var + 1]; ++k) {
            const std::size_t pi = static_cast<std::size_t>(parent_idx_flat[k]);
            cfg = cfg * v[pi].support.size() + static_cast<std::size_t>(assign[pi]);
        }
        return cfg;
    }

    double cprob(std::size_t var, const std::vector<int>& assign, int val) const {
        return v[var].table[parent_config(var, assign)][static_cast<std::size_t>(val)];
    }

    const std::vector<double>& crow(std::size_t var, const std::vector<int>& assign) const {
        return v[var].table[parent_config(var, assign)];
    }

    double ymean(const std::vector<int>& assign) const {
        const std::size_t y = static_cast<std::size_t>(s.outcome_var());
        const std::size_t cfg = parent_config(y, assign);
        if (v[y].is_continuous_outcome()) return v[y].mean_table[cfg];
        const auto& row = v[y].table[cfg];
        double m = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) m += row[k] * v[y].support[k];
        return m;
    }

    std::size_t config_of(const std::vector<int>& grp, const std::vector<int>& assign) const {
        std::size_t cfg = 0;
        for (int gi : grp) {
            const std::size_t i = static_cast<std::size_t>(gi);
            cfg = cfg * v[i].support.size() + static_cast<std::size_t>(assign[i]);
        }
        return cfg;
    }

    void set_config(const std::vector<int>& grp, std::size_t cfg, std::vector<int>& assign) const {
        for (std::size_t k = grp.size(); k-- > 0;) {
            const std::size_t i = static_cast<std::size_t>(grp[k]);
            const std::size_t sz = v[i].support.size();
            assign[i] = static_cast<int>(cfg % sz);
            cfg /= sz;
        }
    }

    /// Enumerate the variables in vlist (others preset in assign).
    void enum_rec(const std::vector<int>& vlist, std::size_t k, std::vector<int>& assign,
                  double w, const std::function<void(double)>& leaf) const {
        if (k == vlist.size()) {
            leaf(w);
            return;
        }
        const std::size_t var = static_cast<std::size_t>(vlist[k]);
        const auto& row = crow(var, assign);
        for (std::size_t val = 0; val < row.size(); ++val) {
            if (row[val] == 0.0) continue;
            assign[var] = static_cast<int>(val);
            enum_rec(vlist, k + 1, assign, w * row[val], leaf);
        }
        assign[var] = 0;
    }

    std::size_t cell(int a, std::size_t ci, std::size_t li, std::size_t mi) const {
        return ((static_cast<std::size_t>(a) * nc + ci) * nl + li) * nm + mi;
    }

    void build_cells() {
        p_cell.assign(2 * nc * nl * nm, 0.0);
        py_cell.assign(2 * nc * nl * nm, 0.0);
        std::vector<int> assign(v.size(), 0);
        std::vector<int> order;
        for (int i : s.covariate_vars()) order.push_back(i);
        for (int i : s.latent_vars()) order.push_back(i);
        order.push_back(s.exposure_var());
        for (int i : s.confounder_vars()) order.push_back(i);
        for (int i : s.mediator_vars()) order.push_back(i);
        enum_rec(order, 0, assign, 1.0, [&](double w) {
            const std::size_t idx =
                cell(assign[static_cast<std::size_t>(s.exposure_var())],
                     config_of(s.covariate_vars(), assign), config_of(s.confounder_vars(), assign),
                     config_of(s.mediator_vars(), assign));
            p_cell[idx] += w;
            py_cell[idx] += w * ymean(assign);
        });
    }

    std::string cell_name(int a, std::size_t ci, long li) const {
        std::ostringstream os;
        std::vector<int> assign(v.size(), 0);
        if (a >= 0) os << v[static_cast<std::size_t>(s.exposure_var())].name << "=" << a;
        set_config(s.covariate_vars(), ci, assign);
        for (int i : s.covariate_vars()) {
            os << (os.tellp() > 0 ? "," : "") << v[static_cast<std::size_t>(i)].name << "="
               << v[static_cast<std::size_t>(i)].support[static_cast<std::size_t>(assign[i])];
        }
        if (li >= 0) {
            set_config(s.confounder_vars(), static_cast<std::size_t>(li), assign);
            for (int i : s.confounder_vars()) {
                os << "," << v[static_cast<std::size_t>(i)].name << "="
                   << v[static_cast<std::size_t>(i)].support[static_cast<std::size_t>(assign[i])];
            }
        }
        return os.str();
    }

    // --- observational marginals -------------------------------------------

    double p_group(int a) const {
        double t = 0.0;
        for (std::size_t ci = 0; ci < nc; ++ci)
            for (std::size_t li = 0; li < nl; ++li)
                for (std::size_t mi = 0; mi < nm; ++mi) t += p_cell[cell(a, ci, li, mi)];
        return t;
    }

    double p_ac(int a, std::size_t ci) const {
        double t = 0.0;
        for (std::size_t li = 0; li < nl; ++li)
            for (std::size_t mi = 0; mi < nm; ++mi) t += p_cell[cell(a, ci, li, mi)];
        return t;
    }

    double p_acl(int a, std::size_t ci, std::size_t li) const {
        double t = 0.0;
        for (std::size_t mi = 0; mi < nm; ++mi) t += p_cell[cell(a, ci, li, mi)];
        return t;
    }

    double p_c(std::size_t ci) const { return p_ac(0, ci) + p_ac(1, ci); }

    double ey_group(int a) const {
        double num = 0.0, den = 0.0;
        for (std::size_t ci = 0; ci < nc; ++ci)
            for (std::size_t li = 0; li < nl; ++li)
                for (std::size_t mi = 0; mi < nm; ++mi) {
                    num += py_cell[cell(a, ci, li, mi)];
                    den += p_cell[cell(a, ci, li, mi)];
                }
        if (den <= 0.0) throw PositivityError("group A=" + std::to_string(a) + " has probability 0");
        return num / den;
    }

    /// E[Y | a, c, l, m]; requires a positive cell.
    double ey_cell(int a, std::size_t ci, std::size_t li, std::size_t mi) const {
        const std::size_t idx = cell(a, ci, li, mi);
        if (p_cell[idx] <= 0.0)
            throw PositivityError("empty outcome cell at " + cell_name(a, ci, static_cast<long>(li)));
        return py_cell[idx] / p_cell[idx];
    }
};

namespace {

struct Blocks {
    std::vector<std::size_t> i_of_m, r_of_m, w_of_m;
    std::size_t ni = 1, nr = 1, nw = 1;
};

Blocks split_blocks(const ScmEngine& e, const std::vector<std::string>& target,
                    const std::vector<std::string>& held) {
    const auto& ms = e.s.mediator_vars();
    std::vector<int> kind(ms.size(), 1);  // 0=I, 1=R, 2=W
    auto mark = [&](const std::vector<std::string>& names, int k, const char* what) {
        for (const auto& n : names) {
            const std::size_t vi = e.s.var_index(n);
            auto it = std::find(ms.begin(), ms.end(), static_cast<int>(vi));
            if (it == ms.end()) throw ValidationError(std::string(what) + " '" + n + "' is not a mediator");
            const std::size_t pos = static_cast<std::size_t>(it - ms.begin());
            if (kind[pos] != 1) throw ValidationError("mediator '" + n + "' assigned to two blocks");
            kind[pos] = k;
        }
    };
    mark(target, 0, "target");
    mark(held, 2, "held mediator");

    Blocks b;
    for (std::size_t k = 0; k < ms.size(); ++k) {
        const std::size_t sz = e.v[static_cast<std::size_t>(ms[k])].support.size();
        if (kind[k] == 0) b.ni *= sz;
        else if (kind[k] == 1) b.nr *= sz;
        else b.nw *= sz;
    }
    b.i_of_m.resize(e.nm);
    b.r_of_m.resize(e.nm);
    b.w_of_m.resize(e.nm);
    std::vector<int> assign(e.v.size(), 0);
    for (std::size_t mi = 0; mi < e.nm; ++mi) {
        e.set_config(ms, mi, assign);
        std::size_t ii = 0, ri = 0, wi = 0;
        for (std::size_t k = 0; k < ms.size(); ++k) {
            const std::size_t var = static_cast<std::size_t>(ms[k]);
            const std::size_t sz = e.v[var].support.size();
            const std::size_t val = static_cast<std::size_t>(assign[var]);
            if (kind[k] == 0) ii = ii * sz + val;
            else if (kind[k] == 1) ri = ri * sz + val;
            else wi = wi * sz + val;
        }
        b.i_of_m[mi] = ii;
        b.r_of_m[mi] = ri;
        b.w_of_m[mi] = wi;
    }
    return b;
}

// Observational draw law of the I block: P(i | A=a, c, w) or pooled P(i).
std::vector<double> obs_i_dist(const ScmEngine& e, const Blocks& b, DrawSource src, int a,
                               std::size_t ci, std::size_t wi) {
    std::vector<double> d(b.ni, 0.0);
    double tot = 0.0;
    if (src == DrawSource::pooled_marginal) {
        for (int aa = 0; aa <= 1; ++aa)
            for (std::size_t c2 = 0; c2 < e.nc; ++c2)
                for (std::size_t li = 0; li < e.nl; ++li)
                    for (std::size_t mi = 0; mi < e.nm; ++mi) {
                        const double p = e.p_cell[e.cell(aa, c2, li, mi)];
                        d[b.i_of_m[mi]] += p;
                        tot += p;
                    }
    } else {
        for (std::size_t li = 0; li < e.nl; ++li)
            for (std::size_t mi = 0; mi < e.nm; ++mi) {
                if (b.w_of_m[mi] != wi) continue;
                const double p = e.p_cell[e.cell(a, ci, li, mi)];
                d[b.i_of_m[mi]] += p;
                tot += p;
            }
    }
    if (tot <= 0.0)
        throw PositivityError("draw law of the target block is empty at " +
                              e.cell_name(src == DrawSource::pooled_marginal ? -1 : a, ci, -1));
    for (auto& x : d) x /= tot;
    return d;
}

// Observational law of the untouched block: P(r | A=a, c) or P(r | A=a, c, l).
std::vector<double> obs_r_dist(const ScmEngine& e, const Blocks& b, int a, std::size_t ci,
                               long li) {
    std::vector<double> d(b.nr, 0.0);
    double tot = 0.0;
    for (std::size_t l2 = 0; l2 < e.nl; ++l2) {
        if (li >= 0 && static_cast<std::size_t>(li) != l2) continue;
        for (std::size_t mi = 0; mi < e.nm; ++mi) {
            const double p = e.p_cell[e.cell(a, ci, l2, mi)];
            d[b.r_of_m[mi]] += p;
            tot += p;
        }
    }
    if (tot <= 0.0)
        throw PositivityError("law of the untouched block is empty at " + e.cell_name(a, ci, li));
    for (auto& x : d) x /= tot;
    return d;
}

// P(m | a) marginal over covariates and confounders.
std::vector<double> obs_m_marginal(const ScmEngine& e, int a) {
    std::vector<double> d(e.nm, 0.0);
    double tot = 0.0;
    for (std::size_t ci = 0; ci < e.nc; ++ci)
        for (std::size_t li = 0; li < e.nl; ++li)
            for (std::size_t mi = 0; mi < e.nm; ++mi) {
                const double p = e.p_cell[e.cell(a, ci, li, mi)];
                d[mi] += p;
                tot += p;
            }
    if (tot <= 0.0) throw PositivityError("group A=" + std::to_string(a) + " has probability 0");
    for (auto& x : d) x /= tot;
    return d;
}

double g_formula(const ScmEngine& e, int a) {
    double total = 0.0;
    for (std::size_t ci = 0; ci < e.nc; ++ci) {
        const double pc = e.p_c(ci);
        if (pc <= 0.0) continue;
        const double pac = e.p_ac(a, ci);
        if (pac <= 0.0)
            throw PositivityError("no A=" + std::to_string(a) + " mass at " + e.cell_name(-1, ci, -1));
        for (std::size_t li = 0; li < e.nl; ++li) {
            const double pacl = e.p_acl(a, ci, li);
            if (pacl <= 0.0) continue;
            const double pl = pacl / pac;
            for (std::size_t mi = 0; mi < e.nm; ++mi) {
                const double pm = e.p_cell[e.cell(a, ci, li, mi)] / pacl;
                if (pm <= 0.0) continue;
                total += pc * pl * pm * e.ey_cell(a, ci, li, mi);
            }
        }
    }
    return total;
}

// Multilinear extension of E[Y|a,c,l,m] in the target coordinates.
// med_vals holds a support-value index for non-target mediators and is
// ignored for targets, whose (continuous) values come from fixed.
double ey_cell_ext(const ScmEngine& e, int a, std::size_t ci, std::size_t li,
                   std::vector<int>& med_idx, const std::vector<std::size_t>& target_pos,
                   const std::vector<double>& fixed, std::size_t k) {
    const auto& ms = e.s.mediator_vars();
    if (k == target_pos.size()) {
        std::size_t mi = 0;
        for (std::size_t j = 0; j < ms.size(); ++j) {
            const std::size_t sz = e.v[static_cast<std::size_t>(ms[j])].support.size();
            mi = mi * sz + static_cast<std::size_t>(med_idx[j]);
        }
        return e.ey_cell(a, ci, li, mi);
    }
    const std::size_t pos = target_pos[k];
    const std::size_t var = static_cast<std::size_t>(ms[pos]);
    const auto& sup = e.v[var].support;
    if (sup.size() != 2 || sup[0] + sup[1] != 1.0 || sup[0] * sup[1] != 0.0)
        throw ValidationError("mean-fixing requires binary {0,1} mediator '" + e.v[var].name + "'");
    const int idx0 = sup[0] == 0.0 ? 0 : 1;
    const double x = fixed[k];
    med_idx[pos] = idx0;
    const double y0 = ey_cell_ext(e, a, ci, li, med_idx, target_pos, fixed, k + 1);
    med_idx[pos] = 1 - idx0;
    const double y1 = ey_cell_ext(e, a, ci, li, med_idx, target_pos, fixed, k + 1);
    return (1.0 - x) * y0 + x * y1;
}

std::vector<std::size_t> target_positions(const ScmEngine& e,
                                          const std::vector<std::string>& target) {
    const auto& ms = e.s.mediator_vars();
    std::vector<std::size_t> pos;
    for (const auto& n : target) {
        const std::size_t vi = e.s.var_index(n);
        auto it = std::find(ms.begin(), ms.end(), static_cast<int>(vi));
        if (it == ms.end()) throw ValidationError("target '" + n + "' is not a mediator");
        pos.push_back(static_cast<std::size_t>(it - ms.begin()));
    }
    return pos;
}

// Observed mean of a mediator in a group.
double obs_mediator_mean(const ScmEngine& e, std::size_t med_pos, int a) {
    const auto& ms = e.s.mediator_vars();
    std::vector<int> assign(e.v.size(), 0);
    double num = 0.0, den = 0.0;
    for (std::size_t ci = 0; ci < e.nc; ++ci)
        for (std::size_t li = 0; li < e.nl; ++li)
            for (std::size_t mi = 0; mi < e.nm; ++mi) {
                const double p = e.p_cell[e.cell(a, ci, li, mi)];
                if (p <= 0.0) continue;
                e.set_config(ms, mi, assign);
                const std::size_t var = static_cast<std::size_t>(ms[med_pos]);
                num += p * e.v[var].support[static_cast<std::size_t>(assign[var])];
                den += p;
            }
    if (den <= 0.0) throw PositivityError("group A=" + std::to_string(a) + " has probability 0");
    return num / den;
}

}  // namespace

double enumerate_identified(const DiscreteScm& scm, const IdentifiedQuery& q) {
    ScmEngine e(scm);
    const auto& ms = scm.mediator_vars();

    switch (q.kind) {
        case IdentifiedKind::te:
            return g_formula(e, 1) - g_formula(e, 0);
        case IdentifiedKind::ey_group:
            return e.ey_group(q.a);
        case IdentifiedKind::ey_do:
            return g_formula(e, q.a);
        default: break;
    }

    if (q.kind == IdentifiedKind::cde) {
        if (q.fixed_values.size() != ms.size())
            throw ValidationError("cde needs one fixed value per mediator");
        std::vector<int> assign(e.v.size(), 0);
        std::size_t mi = 0;
        for (std::size_t k = 0; k < ms.size(); ++k) {
            const auto& sup = e.v[static_cast<std::size_t>(ms[k])].support;
            auto it = std::find(sup.begin(), sup.end(), q.fixed_values[k]);
            if (it == sup.end())
                throw ValidationError("fixed value not in the support of mediator " +
                                      e.v[static_cast<std::size_t>(ms[k])].name);
            mi = mi * sup.size() + static_cast<std::size_t>(it - sup.begin());
        }
        double total = 0.0;
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            const double pc = e.p_c(ci);
            if (pc <= 0.0) continue;
            for (int a = 0; a <= 1; ++a) {
                const double pac = e.p_ac(a, ci);
                if (pac <= 0.0)
                    throw PositivityError("no A=" + std::to_string(a) + " mass at " +
                                          e.cell_name(-1, ci, -1));
                for (std::size_t li = 0; li < e.nl; ++li) {
                    const double pl = e.p_acl(a, ci, li) / pac;
                    if (pl <= 0.0) continue;
                    const double sign = a == 1 ? 1.0 : -1.0;
                    total += sign * pc * pl * e.ey_cell(a, ci, li, mi);
                }
            }
        }
        return total;
    }

    if (q.kind == IdentifiedKind::ie_mean_observed || q.kind == IdentifiedKind::ie_mean_conditional) {
        if (!q.held_mediators.empty())
            throw ValidationError("held mediators not supported for mean-fixing estimands");
        const auto pos = target_positions(e, q.target);
        const Blocks b = split_blocks(e, q.target, {});
        std::vector<double> fixed(pos.size());
        if (q.kind == IdentifiedKind::ie_mean_observed) {
            for (std::size_t k = 0; k < pos.size(); ++k) fixed[k] = obs_mediator_mean(e, pos[k], 0);
        } else {
            if (q.target.size() != ms.size())
                throw ValidationError("counterfactual mean-fixing requires all mediators as target");
            // identified counterfactual control-group mediator means
            for (std::size_t k = 0; k < pos.size(); ++k) {
                double total = 0.0;
                std::vector<int> assign(e.v.size(), 0);
                for (std::size_t ci = 0; ci < e.nc; ++ci) {
                    const double pc = e.p_c(ci);
                    if (pc <= 0.0) continue;
                    const double pac = e.p_ac(0, ci);
                    if (pac <= 0.0)
                        throw PositivityError("no A=0 mass at " + e.cell_name(-1, ci, -1));
                    for (std::size_t li = 0; li < e.nl; ++li) {
                        const double pacl = e.p_acl(0, ci, li);
                        if (pacl <= 0.0) continue;
                        for (std::size_t mi = 0; mi < e.nm; ++mi) {
                            const double pm = e.p_cell[e.cell(0, ci, li, mi)] / pacl;
                            if (pm <= 0.0) continue;
                            e.set_config(ms, mi, assign);
                            const std::size_t var = static_cast<std::size_t>(ms[pos[k]]);
                            total += pc * (pacl / pac) * pm *
                                     e.v[var].support[static_cast<std::size_t>(assign[var])];
                        }
                    }
                }
                fixed[k] = total;
            }
        }

        const bool observed = q.kind == IdentifiedKind::ie_mean_observed;
        const double base = observed ? e.ey_group(1) : g_formula(e, 1);
        double sim = 0.0;
        std::vector<int> med_idx(ms.size(), 0);
        std::vector<int> assign(e.v.size(), 0);
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            const double pc_w = observed ? e.p_ac(1, ci) / e.p_group(1) : e.p_c(ci);
            if (pc_w <= 0.0) continue;
            const double pac = e.p_ac(1, ci);
            if (pac <= 0.0)
                throw PositivityError("no A=1 mass at " + e.cell_name(-1, ci, -1));
            for (std::size_t li = 0; li < e.nl; ++li) {
                const double pl = e.p_acl(1, ci, li) / pac;
                if (pl <= 0.0) continue;
                const auto rdist = obs_r_dist(e, b, 1, ci, static_cast<long>(li));
                // average the extended outcome over the untouched block's law
                double inner = 0.0;
                std::vector<double> r_done(b.nr, -1.0);
                for (std::size_t mi = 0; mi < e.nm; ++mi) {
                    const std::size_t ri = b.r_of_m[mi];
                    if (r_done[ri] >= 0.0) continue;
                    if (rdist[ri] <= 0.0) {
                        r_done[ri] = 0.0;
                        continue;
                    }
                    e.set_config(ms, mi, assign);
                    for (std::size_t j = 0; j < ms.size(); ++j)
                        med_idx[j] = assign[static_cast<std::size_t>(ms[j])];
                    const double yv = ey_cell_ext(e, 1, ci, li, med_idx, pos, fixed, 0);
                    inner += rdist[ri] * yv;
                    r_done[ri] = 1.0;
                }
                sim += pc_w * pl * inner;
            }
        }
        return base - sim;
    }

    if (q.kind == IdentifiedKind::iie_marginal) {
        if (q.target.size() != ms.size())
            throw ValidationError("marginal-draw contrast requires all mediators as target");
        const auto d1 = obs_m_marginal(e, 1);
        const auto d0 = obs_m_marginal(e, 0);
        double total = 0.0;
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            const double pc = e.p_c(ci);
            if (pc <= 0.0) continue;
            const double pac = e.p_ac(1, ci);
            if (pac <= 0.0)
                throw PositivityError("no A=1 mass at " + e.cell_name(-1, ci, -1));
            for (std::size_t li = 0; li < e.nl; ++li) {
                const double pl = e.p_acl(1, ci, li) / pac;
                if (pl <= 0.0) continue;
                for (std::size_t mi = 0; mi < e.nm; ++mi) {
                    const double w = d1[mi] - d0[mi];
                    if (w == 0.0) continue;
                    total += pc * pl * w * e.ey_cell(1, ci, li, mi);
                }
            }
        }
        return total;
    }

    // block-draw estimands
    if (q.target.empty()) throw ValidationError("query needs a nonempty target block");
    const Blocks b = split_blocks(e, q.target, q.held_mediators);

    if (q.kind == IdentifiedKind::iie_conditional) {
        if (!q.held_mediators.empty())
            throw ValidationError("held mediators not supported for this estimand");
        double total = 0.0;
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            const double pc = e.p_c(ci);
            if (pc <= 0.0) continue;
            const auto i1 = obs_i_dist(e, b, DrawSource::control_given_c, 1, ci, 0);
            const auto i0 = obs_i_dist(e, b, DrawSource::control_given_c, 0, ci, 0);
            const auto r1 = obs_r_dist(e, b, 1, ci, -1);
            const double pac = e.p_ac(1, ci);
            if (pac <= 0.0)
                throw PositivityError("no A=1 mass at " + e.cell_name(-1, ci, -1));
            for (std::size_t li = 0; li < e.nl; ++li) {
                const double pl = e.p_acl(1, ci, li) / pac;
                if (pl <= 0.0) continue;
                for (std::size_t mi = 0; mi < e.nm; ++mi) {
                    const double w = (i1[b.i_of_m[mi]] - i0[b.i_of_m[mi]]) * r1[b.r_of_m[mi]];
                    if (w == 0.0) continue;
                    total += pc * pl * w * e.ey_cell(1, ci, li, mi);
                }
            }
        }
        return total;
    }

    if (q.kind == IdentifiedKind::ie_conditional || q.kind == IdentifiedKind::re_conditional) {
        if (!q.held_mediators.empty())
            throw ValidationError("held mediators not supported for this estimand");
        // simulated term: target drawn from the control law given c,
        // untouched block from the exposed law given c and l
        double sim = 0.0;
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            const double pc = e.p_c(ci);
            if (pc <= 0.0) continue;
            const auto i0 = obs_i_dist(e, b, DrawSource::control_given_c, 0, ci, 0);
            const double pac = e.p_ac(1, ci);
            if (pac <= 0.0)
                throw PositivityError("no A=1 mass at " + e.cell_name(-1, ci, -1));
            for (std::size_t li = 0; li < e.nl; ++li) {
                const double pl = e.p_acl(1, ci, li) / pac;
                if (pl <= 0.0) continue;
                const auto r1 = obs_r_dist(e, b, 1, ci, static_cast<long>(li));
                for (std::size_t mi = 0; mi < e.nm; ++mi) {
                    const double w = i0[b.i_of_m[mi]] * r1[b.r_of_m[mi]];
                    if (w == 0.0) continue;
                    sim += pc * pl * w * e.ey_cell(1, ci, li, mi);
                }
            }
        }
        if (q.kind == IdentifiedKind::ie_conditional) return g_formula(e, 1) - sim;
        return sim - g_formula(e, 0);
    }

    if (q.kind == IdentifiedKind::ie_observed || q.kind == IdentifiedKind::re_observed) {
        const double pa1 = e.p_group(1);
        if (pa1 <= 0.0) throw PositivityError("group A=1 has probability 0");
        double sim = 0.0;
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            const double pac = e.p_ac(1, ci);
            if (pac <= 0.0) continue;
            for (std::size_t li = 0; li < e.nl; ++li) {
                const double pacl = e.p_acl(1, ci, li);
                if (pacl <= 0.0) continue;
                const auto r1 = obs_r_dist(e, b, 1, ci, static_cast<long>(li));
                // group the exposed cell law by the held block
                std::vector<double> pw(b.nw, 0.0);
                for (std::size_t mi = 0; mi < e.nm; ++mi)
                    pw[b.w_of_m[mi]] += e.p_cell[e.cell(1, ci, li, mi)] / pacl;
                for (std::size_t wi = 0; wi < b.nw; ++wi) {
                    if (pw[wi] <= 0.0) continue;
                    const auto idist = q.i_source == DrawSource::pooled_marginal
                                           ? obs_i_dist(e, b, q.i_source, 0, ci, wi)
                                           : obs_i_dist(e, b, DrawSource::control_given_c, 0, ci, wi);
                    for (std::size_t mi = 0; mi < e.nm; ++mi) {
                        if (b.w_of_m[mi] != wi) continue;
                        const double w = idist[b.i_of_m[mi]] * r1[b.r_of_m[mi]];
                        if (w == 0.0) continue;
                        sim += (pacl / pa1) * pw[wi] * w * e.ey_cell(1, ci, li, mi);
                    }
                }
            }
        }
        if (q.kind == IdentifiedKind::ie_observed) return e.ey_group(1) - sim;
        return sim - e.ey_group(0);
    }

    throw ValidationError("unsupported identified query");
}

// ---------------------------------------------------------------------------
// counterfactual truths
// ---------------------------------------------------------------------------

namespace {

// Enumerates (covariates, latents) jointly; leaf gets assign and the weight.
void enum_roots(const ScmEngine& e, const std::function<void(std::vector<int>&, double)>& leaf) {
    std::vector<int> order;
    for (int i : e.s.covariate_vars()) order.push_back(i);
    for (int i : e.s.latent_vars()) order.push_back(i);
    std::vector<int> assign(e.v.size(), 0);
    e.enum_rec(order, 0, assign, 1.0, [&](double w) { leaf(assign, w); });
}

// True law of a mediator block under do(A=a), given the covariate part of
// `root_cfg`; latents and confounders are integrated out.  `onto` maps a full
// mediator config to the block index; `n_onto` is the block's size.
std::vector<double> true_block_dist(const ScmEngine& e, int a, std::size_t ci,
                                    const std::vector<std::size_t>& onto, std::size_t n_onto) {
    std::vector<double> d(n_onto, 0.0);
    double tot = 0.0;
    enum_roots(e, [&](std::vector<int>& assign, double w) {
        if (e.config_of(e.s.covariate_vars(), assign) != ci) return;
        assign[static_cast<std::size_t>(e.s.exposure_var())] = a;
        e.enum_rec(e.s.confounder_vars(), 0, assign, w, [&](double wl) {
            e.enum_rec(e.s.mediator_vars(), 0, assign, wl, [&](double wm) {
                d[onto[e.config_of(e.s.mediator_vars(), assign)]] += wm;
                tot += wm;
            });
        });
    });
    if (tot <= 0.0)
        throw PositivityError("covariate cell has probability 0: " + e.cell_name(-1, ci, -1));
    for (auto& x : d) x /= tot;
    return d;
}

// True law of the untouched block under do(A=a) given covariates and the
// realized confounder values (posterior over latents included).
std::vector<double> true_block_dist_given_l(const ScmEngine& e, int a, std::size_t ci,
                                            std::size_t li, const std::vector<std::size_t>& onto,
                                            std::size_t n_onto) {
    std::vector<double> d(n_onto, 0.0);
    double tot = 0.0;
    enum_roots(e, [&](std::vector<int>& assign, double w) {
        if (e.config_of(e.s.covariate_vars(), assign) != ci) return;
        assign[static_cast<std::size_t>(e.s.exposure_var())] = a;
        e.enum_rec(e.s.confounder_vars(), 0, assign, w, [&](double wl) {
            if (e.config_of(e.s.confounder_vars(), assign) != li) return;
            e.enum_rec(e.s.mediator_vars(), 0, assign, wl, [&](double wm) {
                d[onto[e.config_of(e.s.mediator_vars(), assign)]] += wm;
                tot += wm;
            });
        });
    });
    if (tot <= 0.0)
        throw PositivityError("confounder cell unreachable under do(A=" + std::to_string(a) +
                              "): " + e.cell_name(-1, ci, static_cast<long>(li)));
    for (auto& x : d) x /= tot;
    return d;
}

double true_ey_do(const ScmEngine& e, int a) {
    double total = 0.0;
    enum_roots(e, [&](std::vector<int>& assign, double w) {
        assign[static_cast<std::size_t>(e.s.exposure_var())] = a;
        e.enum_rec(e.s.confounder_vars(), 0, assign, w, [&](double wl) {
            e.enum_rec(e.s.mediator_vars(), 0, assign, wl,
                       [&](double wm) { total += wm * e.ymean(assign); });
        });
    });
    return total;
}

// E[Y_{a, M-block draws}] where the target block is drawn from `idist`
// (indexed per covariate cell), the untouched block from `rdist`, both
// independent of the unit.  rdist_given_l switches the untouched draw to the
// law given the realized confounders.
struct BlockDraws {
    const Blocks& b;
    // per covariate config
    std::vector<std::vector<double>> i_by_c;
    std::vector<std::vector<double>> r_by_c;                // given c only
    std::vector<std::vector<std::vector<double>>> r_by_cl;  // given c and l
    bool r_given_l = false;

    explicit BlockDraws(const Blocks& blocks) : b(blocks) {}
};

double true_ey_block_draw(const ScmEngine& e, int a, const BlockDraws& dr) {
    double total = 0.0;
    std::vector<int> med_assign(e.v.size(), 0);
    enum_roots(e, [&](std::vector<int>& assign, double w) {
        const std::size_t ci = e.config_of(e.s.covariate_vars(), assign);
        assign[static_cast<std::size_t>(e.s.exposure_var())] = a;
        e.enum_rec(e.s.confounder_vars(), 0, assign, w, [&](double wl) {
            const std::size_t li = e.config_of(e.s.confounder_vars(), assign);
            const auto& idist = dr.i_by_c[ci];
            const auto& rdist = dr.r_given_l ? dr.r_by_cl[ci][li] : dr.r_by_c[ci];
            for (std::size_t mi = 0; mi < e.nm; ++mi) {
                const double pw = idist[dr.b.i_of_m[mi]] * rdist[dr.b.r_of_m[mi]];
                if (pw == 0.0) continue;
                med_assign = assign;
                e.set_config(e.s.mediator_vars(), mi, med_assign);
                total += wl * pw * e.ymean(med_assign);
            }
        });
    });
    return total;
}

// Cross-world mean E[Y_{a, M_{a*}}] under the per-variable comonotone
// coupling of the confounder noise shared across worlds.
double true_ey_cross_world(const ScmEngine& e, int a, int astar) {
    double total = 0.0;
    const auto& ls = e.s.confounder_vars();
    std::function<void(std::vector<int>&, std::vector<int>&, std::size_t, double)> pair_l =
        [&](std::vector<int>& w1, std::vector<int>& w0, std::size_t k, double w) {
            if (k == ls.size()) {
                // world a* mediators, outcome read in world a
                e.enum_rec(e.s.mediator_vars(), 0, w0, w, [&](double wm) {
                    std::vector<int> yassign = w1;
                    for (int mv : e.s.mediator_vars()) {
                        const std::size_t i = static_cast<std::size_t>(mv);
                        yassign[i] = w0[i];
                    }
                    total += wm * e.ymean(yassign);
                });
                return;
            }
            const std::size_t var = static_cast<std::size_t>(ls[k]);
            const auto& row1 = e.crow(var, w1);
            const auto& row0 = e.crow(var, w0);
            double f1lo = 0.0;
            for (std::size_t v1 = 0; v1 < row1.size(); ++v1) {
                const double f1hi = f1lo + row1[v1];
                double f0lo = 0.0;
                for (std::size_t v0 = 0; v0 < row0.size(); ++v0) {
                    const double f0hi = f0lo + row0[v0];
                    const double overlap =
                        std::min(f1hi, f0hi) - std::max(f1lo, f0lo);
                    if (overlap > 0.0) {
                        w1[var] = static_cast<int>(v1);
                        w0[var] = static_cast<int>(v0);
                        pair_l(w1, w0, k + 1, w * overlap);
                    }
                    f0lo = f0hi;
                }
                f1lo = f1hi;
            }
            w1[var] = 0;
            w0[var] = 0;
        };

    enum_roots(e, [&](std::vector<int>& assign, double w) {
        std::vector<int> w1 = assign;
        std::vector<int> w0 = assign;
        w1[static_cast<std::size_t>(e.s.exposure_var())] = a;
        w0[static_cast<std::size_t>(e.s.exposure_var())] = astar;
        pair_l(w1, w0, 0, w);
    });
    return total;
}

// Simulated term of the observed-disparity estimands: units are the exposed
// group with observed covariates, confounders and held mediators; the target
// block is drawn from the control group's observational law (or the pooled
// law), the untouched block from the exposed observational law given (c, l).
double true_sim_observed(const ScmEngine& e, const Blocks& b, DrawSource src) {
    // cache observational draw laws
    std::vector<std::vector<std::vector<double>>> i_by_cw(
        e.nc, std::vector<std::vector<double>>(b.nw));
    std::vector<double> i_pooled;
    if (src == DrawSource::pooled_marginal) i_pooled = obs_i_dist(e, b, src, 0, 0, 0);
    std::vector<std::vector<std::vector<double>>> r_by_cl(e.nc,
                                                          std::vector<std::vector<double>>(e.nl));

    double total = 0.0, mass = 0.0;
    std::vector<int> med_assign(e.v.size(), 0);
    enum_roots(e, [&](std::vector<int>& assign, double w) {
        const std::size_t ci = e.config_of(e.s.covariate_vars(), assign);
        const std::size_t avar = static_cast<std::size_t>(e.s.exposure_var());
        const double pa1 = e.cprob(avar, assign, 1);
        if (pa1 <= 0.0) return;
        assign[avar] = 1;
        e.enum_rec(e.s.confounder_vars(), 0, assign, w * pa1, [&](double wl) {
            const std::size_t li = e.config_of(e.s.confounder_vars(), assign);
            e.enum_rec(e.s.mediator_vars(), 0, assign, wl, [&](double wm) {
                const std::size_t mi = e.config_of(e.s.mediator_vars(), assign);
                const std::size_t wi = b.w_of_m[mi];
                auto& idist = src == DrawSource::pooled_marginal ? i_pooled : i_by_cw[ci][wi];
                if (idist.empty()) idist = obs_i_dist(e, b, src, 0, ci, wi);
                auto& rdist = r_by_cl[ci][li];
                if (rdist.empty()) rdist = obs_r_dist(e, b, 1, ci, static_cast<long>(li));
                double inner = 0.0;
                for (std::size_t m2 = 0; m2 < e.nm; ++m2) {
                    if (b.w_of_m[m2] != wi) continue;
                    const double pw = idist[b.i_of_m[m2]] * rdist[b.r_of_m[m2]];
                    if (pw == 0.0) continue;
                    med_assign = assign;
                    e.set_config(e.s.mediator_vars(), m2, med_assign);
                    inner += pw * e.ymean(med_assign);
                }
                total += wm * inner;
                mass += wm;
            });
        });
    });
    if (mass <= 0.0) throw PositivityError("group A=1 has probability 0");
    return total / mass;
}

// Same machinery with the target block fixed at constant values (multilinear
// extension of the outcome table for binary targets).
double true_sim_observed_fixed(const ScmEngine& e, const Blocks& b,
                               const std::vector<std::size_t>& target_pos,
                               const std::vector<double>& fixed) {
    std::vector<std::vector<std::vector<double>>> r_by_cl(e.nc,
                                                          std::vector<std::vector<double>>(e.nl));
    double total = 0.0, mass = 0.0;
    const auto& msv = e.s.mediator_vars();
    enum_roots(e, [&](std::vector<int>& assign, double w) {
        const std::size_t ci = e.config_of(e.s.covariate_vars(), assign);
        const std::size_t avar = static_cast<std::size_t>(e.s.exposure_var());
        const double pa1 = e.cprob(avar, assign, 1);
        if (pa1 <= 0.0) return;
        assign[avar] = 1;
        e.enum_rec(e.s.confounder_vars(), 0, assign, w * pa1, [&](double wl) {
            const std::size_t li = e.config_of(e.s.confounder_vars(), assign);
            auto& rdist = r_by_cl[ci][li];
            if (rdist.empty()) rdist = obs_r_dist(e, b, 1, ci, static_cast<long>(li));
            mass += wl;
            for (std::size_t mi = 0; mi < e.nm; ++mi) {
                const std::size_t ri = b.r_of_m[mi];
                if (b.i_of_m[mi] != 0 || b.w_of_m[mi] != 0) continue;  // one rep per r
                if (rdist[ri] <= 0.0) continue;
                std::vector<int> med_assign = assign;
                e.set_config(msv, mi, med_assign);
                // multilinear extension over the fixed coordinates, with the
                // unit's structural outcome mean
                std::function<double(std::size_t)> ext = [&](std::size_t k) -> double {
                    if (k == target_pos.size()) return e.ymean(med_assign);
                    const std::size_t var = static_cast<std::size_t>(msv[target_pos[k]]);
                    const auto& sup = e.v[var].support;
                    if (sup.size() != 2 || sup[0] + sup[1] != 1.0 || sup[0] * sup[1] != 0.0)
                        throw ValidationError("mean-fixing requires binary {0,1} mediator '" +
                                              e.v[var].name + "'");
                    const int idx0 = sup[0] == 0.0 ? 0 : 1;
                    const double x = fixed[k];
                    med_assign[var] = idx0;
                    const double y0 = ext(k + 1);
                    med_assign[var] = 1 - idx0;
                    const double y1 = ext(k + 1);
                    return (1.0 - x) * y0 + x * y1;
                };
                total += wl * rdist[ri] * ext(0);
            }
        });
    });
    if (mass <= 0.0) throw PositivityError("group A=1 has probability 0");
    return total / mass;
}

double true_mediator_mean_do(const ScmEngine& e, std::size_t med_pos, int a) {
    double total = 0.0;
    const auto& msv = e.s.mediator_vars();
    enum_roots(e, [&](std::vector<int>& assign, double w) {
        assign[static_cast<std::size_t>(e.s.exposure_var())] = a;
        e.enum_rec(e.s.confounder_vars(), 0, assign, w, [&](double wl) {
            e.enum_rec(e.s.mediator_vars(), 0, assign, wl, [&](double wm) {
                const std::size_t var = static_cast<std::size_t>(msv[med_pos]);
                total += wm * e.v[var].support[static_cast<std::size_t>(assign[var])];
            });
        });
    });
    return total;
}

}  // namespace

double counterfactual_truth(const DiscreteScm& scm, const TruthQuery& q) {
    ScmEngine e(scm);
    const auto& ms = scm.mediator_vars();

    switch (q.kind) {
        case TruthKind::ey_do: return true_ey_do(e, q.a);
        case TruthKind::te: return true_ey_do(e, 1) - true_ey_do(e, 0);
        case TruthKind::ey_group: return e.ey_group(q.a);
        case TruthKind::nie: return true_ey_do(e, 1) - true_ey_cross_world(e, 1, 0);
        case TruthKind::nde: return true_ey_cross_world(e, 1, 0) - true_ey_do(e, 0);
        default: break;
    }

    if (q.kind == TruthKind::cde) {
        if (q.fixed_values.size() != ms.size())
            throw ValidationError("cde needs one fixed value per mediator");
        std::vector<int> med_vals(ms.size());
        for (std::size_t k = 0; k < ms.size(); ++k) {
            const auto& sup = e.v[static_cast<std::size_t>(ms[k])].support;
            auto it = std::find(sup.begin(), sup.end(), q.fixed_values[k]);
            if (it == sup.end())
                throw ValidationError("fixed value not in the support of mediator " +
                                      e.v[static_cast<std::size_t>(ms[k])].name);
            med_vals[k] = static_cast<int>(it - sup.begin());
        }
        auto ey_fixed = [&](int a) {
            double total = 0.0;
            enum_roots(e, [&](std::vector<int>& assign, double w) {
                assign[static_cast<std::size_t>(e.s.exposure_var())] = a;
                e.enum_rec(e.s.confounder_vars(), 0, assign, w, [&](double wl) {
                    for (std::size_t k = 0; k < ms.size(); ++k)
                        assign[static_cast<std::size_t>(ms[k])] = med_vals[k];
                    total += wl * e.ymean(assign);
                });
            });
            return total;
        };
        return ey_fixed(1) - ey_fixed(0);
    }

    if (q.kind == TruthKind::ie_mean_observed || q.kind == TruthKind::ie_mean_conditional) {
        const auto pos = target_positions(e, q.target);
        const Blocks b = split_blocks(e, q.target, {});
        std::vector<double> fixed(pos.size());
        if (q.kind == TruthKind::ie_mean_observed) {
            for (std::size_t k = 0; k < pos.size(); ++k) fixed[k] = obs_mediator_mean(e, pos[k], 0);
            return e.ey_group(1) - true_sim_observed_fixed(e, b, pos, fixed);
        }
        if (q.target.size() != ms.size())
            throw ValidationError("counterfactual mean-fixing requires all mediators as target");
        for (std::size_t k = 0; k < pos.size(); ++k)
            fixed[k] = true_mediator_mean_do(e, pos[k], 0);
        // all mediators fixed at the counterfactual control means
        double second = 0.0;
        const auto& msv = e.s.mediator_vars();
        enum_roots(e, [&](std::vector<int>& assign, double w) {
            assign[static_cast<std::size_t>(e.s.exposure_var())] = 1;
            e.enum_rec(e.s.confounder_vars(), 0, assign, w, [&](double wl) {
                std::vector<int> med_assign = assign;
                std::function<double(std::size_t)> ext = [&](std::size_t k) -> double {
                    if (k == pos.size()) return e.ymean(med_assign);
                    const std::size_t var = static_cast<std::size_t>(msv[pos[k]]);
                    const auto& sup = e.v[var].support;
                    if (sup.size() != 2 || sup[0] + sup[1] != 1.0 || sup[0] * sup[1] != 0.0)
                        throw ValidationError("mean-fixing requires binary {0,1} mediator '" +
                                              e.v[var].name + "'");
                    const int idx0 = sup[0] == 0.0 ? 0 : 1;
                    med_assign[var] = idx0;
                    const double y0 = ext(k + 1);
                    med_assign[var] = 1 - idx0;
                    const double y1 = ext(k + 1);
                    return (1.0 - fixed[k]) * y0 + fixed[k] * y1;
                };
                second += wl * ext(0);
            });
        });
        return true_ey_do(e, 1) - second;
    }

    if (q.kind == TruthKind::ie_observed || q.kind == TruthKind::re_observed) {
        const Blocks b = split_blocks(e, q.target, q.held_mediators);
        const double sim = true_sim_observed(e, b, q.i_source);
        if (q.kind == TruthKind::ie_observed) return e.ey_group(1) - sim;
        return sim - e.ey_group(0);
    }

    // counterfactual block-draw estimands
    if (q.target.empty()) throw ValidationError("query needs a nonempty target block");
    if (!q.held_mediators.empty())
        throw ValidationError("held mediators only apply to observed-disparity estimands");
    const Blocks b = split_blocks(e, q.target, {});

    auto i_dists = [&](int a_draw) {
        std::vector<std::vector<double>> by_c(e.nc);
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            if (e.p_c(ci) <= 0.0) continue;
            by_c[ci] = true_block_dist(e, a_draw, ci, b.i_of_m, b.ni);
        }
        return by_c;
    };
    auto r_dists = [&](int a_draw) {
        std::vector<std::vector<double>> by_c(e.nc);
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            if (e.p_c(ci) <= 0.0) continue;
            by_c[ci] = true_block_dist(e, a_draw, ci, b.r_of_m, b.nr);
        }
        return by_c;
    };

    if (q.kind == TruthKind::iie) {
        BlockDraws d1{b}, d0{b};
        d1.i_by_c = i_dists(1);
        d0.i_by_c = i_dists(0);
        d1.r_by_c = r_dists(1);
        d0.r_by_c = d1.r_by_c;
        return true_ey_block_draw(e, 1, d1) - true_ey_block_draw(e, 1, d0);
    }
    if (q.kind == TruthKind::iie_r) {
        BlockDraws dr1{b}, dr0{b};
        dr1.i_by_c = i_dists(0);
        dr0.i_by_c = dr1.i_by_c;
        dr1.r_by_c = r_dists(1);
        dr0.r_by_c = r_dists(0);
        return true_ey_block_draw(e, 1, dr1) - true_ey_block_draw(e, 1, dr0);
    }
    if (q.kind == TruthKind::ide || q.kind == TruthKind::ide_marginal ||
        q.kind == TruthKind::iie_marginal) {
        if (q.target.size() != ms.size())
            throw ValidationError("joint-draw contrasts require all mediators as target");
        BlockDraws d{b};
        if (q.kind == TruthKind::ide) {
            d.i_by_c = i_dists(0);
            d.r_by_c.assign(e.nc, std::vector<double>{1.0});
            return true_ey_block_draw(e, 1, d) - true_ey_block_draw(e, 0, d);
        }
        // population-marginal draw laws
        auto marginal = [&](int a_draw) {
            std::vector<double> m(b.ni, 0.0);
            for (std::size_t ci = 0; ci < e.nc; ++ci) {
                const double pc = e.p_c(ci);
                if (pc <= 0.0) continue;
                const auto d2 = true_block_dist(e, a_draw, ci, b.i_of_m, b.ni);
                for (std::size_t k = 0; k < b.ni; ++k) m[k] += pc * d2[k];
            }
            return m;
        };
        if (q.kind == TruthKind::ide_marginal) {
            d.i_by_c.assign(e.nc, marginal(0));
            d.r_by_c.assign(e.nc, std::vector<double>{1.0});
            return true_ey_block_draw(e, 1, d) - true_ey_block_draw(e, 0, d);
        }
        BlockDraws dm1{b}, dm0{b};
        dm1.i_by_c.assign(e.nc, marginal(1));
        dm0.i_by_c.assign(e.nc, marginal(0));
        dm1.r_by_c.assign(e.nc, std::vector<double>{1.0});
        dm0.r_by_c = dm1.r_by_c;
        return true_ey_block_draw(e, 1, dm1) - true_ey_block_draw(e, 1, dm0);
    }
    if (q.kind == TruthKind::ie || q.kind == TruthKind::re) {
        BlockDraws d{b};
        d.i_by_c = i_dists(0);
        d.r_given_l = true;
        d.r_by_cl.resize(e.nc);
        for (std::size_t ci = 0; ci < e.nc; ++ci) {
            if (e.p_c(ci) <= 0.0) continue;
            d.r_by_cl[ci].resize(e.nl);
            for (std::size_t li = 0; li < e.nl; ++li) {
                try {
                    d.r_by_cl[ci][li] = true_block_dist_given_l(e, 1, ci, li, b.r_of_m, b.nr);
                } catch (const PositivityError&) {
                    // unreachable confounder cells never get weight below
                    d.r_by_cl[ci][li].assign(b.nr, 0.0);
                }
            }
        }
        const double sim = true_ey_block_draw(e, 1, d);
        if (q.kind == TruthKind::ie) return true_ey_do(e, 1) - sim;
        return sim - true_ey_do(e, 0);
    }

    throw ValidationError("unsupported truth query");
}

// ---------------------------------------------------------------------------
// sampling
// ---------------------------------------------------------------------------

Dataset DiscreteScm::sample_observational(std::size_t n, std::uint64_t seed) const {
    std::vector<std::string> names;
    std::vector<int> emit;  // observable variables in dataset order
    for (int i : cs_) emit.push_back(i);
    emit.push_back(a_);
    for (int i : ls_) emit.push_back(i);
    for (int i : ms_) emit.push_back(i);
    emit.push_back(y_);
    for (int i : emit) names.push_back(vars_[static_cast<std::size_t>(i)].name);

    std::vector<std::vector<double>> cols(emit.size(), std::vector<double>(n));
    ScmEngine e(*this);
    std::vector<int> assign(vars_.size(), 0);
    for (std::size_t row = 0; row < n; ++row) {
        for (std::size_t vi = 0; vi < vars_.size(); ++vi) {
            const auto& var = vars_[vi];
            CounterRng rng({seed, 101, row, vi});
            if (var.role == VarRole::outcome && var.is_continuous_outcome()) continue;
            const auto& probs = var.table[e.parent_config(vi, assign)];
            const double u = rng.next_uniform();
            double acc = 0.0;
            int val = static_cast<int>(probs.size()) - 1;
            for (std::size_t k = 0; k < probs.size(); ++k) {
                acc += probs[k];
                if (u < acc) {
                    val = static_cast<int>(k);
                    break;
                }
            }
            assign[vi] = val;
        }
        for (std::size_t k = 0; k < emit.size(); ++k) {
            const std::size_t vi = static_cast<std::size_t>(emit[k]);
            const auto& var = vars_[vi];
            if (var.role == VarRole::outcome && var.is_continuous_outcome()) {
                CounterRng rng({seed, 102, row, vi});
                cols[k][row] = rng.next_normal(var.mean_table[e.parent_config(vi, assign)],
                                               var.noise_sd);
            } else {
                cols[k][row] = var.support[static_cast<std::size_t>(assign[vi])];
            }
        }
    }
    return Dataset::from_columns(std::move(names), std::move(cols));
}

}  // namespace dispar
