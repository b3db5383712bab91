#include "dispar/glm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "dispar/error.hpp"

namespace dispar {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

inline double inv_logit(double eta) {
    if (eta >= 0.0) {
        const double e = std::exp(-eta);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

std::string join(const std::vector<std::string>& parts) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += ", ";
        out += parts[i];
    }
    return out;
}

Eigen::MatrixXd build_design(const Dataset& d, const std::vector<std::size_t>& rows,
                             const FittedModel& plan) {
    const std::size_t n = rows.size();
    const std::size_t p = plan.terms.n_coef();
    Eigen::MatrixXd X(n, p);
    for (std::size_t i = 0; i < n; ++i) X(i, 0) = 1.0;
    std::size_t c = 1;
    for (int col : plan.main_cols) {
        const auto& v = d.column(static_cast<std::size_t>(col));
        for (std::size_t i = 0; i < n; ++i) X(i, c) = v[rows[i]];
        ++c;
    }
    for (auto [c1, c2] : plan.inter_cols) {
        const auto& v1 = d.column(static_cast<std::size_t>(c1));
        const auto& v2 = d.column(static_cast<std::size_t>(c2));
        for (std::size_t i = 0; i < n; ++i) X(i, c) = v1[rows[i]] * v2[rows[i]];
        ++c;
    }
    return X;
}

void check_rank(const Eigen::MatrixXd& X, const FittedModel& plan) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    if (qr.rank() == X.cols()) return;
    const auto perm = qr.colsPermutation().indices();
    const auto names = plan.terms.coef_names();
    std::vector<std::string> bad;
    for (Eigen::Index k = qr.rank(); k < X.cols(); ++k)
        bad.push_back(names[static_cast<std::size_t>(perm[k])]);
    std::sort(bad.begin(), bad.end());
    throw SingularDesignError("singular design for response '" + plan.response +
                              "' (" + plan.stratum_label + "): collinear columns: " + join(bad));
}

}  // namespace

TermSet TermSet::mains_only(std::vector<std::string> mains) {
    TermSet t;
    t.mains = std::move(mains);
    t.normalize();
    return t;
}

void TermSet::normalize() {
    std::set<std::string> main_set;
    for (const auto& m : mains) {
        if (!main_set.insert(m).second) throw ValidationError("duplicate main effect: " + m);
    }
    for (auto& [a, b] : interactions) {
        if (a == b) throw ValidationError("self-interaction not allowed: " + a + ":" + b);
        if (a > b) std::swap(a, b);
        if (!main_set.count(a) || !main_set.count(b))
            throw ValidationError("interaction " + a + ":" + b +
                                  " violates the hierarchy rule (missing main effect)");
    }
    std::sort(interactions.begin(), interactions.end());
    const auto dup = std::adjacent_find(interactions.begin(), interactions.end());
    if (dup != interactions.end())
        throw ValidationError("duplicate interaction: " + dup->first + ":" + dup->second);
}

std::vector<std::string> TermSet::coef_names() const {
    std::vector<std::string> out{"(intercept)"};
    for (const auto& m : mains) out.push_back(m);
    for (const auto& [a, b] : interactions) out.push_back(a + ":" + b);
    return out;
}

double FittedModel::linear_predictor(const double* row) const {
    double eta = coef[0];
    std::size_t c = 1;
    for (int col : main_cols) eta += coef[c++] * row[col];
    for (auto [c1, c2] : inter_cols) eta += coef[c++] * row[c1] * row[c2];
    return eta;
}

double FittedModel::predict_mean(const double* row) const {
    const double eta = linear_predictor(row);
    return family == Family::logistic ? inv_logit(eta) : eta;
}

double FittedModel::draw(const double* row, CounterRng& rng) const {
    const double eta = linear_predictor(row);
    if (family == Family::logistic) return rng.next_bernoulli(inv_logit(eta));
    return rng.next_normal(eta, residual_sd);
}

bool FittedModel::out_of_range(const double* row) const {
    for (std::size_t k = 0; k < main_cols.size(); ++k) {
        const double v = row[main_cols[k]];
        if (v < main_ranges[k].first || v > main_ranges[k].second) return true;
    }
    return false;
}

bool is_binary_over_rows(const Dataset& d, std::size_t col, const std::vector<std::size_t>& rows) {
    const auto& c = d.column(col);
    for (std::size_t r : rows) {
        if (c[r] != 0.0 && c[r] != 1.0) return false;
    }
    return true;
}

FittedModel fit_glm(const Dataset& d, const std::vector<std::size_t>& rows,
                    const std::string& response, const TermSet& terms, Family family,
                    const std::string& stratum_label) {
    if (rows.empty())
        throw DegenerateGroupError("no rows to fit response '" + response + "' (" +
                                   stratum_label + ")");
    FittedModel m;
    m.family = family;
    m.response = response;
    m.stratum_label = stratum_label;
    m.terms = terms;
    m.terms.normalize();
    m.response_col = static_cast<int>(d.column_index(response));
    for (const auto& name : m.terms.mains)
        m.main_cols.push_back(static_cast<int>(d.column_index(name)));
    for (const auto& [a, b] : m.terms.interactions)
        m.inter_cols.emplace_back(static_cast<int>(d.column_index(a)),
                                  static_cast<int>(d.column_index(b)));

    const std::size_t n = rows.size();
    const std::size_t p = m.terms.n_coef();
    if (n <= p)
        throw ValidationError("too few rows (" + std::to_string(n) + ") for " +
                              std::to_string(p) + " coefficients of response '" + response + "'");

    const Eigen::MatrixXd X = build_design(d, rows, m);
    check_rank(X, m);

    Eigen::VectorXd y(n);
    {
        const auto& yc = d.column(static_cast<std::size_t>(m.response_col));
        for (std::size_t i = 0; i < n; ++i) y(i) = yc[rows[i]];
    }

    m.main_ranges.reserve(m.main_cols.size());
    for (std::size_t k = 0; k < m.main_cols.size(); ++k) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        const auto& col = d.column(static_cast<std::size_t>(m.main_cols[k]));
        for (std::size_t r : rows) {
            lo = std::min(lo, col[r]);
            hi = std::max(hi, col[r]);
        }
        m.main_ranges.emplace_back(lo, hi);
    }
    m.n_obs = n;

    if (family == Family::linear) {
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
        const Eigen::VectorXd beta = qr.solve(y);
        const Eigen::VectorXd resid = y - X * beta;
        const double rss = resid.squaredNorm();
        m.coef.assign(beta.data(), beta.data() + beta.size());
        m.residual_sd = (n > p) ? std::sqrt(std::max(0.0, rss) / static_cast<double>(n - p)) : 0.0;
        const double rss_ll = std::max(rss, 1e-300);
        m.loglik = -0.5 * static_cast<double>(n) *
                   (std::log(2.0 * kPi * rss_ll / static_cast<double>(n)) + 1.0);
        // +1 for the variance parameter
        m.aic = -2.0 * m.loglik + 2.0 * static_cast<double>(p + 1);
        const Eigen::MatrixXd xtx_inv =
            (X.transpose() * X).ldlt().solve(Eigen::MatrixXd::Identity(p, p));
        const double sigma2 = rss / static_cast<double>(n - p);
        m.coef_se.resize(p);
        for (std::size_t j = 0; j < p; ++j)
            m.coef_se[j] = std::sqrt(std::max(0.0, sigma2 * xtx_inv(j, j)));
        return m;
    }

    // logistic response must be strictly binary
    for (std::size_t i = 0; i < n; ++i) {
        if (y(i) != 0.0 && y(i) != 1.0)
            throw ValidationError("logistic response '" + response + "' is not {0,1}");
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd mu(n), w(n);
    bool converged = false;
    for (int iter = 0; iter < 50; ++iter) {
        const Eigen::VectorXd eta = X * beta;
        for (std::size_t i = 0; i < n; ++i) {
            mu(i) = inv_logit(eta(i));
            w(i) = std::max(mu(i) * (1.0 - mu(i)), 1e-10);
        }
        const Eigen::VectorXd grad = X.transpose() * (y - mu);
        if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
            converged = true;
            break;
        }
        const Eigen::MatrixXd h = X.transpose() * w.asDiagonal() * X;
        const Eigen::VectorXd step = h.ldlt().solve(grad);
        beta += step;
        if (beta.lpNorm<Eigen::Infinity>() > 30.0)
            throw ConvergenceError("logistic fit diverged for response '" + response + "' (" +
                                   stratum_label + "); data may be separated");
    }
    if (!converged)
        throw ConvergenceError("logistic fit did not converge for response '" + response +
                               "' (" + stratum_label + ") after 50 iterations");

    m.coef.assign(beta.data(), beta.data() + beta.size());
    double ll = 0.0;
    double max_resid = 0.0;
    const Eigen::VectorXd eta = X * beta;
    for (std::size_t i = 0; i < n; ++i) {
        const double pi = inv_logit(eta(i));
        ll += y(i) * std::log(std::max(pi, 1e-300)) +
              (1.0 - y(i)) * std::log(std::max(1.0 - pi, 1e-300));
        w(i) = std::max(pi * (1.0 - pi), 1e-10);
        max_resid = std::max(max_resid, std::fabs(y(i) - pi));
    }
    // every observation classified exactly means the data are separated and
    // the likelihood has no maximum
    if (max_resid < 1e-6)
        throw ConvergenceError("logistic fit for response '" + response + "' (" + stratum_label +
                               ") is perfectly separated; the likelihood has no maximum");
    m.loglik = ll;
    m.aic = -2.0 * ll + 2.0 * static_cast<double>(p);
    const Eigen::MatrixXd h = X.transpose() * w.asDiagonal() * X;
    const Eigen::MatrixXd hinv = h.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
    m.coef_se.resize(p);
    for (std::size_t j = 0; j < p; ++j) m.coef_se[j] = std::sqrt(std::max(0.0, hinv(j, j)));
    return m;
}

namespace {

std::vector<std::pair<std::string, std::string>> default_candidates(
    const std::vector<std::string>& mains) {
    std::vector<std::pair<std::string, std::string>> out;
    for (std::size_t i = 0; i < mains.size(); ++i) {
        for (std::size_t j = i + 1; j < mains.size(); ++j) {
            auto a = mains[i];
            auto b = mains[j];
            if (a > b) std::swap(a, b);
            out.emplace_back(a, b);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace

SelectResult select_interactions(
    const Dataset& d, const std::vector<std::size_t>& rows, const std::string& response,
    const std::vector<std::string>& mains, Family family, const std::string& stratum_label,
    SelectionPolicy policy,
    const std::optional<std::vector<std::pair<std::string, std::string>>>& candidates) {
    SelectResult result;
    auto fit_with = [&](std::vector<std::pair<std::string, std::string>> inters) {
        TermSet t;
        t.mains = mains;
        t.interactions = std::move(inters);
        return fit_glm(d, rows, response, t, family, stratum_label);
    };

    result.model = fit_with({});
    if (policy == SelectionPolicy::none) return result;

    std::vector<std::pair<std::string, std::string>> cand =
        candidates ? *candidates : default_candidates(mains);
    for (auto& [a, b] : cand) {
        if (a > b) std::swap(a, b);
    }
    std::sort(cand.begin(), cand.end());
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

    if (policy == SelectionPolicy::exhaustive) {
        if (cand.size() > 10)
            throw ValidationError("exhaustive selection limited to 10 candidates, got " +
                                  std::to_string(cand.size()));
        FittedModel best = result.model;
        for (std::uint64_t mask = 1; mask < (1ULL << cand.size()); ++mask) {
            std::vector<std::pair<std::string, std::string>> inters;
            for (std::size_t k = 0; k < cand.size(); ++k)
                if (mask & (1ULL << k)) inters.push_back(cand[k]);
            try {
                FittedModel trial = fit_with(std::move(inters));
                const bool better =
                    trial.aic < best.aic - 1e-9 ||
                    (std::fabs(trial.aic - best.aic) <= 1e-9 &&
                     trial.terms.interactions.size() < best.terms.interactions.size());
                if (better) best = std::move(trial);
            } catch (const Error& e) {
                result.notes.push_back(std::string("skipped subset: ") + e.what());
            }
        }
        result.model = std::move(best);
        return result;
    }

    // greedy forward steps
    std::vector<std::pair<std::string, std::string>> chosen;
    std::vector<bool> used(cand.size(), false);
    for (;;) {
        double best_aic = result.model.aic - 1e-9;
        std::ptrdiff_t best_k = -1;
        FittedModel best_model;
        for (std::size_t k = 0; k < cand.size(); ++k) {
            if (used[k]) continue;
            auto inters = chosen;
            inters.push_back(cand[k]);
            try {
                FittedModel trial = fit_with(std::move(inters));
                if (trial.aic < best_aic) {
                    best_aic = trial.aic;
                    best_k = static_cast<std::ptrdiff_t>(k);
                    best_model = std::move(trial);
                }
            } catch (const Error& e) {
                result.notes.push_back("skipped " + cand[k].first + ":" + cand[k].second + ": " +
                                       e.what());
                used[k] = true;
            }
        }
        if (best_k < 0) break;
        used[static_cast<std::size_t>(best_k)] = true;
        chosen.push_back(cand[static_cast<std::size_t>(best_k)]);
        result.model = std::move(best_model);
    }
    return result;
}

}  // namespace dispar
