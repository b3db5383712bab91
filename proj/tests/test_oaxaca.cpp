#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "dispar/dataset.hpp"
#include "dispar/error.hpp"
#include "dispar/oaxaca.hpp"
#include "dispar/rng.hpp"

using namespace dispar;

namespace {

// Hand-built example with one binary mediator m and one binary confounder l.
// Cell counts are chosen so the saturated per-group OLS fits are exact:
//   group A=1: Y = 1 + 2 m + 1 l + 0.5 m*l   over cells 3x(1,1) 3x(1,0) 2x(0,1) 2x(0,0)
//   group A=0: Y = 0.5 + 1 m + 0.5 l         over cells 2x(1,1) 2x(1,0) 3x(0,1) 3x(0,0)
// Hand-computed targets:
//   E[M|A=1]=0.6  E[L|A=1]=0.5  E[ML|A=1]=0.3  E[Y|A=1]=2.85
//   E[M|A=0]=0.4  E[L|A=0]=0.5  E[ML|A=0]=0.2  E[Y|A=0]=1.15
//   disparity = 1.7
//   ob_m = 2*(0.6-0.4) + 0.5*(0.3 - 0.4*0.5) = 0.45,  ob_re = 1.25
Dataset hand_example() {
    std::vector<double> a, m, l, y;
    auto add = [&](double av, double mv, double lv, int count) {
        const double yv = av == 1.0 ? 1.0 + 2.0 * mv + 1.0 * lv + 0.5 * mv * lv
                                    : 0.5 + 1.0 * mv + 0.5 * lv;
        for (int i = 0; i < count; ++i) {
            a.push_back(av);
            m.push_back(mv);
            l.push_back(lv);
            y.push_back(yv);
        }
    };
    add(1, 1, 1, 3);
    add(1, 1, 0, 3);
    add(1, 0, 1, 2);
    add(1, 0, 0, 2);
    add(0, 1, 1, 2);
    add(0, 1, 0, 2);
    add(0, 0, 1, 3);
    add(0, 0, 0, 3);
    return Dataset::from_columns({"a", "m", "l", "y"}, {a, m, l, y});
}

RoleMap hand_roles() {
    RoleMap r;
    r.exposure = "a";
    r.outcome = "y";
    r.confounders = {"l"};
    r.mediators = {"m"};
    return r;
}

double sum_terms(const std::map<std::string, double>& by_term) {
    double s = 0.0;
    for (const auto& [k, v] : by_term) s += v;
    return s;
}

}  // namespace

TEST_CASE("mediator split reproduces the hand-computed values") {
    const Dataset d = hand_example();
    const ObMediatorSplit s = decompose_ob_m(d, hand_roles(), "m");
    CHECK(s.disparity == doctest::Approx(1.7).epsilon(1e-12));
    CHECK(s.ob_m == doctest::Approx(0.45).epsilon(1e-9));
    CHECK(s.ob_re == doctest::Approx(1.25).epsilon(1e-9));
    CHECK(s.ob_m_by_term.at("m") == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(s.ob_m_by_term.at("l:m") == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(s.ob_re_by_term.at("(intercept)") == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(s.ob_re_by_term.at("m") == doctest::Approx(0.4).epsilon(1e-9));
    CHECK(s.ob_re_by_term.at("l") == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(s.ob_re_by_term.at("l:m") == doctest::Approx(0.1).epsilon(1e-9));
}

TEST_CASE("classic twofold split on the hand example") {
    const Dataset d = hand_example();
    const ObDecomposition c = decompose_classic(d, hand_roles(), "m");
    CHECK(c.disparity == doctest::Approx(1.7).epsilon(1e-12));
    // alpha_m*(0.6-0.4) + alpha_l*(0.5-0.5) + alpha_ml*(0.3-0.2)
    CHECK(c.explained == doctest::Approx(0.45).epsilon(1e-9));
    CHECK(c.unexplained == doctest::Approx(1.25).epsilon(1e-9));
    CHECK(c.model_exposed.coef[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(c.model_control.coef[0] == doctest::Approx(0.5).epsilon(1e-9));
}

TEST_CASE("identical groups decompose to zero everywhere") {
    std::vector<double> a, m, l, y;
    for (int g = 0; g <= 1; ++g)
        for (int i = 0; i < 50; ++i) {
            // identical joint law in both groups, duplicated rows
            const double mv = (i % 2 == 0) ? 1.0 : 0.0;
            const double lv = (i % 4 < 2) ? 1.0 : 0.0;
            a.push_back(g);
            m.push_back(mv);
            l.push_back(lv);
            y.push_back(1.0 + mv - lv + 0.25 * mv * lv);
        }
    const Dataset d = Dataset::from_columns({"a", "m", "l", "y"}, {a, m, l, y});
    const ObMediatorSplit s = decompose_ob_m(d, hand_roles(), "m");
    CHECK(std::fabs(s.disparity) < 1e-12);
    CHECK(std::fabs(s.ob_m) < 1e-10);
    CHECK(std::fabs(s.ob_re) < 1e-10);
    const ObDecomposition c = decompose_classic(d, hand_roles(), "m");
    CHECK(std::fabs(c.explained) < 1e-10);
    CHECK(std::fabs(c.unexplained) < 1e-10);
}

TEST_CASE("both splits are exactly additive on fuzzed data") {
    for (int rep = 0; rep < 50; ++rep) {
        CounterRng rng({static_cast<std::uint64_t>(rep), 999});
        std::vector<double> a, m, l1, l2, c, y;
        const int n = 200;  // large enough that every mediator-confounder cell is populated
        for (int i = 0; i < n; ++i) {
            a.push_back(i < n / 2 ? 1.0 : 0.0);
            m.push_back(rng.next_bernoulli(0.3 + 0.3 * a.back()));
            l1.push_back(rng.next_bernoulli(0.5));
            l2.push_back(rng.next_bernoulli(0.4 + 0.2 * a.back()));
            c.push_back(rng.next_normal(0, 1));
            y.push_back(rng.next_normal(a.back() + m.back() - l1.back() + 0.5 * c.back(), 1.0));
        }
        const Dataset d =
            Dataset::from_columns({"a", "m", "l1", "l2", "c", "y"}, {a, m, l1, l2, c, y});
        RoleMap roles;
        roles.exposure = "a";
        roles.outcome = "y";
        roles.covariates = {"c"};
        roles.confounders = {"l1", "l2"};
        roles.mediators = {"m"};

        const ObMediatorSplit s = decompose_ob_m(d, roles, "m");
        CHECK(s.ob_m + s.ob_re ==
              doctest::Approx(s.disparity).epsilon(1e-9));
        CHECK(sum_terms(s.ob_m_by_term) == doctest::Approx(s.ob_m).epsilon(1e-9));
        CHECK(sum_terms(s.ob_re_by_term) == doctest::Approx(s.ob_re).epsilon(1e-9));

        const ObDecomposition cd = decompose_classic(d, roles, "m");
        CHECK(cd.explained + cd.unexplained == doctest::Approx(cd.disparity).epsilon(1e-9));
        CHECK(sum_terms(cd.explained_by_term) == doctest::Approx(cd.explained).epsilon(1e-9));
        CHECK(sum_terms(cd.unexplained_by_term) == doctest::Approx(cd.unexplained).epsilon(1e-9));
    }
}

TEST_CASE("outcome shifts move only the intercept part") {
    const Dataset d = hand_example();
    const ObMediatorSplit base = decompose_ob_m(d, hand_roles(), "m");

    std::vector<std::vector<double>> cols;
    for (const auto& name : {"a", "m", "l", "y"})
        cols.push_back(d.column(d.column_index(name)));
    for (auto& v : cols.back()) v += 7.5;  // shift Y by a constant
    const Dataset shifted = Dataset::from_columns({"a", "m", "l", "y"}, cols);
    const ObMediatorSplit s = decompose_ob_m(shifted, hand_roles(), "m");
    CHECK(s.disparity == doctest::Approx(base.disparity).epsilon(1e-9));
    CHECK(s.ob_m == doctest::Approx(base.ob_m).epsilon(1e-9));
    CHECK(s.ob_re == doctest::Approx(base.ob_re).epsilon(1e-9));

    const ObDecomposition c0 = decompose_classic(d, hand_roles(), "m");
    const ObDecomposition c1 = decompose_classic(shifted, hand_roles(), "m");
    CHECK(c1.explained == doctest::Approx(c0.explained).epsilon(1e-9));
    CHECK(c1.unexplained == doctest::Approx(c0.unexplained).epsilon(1e-9));
}

TEST_CASE("decomposition rejects a non-mediator target") {
    const Dataset d = hand_example();
    CHECK_THROWS_AS(decompose_ob_m(d, hand_roles(), "l"), ValidationError);
    CHECK_THROWS_AS(decompose_classic(d, hand_roles(), "nope"), ValidationError);
}

TEST_CASE("single-group data is rejected") {
    std::vector<double> a(10, 1.0), m(10, 0.0), l(10, 0.0), y(10, 1.0);
    for (int i = 0; i < 10; ++i) {
        m[static_cast<std::size_t>(i)] = i % 2;
        l[static_cast<std::size_t>(i)] = i % 3 == 0;
        y[static_cast<std::size_t>(i)] = i;
    }
    const Dataset d = Dataset::from_columns({"a", "m", "l", "y"}, {a, m, l, y});
    CHECK_THROWS_AS(decompose_ob_m(d, hand_roles(), "m"), DegenerateGroupError);
}

TEST_CASE("interpretation ladder strengthens with assumptions") {
    AssumptionLedger none;
    const Interpretation i0 = interpret("m", none);
    CHECK(i0.label.find("descriptive") != std::string::npos);
    CHECK_FALSE(i0.missing_for_next.empty());

    AssumptionLedger stat;
    stat.consistency = stat.positivity = stat.a2 = stat.linearity = stat.correct_specification =
        true;
    const Interpretation i1 = interpret("m", stat);
    CHECK(i1.label.find("observed-disparity reduction") != std::string::npos);
    CHECK(i1.missing_for_next == std::vector<std::string>{"exogeneity (or a1 and a3)"});

    AssumptionLedger causal = stat;
    causal.a1 = causal.a3 = true;
    const Interpretation i2 = interpret("m", causal);
    CHECK(i2.label.find("counterfactual disparity reduction") != std::string::npos);

    AssumptionLedger natural = causal;
    natural.a4_no_confounders = true;
    const Interpretation i3 = interpret("m", natural);
    CHECK(i3.label.find("natural") != std::string::npos);
    CHECK(i3.missing_for_next.empty());

    // exogeneity substitutes for a1+a3
    AssumptionLedger exo = stat;
    exo.exogeneity = true;
    exo.a5_no_lm_interaction = true;
    const Interpretation i4 = interpret("m", exo);
    CHECK(i4.label.find("natural") != std::string::npos);
}
