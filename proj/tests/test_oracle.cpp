#include <cmath>
#include <string>
#include <vector>

#include <doctest.h>

#include "dispar/dataset.hpp"
#include "dispar/error.hpp"
#include "dispar/scm.hpp"
#include "helpers.hpp"

using namespace dispar;

namespace {

// Tiny fully hand-evaluable model:
//   P(c=1)=0.4
//   P(a=1|c) = 0.5 / 0.8
//   P(m=1|c,a): (0,0)=0.3 (0,1)=0.6 (1,0)=0.4 (1,1)=0.7
//   E[Y|c,a,m] = 1 + a + 2m + 0.5c
DiscreteScm tiny_scm() {
    ScmVariable c{"c", VarRole::covariate, {0, 1}, {}, {{0.6, 0.4}}, {}, 0.0};
    ScmVariable a{"a", VarRole::exposure, {0, 1}, {"c"}, {{0.5, 0.5}, {0.2, 0.8}}, {}, 0.0};
    ScmVariable m{"m",
                  VarRole::mediator,
                  {0, 1},
                  {"c", "a"},
                  {{0.7, 0.3}, {0.4, 0.6}, {0.6, 0.4}, {0.3, 0.7}},
                  {},
                  0.0};
    ScmVariable y{"y", VarRole::outcome, {},          {"c", "a", "m"}, {},
                  {1.0, 3.0, 2.0, 4.0, 1.5, 3.5, 2.5, 4.5},            0.8};
    return DiscreteScm::build({c, a, m, y});
}

double id_value(const DiscreteScm& s, IdentifiedKind k, std::vector<std::string> target = {},
                int a = 1) {
    IdentifiedQuery q;
    q.kind = k;
    q.target = std::move(target);
    q.a = a;
    return enumerate_identified(s, q);
}

double truth_value(const DiscreteScm& s, TruthKind k, std::vector<std::string> target = {},
                   int a = 1) {
    TruthQuery q;
    q.kind = k;
    q.target = std::move(target);
    q.a = a;
    return counterfactual_truth(s, q);
}

}  // namespace

TEST_CASE("identified formulas match hand-computed values on the tiny model") {
    const DiscreteScm s = tiny_scm();
    // group means: E[Y|c,a] rows -> (0,1)=3.2 (1,1)=3.9 (0,0)=1.6 (1,0)=2.3
    CHECK(id_value(s, IdentifiedKind::ey_group, {}, 1) ==
          doctest::Approx(2.208 / 0.62).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::ey_group, {}, 0) ==
          doctest::Approx(0.664 / 0.38).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::ey_do, {}, 1) == doctest::Approx(3.48).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::ey_do, {}, 0) == doctest::Approx(1.88).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::te) == doctest::Approx(1.6).epsilon(1e-12));

    // stochastic-draw contrast given C: 0.3 probability shift times slope 2
    CHECK(id_value(s, IdentifiedKind::iie_conditional, {"m"}) ==
          doctest::Approx(0.6).epsilon(1e-12));

    // exposure-intervention split: simulated term 0.6*2.6 + 0.4*3.3 = 2.88
    CHECK(id_value(s, IdentifiedKind::ie_conditional, {"m"}) ==
          doctest::Approx(0.6).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::re_conditional, {"m"}) ==
          doctest::Approx(1.0).epsilon(1e-12));

    // observed-disparity split: simulated term 1.836/0.62
    CHECK(id_value(s, IdentifiedKind::ie_observed, {"m"}) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::re_observed, {"m"}) ==
          doctest::Approx(1.836 / 0.62 - 0.664 / 0.38).epsilon(1e-12));

    // additivity identities
    CHECK(id_value(s, IdentifiedKind::ie_conditional, {"m"}) +
              id_value(s, IdentifiedKind::re_conditional, {"m"}) ==
          doctest::Approx(id_value(s, IdentifiedKind::te)).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::ie_observed, {"m"}) +
              id_value(s, IdentifiedKind::re_observed, {"m"}) ==
          doctest::Approx(2.208 / 0.62 - 0.664 / 0.38).epsilon(1e-12));

    // all-mediator constant fix: exposure coefficient 1 survives
    IdentifiedQuery cde;
    cde.kind = IdentifiedKind::cde;
    cde.fixed_values = {1.0};
    CHECK(enumerate_identified(s, cde) == doctest::Approx(1.0).epsilon(1e-12));

    // stratum-marginal draws: 2 * (P(m=1|A=1) - P(m=1|A=0))
    CHECK(id_value(s, IdentifiedKind::iie_marginal, {"m"}) ==
          doctest::Approx(2.0 * (0.404 / 0.62 - 0.122 / 0.38)).epsilon(1e-12));
}

TEST_CASE("counterfactual truths match hand values on the tiny model") {
    const DiscreteScm s = tiny_scm();
    CHECK(truth_value(s, TruthKind::te) == doctest::Approx(1.6).epsilon(1e-12));
    CHECK(truth_value(s, TruthKind::ey_do, {}, 1) == doctest::Approx(3.48).epsilon(1e-12));
    CHECK(truth_value(s, TruthKind::iie, {"m"}) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(truth_value(s, TruthKind::ie, {"m"}) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(truth_value(s, TruthKind::re, {"m"}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(truth_value(s, TruthKind::ie_observed, {"m"}) == doctest::Approx(0.6).epsilon(1e-12));
    // with one mediator, no confounders and no latents the natural effect
    // coincides with the stochastic-draw contrast
    CHECK(truth_value(s, TruthKind::nie, {"m"}) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(truth_value(s, TruthKind::nie, {"m"}) + truth_value(s, TruthKind::nde, {"m"}) ==
          doctest::Approx(1.6).epsilon(1e-12));
}

TEST_CASE("identified equals truth across random models when assumptions hold") {
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
        testgen::ScmOptions opt;  // defaults: C -> A edge, no latent, 2 mediators
        const DiscreteScm s = testgen::random_scm(seed, opt);
        CAPTURE(seed);

        CHECK(id_value(s, IdentifiedKind::te) ==
              doctest::Approx(truth_value(s, TruthKind::te)).epsilon(1e-10));
        CHECK(id_value(s, IdentifiedKind::ey_do, {}, 1) ==
              doctest::Approx(truth_value(s, TruthKind::ey_do, {}, 1)).epsilon(1e-10));

        for (const auto& t :
             std::vector<std::vector<std::string>>{{"m1"}, {"m2"}, {"m1", "m2"}}) {
            CHECK(id_value(s, IdentifiedKind::iie_conditional, t) ==
                  doctest::Approx(truth_value(s, TruthKind::iie, t)).epsilon(1e-10));
            CHECK(id_value(s, IdentifiedKind::ie_conditional, t) ==
                  doctest::Approx(truth_value(s, TruthKind::ie, t)).epsilon(1e-10));
            CHECK(id_value(s, IdentifiedKind::re_conditional, t) ==
                  doctest::Approx(truth_value(s, TruthKind::re, t)).epsilon(1e-10));
            CHECK(id_value(s, IdentifiedKind::ie_observed, t) ==
                  doctest::Approx(truth_value(s, TruthKind::ie_observed, t)).epsilon(1e-10));
            CHECK(id_value(s, IdentifiedKind::re_observed, t) ==
                  doctest::Approx(truth_value(s, TruthKind::re_observed, t)).epsilon(1e-10));
        }

        // held-block conditioning and the pooled draw source
        IdentifiedQuery qh;
        qh.kind = IdentifiedKind::ie_observed;
        qh.target = {"m1"};
        qh.held_mediators = {"m2"};
        TruthQuery th;
        th.kind = TruthKind::ie_observed;
        th.target = {"m1"};
        th.held_mediators = {"m2"};
        CHECK(enumerate_identified(s, qh) ==
              doctest::Approx(counterfactual_truth(s, th)).epsilon(1e-10));
        qh.held_mediators.clear();
        qh.i_source = DrawSource::pooled_marginal;
        th.held_mediators.clear();
        th.i_source = DrawSource::pooled_marginal;
        CHECK(enumerate_identified(s, qh) ==
              doctest::Approx(counterfactual_truth(s, th)).epsilon(1e-10));

        // constant-fix estimands
        IdentifiedQuery qc;
        qc.kind = IdentifiedKind::cde;
        qc.fixed_values = {1.0, 0.0};
        TruthQuery tc;
        tc.kind = TruthKind::cde;
        tc.fixed_values = {1.0, 0.0};
        CHECK(enumerate_identified(s, qc) ==
              doctest::Approx(counterfactual_truth(s, tc)).epsilon(1e-10));

        CHECK(id_value(s, IdentifiedKind::ie_mean_observed, {"m1"}) ==
              doctest::Approx(truth_value(s, TruthKind::ie_mean_observed, {"m1"}))
                  .epsilon(1e-10));
        CHECK(id_value(s, IdentifiedKind::ie_mean_conditional, {"m1", "m2"}) ==
              doctest::Approx(truth_value(s, TruthKind::ie_mean_conditional, {"m1", "m2"}))
                  .epsilon(1e-10));
    }
}

TEST_CASE("stratum-marginal draws identify only without a covariate-exposure edge") {
    for (std::uint64_t seed = 100; seed < 112; ++seed) {
        testgen::ScmOptions opt;
        opt.c_to_a = false;  // exposure level independent of covariates
        const DiscreteScm s = testgen::random_scm(seed, opt);
        CAPTURE(seed);
        CHECK(id_value(s, IdentifiedKind::iie_marginal, {"m1", "m2"}) ==
              doctest::Approx(truth_value(s, TruthKind::iie_marginal, {"m1", "m2"}))
                  .epsilon(1e-10));
    }
}

TEST_CASE("latent exposure-mediator confounding breaks draw contrasts but not observed splits") {
    // u drives both the exposure and the mediator; the outcome ignores u.
    ScmVariable u{"u", VarRole::latent, {0, 1}, {}, {{0.5, 0.5}}, {}, 0.0};
    ScmVariable a{"a", VarRole::exposure, {0, 1}, {"u"}, {{0.8, 0.2}, {0.2, 0.8}}, {}, 0.0};
    ScmVariable m{"m",
                  VarRole::mediator,
                  {0, 1},
                  {"u", "a"},
                  {{0.8, 0.2}, {0.7, 0.3}, {0.2, 0.8}, {0.1, 0.9}},
                  {},
                  0.0};
    ScmVariable y{"y", VarRole::outcome, {}, {"a", "m"}, {}, {0.0, 2.0, 1.0, 3.0}, 0.5};
    const DiscreteScm s = DiscreteScm::build({u, a, m, y});

    // truth of the stochastic-draw contrast: P(M_1=1)=0.6, P(M_0=1)=0.5, slope 2
    CHECK(truth_value(s, TruthKind::iie, {"m"}) == doctest::Approx(0.2).epsilon(1e-12));
    // the observational formula is contaminated through u:
    //   P(m=1|A=1)=0.78, P(m=1|A=0)=0.32  ->  2*0.46 = 0.92
    CHECK(id_value(s, IdentifiedKind::iie_conditional, {"m"}) ==
          doctest::Approx(0.92).epsilon(1e-12));
    CHECK(std::fabs(id_value(s, IdentifiedKind::iie_conditional, {"m"}) -
                    truth_value(s, TruthKind::iie, {"m"})) > 1e-3);

    // the observed-disparity split only needs mediator-outcome ignorability,
    // which u does not violate, so identification survives
    CHECK(id_value(s, IdentifiedKind::ie_observed, {"m"}) ==
          doctest::Approx(truth_value(s, TruthKind::ie_observed, {"m"})).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::re_observed, {"m"}) ==
          doctest::Approx(truth_value(s, TruthKind::re_observed, {"m"})).epsilon(1e-12));
    CHECK(id_value(s, IdentifiedKind::ie_observed, {"m"}) ==
          doctest::Approx(0.92).epsilon(1e-12));
}

TEST_CASE("latent robustness of observed splits holds across random models") {
    for (std::uint64_t seed = 300; seed < 310; ++seed) {
        testgen::ScmOptions opt;
        opt.latent_u_am = true;
        const DiscreteScm s = testgen::random_scm(seed, opt);
        CAPTURE(seed);
        CHECK(id_value(s, IdentifiedKind::ie_observed, {"m1"}) ==
              doctest::Approx(truth_value(s, TruthKind::ie_observed, {"m1"})).epsilon(1e-10));
        CHECK(id_value(s, IdentifiedKind::re_observed, {"m1"}) ==
              doctest::Approx(truth_value(s, TruthKind::re_observed, {"m1"})).epsilon(1e-10));
    }
}

TEST_CASE("observational sampling converges to the enumerated law") {
    const DiscreteScm s = tiny_scm();
    const std::size_t n = 200000;
    const Dataset d = s.sample_observational(n, 20240817);
    REQUIRE(d.n_rows() == n);
    REQUIRE(d.names() == std::vector<std::string>{"c", "a", "m", "y"});

    const auto& a = d.column(1);
    const auto& c = d.column(0);
    const auto& m = d.column(2);
    const auto& y = d.column(3);
    double an = 0.0;
    for (double v : a) an += v;
    CHECK(std::fabs(an / n - 0.62) < 4.0 * std::sqrt(0.62 * 0.38 / n));

    // P(m=1 | a=1, c=1) = 0.7
    std::size_t n11 = 0, m11 = 0;
    double y1 = 0.0;
    std::size_t n1 = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (a[i] == 1.0) {
            y1 += y[i];
            ++n1;
            if (c[i] == 1.0) {
                ++n11;
                if (m[i] == 1.0) ++m11;
            }
        }
    }
    CHECK(std::fabs(static_cast<double>(m11) / n11 - 0.7) <
          4.0 * std::sqrt(0.7 * 0.3 / static_cast<double>(n11)));
    // E[Y | A=1] = 2.208/0.62; Y spread is about 1.3 outcome units
    CHECK(std::fabs(y1 / static_cast<double>(n1) - 2.208 / 0.62) <
          4.0 * 1.4 / std::sqrt(static_cast<double>(n1)));

    // determinism and seed sensitivity
    const Dataset d2 = s.sample_observational(500, 7);
    const Dataset d3 = s.sample_observational(500, 7);
    const Dataset d4 = s.sample_observational(500, 8);
    CHECK(d2.column(3) == d3.column(3));
    CHECK(d2.column(3) != d4.column(3));
}

TEST_CASE("model construction rejects malformed inputs") {
    const ScmVariable c{"c", VarRole::covariate, {0, 1}, {}, {{0.6, 0.4}}, {}, 0.0};
    const ScmVariable a{"a", VarRole::exposure, {0, 1}, {}, {{0.5, 0.5}}, {}, 0.0};
    const ScmVariable m{"m", VarRole::mediator, {0, 1}, {"a"}, {{0.7, 0.3}, {0.4, 0.6}}, {}, 0.0};
    const ScmVariable y{"y", VarRole::outcome, {}, {"a", "m"}, {}, {0.0, 1.0, 2.0, 3.0}, 0.5};

    CHECK_THROWS_AS(DiscreteScm::build({}), SchemaError);
    CHECK_THROWS_AS(DiscreteScm::build({a, a, m, y}), SchemaError);  // duplicate name
    CHECK_THROWS_AS(DiscreteScm::build({m, a, y}), SchemaError);     // role order
    CHECK_THROWS_AS(DiscreteScm::build({a, y}), SchemaError);        // no mediator

    ScmVariable bad_a = a;
    bad_a.support = {0, 2};
    CHECK_THROWS_AS(DiscreteScm::build({bad_a, m, y}), SchemaError);

    ScmVariable bad_m = m;
    bad_m.table = {{0.5, 0.4}, {0.4, 0.6}};  // row does not sum to 1
    CHECK_THROWS_AS(DiscreteScm::build({a, bad_m, y}), SchemaError);

    bad_m = m;
    bad_m.table = {{0.7, 0.3}};  // one row, two parent configurations expected
    CHECK_THROWS_AS(DiscreteScm::build({a, bad_m, y}), SchemaError);

    bad_m = m;
    bad_m.table = {{1.2, -0.2}, {0.4, 0.6}};
    CHECK_THROWS_AS(DiscreteScm::build({a, bad_m, y}), SchemaError);

    ScmVariable bad_y = y;
    bad_y.noise_sd = -0.1;
    CHECK_THROWS_AS(DiscreteScm::build({a, m, bad_y}), SchemaError);

    bad_y = y;
    bad_y.mean_table = {0.0, 1.0};  // wrong row count
    CHECK_THROWS_AS(DiscreteScm::build({a, m, bad_y}), SchemaError);

    ScmVariable fwd = m;
    fwd.parents = {"y"};  // later variable as a parent
    CHECK_THROWS_AS(DiscreteScm::build({a, fwd, y}), SchemaError);

    // joint state space above the cap: exposure plus twelve binary mediators
    std::vector<ScmVariable> big;
    big.push_back(a);
    for (int k = 0; k < 12; ++k) {
        big.push_back(ScmVariable{"m" + std::to_string(k + 1),
                                  VarRole::mediator,
                                  {0, 1},
                                  {},
                                  {{0.5, 0.5}},
                                  {},
                                  0.0});
    }
    big.push_back(ScmVariable{"y", VarRole::outcome, {}, {"a"}, {}, {0.0, 1.0}, 0.5});
    CHECK_THROWS_AS(DiscreteScm::build(big), SchemaError);
}

TEST_CASE("query validation on the oracle") {
    const DiscreteScm s = tiny_scm();
    IdentifiedQuery q;
    q.kind = IdentifiedKind::iie_conditional;
    q.target = {};
    CHECK_THROWS_AS(enumerate_identified(s, q), ValidationError);  // empty target
    q.target = {"c"};
    CHECK_THROWS_AS(enumerate_identified(s, q), ValidationError);  // not a mediator
    q.target = {"m"};
    q.held_mediators = {"m"};
    CHECK_THROWS_AS(enumerate_identified(s, q), ValidationError);  // two blocks

    IdentifiedQuery qc;
    qc.kind = IdentifiedKind::cde;
    qc.fixed_values = {};
    CHECK_THROWS_AS(enumerate_identified(s, qc), ValidationError);
    qc.fixed_values = {0.5};
    CHECK_THROWS_AS(enumerate_identified(s, qc), ValidationError);  // not in support

    IdentifiedQuery qm;
    qm.kind = IdentifiedKind::iie_marginal;
    qm.target = {};
    CHECK_THROWS_AS(enumerate_identified(s, qm), ValidationError);
}

TEST_CASE("missing exposure mass in a covariate cell is a positivity error") {
    ScmVariable c{"c", VarRole::covariate, {0, 1}, {}, {{0.6, 0.4}}, {}, 0.0};
    ScmVariable a{"a", VarRole::exposure, {0, 1}, {"c"}, {{0.5, 0.5}, {1.0, 0.0}}, {}, 0.0};
    ScmVariable m{"m", VarRole::mediator, {0, 1}, {"a"}, {{0.7, 0.3}, {0.4, 0.6}}, {}, 0.0};
    ScmVariable y{"y", VarRole::outcome, {}, {"a", "m"}, {}, {0.0, 1.0, 2.0, 3.0}, 0.5};
    const DiscreteScm s = DiscreteScm::build({c, a, m, y});
    // no A=1 units ever occur at c=1
    CHECK_THROWS_AS(id_value(s, IdentifiedKind::ey_do, {}, 1), PositivityError);
    CHECK_THROWS_AS(id_value(s, IdentifiedKind::ie_conditional, {"m"}), PositivityError);
    // purely observational group means remain available
    CHECK_NOTHROW(id_value(s, IdentifiedKind::ey_group, {}, 1));
}
