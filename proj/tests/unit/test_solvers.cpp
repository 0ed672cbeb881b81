#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "habitopt/error.hpp"
#include "habitopt/solvers.hpp"

using namespace habitopt;
using fixtures::process;

namespace {

double max_gap(const AdaptedProcess& a, const AdaptedProcess& b) {
    double worst = 0.0;
    for (int k = 0; k <= a.horizon(); ++k) {
        for (std::size_t i = 0; i < a[k].size(); ++i) worst = std::max(worst, std::abs(a[k][i] - b[k][i]));
    }
    return worst;
}

PricedMarket bond_market(int T, double r, int branching = 2) {
    return PricedMarket::prepare(
        MarketModel::bonds_only(EventTree::uniform(std::vector<int>(static_cast<std::size_t>(T), branching)),
                                std::vector<double>(static_cast<std::size_t>(T), r)));
}

}  // namespace

TEST_CASE("two-period bond examples") {
    const auto market = bond_market(1, 0.0);
    const auto& tree = market.tree();
    const auto eps = process(tree, {{1.0}, {0.0, 0.0}});
    const auto plain = solve_general(market, HabitPreferences::log(1, 0.0, HabitWeights::none(1)), eps);
    CHECK(plain.c[0][0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(plain.c[1][1] == doctest::Approx(0.5).epsilon(1e-10));
    const auto habit = solve_general(market, HabitPreferences::log(1, 0.0, HabitWeights::one_lag(1, 1.0)), eps);
    CHECK(habit.c[0][0] == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(habit.c[1][0] == doctest::Approx(0.75).epsilon(1e-10));
    CHECK(habit.diagnostics.converged);

    const auto line = PricedMarket::prepare(MarketModel::bonds_only(fixtures::deterministic(1), std::vector<double>{0.0}));
    const auto e2 = process(line.tree(), {{1.3}, {0.4}});
    const auto ex = solve_general(line, HabitPreferences::exponential(1, 1.7, 0.0, HabitWeights::none(1)), e2);
    CHECK(ex.c[0][0] == doctest::Approx(0.85).epsilon(1e-10));

    const double r = 0.05, gamma = 2.0;
    const auto lr = PricedMarket::prepare(MarketModel::bonds_only(fixtures::deterministic(1), std::vector<double>{r}));
    const auto er = solve_general(lr, HabitPreferences::exponential(1, gamma, 0.0, HabitWeights::none(1)), e2);
    CHECK(er.c[1][0] - er.c[0][0] == doctest::Approx(std::log(1 + r) / gamma).epsilon(1e-9));
}

TEST_CASE("complete log market without habits satisfies the Euler equation") {
    const auto market = PricedMarket::prepare(fixtures::one_step({0.3, 0.7}, {{1.8, 0.7}}));
    const auto eps = process(market.tree(), {{1.0}, {0.4, 0.2}});
    const auto s = solve_general(market, HabitPreferences::log(1, 0.0, HabitWeights::none(1)), eps);
    const auto& m1 = market.aggregate[1];
    const double c0 = (1.0 + expectation(m1 * eps[1])) / 2.0;
    CHECK(s.c[0][0] == doctest::Approx(c0).epsilon(1e-10));
    for (std::size_t a = 0; a < 2; ++a) CHECK(s.c[1][a] == doctest::Approx(c0 / m1[a]).epsilon(1e-10));
}

TEST_CASE("solution bookkeeping: budget, wealth and portfolio") {
    const auto sc = fixtures::scenario(3, MarketFamily::General, UtilityKind::Power, 0.3, {3, 3});
    const auto market = PricedMarket::prepare(sc.model);
    const auto s = solve_general(market, sc.prefs, sc.eps);
    CHECK(s.diagnostics.converged);
    CHECK(s.diagnostics.gradient_norm < 1e-8);
    CHECK(s.W[0][0] == 0.0);
    // Investment I_k = eps_k + W_k - c_k is financed by the portfolio pi_k.
    for (int k = 0; k < 2; ++k) {
        for (int a = 0; a < market.tree().atom_count(k); ++a) {
            double cost = 0.0;
            for (int i = 0; i < market.model.slots(); ++i) cost += s.pi[k][a][i] * market.model.price(i, k, a);
            CHECK(cost == doctest::Approx(s.I[k][a]).epsilon(1e-9));
            for (int child : market.tree().children(k, a)) {
                double value = 0.0;
                for (int i = 0; i < market.model.slots(); ++i) value += s.pi[k][a][i] * market.model.payoff(i, k + 1, child);
                CHECK(value == doctest::Approx(s.W[k + 1][child]).epsilon(1e-9));
            }
        }
    }
    double budget = 0.0;
    for (int k = 0; k <= 2; ++k) budget += expectation(market.aggregate[k] * (s.c[k] - sc.eps[k]));
    CHECK(std::abs(budget) < 1e-10);
}

TEST_CASE("Newton reaches the same optimum from different starts") {
    const auto sc = fixtures::scenario(6, MarketFamily::TypeC, UtilityKind::Log, 0.5, {3, 2});
    const auto market = PricedMarket::prepare(sc.model);
    const auto ref = solve_general(market, sc.prefs, sc.eps);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SolveOptions opt;
        opt.start_seed = seed;
        CHECK(max_gap(solve_general(market, sc.prefs, sc.eps, opt).c, ref.c) < 1e-7);
    }
}

TEST_CASE("oracle agrees with Newton on small instances") {
    for (auto utility : {UtilityKind::Log, UtilityKind::Power, UtilityKind::Exponential}) {
        const auto sc = fixtures::scenario(2, utility == UtilityKind::Power ? MarketFamily::Bond : MarketFamily::General,
                                           utility, 0.3, utility == UtilityKind::Power ? std::vector<int>{2, 2}
                                                                                       : std::vector<int>{3});
        const auto market = PricedMarket::prepare(sc.model);
        REQUIRE(portfolio_dimension(market.model) <= 6);
        const auto a = solve_general(market, sc.prefs, sc.eps);
        const auto b = solve_primal_oracle(market, sc.prefs, sc.eps);
        CHECK(max_gap(a.c, b.c) < 1e-6);
    }
    const auto big = fixtures::scenario(2, MarketFamily::Complete, UtilityKind::Log, 0.0, {3, 3});
    try {
        solve_primal_oracle(PricedMarket::prepare(big.model), big.prefs, big.eps);
        FAIL("expected InstanceTooLarge");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::InstanceTooLarge);
    }
}

TEST_CASE("power utility without later endowment is linear in initial wealth") {
    ScenarioSeed seed;
    seed.seed = 12;
    seed.market = MarketFamily::General;
    seed.branching = {3, 3};
    seed.habit = 0.5;
    seed.endowment_after_start = false;
    const auto sc = generate(seed);
    const auto market = PricedMarket::prepare(sc.model);
    const auto base = solve_power_no_endowment(market, sc.prefs, 1.0);
    for (double v : base.A[2].values()) CHECK(v == doctest::Approx(1.0));
    for (int k = 0; k <= 2; ++k) CHECK(base.A[k].min() > 0.0);
    for (double lambda : {0.5, 2.0, 10.0}) {
        auto eps = AdaptedProcess::zeros(market.tree());
        eps[0][0] = lambda;
        const auto s = solve_general(market, sc.prefs, eps);
        for (int k = 0; k <= 2; ++k) {
            for (std::size_t a = 0; a < s.c[k].size(); ++a) {
                CHECK(std::abs(s.c[k][a] - lambda * base.solution.c[k][a]) < 1e-8 * lambda);
            }
        }
    }
    // Future wealth has positive value at every node.
    for (int k = 0; k < 2; ++k) {
        const auto ratio = market.aggregate[k + 1] / market.aggregate[k].lifted(k + 1);
        const auto next = condexp(ratio * base.solution.W[k + 1], k);
        CHECK(next.min() > 0.0);
    }
}

TEST_CASE("exponential recursion on bond markets") {
    for (double beta : {0.0, 0.5}) {
        ScenarioSeed seed;
        seed.seed = 21;
        seed.market = MarketFamily::Bond;
        seed.utility = UtilityKind::Exponential;
        seed.gamma = 1.5;
        seed.habit = beta;
        seed.branching = {2, 2, 2};
        const auto sc = generate(seed);
        const auto market = PricedMarket::prepare(sc.model);
        const auto closed = solve_exponential_bonds(market, sc.prefs, sc.eps);
        const auto& co = closed.coefficients;
        const int T = 3;
        CHECK(co.l[T] == doctest::Approx(1.0));
        CHECK(co.m[T] == doctest::Approx(0.0));
        for (std::size_t a = 0; a < co.n[T].size(); ++a) CHECK(co.n[T][a] == doctest::Approx(sc.eps[T][a]));
        for (int k = 0; k <= T; ++k) {
            CHECK(co.l[k] > 0.0);
            CHECK(co.l[k] <= 1.0);
        }
        CHECK(max_gap(closed.solution.c, solve_general(market, sc.prefs, sc.eps).c) < 1e-8);
    }
}

TEST_CASE("complete-market closed forms match Newton") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto sc = fixtures::scenario(seed, MarketFamily::Complete, UtilityKind::Power, 0.3, {2, 2}, 3.0, true);
        const auto market = PricedMarket::prepare(sc.model);
        const auto newton = solve_general(market, sc.prefs, sc.eps);
        const auto general = solve_complete_general(market, sc.prefs, sc.eps);
        const auto power = solve_complete_power(market, sc.prefs, sc.eps);
        CHECK(max_gap(general.c, newton.c) < 1e-8);
        CHECK(max_gap(power.solution.c, newton.c) < 1e-8);
        CHECK(max_gap(power.solution.c, general.c) < 1e-8);
        double budget = 0.0;
        for (int k = 0; k <= 2; ++k) budget += expectation(market.aggregate[k] * (general.c[k] - sc.eps[k]));
        CHECK(std::abs(budget) < 1e-10);
    }
    // Per-period risk aversion goes through the root-finding branch.
    const auto sc = fixtures::scenario(4, MarketFamily::Complete, UtilityKind::Power, 0.4);
    const auto market = PricedMarket::prepare(sc.model);
    auto prefs = HabitPreferences::power(2, std::vector<double>{1.5, 2.5, 4.0}, 0.1, HabitWeights::one_lag(2, 0.4));
    const auto a = solve_complete_power(market, prefs, sc.eps);
    CHECK(max_gap(a.solution.c, solve_general(market, prefs, sc.eps).c) < 1e-8);
}

TEST_CASE("closed forms reject the wrong market or utility") {
    const auto sc = fixtures::scenario(1, MarketFamily::General, UtilityKind::Power, 0.0, {3, 3});
    const auto market = PricedMarket::prepare(sc.model);
    try {
        solve_complete_general(market, sc.prefs, sc.eps);
        FAIL("expected WrongMarketClass");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::WrongMarketClass);
    }
    const auto bond = bond_market(2, 0.0);
    try {
        solve_exponential_bonds(bond, HabitPreferences::log(2, 0.0, HabitWeights::none(2)),
                                AdaptedProcess::zeros(bond.tree()));
        FAIL("expected WrongUtilityFamily");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::WrongUtilityFamily);
    }
}

TEST_CASE("subproblems") {
    const auto sc = fixtures::scenario(9, MarketFamily::TypeC, UtilityKind::Power, 0.5, {2, 3});
    const auto market = PricedMarket::prepare(sc.model);
    const auto full = solve_general(market, sc.prefs, sc.eps);
    const auto root = solve_subproblem(market, sc.prefs, sc.eps, 0, 0, {}, sc.eps[0][0]);
    CHECK(max_gap(root.c, full.c) < 1e-12);

    const double w = 0.37;
    const auto hist = std::vector<double>{full.c[0][0], full.c[1][0]};
    const auto leaf = solve_subproblem(market, sc.prefs, sc.eps, 2, 0, hist, w);
    CHECK(leaf.c[2][0] == doctest::Approx(sc.eps[2][0] + w));

    // Continuation value falls when the inherited habit rises.
    const auto mid_hist = std::vector<double>{full.c[0][0]};
    const double w1 = full.W[1][1];
    const auto lo = solve_subproblem(market, sc.prefs, sc.eps, 1, 1, mid_hist, w1);
    const auto hi = solve_subproblem(market, sc.prefs, sc.eps, 1, 1, {full.c[0][0] * 1.02}, w1);
    CHECK(hi.U < lo.U);
}

TEST_CASE("infeasible habits are reported") {
    const auto market = bond_market(1, 0.0);
    const auto eps = process(market.tree(), {{0.1}, {0.0, 0.0}});
    const auto h = process(market.tree(), {{0.0}, {1.0, 1.0}});
    try {
        solve_general(market, HabitPreferences::log(1, 0.0, HabitWeights::none(1), h), eps);
        FAIL("expected Infeasible");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Infeasible);
    }
}

TEST_CASE("dispatch picks an applicable method") {
    const auto sc = fixtures::scenario(5, MarketFamily::Complete, UtilityKind::Log, 0.3);
    const auto market = PricedMarket::prepare(sc.model);
    const auto a = solve(market, sc.prefs, sc.eps, Method::Closed);
    const auto b = solve(market, sc.prefs, sc.eps, Method::Newton);
    CHECK(max_gap(a.c, b.c) < 1e-8);
    CHECK(parse_method("oracle") == Method::Oracle);
}
