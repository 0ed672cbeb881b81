#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "habitopt/error.hpp"
#include "habitopt/random.hpp"
#include "habitopt/solvers.hpp"

using namespace habitopt;
using fixtures::process;

TEST_CASE("period utilities and their derivatives") {
    const auto p = PeriodUtility::power(3.0, 0.9);
    const double x = 1.7, h = 1e-5;
    CHECK(p.value(x) == doctest::Approx(0.9 * std::pow(x, -2.0) / -2.0));
    CHECK(p.d1(x) == doctest::Approx((p.value(x + h) - p.value(x - h)) / (2 * h)).epsilon(1e-8));
    CHECK(p.d2(x) == doctest::Approx((p.d1(x + h) - p.d1(x - h)) / (2 * h)).epsilon(1e-7));
    CHECK(p.d3(x) == doctest::Approx((p.d2(x + h) - p.d2(x - h)) / (2 * h)).epsilon(1e-6));
    CHECK(p.inverse_d1(p.d1(x)) == doctest::Approx(x));
    CHECK(PeriodUtility::power(1.0, 1.0).kind() == UtilityKind::Log);
    const auto e = PeriodUtility::exponential(2.0, 1.0);
    CHECK_FALSE(e.inada());
    CHECK(e.inverse_d1(e.d1(-0.4)) == doctest::Approx(-0.4));
    try {
        PeriodUtility::power(0.0, 1.0);
        FAIL("risk-neutral power accepted");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::InvalidInput);
    }
}

TEST_CASE("perturbed consumption") {
    const auto tree = EventTree::uniform({2});
    const auto c = process(tree, {{0.25}, {0.75, 0.75}});
    const auto none = perturbed_consumption(HabitPreferences::log(1, 0.0, HabitWeights::none(1)), c);
    CHECK(none.chat[1][0] == doctest::Approx(0.75));
    const auto one = perturbed_consumption(HabitPreferences::log(1, 0.0, HabitWeights::one_lag(1, 1.0)), c);
    CHECK(one.chat[0][0] == doctest::Approx(0.25));
    CHECK(one.chat[1][1] == doctest::Approx(0.5));
    const auto h = process(tree, {{0.0}, {0.5, 0.25}});
    const auto floor = perturbed_consumption(HabitPreferences::log(1, 0.0, HabitWeights::one_lag(1, 1.0), h), c);
    CHECK(floor.chat[1][0] == doctest::Approx(0.0));
    CHECK(floor.violations == 0);
}

TEST_CASE("utility values") {
    const auto line = fixtures::deterministic(1);
    CHECK(utility_value(HabitPreferences::log(1, 0.0, HabitWeights::none(1)), process(line, {{1}, {1}})) ==
          doctest::Approx(0.0));
    CHECK(utility_value(HabitPreferences::exponential(1, 1.0, 0.0, HabitWeights::none(1)), process(line, {{0}, {0}})) ==
          doctest::Approx(-2.0));
    CHECK(utility_value(HabitPreferences::power(1, 2.0, 0.0, HabitWeights::none(1)), process(line, {{1}, {2}})) ==
          doctest::Approx(-1.5));
    try {
        utility_value(HabitPreferences::log(1, 0.0, HabitWeights::one_lag(1, 1.0)), process(line, {{1}, {0.5}}));
        FAIL("expected DomainViolation");
    } catch (const DomainError& e) {
        CHECK(e.kind() == ErrorKind::DomainViolation);
        CHECK(e.period() == 1);
        CHECK(e.atom() == 0);
    }
}

TEST_CASE("habit-adjusted marginal utility") {
    const auto line = fixtures::deterministic(1);
    const double b = 0.3;
    const auto r = habit_adjusted_marginal(HabitPreferences::log(1, 0.0, HabitWeights::one_lag(1, b)),
                                           process(line, {{1}, {1 + b}}));
    CHECK(r[0][0] == doctest::Approx(1 - b));
    CHECK(r[1][0] == doctest::Approx(1.0));
    const auto tree = EventTree::uniform({2});
    const auto c = process(tree, {{0.8}, {1.1, 0.6}});
    const auto p = HabitPreferences::power(1, 2.0, 0.1, HabitWeights::none(1));
    const auto sep = habit_adjusted_marginal(p, c);
    CHECK(sep[1][1] == doctest::Approx(p.u[1].d1(0.6)));
}

TEST_CASE("utility is strictly concave along random segments") {
    const auto sc = fixtures::scenario(4, MarketFamily::General, UtilityKind::Power, 0.3, {3, 2});
    const auto market = PricedMarket::prepare(sc.model);
    const auto base = solve_general(market, sc.prefs, sc.eps).c;
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<RandomVariable> a, b, mid;
        for (int k = 0; k <= 2; ++k) {
            auto x = base[k], y = base[k];
            for (std::size_t i = 0; i < x.size(); ++i) {
                x[i] *= rng.uniform(0.95, 1.05);
                y[i] *= rng.uniform(0.95, 1.05);
            }
            mid.push_back(0.5 * (x + y));
            a.push_back(std::move(x));
            b.push_back(std::move(y));
        }
        const double ua = utility_value(sc.prefs, AdaptedProcess(a));
        const double ub = utility_value(sc.prefs, AdaptedProcess(b));
        const double um = utility_value(sc.prefs, AdaptedProcess(mid));
        CHECK(um - 0.5 * (ua + ub) > -1e-12 * (1 + std::abs(um)));
    }
}

TEST_CASE("first order conditions at and away from the optimum") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto sc = fixtures::scenario(seed, MarketFamily::TypeC, UtilityKind::Power, 0.5, {2, 3});
        const auto market = PricedMarket::prepare(sc.model);
        const auto s = solve_general(market, sc.prefs, sc.eps);
        const auto mt = perturbed_aggregate_spd(market.aggregate, sc.prefs.beta);
        const auto foc = foc_residual(market.basis, market.aggregate, sc.prefs, s.c);
        const auto simple = simplified_foc_residual(market.basis, mt, sc.prefs, s.c);
        for (double v : foc) CHECK(v < 1e-8);
        for (double v : simple) CHECK(v < 1e-8);
        CHECK(s.R.components().front().min() > 0.0);
        for (const auto& rk : s.R.components()) CHECK(rk.min() > 0.0);
        CHECK(pricing_error(market.model, s.R) < 1e-8);

        auto bumped = s.c;
        bumped[1][0] += 0.1;
        const auto off = foc_residual(market.basis, market.aggregate, sc.prefs, bumped);
        const auto off_simple = simplified_foc_residual(market.basis, mt, sc.prefs, bumped);
        CHECK(*std::max_element(off.begin(), off.end()) > 1e-4);
        CHECK(*std::max_element(off_simple.begin(), off_simple.end()) > 1e-4);
    }
}

TEST_CASE("simplified conditions reduce to the plain ones without habits") {
    // Without habits M~ = M and the simplified residual is the plain one weighted by u'_{k-1}.
    const auto sc = fixtures::scenario(8, MarketFamily::Complete, UtilityKind::Log, 0.0);
    const auto market = PricedMarket::prepare(sc.model);
    auto c = solve_general(market, sc.prefs, sc.eps).c;
    c[1][0] *= 1.05;
    c[2][1] *= 1.05;
    const auto a = foc_residual(market.basis, market.aggregate, sc.prefs, c);
    const auto b = simplified_foc_residual(market.basis, market.aggregate, sc.prefs, c);
    const auto r = habit_adjusted_marginal(sc.prefs, c);
    for (int k = 1; k <= 2; ++k) {
        CHECK(a[static_cast<std::size_t>(k)] > 1e-4);
        CHECK(b[static_cast<std::size_t>(k)] >= a[static_cast<std::size_t>(k)] * r[k - 1].min() * (1 - 1e-12));
        CHECK(b[static_cast<std::size_t>(k)] <= a[static_cast<std::size_t>(k)] * r[k - 1].max() * (1 + 1e-12));
    }
}
