#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "habitopt/error.hpp"
#include "habitopt/random.hpp"

using namespace habitopt;
using fixtures::process;

namespace {

template <class F>
ErrorKind error_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an error");
    return ErrorKind::InvalidInput;
}

RandomVariable random_rv(Rng& rng, const EventTree& tree, int level, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v;
    for (int a = 0; a < tree.atom_count(level); ++a) v.push_back(rng.uniform(lo, hi));
    return RandomVariable(tree, level, v);
}

void check_close(const RandomVariable& x, const RandomVariable& y, double tol) {
    REQUIRE(x.level() == y.level());
    for (std::size_t a = 0; a < x.size(); ++a) CHECK(std::abs(x[a] - y[a]) <= tol);
}

}  // namespace

TEST_CASE("bond-only market has the discount-factor SPD") {
    const auto tree = EventTree::uniform({2, 2});
    const auto market = PricedMarket::prepare(MarketModel::bonds_only(tree, std::vector<double>{0.1, 0.1}));
    for (int k = 0; k <= 2; ++k) {
        for (double v : market.aggregate[k].values()) CHECK(v == doctest::Approx(std::pow(1.1, -k)).epsilon(1e-12));
        for (double v : market.spd[k].values()) {
            CHECK(v / market.spd[0][0] == doctest::Approx(std::pow(1.1, -k)).epsilon(1e-12));
        }
    }
    CHECK(pricing_error(market.model, market.spd) < 1e-12);
}

TEST_CASE("binary one-step market has the unique SPD (2/3, 4/3)") {
    const auto model = fixtures::one_step({0.5, 0.5}, {{2.0, 0.5}});
    const auto spd = check_no_arbitrage(model);
    const double r0 = spd[0][0];
    // 0.5 R_up 2 + 0.5 R_dn 0.5 = 1 and 0.5 R_up + 0.5 R_dn = 1.
    CHECK(spd[1][0] / r0 == doctest::Approx(2.0 / 3.0));
    CHECK(spd[1][1] / r0 == doctest::Approx(4.0 / 3.0));
    const auto m = aggregate_spd(PayoffSpaceBasis::build(model), spd);
    CHECK(m[0][0] == doctest::Approx(1.0));
    CHECK(m[1][0] == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("a dominating asset is an arbitrage") {
    const auto model = fixtures::one_step({0.5, 0.5}, {{2.0, 1.5}});
    CHECK(error_of([&] { check_no_arbitrage(model); }) == ErrorKind::ArbitrageDetected);
}

TEST_CASE("malformed markets are rejected") {
    MarketData d;
    d.tree = EventTree::uniform({2});
    d.assets = 1;
    d.prices.push_back(process(d.tree, {{-1.0}, {0.0, 0.0}}));
    d.dividends.push_back(process(d.tree, {{0.0}, {1.0, 2.0}}));
    CHECK(error_of([&] { MarketModel::create(d); }) == ErrorKind::InvalidInput);
    CHECK(error_of([&] { MarketModel::bonds_only(d.tree, std::vector<double>{-1.5}); }) == ErrorKind::InvalidInput);
}

TEST_CASE("payoff space ranks") {
    const auto tree = EventTree::uniform({3, 2});
    const auto bond = PayoffSpaceBasis::build(MarketModel::bonds_only(tree, std::vector<double>{0.0, 0.05}));
    CHECK(bond.rank(1) == 1);
    CHECK(bond.rank(2) == 3);

    const auto complete = PayoffSpaceBasis::build(fixtures::binomial(1.3, 0.8));
    CHECK(complete.rank(1) == 2);
    CHECK(complete.rank(2) == 4);

    const auto single = PayoffSpaceBasis::build(fixtures::one_step({0.2, 0.3, 0.5}, {{2.0, 1.0, 0.5}}));
    const auto dup = PayoffSpaceBasis::build(fixtures::one_step({0.2, 0.3, 0.5}, {{2.0, 1.0, 0.5}, {2.0, 1.0, 0.5}}));
    CHECK(single.rank(1) == 2);
    CHECK(dup.rank(1) == 2);
}

TEST_CASE("projections in bond-only and complete markets") {
    Rng rng(3);
    const auto tree = EventTree::uniform({2, 3});
    const auto bond = PayoffSpaceBasis::build(MarketModel::bonds_only(tree, std::vector<double>{0.0, 0.0}));
    for (int k = 1; k <= 2; ++k) {
        const auto x = random_rv(rng, tree, 2);
        check_close(bond.project(k, x).lifted(k), condexp(x, k - 1).lifted(k), 1e-12);
    }
    const auto market = fixtures::binomial(1.2, 0.9, 0.4);
    const auto complete = PayoffSpaceBasis::build(market);
    for (int k = 1; k <= 2; ++k) {
        const auto x = random_rv(rng, market.tree(), 2);
        check_close(complete.project(k, x), condexp(x, k), 1e-12);
        const auto px = complete.project(k, x);
        check_close(complete.project(k, px), px, 1e-12);
    }
}

TEST_CASE("perturbed aggregate SPD hand expansions") {
    const auto tree = EventTree::uniform({2, 2});
    const auto market = PricedMarket::prepare(MarketModel::bonds_only(tree, std::vector<double>{0.05, 0.0}));
    const auto& m = market.aggregate;
    const auto same = perturbed_aggregate_spd(m, HabitWeights::none(2));
    for (int k = 0; k <= 2; ++k) check_close(same[k], m[k], 1e-15);

    const double b = 0.4;
    const auto mt = perturbed_aggregate_spd(m, HabitWeights::one_lag(2, b));
    CHECK(mt[0][0] == doctest::Approx(1.0 + b * expectation(m[1]) + b * b * expectation(m[2])).epsilon(1e-14));
    check_close(mt[2], m[2], 1e-15);

    const auto t1 = PricedMarket::prepare(fixtures::one_step({0.5, 0.5}, {{2.0, 0.5}}));
    const auto mt1 = perturbed_aggregate_spd(t1.aggregate, HabitWeights::one_lag(1, b));
    CHECK(mt1[0][0] == doctest::Approx(1.0 + b * expectation(t1.aggregate[1])));
}

TEST_CASE("classification of the canonical market classes") {
    const auto complete = fixtures::binomial(1.2, 0.8);
    CHECK(classify_market(complete, PayoffSpaceBasis::build(complete)).tag == MarketTag::Complete);

    const auto tree = EventTree::uniform({2, 2});
    const auto bond = MarketModel::bonds_only(tree, std::vector<double>{0.0, 0.05});
    const auto cls = classify_market(bond, PayoffSpaceBasis::build(bond));
    CHECK(cls.tag == MarketTag::TypeC);
    // Intermediate sigma-algebra of the bond market is the previous level.
    REQUIRE(cls.intermediate.size() == 3);
    CHECK(cls.intermediate[2].size() == 2);

    const auto sc = fixtures::scenario(1, MarketFamily::Idiosyncratic, UtilityKind::Power, 0.3, {4, 4});
    const auto basis = PayoffSpaceBasis::build(sc.model);
    CHECK(classify_market(sc.model, basis).tag == MarketTag::Idiosyncratic);

    // A witness that is not coarser than the tree fails clause (i).
    LeafPartitions bad = *sc.model.data().sub_filtration;
    std::swap(bad[1][0][0], bad[1][1][0]);
    CHECK(error_of([&] { classify_market(sc.model, basis, bad); }) == ErrorKind::InvalidWitness);
}

TEST_CASE("aggregate SPD of an idiosyncratic market is positive and F-adapted") {
    const auto sc = fixtures::scenario(5, MarketFamily::Idiosyncratic, UtilityKind::Log, 0.0, {4, 4});
    const auto market = PricedMarket::prepare(sc.model);
    const auto& f = *sc.model.data().sub_filtration;
    for (int k = 1; k <= 2; ++k) {
        CHECK(market.aggregate[k].min() > 0.0);
        const auto lifted = market.aggregate[k].lifted(2);
        for (const auto& block : f[static_cast<std::size_t>(k)]) {
            for (int leaf : block) CHECK(std::abs(lifted[static_cast<std::size_t>(leaf)] - lifted[static_cast<std::size_t>(block[0])]) < 1e-12);
        }
    }
}

TEST_CASE("consumption to wealth examples") {
    const auto tree = EventTree::uniform({2});
    const auto market = PricedMarket::prepare(MarketModel::bonds_only(tree, std::vector<double>{0.0}));
    const auto w = consumption_to_wealth(market.aggregate, process(tree, {{0.5}, {0.5, 0.5}}), process(tree, {{1.0}, {0.0, 0.0}}));
    CHECK(w[1][0] == doctest::Approx(0.5));
    CHECK(w[1][1] == doctest::Approx(0.5));

    const auto line = fixtures::deterministic(2);
    const auto flat = PricedMarket::prepare(MarketModel::bonds_only(line, std::vector<double>{0.0, 0.0}));
    const auto w2 = consumption_to_wealth(flat.aggregate, process(line, {{1}, {2}, {3}}), process(line, {{1}, {1}, {2}}));
    CHECK(w2[1][0] == doctest::Approx(2.0));
    CHECK(w2[2][0] == doctest::Approx(1.0));

    const auto eps = process(line, {{1}, {1}, {2}});
    const auto autarky = consumption_to_wealth(flat.aggregate, eps, eps);
    for (int k = 1; k <= 2; ++k) CHECK(autarky[k][0] == doctest::Approx(0.0));
}

TEST_CASE("wealth and consumption round trip; wealth outside the payoff space is rejected") {
    const auto sc = fixtures::scenario(2, MarketFamily::General, UtilityKind::Log, 0.0, {3, 3});
    const auto market = PricedMarket::prepare(sc.model);
    const auto& tree = market.tree();
    Rng rng(9);
    // Attainable wealth: W_k in the payoff space, W_0 = 0.
    std::vector<RandomVariable> wv{RandomVariable::constant(tree, 0, 0.0)};
    for (int k = 1; k <= 2; ++k) wv.push_back(market.basis.project(k, random_rv(rng, tree, k)));
    const AdaptedProcess w(wv);
    const auto cons = wealth_to_consumption(market.basis, market.aggregate, w, sc.eps);
    const auto again = consumption_to_wealth(market.aggregate, cons, sc.eps);
    for (int k = 1; k <= 2; ++k) check_close(again[k], w[k], 1e-10);
    const auto back = wealth_to_consumption(market.basis, market.aggregate, again, sc.eps);
    for (int k = 0; k <= 2; ++k) check_close(back[k], cons[k], 1e-10);

    // Add a level-1 direction orthogonal to the payoff space.
    auto bad = w;
    RandomVariable x = random_rv(rng, tree, 1);
    x = x - market.basis.project(1, x);
    REQUIRE(norm(x) > 1e-3);
    bad[1] = bad[1] + x;
    CHECK(error_of([&] { wealth_to_consumption(market.basis, market.aggregate, bad, sc.eps); }) ==
          ErrorKind::NotInPayoffSpace);
}

TEST_CASE("projection identities on seeded incomplete markets") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const auto sc = fixtures::scenario(seed, seed % 2 ? MarketFamily::General : MarketFamily::TypeC,
                                           UtilityKind::Log, 0.0, {3, 3});
        const auto basis = PayoffSpaceBasis::build(sc.model);
        const auto& tree = sc.model.tree();
        Rng rng(100 + seed);
        for (int draw = 0; draw < 25; ++draw) {
            const int k = rng.integer(1, 2);
            const auto x = random_rv(rng, tree, 2), y = random_rv(rng, tree, 2);
            CHECK(std::abs(inner(basis.project(k, x), y) - inner(x, basis.project(k, y))) < 1e-10);
            const auto z = random_rv(rng, tree, k - 1);
            check_close(basis.project(k, z * y), z.lifted(k) * basis.project(k, y), 1e-10);
            const auto lhs = condexp(basis.project(2, x).lifted(2) * y, 1);
            const auto rhs = condexp(x * basis.project(2, y).lifted(2), 1);
            check_close(lhs, rhs, 1e-10);
            const auto pos = random_rv(rng, tree, k, 0.2, 2.0);
            const auto v = basis.project(k, random_rv(rng, tree, k));
            if (norm(v) > 1e-6) CHECK(norm(basis.project(k, pos * v)) > 1e-10);
        }
    }
}

TEST_CASE("aggregate SPD does not depend on the positive SPD used") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto sc = fixtures::scenario(seed, MarketFamily::General, UtilityKind::Log, 0.0, {3, 3});
        const auto basis = PayoffSpaceBasis::build(sc.model);
        const auto r1 = check_no_arbitrage(sc.model);
        const auto r2 = alternative_positive_spd(sc.model, seed);
        CHECK(pricing_error(sc.model, r2) < 1e-10);
        const auto m1 = aggregate_spd(basis, r1), m2 = aggregate_spd(basis, r2);
        for (int k = 0; k <= 2; ++k) check_close(m1[k], m2[k], 1e-10);
    }
}
