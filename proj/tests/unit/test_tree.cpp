#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "habitopt/error.hpp"
#include "habitopt/random.hpp"

using namespace habitopt;

TEST_CASE("uniform binary tree has atom counts 1, 2, 4") {
    const auto tree = EventTree::uniform({2, 2});
    CHECK(tree.horizon() == 2);
    CHECK(tree.atom_count(0) == 1);
    CHECK(tree.atom_count(1) == 2);
    CHECK(tree.atom_count(2) == 4);
    for (double p : tree.leaf_probs()) CHECK(p == doctest::Approx(0.25));
}

TEST_CASE("single-branch tree is deterministic") {
    TreeDescription d;
    d.horizon = 3;
    d.levels = {{{0}}, {{0}}, {{0}}, {{0}}};
    d.probs = {1.0};
    const auto tree = EventTree::build(d);
    for (int k = 0; k <= 3; ++k) CHECK(tree.atom_count(k) == 1);
}

TEST_CASE("leaf probabilities must sum to one") {
    TreeDescription d;
    d.horizon = 1;
    d.levels = {{{0, 1}}, {{0}, {1}}};
    d.probs = {0.5, 0.6};
    try {
        EventTree::build(d);
        FAIL("expected BadProbability");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::BadProbability);
    }
}

TEST_CASE("finer level must refine the coarser one") {
    TreeDescription d;
    d.horizon = 2;
    d.levels = {{{0, 1, 2}}, {{0, 1}, {2}}, {{0}, {1, 2}}};
    d.probs = {0.2, 0.3, 0.5};
    try {
        EventTree::build(d);
        FAIL("expected NonNested");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NonNested);
    }
}

TEST_CASE("conditional expectation examples") {
    const auto tree = EventTree::uniform({2});
    CHECK(condexp(RandomVariable(tree, 1, {2, 0}), 0)[0] == doctest::Approx(1.0));
    const auto skew = EventTree::from_conditional({{{0.25, 0.75}}});
    CHECK(condexp(RandomVariable(skew, 1, {4, 0}), 0)[0] == doctest::Approx(1.0));
    const auto big = EventTree::uniform({3, 2});
    const auto c = condexp(RandomVariable::constant(big, 2, 7.5), 1);
    for (double v : c.values()) CHECK(v == doctest::Approx(7.5));
}

TEST_CASE("inner product examples") {
    const auto tree = EventTree::uniform({2});
    const auto one = RandomVariable::constant(tree, 1, 1.0);
    CHECK(inner(one, one) == doctest::Approx(1.0));
    const RandomVariable x(tree, 1, {1, -1});
    CHECK(inner(x, x) == doctest::Approx(1.0));
    CHECK(inner(RandomVariable(tree, 1, {3, 1}), RandomVariable(tree, 1, {1, 2})) == doctest::Approx(2.5));
}

TEST_CASE("conditioning on a finer level than the variable is rejected") {
    const auto tree = EventTree::uniform({2, 2});
    try {
        condexp(RandomVariable::constant(tree, 1, 1.0), 2);
        FAIL("expected LevelMismatch");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::LevelMismatch);
    }
}

TEST_CASE("tower property, positivity and self-adjointness on random trees") {
    Rng rng(17);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::vector<std::vector<double>>> cond;
        std::size_t atoms = 1;
        for (int k = 0; k < 3; ++k) {
            cond.emplace_back();
            const int b = rng.integer(1, 3);
            for (std::size_t a = 0; a < atoms; ++a) {
                std::vector<double> p;
                double total = 0;
                for (int c = 0; c < b; ++c) total += p.emplace_back(rng.uniform(0.1, 1.0));
                for (double& v : p) v /= total;
                cond.back().push_back(p);
            }
            atoms *= static_cast<std::size_t>(b);
        }
        const auto tree = EventTree::from_conditional(cond);
        std::vector<double> xv, yv;
        for (int a = 0; a < tree.atom_count(3); ++a) {
            xv.push_back(rng.uniform(0.0, 2.0));
            yv.push_back(rng.uniform(-1.0, 1.0));
        }
        const RandomVariable x(tree, 3, xv), y(tree, 3, yv);
        for (int m = 0; m <= 3; ++m) {
            for (int k = 0; k <= m; ++k) {
                const auto lhs = condexp(condexp(x, m), k);
                const auto rhs = condexp(x, k);
                for (std::size_t a = 0; a < lhs.size(); ++a) CHECK(std::abs(lhs[a] - rhs[a]) < 1e-12);
            }
            CHECK(condexp(x, m).min() >= 0.0);
            CHECK(std::abs(inner(x, condexp(y, m)) - inner(condexp(x, m), y)) < 1e-12);
        }
    }
}

TEST_CASE("lifting keeps the atom value on every descendant") {
    const auto tree = EventTree::uniform({2, 3});
    const RandomVariable x(tree, 1, {1.5, -2.0});
    const auto lifted = x.lifted(2);
    REQUIRE(lifted.size() == 6);
    for (int a = 0; a < 6; ++a) CHECK(lifted[static_cast<std::size_t>(a)] == x[static_cast<std::size_t>(tree.ancestor(2, a, 1))]);
}
