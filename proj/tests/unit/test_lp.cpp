#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "habitopt/lp.hpp"

using namespace habitopt::lp;

TEST_CASE("builder solves a small bounded program") {
    // minimize -x - 2y  s.t.  x + y <= 4, x <= 3, y <= 2 (y as an inequality via lower bound 0)
    Builder b;
    const int x = b.add_variable(0.0, -1.0);
    const int y = b.add_variable(0.0, -2.0);
    b.add_constraint({{x, 1.0}, {y, 1.0}}, Sense::LessEqual, 4.0);
    b.add_constraint({{x, 1.0}}, Sense::LessEqual, 3.0);
    b.add_constraint({{y, 1.0}}, Sense::LessEqual, 2.0);
    const auto r = b.minimize();
    REQUIRE(r.status == Status::Optimal);
    CHECK(r.x[x] == doctest::Approx(2.0));
    CHECK(r.x[y] == doctest::Approx(2.0));
    CHECK(r.objective == doctest::Approx(-6.0));
}

TEST_CASE("infeasible and unbounded programs are reported") {
    Builder infeasible;
    const int x = infeasible.add_variable(0.0, 1.0);
    infeasible.add_constraint({{x, 1.0}}, Sense::LessEqual, -1.0);
    CHECK(infeasible.minimize().status == Status::Infeasible);

    Builder unbounded;
    const int y = unbounded.add_variable(0.0, -1.0);
    unbounded.add_constraint({{y, 1.0}}, Sense::GreaterEqual, 1.0);
    CHECK(unbounded.minimize().status == Status::Unbounded);
}

TEST_CASE("equality constraints and shifted lower bounds") {
    Builder b;
    const int x = b.add_variable(1.0, 1.0);
    const int y = b.add_variable(-2.0, 3.0);
    b.add_constraint({{x, 1.0}, {y, 1.0}}, Sense::Equal, 0.5);
    const auto r = b.minimize();
    REQUIRE(r.status == Status::Optimal);
    CHECK(r.x[x] == doctest::Approx(2.5));
    CHECK(r.x[y] == doctest::Approx(-2.0));
}
