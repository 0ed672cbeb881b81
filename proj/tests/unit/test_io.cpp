#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "habitopt/error.hpp"
#include "habitopt/io.hpp"
#include "habitopt/solvers.hpp"

using namespace habitopt;

TEST_CASE("market, preferences and endowment round trip through JSON") {
    const auto sc = fixtures::scenario(3, MarketFamily::Idiosyncratic, UtilityKind::Power, 0.3, {4, 4}, 2.0, true);
    const Json mj = market_to_json(sc.model);
    const auto model = market_from_json(Json::parse(dump(mj)));
    CHECK(dump(market_to_json(model)) == dump(mj));
    CHECK(model.data().sub_filtration.has_value());
    const auto prefs = prefs_from_json(model.tree(), Json::parse(dump(prefs_to_json(sc.prefs))));
    CHECK(dump(prefs_to_json(prefs)) == dump(prefs_to_json(sc.prefs)));
    const auto eps = endowment_from_json(model.tree(), Json::parse(dump(endowment_to_json(sc.eps))));
    for (int k = 0; k <= 2; ++k) {
        for (std::size_t a = 0; a < eps[k].size(); ++a) CHECK(eps[k][a] == sc.eps[k][a]);
    }
}

TEST_CASE("numbers survive serialization exactly") {
    const double x = 0.1 + 0.2;
    CHECK(Json::parse(dump(Json(x))).get<double>() == x);
    CHECK(std::stod(format_number(x)) == x);
    CHECK(format_number(1.0 / 3.0).size() >= 17);
}

TEST_CASE("preferences accept scalar and per-period forms") {
    const auto tree = EventTree::uniform({2, 2});
    const auto p = prefs_from_json(tree, Json::parse(R"({"family":"power","gamma":[2,3,4],"rho":0.1,"beta":0.5})"));
    CHECK(p.family == UtilityKind::Power);
    CHECK(p.u[2].gamma() == 4.0);
    CHECK(p.beta(2, 1) == 0.5);
    CHECK(p.beta(2, 0) == 0.0);
    const auto e = prefs_from_json(tree, Json::parse(R"({"family":"exponential","gamma":1.5})"));
    CHECK(e.family == UtilityKind::Exponential);
    try {
        prefs_from_json(tree, Json::parse(R"({"family":"quadratic"})"));
        FAIL("expected InvalidInput");
    } catch (const Error& err) {
        CHECK(err.kind() == ErrorKind::InvalidInput);
    }
}

TEST_CASE("solution JSON has sorted keys and diagnostics") {
    const auto sc = fixtures::scenario(1, MarketFamily::Complete, UtilityKind::Log, 0.2);
    const auto market = PricedMarket::prepare(sc.model);
    const Json j = solution_to_json(solve_general(market, sc.prefs, sc.eps));
    CHECK(j.at("method") == "newton");
    CHECK(j.at("diagnostics").at("converged") == true);
    CHECK(j.at("c").size() == 3);
    std::string prev;
    for (auto it = j.begin(); it != j.end(); ++it) {
        CHECK(prev < it.key());
        prev = it.key();
    }
}

TEST_CASE("atomic writes replace the target") {
    const auto dir = std::filesystem::temp_directory_path() / "habitopt_io_test";
    std::filesystem::create_directories(dir);
    const auto file = dir / "x.json";
    write_atomic(file, "1\n");
    write_atomic(file, "2\n");
    std::ifstream in(file);
    std::string s;
    in >> s;
    CHECK(s == "2");
    CHECK(load_json(file).get<int>() == 2);
    std::filesystem::remove_all(dir);
}

TEST_CASE("generated scenarios are deterministic and match their family") {
    for (auto family : {MarketFamily::Complete, MarketFamily::Bond, MarketFamily::TypeC, MarketFamily::General,
                        MarketFamily::Idiosyncratic}) {
        std::vector<int> br = family == MarketFamily::Idiosyncratic ? std::vector<int>{4, 4}
                              : family == MarketFamily::General     ? std::vector<int>{3, 3}
                                                                    : std::vector<int>{2, 2};
        const auto a = fixtures::scenario(1, family, UtilityKind::Power, 0.3, br);
        const auto b = fixtures::scenario(1, family, UtilityKind::Power, 0.3, br);
        CHECK(dump(market_to_json(a.model)) == dump(market_to_json(b.model)));
        CHECK(dump(endowment_to_json(a.eps)) == dump(endowment_to_json(b.eps)));
        const auto basis = PayoffSpaceBasis::build(a.model);
        const auto tag = classify_market(a.model, basis).tag;
        switch (family) {
        case MarketFamily::Complete:
            CHECK(tag == MarketTag::Complete);
            for (int k = 1; k <= 2; ++k) CHECK(basis.rank(k) == a.model.tree().atom_count(k));
            break;
        case MarketFamily::Bond: CHECK(a.model.bond_only()); [[fallthrough]];
        case MarketFamily::TypeC: CHECK(tag == MarketTag::TypeC); break;
        case MarketFamily::Idiosyncratic: CHECK(tag == MarketTag::Idiosyncratic); break;
        case MarketFamily::General: CHECK(tag == MarketTag::General); break;
        }
    }
}
