// habitopt: solve and analyze habit-forming consumption/investment problems on event trees.
#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "habitopt/analysis.hpp"
#include "habitopt/error.hpp"
#include "habitopt/io.hpp"
#include "habitopt/market.hpp"
#include "habitopt/scenario.hpp"
#include "habitopt/solvers.hpp"

using namespace habitopt;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 2;
constexpr int kSolver = 3;
constexpr int kCheck = 4;

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Infeasible:
    case ErrorKind::NonConvergence:
    case ErrorKind::BracketFailure:
    case ErrorKind::DomainViolation:
    case ErrorKind::DivisionByZeroSPD:
    case ErrorKind::GenerationExhausted: return kSolver;
    default: return kValidation;
    }
}

void emit(const std::string& path, const std::string& content) {
    if (path.empty() || path == "-") {
        std::cout << content;
    } else {
        write_atomic(path, content);
    }
}

struct Inputs {
    std::string model, prefs, endow;
};

struct Loaded {
    PricedMarket market;
    HabitPreferences prefs;
    AdaptedProcess eps;
};

Loaded load(const Inputs& in) {
    MarketModel model = market_from_json(load_json(in.model));
    auto market = PricedMarket::prepare(std::move(model));
    auto prefs = prefs_from_json(market.tree(), load_json(in.prefs));
    auto eps = endowment_from_json(market.tree(), load_json(in.endow));
    return {std::move(market), std::move(prefs), std::move(eps)};
}

void add_inputs(CLI::App* cmd, Inputs& in) {
    cmd->add_option("--model", in.model, "market JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--prefs", in.prefs, "preferences JSON")->required()->check(CLI::ExistingFile);
    cmd->add_option("--endow", in.endow, "endowment JSON")->required()->check(CLI::ExistingFile);
}

int cmd_validate(const std::string& path, const std::string& filtration) {
    MarketModel model = market_from_json(load_json(path));
    std::optional<LeafPartitions> candidate;
    if (!filtration.empty()) {
        const Json f = load_json(filtration);
        candidate = (f.contains("filtration_F") ? f.at("filtration_F") : f).get<LeafPartitions>();
    }
    const auto basis = PayoffSpaceBasis::build(model);
    const auto spd = check_no_arbitrage(model);
    const auto m = aggregate_spd(basis, spd);
    const auto cls = classify_market(model, basis, candidate);
    Json out;
    out["no_arbitrage"] = true;
    out["pricing_error"] = pricing_error(model, spd);
    std::vector<int> ranks, atoms;
    for (int k = 1; k <= model.horizon(); ++k) {
        ranks.push_back(basis.rank(k));
        atoms.push_back(model.tree().atom_count(k));
    }
    out["payoff_rank"] = ranks;
    out["atoms"] = atoms;
    out["class"] = to_string(cls.tag);
    out["deterministic_rates"] = model.deterministic_rates();
    if (!cls.intermediate.empty() && cls.tag == MarketTag::TypeC) out["intermediate"] = cls.intermediate;
    std::cout << dump(out);
    return kOk;
}

int cmd_solve(const Inputs& in, const std::string& method, const std::string& out) {
    const auto l = load(in);
    const Solution s = solve(l.market, l.prefs, l.eps, parse_method(method));
    Json j = solution_to_json(s);
    emit(out, dump(j));
    if (!s.diagnostics.converged) return kSolver;
    return kOk;
}

Json probe_json(const PolicyProbe& p) {
    return Json{{"k", p.k},           {"atom", p.atom},
                {"w", p.w},           {"step", p.step},
                {"c", p.c},           {"derivative", p.derivative},
                {"derivative_half", p.derivative_half},
                {"second_difference", p.second_difference},
                {"second_derivative", p.second_derivative},
                {"bound", p.bound},   {"tolerance", p.tolerance},
                {"reliable", p.reliable},
                {"in_scope", p.in_scope},
                {"pass", p.pass},     {"note", p.note}};
}

int cmd_verify(const Inputs& in, const std::string& checks_arg, double tol, const std::string& report,
               const std::string& solution_path, std::uint64_t seed) {
    const auto l = load(in);
    std::vector<std::string> checks;
    {
        std::stringstream ss(checks_arg);
        for (std::string item; std::getline(ss, item, ',');) {
            if (!item.empty()) checks.push_back(item);
        }
    }
    Solution base = solve_general(l.market, l.prefs, l.eps);
    if (!solution_path.empty()) {
        const Json sj = load_json(solution_path);
        base = complete_solution(l.market, l.prefs, l.eps, process_from_json(l.market.tree(), sj.at("c")),
                                 sj.value("method", std::string("file")));
    }
    const auto cls = classify_market(l.market.model, l.market.basis);
    const EventTree& tree = l.market.tree();
    const int T = tree.horizon();
    Json out;
    out["class"] = to_string(cls.tag);
    out["seed"] = seed;
    out["tolerance"] = tol;
    int failures = 0;
    for (const auto& check : checks) {
        Json rows = Json::array();
        if (check == "foc") {
            bool ok = true;
            for (double r : base.diagnostics.foc) ok = ok && r < 1e-8;
            if (base.diagnostics.foc.empty()) ok = false;
            out["foc"] = Json{{"residual", base.diagnostics.foc},
                              {"simplified", base.diagnostics.simplified_foc},
                              {"pass", ok}};
            failures += ok ? 0 : 1;
            continue;
        }
        if (check == "envelope") {
            const auto e = envelope_check(l.market, l.prefs, l.eps);
            out["envelope"] = Json{{"derivative", e.derivative}, {"marginal", e.marginal},
                                   {"residual", e.residual},     {"scale", e.scale},
                                   {"pass", e.pass}};
            failures += e.pass ? 0 : 1;
            continue;
        }
        if (check == "monotonicity" || check == "concavity") {
            for (int k = 0; k <= T; ++k) {
                for (int a = 0; a < tree.atom_count(k); ++a) {
                    const PolicyProbe p = check == "monotonicity"
                                              ? monotonicity_probe(l.market, l.prefs, l.eps, base, k, a)
                                              : concavity_probe(l.market, l.prefs, l.eps, base, k, a, cls, std::nullopt, tol);
                    if (p.in_scope && !p.pass) ++failures;
                    rows.push_back(probe_json(p));
                }
            }
        } else if (check == "eta") {
            for (int k = 0; k < T; ++k) {
                for (const auto& e : eta_bound_check(l.market, l.prefs, l.eps, base, k, cls, tol)) {
                    if (e.in_scope && !e.pass) ++failures;
                    Json row{{"k", e.k},        {"atom", e.atom},   {"child", e.child}, {"estimate", e.estimate},
                             {"bound", e.bound}, {"in_scope", e.in_scope}, {"pass", e.pass}};
                    if (e.analytic) row["analytic"] = *e.analytic;
                    rows.push_back(row);
                }
            }
        } else {
            throw Error(ErrorKind::InvalidInput, "unknown check '" + check + "'");
        }
        out[check] = rows;
    }
    out["failures"] = failures;
    emit(report, dump(out));
    return failures == 0 ? kOk : kCheck;
}

int cmd_sweep(const Inputs& in, const std::string& range, const std::string& format, const std::string& method,
              const std::string& out) {
    double lo = 0, hi = 0;
    int n = 0;
    char c1 = 0, c2 = 0;
    std::stringstream ss(range);
    if (!(ss >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':' || n < 1) {
        throw Error(ErrorKind::InvalidInput, "range must look like a:b:n");
    }
    const auto l = load(in);
    const auto rows = wealth_sweep(l.market, l.prefs, l.eps, lo, hi, n, parse_method(method));
    std::ostringstream os;
    if (format == "csv") {
        os << "eps0,ok,c0,dc0,d2c0";
        for (int k = 0; k <= l.market.horizon(); ++k) os << ",U" << k;
        os << "\n";
        for (const auto& r : rows) {
            os << format_number(r.eps0) << ',' << (r.ok ? 1 : 0) << ',';
            if (r.ok) {
                os << format_number(r.c0) << ',' << format_number(r.d1) << ',' << format_number(r.d2);
                for (double u : r.period_U) os << ',' << format_number(u);
            } else {
                os << "nan,nan,nan";
                for (int k = 0; k <= l.market.horizon(); ++k) os << ",nan";
            }
            os << "\n";
        }
    } else {
        Json j = Json::array();
        for (const auto& r : rows) {
            Json row{{"eps0", r.eps0}, {"ok", r.ok}};
            if (r.ok) {
                row["c0"] = r.c0;
                row["dc0"] = r.d1;
                row["d2c0"] = r.d2;
                row["period_U"] = r.period_U;
            } else {
                row["error"] = r.error;
            }
            j.push_back(row);
        }
        os << dump(j);
    }
    emit(out, os.str());
    return kOk;
}

std::vector<double> grid(double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(lo + (hi - lo) * i / (n - 1));
    return g;
}

int repro_linearity(double gamma, double r, const std::string& out) {
    const auto rep = linearity_law_check(gamma, r, grid(0.5, 10.0, 20));
    Json j{{"gamma", rep.gamma}, {"r", rep.r},     {"slope_formula", rep.slope}, {"eps0", rep.eps0},
           {"c0", rep.c0},       {"max_error", rep.max_error}, {"fit_residual", rep.fit_residual},
           {"pass", rep.pass}};
    if (!rep.c0.empty()) j["slope_solver"] = rep.c0.back() / rep.eps0.back();
    emit(out, dump(j));
    return rep.pass ? kOk : kCheck;
}

int repro_51(const std::string& out) {
    const auto rep = counterexample_51(grid(0.5, 10.0, 50), {1.0}, {0.0});
    auto eps3 = counterexample_51({3.0}, {1.0}, {0.0});
    Json j{{"a", rep.a},
           {"b", rep.b},
           {"b_corrected", rep.b_corrected},
           {"eps0", rep.eps0},
           {"c0_solver", rep.c0},
           {"c0_printed", rep.printed},
           {"c0_corrected", rep.corrected},
           {"max_error_printed", rep.max_error_printed},
           {"max_error_corrected", rep.max_error_corrected},
           {"min_second_difference", rep.min_second_difference},
           {"derivative_range", {rep.min_derivative, rep.max_derivative}},
           {"convex", rep.convex},
           {"c0_at_eps0_3", eps3.c0.front()},
           {"printed_closed_form_matches", rep.max_error_printed <= 1e-8},
           {"corrected_closed_form_matches", rep.max_error_corrected <= 1e-8}};
    emit(out, dump(j));
    const bool ok = rep.convex && rep.derivative_in_unit && rep.max_error_printed <= 1e-8;
    return ok ? kOk : kCheck;
}

int repro_31(std::uint64_t seed, const std::string& out) {
    ScenarioSeed s;
    s.seed = seed;
    s.market = MarketFamily::General;
    s.branching = {3, 3};
    s.utility = UtilityKind::Power;
    s.gamma = 2.0;
    s.habit = 0.3;
    s.endowment_after_start = false;
    const auto sc = generate(s);
    const auto market = PricedMarket::prepare(sc.model);
    const auto base = solve_power_no_endowment(market, sc.prefs, 1.0);
    Json j;
    double worst = 0.0;
    bool a_ok = true;
    for (int k = 0; k <= market.horizon(); ++k) a_ok = a_ok && base.A[k].min() > 0.0 && base.A[k].max() <= 1.0 + 1e-12;
    for (double lambda : {0.5, 2.0, 10.0}) {
        auto eps = AdaptedProcess::zeros(market.tree());
        eps[0][0] = lambda;
        const Solution sl = solve_general(market, sc.prefs, eps);
        for (int k = 0; k <= market.horizon(); ++k) {
            for (std::size_t a = 0; a < sl.c[k].size(); ++a) {
                worst = std::max(worst, std::abs(sl.c[k][a] - lambda * base.solution.c[k][a]));
            }
        }
    }
    j["seed"] = seed;
    j["A"] = process_to_json(base.A);
    j["max_homogeneity_error"] = worst;
    j["A_in_unit_interval"] = a_ok;
    j["pass"] = worst <= 1e-8 && a_ok;
    emit(out, dump(j));
    return worst <= 1e-8 && a_ok ? kOk : kCheck;
}

int repro_52(std::uint64_t seed, const std::string& out) {
    ScenarioSeed s;
    s.seed = seed;
    s.market = MarketFamily::Idiosyncratic;
    s.branching = {4, 4};
    s.utility = UtilityKind::Power;
    s.gamma = 3.0;
    s.habit = 0.3;
    const auto sc = generate(s);
    const auto market = PricedMarket::prepare(sc.model);
    const auto cls = classify_market(market.model, market.basis);
    const Solution base = solve_general(market, sc.prefs, sc.eps);
    Json rows = Json::array();
    bool ok = true;
    for (int k = 0; k <= market.horizon(); ++k) {
        for (int a = 0; a < market.tree().atom_count(k); ++a) {
            const auto p = concavity_probe(market, sc.prefs, sc.eps, base, k, a, cls);
            ok = ok && p.pass;
            rows.push_back(probe_json(p));
        }
    }
    emit(out, dump(Json{{"seed", seed}, {"class", to_string(cls.tag)}, {"probes", rows}, {"pass", ok}}));
    return ok ? kOk : kCheck;
}

int cmd_generate(const ScenarioSeed& seed, const std::string& dir) {
    const Scenario sc = generate(seed);
    std::filesystem::create_directories(dir);
    Json header{{"seed", seed.seed},
                {"family", to_string(seed.market)},
                {"branching", seed.branching},
                {"utility", to_string(seed.utility)},
                {"habit", seed.habit},
                {"attempts", sc.attempts}};
    Json model = market_to_json(sc.model);
    model["generator"] = header;
    Json prefs = prefs_to_json(sc.prefs);
    prefs["generator"] = header;
    Json endow = endowment_to_json(sc.eps);
    endow["generator"] = header;
    const std::filesystem::path d(dir);
    write_atomic(d / "model.json", dump(model));
    write_atomic(d / "prefs.json", dump(prefs));
    write_atomic(d / "endow.json", dump(endow));
    std::cout << "wrote " << (d / "model.json").string() << ", prefs.json, endow.json (" << sc.attempts
              << " attempt" << (sc.attempts == 1 ? "" : "s") << ")\n";
    return kOk;
}

UtilityKind parse_utility(const std::string& name) {
    if (name == "power") return UtilityKind::Power;
    if (name == "log") return UtilityKind::Log;
    if (name == "exp" || name == "exponential") return UtilityKind::Exponential;
    throw Error(ErrorKind::InvalidInput, "unknown utility '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Habit-forming utility maximization on finite event trees"};
    app.require_subcommand(1);

    std::string model_path, filtration_path;
    auto* validate = app.add_subcommand("validate", "check no-arbitrage, payoff ranks and market class");
    validate->add_option("--model", model_path, "market JSON")->required()->check(CLI::ExistingFile);
    validate->add_option("--filtration", filtration_path, "candidate sub-filtration JSON");

    Inputs in;
    std::string method = "auto", out;
    auto* solve_cmd = app.add_subcommand("solve", "compute the optimal consumption and investment");
    add_inputs(solve_cmd, in);
    solve_cmd->add_option("--method", method, "auto|newton|oracle|closed")
        ->check(CLI::IsMember({"auto", "newton", "oracle", "closed"}));
    solve_cmd->add_option("--out", out, "solution JSON (stdout if omitted)");

    std::string checks = "foc,monotonicity,eta,concavity,envelope", report, solution_path;
    double tol = 1e-6;
    std::uint64_t verify_seed = 0;
    auto* verify = app.add_subcommand("verify", "numerically verify the structural theorems");
    add_inputs(verify, in);
    verify->add_option("--checks", checks, "comma-separated: monotonicity,eta,concavity,envelope,foc");
    verify->add_option("--tol", tol, "tolerance for eta and concavity probes")->check(CLI::PositiveNumber);
    verify->add_option("--report", report, "report JSON (stdout if omitted)");
    verify->add_option("--solution", solution_path, "verify a stored solution instead of re-solving");
    verify->add_option("--seed", verify_seed, "recorded in the report");

    std::string range, format = "csv";
    auto* sweep = app.add_subcommand("sweep", "optimal c0 and its derivatives across initial endowments");
    add_inputs(sweep, in);
    sweep->add_option("--range", range, "a:b:n")->required();
    sweep->add_option("--emit", format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    sweep->add_option("--method", method, "auto|newton|oracle|closed");
    sweep->add_option("--out", out, "output file (stdout if omitted)");

    std::string scenario;
    double gamma = 1.0, rate = 2.0;
    std::uint64_t repro_seed = 1;
    auto* repro = app.add_subcommand("repro", "built-in scenarios: 3.1, 5.1, 5.2, linearity");
    repro->add_option("scenario", scenario)->required()->check(CLI::IsMember({"3.1", "5.1", "5.2", "linearity"}));
    repro->add_option("--gamma", gamma, "risk aversion (linearity)")->check(CLI::PositiveNumber);
    repro->add_option("--r", rate, "gross bond return (linearity)")->check(CLI::PositiveNumber);
    repro->add_option("--seed", repro_seed, "scenario seed (3.1, 5.2)");
    repro->add_option("--out", out, "report JSON (stdout if omitted)");

    ScenarioSeed gen;
    std::string family = "complete", utility = "power", branching, out_dir = ".";
    bool exo = false, no_later_endowment = false;
    auto* generate_cmd = app.add_subcommand("generate", "write a seeded model/prefs/endowment triple");
    generate_cmd->add_option("--seed", gen.seed, "seed");
    generate_cmd->add_option("--family", family, "complete|bond|typec|idiosyncratic|general")
        ->check(CLI::IsMember({"complete", "bond", "typec", "idiosyncratic", "general"}));
    generate_cmd->add_option("--branching", branching, "children per level, e.g. 2,3 (default by family)");
    generate_cmd->add_option("--utility", utility, "power|log|exp");
    generate_cmd->add_option("--gamma", gen.gamma, "risk aversion");
    generate_cmd->add_option("--habit", gen.habit, "one-lag habit weight")->check(CLI::NonNegativeNumber);
    generate_cmd->add_option("--rho", gen.rho, "impatience");
    generate_cmd->add_flag("--exogenous-habit", exo, "draw a nonzero exogenous habit");
    generate_cmd->add_flag("--no-later-endowment", no_later_endowment, "eps_k = 0 for k >= 1");
    generate_cmd->add_flag("--stochastic-rates", gen.stochastic_rates, "random rates (general family)");
    generate_cmd->add_option("--out-dir", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kValidation;
    }

    try {
        if (*validate) return cmd_validate(model_path, filtration_path);
        if (*solve_cmd) return cmd_solve(in, method, out);
        if (*verify) return cmd_verify(in, checks, tol, report, solution_path, verify_seed);
        if (*sweep) return cmd_sweep(in, range, format, method, out);
        if (*repro) {
            if (scenario == "linearity") return repro_linearity(gamma, rate, out);
            if (scenario == "5.1") return repro_51(out);
            if (scenario == "3.1") return repro_31(repro_seed, out);
            return repro_52(repro_seed, out);
        }
        if (*generate_cmd) {
            gen.market = parse_market_family(family);
            gen.utility = parse_utility(utility);
            gen.exogenous_habit = exo;
            gen.endowment_after_start = !no_later_endowment;
            if (branching.empty()) {
                branching = gen.market == MarketFamily::Idiosyncratic ? "4,4"
                            : gen.market == MarketFamily::General    ? "3,3"
                                                                     : "2,2";
            }
            gen.branching.clear();
            std::stringstream ss(branching);
            for (std::string item; std::getline(ss, item, ',');) gen.branching.push_back(std::stoi(item));
            return cmd_generate(gen, out_dir);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kOk;
}
