#include "habitopt/solvers.hpp"

#include <boost/math/tools/minima.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include "habitopt/error.hpp"
#include "habitopt/lp.hpp"
#include "habitopt/random.hpp"

namespace habitopt {

namespace {

bool is_complete(const PricedMarket& market) {
    for (int k = 1; k <= market.horizon(); ++k) {
        if (market.basis.rank(k) != market.tree().atom_count(k)) return false;
    }
    return true;
}

// Holdings reproducing W_{k+1} on the children of (k, atom); minimum norm when slots are redundant.
Eigen::VectorXd holdings(const PricedMarket& market, int k, int atom, const RandomVariable& next_wealth) {
    const auto& local = market.basis.local(k + 1, atom);
    const auto kids = market.tree().children(k, atom);
    Eigen::VectorXd w(static_cast<Eigen::Index>(kids.size()));
    for (std::size_t j = 0; j < kids.size(); ++j) w(static_cast<Eigen::Index>(j)) = next_wealth[static_cast<std::size_t>(kids[j])];
    return local.generators.completeOrthogonalDecomposition().solve(w);
}

void fill_diagnostics(const PricedMarket& market, const HabitPreferences& prefs, Solution& s) {
    auto& d = s.diagnostics;
    for (int k = 0; k <= s.c.horizon(); ++k) {
        if (s.c[k].min() < 0.0) d.negative_consumption = true;
    }
    try {
        s.R = habit_adjusted_marginal(prefs, s.c);
        s.period_U = period_utilities(prefs, s.c);
        s.U = 0.0;
        for (double v : s.period_U) s.U += v;
    } catch (const Error& e) {
        d.notes.push_back(e.what());
        return;
    }
    try {
        d.foc = foc_residual(market.basis, market.aggregate, prefs, s.c);
    } catch (const Error& e) {
        d.notes.push_back(e.what());
    }
    try {
        const auto mt = perturbed_aggregate_spd(market.aggregate, prefs.beta);
        d.simplified_foc = simplified_foc_residual(market.basis, mt, prefs, s.c);
    } catch (const Error& e) {
        d.notes.push_back(e.what());
    }
}

void fill_portfolio(const PricedMarket& market, Solution& s) {
    const EventTree& tree = market.tree();
    s.pi.assign(static_cast<std::size_t>(tree.horizon()), {});
    for (int k = 0; k < tree.horizon(); ++k) {
        for (int a = 0; a < tree.atom_count(k); ++a) s.pi[static_cast<std::size_t>(k)].push_back(holdings(market, k, a, s.W[k + 1]));
    }
}

struct NewtonResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = false;
};

Eigen::VectorXd newton_direction(const Eigen::MatrixXd& hessian, const Eigen::VectorXd& g) {
    Eigen::MatrixXd n = -hessian;
    const double scale = std::max(1.0, n.diagonal().cwiseAbs().maxCoeff());
    double shift = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
        Eigen::MatrixXd m = n;
        if (shift > 0.0) m.diagonal().array() += shift;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(m);
        const auto& dvec = ldlt.vectorD();
        const bool ok = ldlt.info() == Eigen::Success && dvec.size() > 0 && dvec.minCoeff() > 0.0 &&
                        dvec.minCoeff() > 1e-15 * dvec.maxCoeff();
        if (ok || m.rows() == 0) return ldlt.solve(g);
        shift = shift == 0.0 ? 1e-12 * scale : shift * 100.0;
    }
    return g / scale;
}

NewtonResult run_newton(const PrimalProblem& problem, Eigen::VectorXd x, const SolveOptions& options) {
    NewtonResult out;
    double f = problem.objective(x);
    if (!std::isfinite(f)) throw Error(ErrorKind::Infeasible, "Newton start is outside the utility domain");
    for (int it = 0; it < options.max_iterations; ++it) {
        out.iterations = it + 1;
        const Eigen::VectorXd g = problem.gradient(x);
        out.gradient_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
        if (x.size() == 0) {
            out.converged = true;
            break;
        }
        const Eigen::VectorXd d = newton_direction(problem.hessian(x), g);
        if (out.gradient_norm < options.tolerance) {
            // One last full step: the gradient test is not scale-free, quadratic convergence is.
            const Eigen::VectorXd xn = x + d;
            const double fn = problem.objective(xn);
            if (std::isfinite(fn) && fn >= f - 1e-15 * (1.0 + std::abs(f))) {
                const double gn = problem.gradient(xn).cwiseAbs().maxCoeff();
                if (gn <= out.gradient_norm) {
                    x = xn;
                    out.gradient_norm = gn;
                }
            }
            out.converged = true;
            break;
        }
        const double dec = g.dot(d);
        const double flat = 1e-13 * (1.0 + std::abs(f));
        double t = 1.0;
        bool moved = false;
        while (t > 1e-20) {
            const Eigen::VectorXd xn = x + t * d;
            const double fn = problem.objective(xn);
            if (std::isfinite(fn) && (fn >= f + 1e-4 * t * dec || (t == 1.0 && dec < flat))) {
                x = xn;
                f = fn;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if (dec < 1e-28 * (1.0 + std::abs(f)) * (1.0 + std::abs(f))) {
            out.converged = true;
            out.gradient_norm = problem.gradient(x).cwiseAbs().maxCoeff();
            break;
        }
        if (!moved) {
            // Rounding floor: no representable ascent left.
            out.converged = dec < 1e-10 * (1.0 + std::abs(f));
            break;
        }
    }
    out.x = std::move(x);
    return out;
}

Eigen::VectorXd seeded_start(const PrimalProblem& problem, const Eigen::VectorXd& base, std::uint64_t seed) {
    Rng rng(seed);
    Eigen::VectorXd dir(base.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.uniform(-1.0, 1.0);
    double scale = 0.5 * std::max(1.0, base.cwiseAbs().maxCoeff());
    for (int i = 0; i < 60; ++i) {
        const Eigen::VectorXd x = base + scale * dir;
        if (std::isfinite(problem.objective(x))) return x;
        scale *= 0.5;
    }
    return base;
}

Solution assemble(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                  const PrimalProblem& problem, const Eigen::VectorXd& x) {
    const EventTree& tree = market.tree();
    Solution s;
    s.root = problem.root();
    s.c = AdaptedProcess::zeros(tree);
    s.W = AdaptedProcess::zeros(tree);
    s.I = AdaptedProcess::zeros(tree);
    const Eigen::VectorXd c = problem.consumption(x);
    const Eigen::VectorXd w = problem.wealth(x);
    const Eigen::VectorXd inv = problem.investment(x);
    const auto& root = problem.root();
    for (int i = 0; i < problem.rows(); ++i) {
        const auto& node = problem.nodes()[static_cast<std::size_t>(i)];
        const auto a = static_cast<std::size_t>(node.atom);
        s.c[node.level][a] = c(i);
        s.I[node.level][a] = inv(i);
        s.W[node.level][a] = i == 0 ? root.resources - eps[node.level][a] : w(i);
    }
    for (int l = 0; l < root.level; ++l) {
        s.c[l][static_cast<std::size_t>(tree.ancestor(root.level, root.atom, l))] = root.history[static_cast<std::size_t>(l)];
    }
    s.period_U = problem.period_objective(x);
    s.U = 0.0;
    for (double v : s.period_U) s.U += v;
    (void)prefs;
    return s;
}

}  // namespace

Solution solve_subproblem(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                          int k, int atom, const std::vector<double>& history, double w, const SolveOptions& options) {
    SubtreeRoot root{k, atom, history, k == 0 ? w : eps[k][static_cast<std::size_t>(atom)] + w};
    PrimalProblem problem(market, prefs, eps, root);
    Eigen::VectorXd x = prefs.inada() ? problem.interior_point() : Eigen::VectorXd::Zero(problem.dimension());
    if (options.start_seed != 0) x = seeded_start(problem, x, options.start_seed);
    const auto res = run_newton(problem, x, options);
    Solution s = assemble(market, prefs, eps, problem, res.x);
    s.diagnostics.method = "newton";
    s.diagnostics.iterations = res.iterations;
    s.diagnostics.gradient_norm = res.gradient_norm;
    s.diagnostics.converged = res.converged;
    return s;
}

Solution solve_general(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                       const SolveOptions& options) {
    Solution s = solve_subproblem(market, prefs, eps, 0, 0, {}, eps[0][0], options);
    fill_portfolio(market, s);
    const auto diag = s.diagnostics;
    fill_diagnostics(market, prefs, s);
    if (!diag.converged) {
        s.diagnostics.notes.push_back("NonConvergence: gradient norm " + std::to_string(diag.gradient_norm));
    }
    return s;
}

// ---------------------------------------------------------------------------
// Oracle

int portfolio_dimension(const MarketModel& model) {
    int nodes = 0;
    for (int k = 0; k < model.horizon(); ++k) nodes += model.tree().atom_count(k);
    return nodes * model.slots();
}

namespace {

// c = c0 + A pi over raw holdings; chat likewise. Independent of payoff-space bases and SPDs.
struct RawProblem {
    Eigen::VectorXd c0, chat0, weight;
    Eigen::MatrixXd a, b;
    std::vector<int> period;
    std::vector<PeriodUtility> u;

    double objective(const Eigen::VectorXd& pi) const {
        const Eigen::VectorXd chat = chat0 + b * pi;
        double total = 0.0;
        for (Eigen::Index i = 0; i < chat.size(); ++i) {
            const auto& ui = u[static_cast<std::size_t>(period[static_cast<std::size_t>(i)])];
            if (ui.inada() && !(chat(i) > 0.0)) return -std::numeric_limits<double>::infinity();
            total += weight(i) * ui.value(chat(i));
        }
        return std::isfinite(total) ? total : -std::numeric_limits<double>::infinity();
    }
};

RawProblem raw_problem(const MarketModel& model, const HabitPreferences& prefs, const AdaptedProcess& eps) {
    const EventTree& tree = model.tree();
    const int T = tree.horizon();
    const int slots = model.slots();
    std::vector<int> offset(static_cast<std::size_t>(T + 1), 0);  // first row of each level
    std::vector<int> var_offset(static_cast<std::size_t>(T + 1), 0);
    for (int k = 1; k <= T; ++k) {
        offset[static_cast<std::size_t>(k)] = offset[static_cast<std::size_t>(k - 1)] + tree.atom_count(k - 1);
        var_offset[static_cast<std::size_t>(k)] = var_offset[static_cast<std::size_t>(k - 1)] + slots * tree.atom_count(k - 1);
    }
    const int rows = offset[static_cast<std::size_t>(T)] + tree.atom_count(T);
    const int n = portfolio_dimension(model);
    RawProblem p;
    p.u = prefs.u;
    p.c0.resize(rows);
    p.weight.resize(rows);
    p.a = Eigen::MatrixXd::Zero(rows, n);
    for (int k = 0; k <= T; ++k) {
        for (int a = 0; a < tree.atom_count(k); ++a) {
            const int row = offset[static_cast<std::size_t>(k)] + a;
            p.period.push_back(k);
            p.weight(row) = tree.prob(k, a);
            p.c0(row) = eps[k][static_cast<std::size_t>(a)];
            if (k < T) {
                for (int s = 0; s < slots; ++s) p.a(row, var_offset[static_cast<std::size_t>(k)] + a * slots + s) -= model.price(s, k, a);
            }
            if (k > 0) {
                const int parent = tree.parent(k, a);
                for (int s = 0; s < slots; ++s) {
                    p.a(row, var_offset[static_cast<std::size_t>(k - 1)] + parent * slots + s) += model.payoff(s, k, a);
                }
            }
        }
    }
    p.b = p.a;
    p.chat0 = p.c0;
    for (int k = 0; k <= T; ++k) {
        for (int a = 0; a < tree.atom_count(k); ++a) {
            const int row = offset[static_cast<std::size_t>(k)] + a;
            p.chat0(row) -= prefs.habit(k, a);
            for (int l = 0; l < k; ++l) {
                const double b = prefs.beta(k, l);
                if (b == 0.0) continue;
                const int anc = offset[static_cast<std::size_t>(l)] + tree.ancestor(k, a, l);
                p.chat0(row) -= b * p.c0(anc);
                p.b.row(row) -= b * p.a.row(anc);
            }
        }
    }
    return p;
}

Eigen::VectorXd raw_interior(const RawProblem& p) {
    const int n = static_cast<int>(p.a.cols());
    bool any = false;
    for (const auto& ui : p.u) any = any || ui.inada();
    if (!any) return Eigen::VectorXd::Zero(n);
    lp::Builder lp;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<int> x;
    for (int j = 0; j < n; ++j) x.push_back(lp.add_variable(-inf, 0.0));
    const int t = lp.add_variable(-inf, -1.0);
    lp.add_constraint({{t, 1.0}}, lp::Sense::LessEqual, std::max(1.0, p.chat0.cwiseAbs().maxCoeff()));
    for (Eigen::Index i = 0; i < p.b.rows(); ++i) {
        if (!p.u[static_cast<std::size_t>(p.period[static_cast<std::size_t>(i)])].inada()) continue;
        std::vector<std::pair<int, double>> terms;
        for (int j = 0; j < n; ++j) {
            if (p.b(i, j) != 0.0) terms.push_back({x[static_cast<std::size_t>(j)], p.b(i, j)});
        }
        terms.push_back({t, -1.0});
        lp.add_constraint(std::move(terms), lp::Sense::GreaterEqual, -p.chat0(i));
    }
    const auto res = lp.minimize();
    if (res.status != lp::Status::Optimal || !(res.x(t) > 0.0)) {
        throw Error(ErrorKind::Infeasible, "oracle: no portfolio keeps perturbed consumption positive");
    }
    Eigen::VectorXd out(n);
    for (int j = 0; j < n; ++j) out(j) = res.x(x[static_cast<std::size_t>(j)]);
    return out;
}

// Hooke-Jeeves on a shrinking grid, then Brent line polishes along coordinates and sweep directions.
Eigen::VectorXd coordinate_search(const RawProblem& p, Eigen::VectorXd x, double step) {
    const auto n = x.size();
    double f = p.objective(x);
    auto explore = [&](Eigen::VectorXd& y, double& fy, double s) {
        for (Eigen::Index i = 0; i < n; ++i) {
            for (double sign : {1.0, -1.0}) {
                Eigen::VectorXd z = y;
                z(i) += sign * s;
                const double fz = p.objective(z);
                if (fz > fy) {
                    y = std::move(z);
                    fy = fz;
                    break;
                }
            }
        }
    };
    for (double s = step; s >= 1e-7 * (1.0 - 1e-9); s /= 10.0) {
        for (int guard = 0; guard < 100000; ++guard) {
            Eigen::VectorXd y = x;
            double fy = f;
            explore(y, fy, s);
            if (!(fy > f)) break;
            // Pattern moves while they keep paying off.
            Eigen::VectorXd base = x;
            x = y;
            f = fy;
            for (int pm = 0; pm < 1000; ++pm) {
                Eigen::VectorXd z = x + (x - base);
                double fz = p.objective(z);
                explore(z, fz, s);
                if (!(fz > f)) break;
                base = x;
                x = std::move(z);
                f = fz;
            }
        }
    }

    auto line = [&](const Eigen::VectorXd& dir, double radius) {
        auto g = [&](double t) {
            const double v = p.objective(x + t * dir);
            return std::isfinite(v) ? -v : std::numeric_limits<double>::max();
        };
        const auto r = boost::math::tools::brent_find_minima(g, -radius, radius, 52);
        if (-r.second > f) {
            x += r.first * dir;
            f = -r.second;
        }
    };
    for (int sweep = 0; sweep < 5000; ++sweep) {
        const Eigen::VectorXd before = x;
        const double f_before = f;
        for (Eigen::Index i = 0; i < n; ++i) line(Eigen::VectorXd::Unit(n, i), 1e-5 * std::max(1.0, std::abs(x(i))));
        const Eigen::VectorXd d = x - before;
        if (d.norm() > 0.0) line(d, 4.0);
        if ((x - before).cwiseAbs().maxCoeff() < 1e-14 * std::max(1.0, x.cwiseAbs().maxCoeff()) && f - f_before <= 0.0) break;
    }
    return x;
}

// Finite-difference Newton on function values only: a quadratic model fitted around x.
// Grid search stalls at the rounding floor of f along narrow valleys; the model does not.
Eigen::VectorXd model_polish(const RawProblem& p, Eigen::VectorXd x, double scale) {
    const auto n = x.size();
    if (n == 0) return x;
    auto finite_at = [&](const Eigen::VectorXd& y) { return std::isfinite(p.objective(y)); };
    auto gradient = [&](const Eigen::VectorXd& y, double h) {
        // Richardson-extrapolated central differences, O(h^4).
        Eigen::VectorXd g(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd e = Eigen::VectorXd::Unit(n, i);
            const double d1 = (p.objective(y + h * e) - p.objective(y - h * e)) / (2 * h);
            const double d2 = (p.objective(y + 0.5 * h * e) - p.objective(y - 0.5 * h * e)) / h;
            g(i) = (4 * d2 - d1) / 3;
        }
        return g;
    };
    auto hessian = [&](const Eigen::VectorXd& y, double h) {
        Eigen::MatrixXd H(n, n);
        const double f0 = p.objective(y);
        for (Eigen::Index i = 0; i < n; ++i) {
            const Eigen::VectorXd ei = h * Eigen::VectorXd::Unit(n, i);
            H(i, i) = (p.objective(y + ei) - 2 * f0 + p.objective(y - ei)) / (h * h);
            for (Eigen::Index j = 0; j < i; ++j) {
                const Eigen::VectorXd ej = h * Eigen::VectorXd::Unit(n, j);
                H(i, j) = H(j, i) = (p.objective(y + ei + ej) - p.objective(y + ei - ej) - p.objective(y - ei + ej) +
                                     p.objective(y - ei - ej)) /
                                    (4 * h * h);
            }
        }
        return H;
    };
    double h = 1e-4 * scale;
    // Stay inside the utility domain with every stencil point.
    for (int i = 0; i < 40; ++i) {
        bool ok = true;
        for (Eigen::Index j = 0; j < n && ok; ++j) {
            const Eigen::VectorXd e = h * Eigen::VectorXd::Unit(n, j);
            ok = finite_at(x + 2 * e) && finite_at(x - 2 * e);
        }
        if (ok) break;
        h *= 0.5;
    }
    Eigen::VectorXd g = gradient(x, h);
    for (int it = 0; it < 20 && g.allFinite(); ++it) {
        const Eigen::MatrixXd H = hessian(x, h);
        if (!H.allFinite()) break;
        // Pseudo-inverse: redundant securities leave exact null directions that differencing turns into noise.
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-0.5 * (H + H.transpose()));
        const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
        Eigen::VectorXd coef = eig.eigenvectors().transpose() * g;
        for (Eigen::Index i = 0; i < n; ++i) {
            const double lam = eig.eigenvalues()(i);
            coef(i) = lam > 1e-8 * top ? coef(i) / lam : 0.0;
        }
        const Eigen::VectorXd d = eig.eigenvectors() * coef;
        if (!d.allFinite()) break;
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
            const Eigen::VectorXd xn = x + t * d;
            if (!finite_at(xn)) continue;
            const Eigen::VectorXd gn = gradient(xn, h);
            if (gn.allFinite() && gn.norm() < g.norm()) {
                x = xn;
                g = gn;
                moved = true;
                break;
            }
        }
        if (!moved || t * d.norm() < 1e-15 * std::max(1.0, x.norm())) break;
    }
    return x;
}

}  // namespace

Solution solve_primal_oracle(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps) {
    const int dim = portfolio_dimension(market.model);
    if (dim > 6) {
        throw Error(ErrorKind::InstanceTooLarge, "oracle portfolio dimension " + std::to_string(dim) + " exceeds 6");
    }
    const RawProblem p = raw_problem(market.model, prefs, eps);
    const Eigen::VectorXd start = raw_interior(p);
    double scale = 1.0;
    for (int k = 0; k <= eps.horizon(); ++k) scale = std::max(scale, std::abs(eps[k].max()));
    Eigen::VectorXd best;
    double best_f = -std::numeric_limits<double>::infinity();
    Rng rng(0x5eedULL);
    for (int seed = 0; seed < 3; ++seed) {
        Eigen::VectorXd x0 = start;
        if (seed > 0) {
            Eigen::VectorXd dir(start.size());
            for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = rng.uniform(-1.0, 1.0);
            double r = 0.5 * scale;
            while (r > 1e-12 && !std::isfinite(p.objective(start + r * dir))) r *= 0.5;
            x0 = start + r * dir;
        }
        const Eigen::VectorXd x = model_polish(p, coordinate_search(p, x0, scale), scale);
        const double f = p.objective(x);
        if (f > best_f) {
            best_f = f;
            best = x;
        }
    }
    // Consumption from the raw holdings; the rest of the solution follows from c.
    const EventTree& tree = market.tree();
    const Eigen::VectorXd cv = p.c0 + p.a * best;
    auto c = AdaptedProcess::zeros(tree);
    int row = 0;
    for (int k = 0; k <= tree.horizon(); ++k) {
        for (int a = 0; a < tree.atom_count(k); ++a) c[k][static_cast<std::size_t>(a)] = cv(row++);
    }
    Solution s = complete_solution(market, prefs, eps, std::move(c), "oracle");
    // Keep the oracle's own holdings.
    int var = 0;
    for (int k = 0; k < tree.horizon(); ++k) {
        for (int a = 0; a < tree.atom_count(k); ++a) {
            s.pi[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)] = best.segment(var, market.model.slots());
            var += market.model.slots();
        }
    }
    return s;
}

// ---------------------------------------------------------------------------

Solution complete_solution(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                           AdaptedProcess c, std::string method) {
    Solution s;
    s.c = std::move(c);
    s.W = consumption_to_wealth(market.aggregate, s.c, eps);
    const double gap = s.W[0][0];
    s.W[0] = RandomVariable::constant(market.tree(), 0, 0.0);
    std::vector<RandomVariable> inv;
    for (int k = 0; k <= s.c.horizon(); ++k) inv.push_back(eps[k] + s.W[k] - s.c[k]);
    s.I = AdaptedProcess(std::move(inv));
    s.diagnostics.method = std::move(method);
    s.diagnostics.iterations = 0;
    if (std::abs(gap) > 1e-9) s.diagnostics.notes.push_back("budget gap " + std::to_string(gap));
    fill_portfolio(market, s);
    fill_diagnostics(market, prefs, s);
    return s;
}

PowerNoEndowment solve_power_no_endowment(const PricedMarket& market, const HabitPreferences& prefs, double eps0) {
    if (prefs.family != UtilityKind::Power && prefs.family != UtilityKind::Log) {
        throw Error(ErrorKind::WrongUtilityFamily, "power utility required");
    }
    if (!prefs.uniform_gamma()) throw Error(ErrorKind::WrongUtilityFamily, "uniform gamma required");
    if (!prefs.h.empty()) {
        for (int k = 0; k <= prefs.horizon(); ++k) {
            if (prefs.h[k].max() != 0.0 || prefs.h[k].min() != 0.0) {
                throw Error(ErrorKind::PreconditionViolated, "exogenous habits must vanish");
            }
        }
    }
    if (!(eps0 > 0.0)) throw Error(ErrorKind::PreconditionViolated, "eps0 must be positive");
    const EventTree& tree = market.tree();
    auto unit = AdaptedProcess::zeros(tree);
    unit[0][0] = 1.0;
    Solution one = solve_general(market, prefs, unit);
    std::vector<RandomVariable> c;
    std::vector<RandomVariable> a;
    for (int k = 0; k <= tree.horizon(); ++k) {
        c.push_back(eps0 * one.c[k]);
        // Wealth before consumption is c_k + price of next-period wealth.
        const RandomVariable total = one.c[k] + one.I[k];
        a.push_back(one.c[k] / total);
    }
    auto eps = AdaptedProcess::zeros(tree);
    eps[0][0] = eps0;
    Solution s = complete_solution(market, prefs, eps, AdaptedProcess(std::move(c)), "power-no-endowment");
    s.diagnostics.iterations = one.diagnostics.iterations;
    return {std::move(s), AdaptedProcess(std::move(a))};
}

namespace {

double log_expectation_exp(const RandomVariable& z, const RandomVariable& weight, int level, std::size_t atom) {
    const EventTree& tree = z.tree();
    const int k = z.level();
    double zmax = -std::numeric_limits<double>::infinity();
    for (int leaf : tree.leaves(level, static_cast<int>(atom))) {
        zmax = std::max(zmax, z[static_cast<std::size_t>(tree.atom_of_leaf(k, leaf))]);
    }
    double acc = 0.0;
    for (int leaf : tree.leaves(level, static_cast<int>(atom))) {
        const auto a = static_cast<std::size_t>(tree.atom_of_leaf(k, leaf));
        acc += tree.leaf_probs()[static_cast<std::size_t>(leaf)] * std::exp(z[a] - zmax) * weight.value_at(k, static_cast<int>(a));
    }
    return zmax + std::log(acc / tree.prob(level, static_cast<int>(atom)));
}

}  // namespace

ExponentialSolution solve_exponential_bonds(const PricedMarket& market, const HabitPreferences& prefs,
                                            const AdaptedProcess& eps) {
    const MarketModel& model = market.model;
    if (!model.bond_only()) throw Error(ErrorKind::WrongMarketClass, "bond-only market required");
    if (!model.deterministic_rates()) throw Error(ErrorKind::WrongMarketClass, "deterministic rates required");
    if (prefs.family != UtilityKind::Exponential) throw Error(ErrorKind::WrongUtilityFamily, "exponential utility required");
    for (double g : prefs.gammas) {
        if (g != prefs.gammas.front()) throw Error(ErrorKind::WrongUtilityFamily, "uniform gamma required");
    }
    double beta = 0.0;
    if (!prefs.beta.is_zero() && !prefs.beta.is_one_lag(&beta)) {
        throw Error(ErrorKind::PreconditionViolated, "one-lag homogeneous habits required");
    }
    const EventTree& tree = market.tree();
    const int T = tree.horizon();
    const double gamma = prefs.gammas.front();
    const auto mt = perturbed_aggregate_spd(market.aggregate, prefs.beta);
    auto h = [&](int k) { return prefs.h.empty() ? RandomVariable::constant(tree, k, 0.0) : prefs.h[k]; };

    ExponentialCoefficients co;
    const auto size = static_cast<std::size_t>(T + 1);
    co.l.assign(size, 0.0);
    co.m.assign(size, 0.0);
    co.lp.assign(size, 0.0);
    co.mp.assign(size, 0.0);
    co.n.assign(size, {});
    co.np.assign(size, {});
    co.X.assign(size, {});
    co.l[size - 1] = 1.0;
    co.n[size - 1] = eps[T];
    for (int k = T; k >= 1; --k) {
        const auto ks = static_cast<std::size_t>(k);
        co.X[ks] = std::exp(-prefs.rho) * (mt[k - 1] / mt[k]);
        const RandomVariable z = gamma * (h(k) - co.n[ks]);
        RandomVariable logm = RandomVariable::constant(tree, k - 1, 0.0);
        for (std::size_t a = 0; a < logm.size(); ++a) logm[a] = log_expectation_exp(z, co.X[ks], k - 1, a);
        co.lp[ks] = (1.0 + beta - co.m[ks]) / co.l[ks];
        co.mp[ks] = k == 1 ? 0.0 : -beta / co.l[ks];
        co.np[ks] = (1.0 / (gamma * co.l[ks])) * (logm - gamma * h(k - 1));
        const double q = 1.0 / (1.0 + model.rate(k)[0]);
        co.l[ks - 1] = 1.0 / (1.0 + q * co.lp[ks]);
        co.m[ks - 1] = -q * co.mp[ks] * co.l[ks - 1];
        co.n[ks - 1] = co.l[ks - 1] * (eps[k - 1] - q * co.np[ks]);
    }
    std::vector<std::string> notes;
    for (int k = 0; k <= T; ++k) {
        const double l = co.l[static_cast<std::size_t>(k)];
        if (!(l > 0.0 && l <= 1.0)) {
            throw Error(ErrorKind::NonConvergence, "l_" + std::to_string(k) + " = " + std::to_string(l) + " outside (0,1]");
        }
        if (k < T && l == 1.0) notes.push_back("l_" + std::to_string(k) + " = 1 before the horizon");
    }

    std::vector<RandomVariable> c{co.n[0]};
    for (int k = 1; k <= T; ++k) {
        const auto ks = static_cast<std::size_t>(k);
        RandomVariable w = co.lp[ks] * c[ks - 1] + co.np[ks];
        if (k >= 2) w = w + co.mp[ks] * c[ks - 2];
        c.push_back(co.l[ks] * w + co.m[ks] * c[ks - 1] + co.n[ks]);
    }
    Solution s = complete_solution(market, prefs, eps, AdaptedProcess(std::move(c)), "exponential-bonds");
    for (auto& note : notes) s.diagnostics.notes.push_back(std::move(note));
    return {std::move(s), std::move(co)};
}

namespace {

// Increasing budget map in c0: bracket from a tiny value, double the upper end, then bisect.
template <typename Gap>
double solve_budget(Gap&& gap, double upper_guess) {
    double lo = 1e-12;
    const double glo = gap(lo);
    if (glo > 0.0) throw Error(ErrorKind::BracketFailure, "budget exceeded at the smallest admissible c0");
    double hi = std::max(2e-12, upper_guess);
    int doublings = 0;
    while (gap(hi) < 0.0) {
        lo = hi;
        hi *= 2.0;
        if (++doublings > 60) throw Error(ErrorKind::BracketFailure, "budget gap did not change sign");
    }
    for (int it = 0; it < 400 && hi - lo > 1e-16 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (gap(mid) < 0.0 ? lo : hi) = mid;
    }
    const double glo2 = gap(lo);
    const double ghi = gap(hi);
    return std::abs(glo2) < std::abs(ghi) ? lo : hi;
}

double budget_value(const PricedMarket& market, const AdaptedProcess& x) {
    double total = 0.0;
    for (int k = 0; k <= x.horizon(); ++k) total += expectation(market.aggregate[k] * x[k]);
    return total;
}

void require_complete(const PricedMarket& market) {
    if (!is_complete(market)) throw Error(ErrorKind::WrongMarketClass, "complete market required");
}

}  // namespace

Solution solve_complete_general(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps) {
    require_complete(market);
    for (const auto& u : prefs.u) {
        if (!u.inada()) throw Error(ErrorKind::WrongUtilityFamily, "Inada utilities required");
    }
    const EventTree& tree = market.tree();
    const int T = tree.horizon();
    const auto mt = perturbed_aggregate_spd(market.aggregate, prefs.beta);
    auto h = [&](int k) { return prefs.h.empty() ? RandomVariable::constant(tree, k, 0.0) : prefs.h[k]; };

    auto stream = [&](double c0) {
        std::vector<RandomVariable> c{RandomVariable::constant(tree, 0, c0)};
        const double mu0 = prefs.u[0].d1(c0);
        for (int k = 1; k <= T; ++k) {
            const auto& u = prefs.u[static_cast<std::size_t>(k)];
            const RandomVariable ratio = mt[k] / mt[0];
            RandomVariable ck = ratio.map([&](double r) { return u.inverse_d1(mu0 * r); }) + h(k);
            for (int l = 0; l < k; ++l) {
                const double b = prefs.beta(k, l);
                if (b != 0.0) ck = ck + b * c[static_cast<std::size_t>(l)];
            }
            c.push_back(std::move(ck));
        }
        return AdaptedProcess(std::move(c));
    };
    const double wealth = budget_value(market, eps);
    const double c0 = solve_budget([&](double x) { return budget_value(market, stream(x)) - wealth; },
                                   wealth / mt[0][0]);
    return complete_solution(market, prefs, eps, stream(c0), "complete-general");
}

CompletePowerSolution solve_complete_power(const PricedMarket& market, const HabitPreferences& prefs,
                                           const AdaptedProcess& eps) {
    require_complete(market);
    if (prefs.family != UtilityKind::Power && prefs.family != UtilityKind::Log) {
        throw Error(ErrorKind::WrongUtilityFamily, "power utility required");
    }
    const EventTree& tree = market.tree();
    const int T = tree.horizon();
    const auto size = static_cast<std::size_t>(T + 1);
    const auto& m = market.aggregate;
    const auto mt = perturbed_aggregate_spd(m, prefs.beta);
    const auto& g = prefs.gammas;
    auto h = [&](int k) { return prefs.h.empty() ? RandomVariable::constant(tree, k, 0.0) : prefs.h[k]; };

    CompletePowerCoefficients co;
    co.delta.assign(size, std::vector<double>(size, 0.0));
    for (std::size_t i = 0; i < size; ++i) {
        co.delta[i][i] = 1.0;
        for (std::size_t k = i + 1; k < size; ++k) {
            double acc = 0.0;
            for (std::size_t j = i; j < k; ++j) acc += prefs.beta(static_cast<int>(k), static_cast<int>(j)) * co.delta[i][j];
            co.delta[i][k] = acc;
        }
    }
    co.D.assign(size, std::vector<RandomVariable>(size));
    co.F.assign(size, std::vector<RandomVariable>(size));
    for (std::size_t i = 0; i < size; ++i) {
        const int ii = static_cast<int>(i);
        const RandomVariable ki = (mt[ii] / mt[0]).map([&](double r) {
            return std::exp(-prefs.rho * ii / g[i]) * std::pow(r, -1.0 / g[i]);
        });
        for (std::size_t k = 0; k < size; ++k) {
            const int kk = static_cast<int>(k);
            co.D[i][k] = k < i ? RandomVariable::constant(tree, kk, 0.0) : (co.delta[i][k] * ki).lifted(kk);
        }
        for (std::size_t k = 0; k < size; ++k) {
            const int kk = static_cast<int>(k);
            RandomVariable acc = RandomVariable::constant(tree, kk, 0.0);
            for (std::size_t j = std::max(i, k); j < size; ++j) {
                acc = acc + condexp(m[static_cast<int>(j)] * co.D[i][j], kk) / m[kk];
            }
            co.F[i][k] = std::move(acc);
        }
    }
    // Habit-only part of consumption: sum_i delta^{(i)}_k h_i.
    std::vector<RandomVariable> habit_part;
    for (std::size_t k = 0; k < size; ++k) {
        RandomVariable acc = RandomVariable::constant(tree, static_cast<int>(k), 0.0);
        for (std::size_t i = 0; i <= k; ++i) acc = acc + co.delta[i][k] * h(static_cast<int>(i));
        habit_part.push_back(std::move(acc));
    }
    const double target = budget_value(market, eps) - budget_value(market, AdaptedProcess(habit_part));
    auto budget = [&](double c0) {
        double total = 0.0;
        for (std::size_t i = 0; i < size; ++i) total += co.F[i][0][0] * std::pow(c0, g[0] / g[i]);
        return total;
    };
    double c0 = 0.0;
    if (prefs.uniform_gamma()) {
        double slope = 0.0;
        for (std::size_t i = 0; i < size; ++i) slope += co.F[i][0][0];
        c0 = target / slope;
        if (!(c0 > 0.0)) throw Error(ErrorKind::BracketFailure, "budget does not cover the habit floor");
    } else {
        c0 = solve_budget([&](double x) { return budget(x) - target; }, target / mt[0][0]);
    }
    co.c0 = c0;
    std::vector<RandomVariable> c;
    for (std::size_t k = 0; k < size; ++k) {
        RandomVariable ck = habit_part[k];
        for (std::size_t i = 0; i <= k; ++i) ck = ck + std::pow(c0, g[0] / g[i]) * co.D[i][k];
        c.push_back(std::move(ck));
    }
    Solution s = complete_solution(market, prefs, eps, AdaptedProcess(std::move(c)), "complete-power");
    return {std::move(s), std::move(co)};
}

Method parse_method(const std::string& name) {
    if (name == "auto") return Method::Auto;
    if (name == "newton") return Method::Newton;
    if (name == "oracle") return Method::Oracle;
    if (name == "closed") return Method::Closed;
    throw Error(ErrorKind::InvalidInput, "unknown method '" + name + "'");
}

Solution solve(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps, Method method) {
    if (method == Method::Newton) return solve_general(market, prefs, eps);
    if (method == Method::Oracle) return solve_primal_oracle(market, prefs, eps);
    const bool complete = is_complete(market);
    const bool power = prefs.family == UtilityKind::Power || prefs.family == UtilityKind::Log;
    if (complete && power) return solve_complete_power(market, prefs, eps).solution;
    if (complete && prefs.inada()) return solve_complete_general(market, prefs, eps);
    if (market.model.bond_only() && prefs.family == UtilityKind::Exponential && market.model.deterministic_rates() &&
        (prefs.beta.is_zero() || prefs.beta.is_one_lag())) {
        return solve_exponential_bonds(market, prefs, eps).solution;
    }
    if (method == Method::Closed) throw Error(ErrorKind::WrongMarketClass, "no closed form applies to this instance");
    return solve_general(market, prefs, eps);
}

}  // namespace habitopt
