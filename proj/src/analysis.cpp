#include "habitopt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "habitopt/error.hpp"
#include "habitopt/parallel.hpp"

namespace habitopt {

double default_step(double w) { return std::max(1e-4, 1e-4 * std::abs(w)); }

std::vector<double> history_at(const Solution& s, int k, int atom) {
    const EventTree& tree = s.c[0].tree();
    std::vector<double> h;
    for (int l = 0; l < k; ++l) h.push_back(s.c[l][static_cast<std::size_t>(tree.ancestor(k, atom, l))]);
    return h;
}

double monotonicity_bound(const PricedMarket& market, const HabitWeights& beta, int k, int atom) {
    const auto& m = market.aggregate;
    double denom = 1.0;
    for (int j = k + 1; j <= market.horizon(); ++j) {
        const double chain = beta.chain(k, j);
        if (chain == 0.0) continue;
        denom += chain * condexp(m[j], k)[static_cast<std::size_t>(atom)] / m[k][static_cast<std::size_t>(atom)];
    }
    return 1.0 / denom;
}

bool monotonicity_in_scope(const PricedMarket& market, const MarketClass& cls) {
    return market.model.deterministic_rates() || cls.tag == MarketTag::Idiosyncratic || cls.tag == MarketTag::Complete;
}

bool typec_or_idiosyncratic(const PricedMarket& market, const MarketClass& cls) {
    switch (cls.tag) {
    case MarketTag::Complete:
    case MarketTag::Idiosyncratic: return true;
    case MarketTag::TypeC: return market.model.deterministic_rates();
    case MarketTag::General: return false;
    }
    return false;
}

namespace {

double base_wealth(const Solution& base, const AdaptedProcess& eps, int k, int atom) {
    return k == 0 ? eps[0][0] : base.W[k][static_cast<std::size_t>(atom)];
}

struct Psi {
    const PricedMarket& market;
    const HabitPreferences& prefs;
    const AdaptedProcess& eps;
    int k;
    int atom;
    std::vector<double> history;

    Solution solve(double w) const { return solve_subproblem(market, prefs, eps, k, atom, history, w); }
    double operator()(double w) const { return solve(w).c[k][static_cast<std::size_t>(atom)]; }
};

void fill_differences(PolicyProbe& p, const Psi& psi) {
    const double d = p.step;
    const double up = psi(p.w + d);
    const double dn = psi(p.w - d);
    const double up2 = psi(p.w + 0.5 * d);
    const double dn2 = psi(p.w - 0.5 * d);
    p.derivative = (up - dn) / (2.0 * d);
    p.derivative_half = (up2 - dn2) / d;
    p.second_difference = up - 2.0 * p.c + dn;
    p.second_derivative = p.second_difference / (d * d);
    const double spread = std::abs(p.derivative - p.derivative_half);
    p.reliable = spread <= 0.1 * std::max(std::abs(p.derivative), 1e-12);
}

}  // namespace

PolicyProbe monotonicity_probe(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                               const Solution& base, int k, int atom, std::optional<double> step, double tolerance) {
    PolicyProbe p;
    p.k = k;
    p.atom = atom;
    p.w = base_wealth(base, eps, k, atom);
    p.step = step.value_or(default_step(p.w));
    p.tolerance = tolerance;
    const Psi psi{market, prefs, eps, k, atom, history_at(base, k, atom)};
    p.c = psi(p.w);
    fill_differences(p, psi);
    p.bound = monotonicity_bound(market, prefs.beta, k, atom);
    p.in_scope = monotonicity_in_scope(market, classify_market(market.model, market.basis));
    if (!p.in_scope) p.note = "out of theorem scope";
    if (!p.reliable) p.note += p.note.empty() ? "unreliable step" : "; unreliable step";
    p.pass = p.derivative > 0.0 && p.derivative <= p.bound + tolerance;
    return p;
}

std::vector<EtaProbe> eta_bound_check(const PricedMarket& market, const HabitPreferences& prefs,
                                      const AdaptedProcess& eps, const Solution& base, int k, const MarketClass& cls,
                                      double tolerance) {
    const EventTree& tree = market.tree();
    const int T = tree.horizon();
    if (k < 0 || k >= T) throw Error(ErrorKind::InvalidInput, "eta probes need 0 <= k < T");
    const auto& m = market.aggregate;
    const bool in_scope = typec_or_idiosyncratic(market, cls);
    const auto chat = perturbed_consumption(prefs, base.c).chat;
    const auto mt = perturbed_aggregate_spd(m, prefs.beta);
    std::optional<RandomVariable> analytic;
    if (k == T - 1) {
        const auto& ut = prefs.u[static_cast<std::size_t>(T)];
        const auto& uk = prefs.u[static_cast<std::size_t>(T - 1)];
        const RandomVariable proj = market.basis.project(T, chat[T].map([&](double x) { return ut.d2(x); }));
        analytic = mt[T] / mt[T - 1] * chat[T - 1].map([&](double x) { return uk.d2(x); }) / proj + prefs.beta(T, T - 1);
    }

    std::vector<std::vector<EtaProbe>> per_atom(static_cast<std::size_t>(tree.atom_count(k)));
    parallel_for(per_atom.size(), [&](std::size_t ai) {
        const int atom = static_cast<int>(ai);
        const Psi psi{market, prefs, eps, k, atom, history_at(base, k, atom)};
        const double w0 = base_wealth(base, eps, k, atom);
        const double c0 = base.c[k][ai];
        const double hw = default_step(w0);
        const double slope = (psi(w0 + hw) - psi(w0 - hw)) / (2.0 * hw);
        const double dc = default_step(c0);
        // Wealth at k that makes the optimal c_k equal the target, then the resulting W_{k+1}.
        auto next_wealth = [&](double target) {
            double x0 = w0;
            double f0 = c0 - target;
            double x1 = w0 + (target - c0) / slope;
            Solution s1 = psi.solve(x1);
            double f1 = s1.c[k][ai] - target;
            for (int it = 0; it < 50 && std::abs(f1) > 1e-15 * std::max(1.0, std::abs(target)); ++it) {
                if (f1 == f0) break;
                const double x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
                x0 = x1;
                f0 = f1;
                x1 = x2;
                s1 = psi.solve(x1);
                f1 = s1.c[k][ai] - target;
            }
            return s1.W[k + 1];
        };
        const RandomVariable up = next_wealth(c0 + dc);
        const RandomVariable dn = next_wealth(c0 - dc);
        for (int child : tree.children(k, atom)) {
            const auto cs = static_cast<std::size_t>(child);
            EtaProbe e;
            e.k = k;
            e.atom = atom;
            e.child = child;
            e.estimate = (up[cs] - dn[cs]) / (2.0 * dc);
            double bound = 0.0;
            for (int j = k + 1; j <= T; ++j) {
                const double chain = prefs.beta.chain(k, j);
                if (chain != 0.0) bound += chain * condexp(m[j], k + 1)[cs] / m[k + 1][cs];
            }
            e.bound = bound;
            e.tolerance = tolerance * std::max(1.0, std::abs(bound));
            if (analytic) e.analytic = (*analytic)[cs];
            e.in_scope = in_scope;
            e.pass = e.estimate >= e.bound - e.tolerance;
            per_atom[ai].push_back(e);
        }
    });
    std::vector<EtaProbe> out;
    for (auto& v : per_atom) out.insert(out.end(), v.begin(), v.end());
    return out;
}

PolicyProbe concavity_probe(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                            const Solution& base, int k, int atom, const MarketClass& cls, std::optional<double> step,
                            double tolerance) {
    PolicyProbe p;
    p.k = k;
    p.atom = atom;
    p.w = base_wealth(base, eps, k, atom);
    p.step = step.value_or(default_step(p.w));
    const Psi psi{market, prefs, eps, k, atom, history_at(base, k, atom)};
    p.c = psi(p.w);
    fill_differences(p, psi);
    p.tolerance = tolerance * std::max(1.0, std::abs(p.c));
    p.bound = 0.0;
    const bool power = (prefs.family == UtilityKind::Power || prefs.family == UtilityKind::Log) && prefs.uniform_gamma();
    p.in_scope = power && typec_or_idiosyncratic(market, cls);
    if (!power) p.note = "utility outside the power family";
    else if (!p.in_scope) p.note = "market outside theorem scope";
    p.pass = p.second_difference <= p.tolerance;
    return p;
}

EnvelopeReport envelope_check(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                              double tolerance) {
    EnvelopeReport r;
    r.eps0 = eps[0][0];
    r.step = default_step(r.eps0);
    auto value = [&](double e0) {
        AdaptedProcess e = eps;
        e[0] = RandomVariable::constant(market.tree(), 0, e0);
        return solve_general(market, prefs, e);
    };
    const Solution base = value(r.eps0);
    r.marginal = base.R[0][0];
    r.derivative = (value(r.eps0 + r.step).U - value(r.eps0 - r.step).U) / (2.0 * r.step);
    r.residual = std::abs(r.derivative - r.marginal);
    r.scale = std::max(1.0, std::abs(r.marginal));
    r.pass = r.residual < tolerance * r.scale;
    return r;
}

LinearityReport linearity_law_check(double gamma, double r, const std::vector<double>& eps0_grid, double tolerance) {
    LinearityReport rep;
    rep.gamma = gamma;
    rep.r = r;
    const double g = std::pow(r, 1.0 - 1.0 / gamma);
    rep.slope = g / (1.0 + g);
    const EventTree tree = EventTree::uniform({1});
    const auto market = PricedMarket::prepare(MarketModel::bonds_only(tree, std::vector<double>{r - 1.0}));
    const auto prefs = HabitPreferences::power(1, gamma, 0.0, HabitWeights::none(1));
    for (double e0 : eps0_grid) {
        auto eps = AdaptedProcess::zeros(tree);
        eps[0][0] = e0;
        const Solution s = solve_general(market, prefs, eps);
        rep.eps0.push_back(e0);
        rep.c0.push_back(s.c[0][0]);
        rep.max_error = std::max(rep.max_error, std::abs(s.c[0][0] - rep.slope * e0));
    }
    // Least-squares line through (eps0, c0).
    const auto n = static_cast<double>(rep.eps0.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < rep.eps0.size(); ++i) {
        sx += rep.eps0[i];
        sy += rep.c0[i];
        sxx += rep.eps0[i] * rep.eps0[i];
        sxy += rep.eps0[i] * rep.c0[i];
    }
    const double det = n * sxx - sx * sx;
    if (det != 0.0) {
        const double a = (n * sxy - sx * sy) / det;
        const double b = (sy - a * sx) / n;
        for (std::size_t i = 0; i < rep.eps0.size(); ++i) {
            rep.fit_residual = std::max(rep.fit_residual, std::abs(rep.c0[i] - a * rep.eps0[i] - b));
        }
    }
    rep.pass = rep.max_error <= tolerance && rep.fit_residual <= tolerance;
    return rep;
}

Counterexample51Report counterexample_51(const std::vector<double>& eps0_grid, const std::vector<double>& m1,
                                         const std::vector<double>& eps1, std::vector<double> probs) {
    const std::size_t n = m1.size();
    if (n == 0 || eps1.size() != n) throw Error(ErrorKind::InvalidInput, "M1 and eps1 need one value per state");
    if (probs.empty()) probs.assign(n, 1.0 / static_cast<double>(n));
    const EventTree tree = EventTree::from_conditional({{probs}});
    std::vector<double> m(m1);
    double em = 0.0;
    for (std::size_t i = 0; i < n; ++i) em += probs[i] * m[i];
    for (double& v : m) v /= em;

    MarketData data;
    data.tree = tree;
    data.assets = static_cast<int>(n);
    for (std::size_t i = 0; i < n; ++i) {
        AdaptedProcess price = AdaptedProcess::zeros(tree);
        price[0][0] = probs[i] * m[i];
        AdaptedProcess div = AdaptedProcess::zeros(tree);
        div[1] = RandomVariable::indicator(tree, 1, static_cast<int>(i));
        data.prices.push_back(std::move(price));
        data.dividends.push_back(std::move(div));
    }
    data.rates = {RandomVariable::constant(tree, 0, 0.0), RandomVariable::constant(tree, 0, 0.0)};
    const auto market = PricedMarket::prepare(MarketModel::create(std::move(data)));
    const auto prefs = HabitPreferences::power(1, std::vector<double>{1.0, 2.0}, 0.0, HabitWeights::one_lag(1, 1.0));

    Counterexample51Report rep;
    double e_sqrt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rep.b += probs[i] * m[i] * std::sqrt(m[i]);
        rep.c += probs[i] * m[i] * eps1[i];
        e_sqrt += probs[i] * std::sqrt(m[i]);
    }
    rep.a = 2.0;  // 1 + E[M1]
    rep.b_corrected = std::sqrt(rep.a) * e_sqrt;
    auto closed = [&](double e0, double b) {
        const double root = (std::sqrt(4.0 * rep.a * e0 + 4.0 * rep.a * rep.c + b * b) - b) / (2.0 * rep.a);
        return root * root;
    };
    rep.eps0 = eps0_grid;
    rep.c0.assign(eps0_grid.size(), 0.0);
    rep.c1_gap_printed.assign(eps0_grid.size(), 0.0);
    parallel_for(eps0_grid.size(), [&](std::size_t g) {
        auto eps = AdaptedProcess::zeros(tree);
        eps[0][0] = eps0_grid[g];
        for (std::size_t i = 0; i < n; ++i) eps[1][i] = eps1[i];
        const Solution s = solve_general(market, prefs, eps);
        rep.c0[g] = s.c[0][0];
        double gap = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            gap = std::max(gap, std::abs(s.c[1][i] - s.c[0][0] - std::sqrt(s.c[0][0] * m[i])));
        }
        rep.c1_gap_printed[g] = gap;
    });
    for (std::size_t g = 0; g < eps0_grid.size(); ++g) {
        rep.printed.push_back(closed(eps0_grid[g], rep.b));
        rep.corrected.push_back(closed(eps0_grid[g], rep.b_corrected));
        rep.max_error_printed = std::max(rep.max_error_printed, std::abs(rep.c0[g] - rep.printed[g]));
        rep.max_error_corrected = std::max(rep.max_error_corrected, std::abs(rep.c0[g] - rep.corrected[g]));
    }
    rep.min_second_difference = std::numeric_limits<double>::infinity();
    rep.min_derivative = std::numeric_limits<double>::infinity();
    rep.max_derivative = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 1; g + 1 < eps0_grid.size(); ++g) {
        // Divided second difference, valid on non-uniform grids.
        const double h1 = eps0_grid[g] - eps0_grid[g - 1];
        const double h2 = eps0_grid[g + 1] - eps0_grid[g];
        const double d2 = 2.0 * ((rep.c0[g + 1] - rep.c0[g]) / h2 - (rep.c0[g] - rep.c0[g - 1]) / h1) / (h1 + h2);
        rep.min_second_difference = std::min(rep.min_second_difference, d2);
    }
    for (std::size_t g = 1; g < eps0_grid.size(); ++g) {
        const double d1 = (rep.c0[g] - rep.c0[g - 1]) / (eps0_grid[g] - eps0_grid[g - 1]);
        rep.min_derivative = std::min(rep.min_derivative, d1);
        rep.max_derivative = std::max(rep.max_derivative, d1);
    }
    rep.convex = rep.min_second_difference > 0.0;
    rep.derivative_in_unit = rep.min_derivative > 0.0 && rep.max_derivative < 1.0;
    return rep;
}

std::vector<SweepRow> wealth_sweep(const PricedMarket& market, const HabitPreferences& prefs,
                                   const AdaptedProcess& eps_base, double lo, double hi, int n, Method method) {
    if (n < 1) throw Error(ErrorKind::InvalidInput, "sweep needs at least one point");
    std::vector<SweepRow> rows(static_cast<std::size_t>(n));
    parallel_for(rows.size(), [&](std::size_t i) {
        SweepRow& row = rows[i];
        row.eps0 = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
        auto at = [&](double e0) {
            AdaptedProcess e = eps_base;
            e[0] = RandomVariable::constant(market.tree(), 0, e0);
            return solve(market, prefs, e, method);
        };
        try {
            const double d = default_step(row.eps0);
            const Solution s = at(row.eps0);
            const double up = at(row.eps0 + d).c[0][0];
            const double dn = at(row.eps0 - d).c[0][0];
            row.c0 = s.c[0][0];
            row.d1 = (up - dn) / (2.0 * d);
            row.d2 = (up - 2.0 * row.c0 + dn) / (d * d);
            row.period_U = s.period_U;
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });
    return rows;
}

}  // namespace habitopt
