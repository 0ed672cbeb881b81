#pragma once

#include <optional>
#include <string>
#include <vector>

#include "habitopt/market.hpp"
#include "habitopt/preferences.hpp"
#include "habitopt/solvers.hpp"

namespace habitopt {

/// Finite-difference probe of c_k = psi_k(W_k) at one node, with its theoretical bound.
struct PolicyProbe {
    int k = 0;
    int atom = 0;
    double w = 0.0;          ///< base wealth (eps0 at k = 0)
    double step = 0.0;
    double c = 0.0;          ///< psi at w
    double derivative = 0.0;       ///< central difference, step
    double derivative_half = 0.0;  ///< central difference, step/2
    double second_difference = 0.0;  ///< undivided psi(w+d) - 2 psi(w) + psi(w-d)
    double second_derivative = 0.0;
    double bound = 0.0;
    double tolerance = 0.0;
    bool reliable = true;
    bool in_scope = true;
    bool pass = false;
    std::string note;
};

/// Default finite-difference step max(1e-4, 1e-4 |w|).
double default_step(double w);

/// Monotonicity bound B_k = 1 / (1 + sum_{j>k} C(k,j) E[M_j/M_k | G_k]) at a level-k atom.
double monotonicity_bound(const PricedMarket& market, const HabitWeights& beta, int k, int atom);

/// Monotonicity scope: deterministic interest rate, or an idiosyncratic classification.
bool monotonicity_in_scope(const PricedMarket& market, const MarketClass& cls);
/// Concavity scope: TypeC with deterministic interest, or idiosyncratic.
bool typec_or_idiosyncratic(const PricedMarket& market, const MarketClass& cls);

PolicyProbe monotonicity_probe(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                               const Solution& base, int k, int atom, std::optional<double> step = std::nullopt,
                               double tolerance = 1e-4);

/// dW_{k+1}/dc_k on each child of a level-k atom, against the chain lower bound.
struct EtaProbe {
    int k = 0;
    int atom = 0;      ///< level-k atom
    int child = 0;     ///< level-(k+1) atom
    double estimate = 0.0;
    double bound = 0.0;
    double tolerance = 0.0;
    std::optional<double> analytic;  ///< closed derivative at k = T-1 (conditional-expectation projectors)
    bool in_scope = true;
    bool pass = false;
};

std::vector<EtaProbe> eta_bound_check(const PricedMarket& market, const HabitPreferences& prefs,
                                      const AdaptedProcess& eps, const Solution& base, int k,
                                      const MarketClass& cls, double tolerance = 1e-6);

/// Second difference of psi_k in W_k; passes when it is at most tolerance * max(1, |c|).
PolicyProbe concavity_probe(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                            const Solution& base, int k, int atom, const MarketClass& cls,
                            std::optional<double> step = std::nullopt, double tolerance = 1e-6);

struct EnvelopeReport {
    double eps0 = 0.0;
    double step = 0.0;
    double derivative = 0.0;   ///< central difference of V_0
    double marginal = 0.0;     ///< u'_0(c_0) - sum_k beta^{(k)}_0 E[u'_k(chat_k)]
    double residual = 0.0;
    double scale = 1.0;
    bool pass = false;
};

EnvelopeReport envelope_check(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                              double tolerance = 1e-5);

struct LinearityReport {
    double gamma = 1.0;
    double r = 1.0;          ///< gross bond return
    double slope = 0.0;      ///< r^{1-1/gamma} / (1 + r^{1-1/gamma})
    std::vector<double> eps0, c0;
    double max_error = 0.0;        ///< |c0 - slope eps0|
    double fit_residual = 0.0;     ///< max residual of the least-squares line
    bool pass = false;
};

/// One period, one riskless bond with gross return r, time-consistent power utility, no habits.
LinearityReport linearity_law_check(double gamma, double r, const std::vector<double>& eps0_grid,
                                    double tolerance = 1e-8);

struct Counterexample51Report {
    std::vector<double> eps0;
    std::vector<double> c0;            ///< solver
    std::vector<double> printed;        ///< ((sqrt(4a e + 4ac + b^2) - b)/2a)^2, b = E[M1 sqrt(M1)]
    std::vector<double> corrected;     ///< same with b' = sqrt(a) E[sqrt(M1)]
    std::vector<double> c1_gap_printed;  ///< max |c1 - c0 - sqrt(c0 M1)| per grid point
    double a = 0.0, b = 0.0, b_corrected = 0.0, c = 0.0;
    double max_error_printed = 0.0;
    double max_error_corrected = 0.0;
    double min_second_difference = 0.0;
    double min_derivative = 0.0, max_derivative = 0.0;
    bool convex = false;
    bool derivative_in_unit = false;
};

/// The one-period complete market with SPD M1 (E[M1] = 1 enforced, zero rate), u_0 = log, u_1 = -1/x,
/// beta = 1, h = 0, eps_1 given per state. `probs` defaults to uniform.
Counterexample51Report counterexample_51(const std::vector<double>& eps0_grid, const std::vector<double>& m1,
                                         const std::vector<double>& eps1, std::vector<double> probs = {});

struct SweepRow {
    double eps0 = 0.0;
    bool ok = false;
    double c0 = 0.0, d1 = 0.0, d2 = 0.0;
    std::vector<double> period_U;
    std::string error;
};

/// c_0 and its finite-difference derivatives across eps0 in [lo, hi] (n points).
std::vector<SweepRow> wealth_sweep(const PricedMarket& market, const HabitPreferences& prefs,
                                   const AdaptedProcess& eps_base, double lo, double hi, int n,
                                   Method method = Method::Auto);

/// The history c_0..c_{k-1} on the ancestors of (k, atom).
std::vector<double> history_at(const Solution& s, int k, int atom);

}  // namespace habitopt
