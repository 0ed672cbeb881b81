#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "habitopt/market.hpp"
#include "habitopt/preferences.hpp"
#include "habitopt/problem.hpp"

namespace habitopt {

struct Diagnostics {
    std::string method;
    int iterations = 0;
    double gradient_norm = 0.0;
    bool converged = true;
    std::vector<double> foc;             ///< ||P^k[R_k/R_{k-1}] - M_k/M_{k-1}||, k = 1..T
    std::vector<double> simplified_foc;  ///< same shape, from the M~ form
    bool negative_consumption = false;   ///< some c_k < 0 (possible for exponential utility)
    std::vector<std::string> notes;
};

struct Solution {
    AdaptedProcess c;
    AdaptedProcess W;   ///< W_0 = 0 for the full problem
    AdaptedProcess I;
    /// Holdings per node: pi[k][atom] over slots (bond first), k = 0..T-1. Minimum-norm when assets are redundant.
    std::vector<std::vector<Eigen::VectorXd>> pi;
    AdaptedProcess R;   ///< habit-adjusted SPD at c (full problem only)
    double U = 0.0;
    std::vector<double> period_U;
    SubtreeRoot root;   ///< level 0 for the full problem
    Diagnostics diagnostics;
};

struct SolveOptions {
    int max_iterations = 200;
    double tolerance = 1e-10;
    /// Nonzero: start Newton from a seeded random interior point instead of the LP point.
    std::uint64_t start_seed = 0;
};

/// Damped Newton on the concave primal problem. Throws Infeasible; on NonConvergence the best iterate is
/// returned with `diagnostics.converged = false`.
Solution solve_general(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                       const SolveOptions& options = {});

/// Continuation problem from `root`: history c_0..c_{k-1} fixed, W_k = w at the root node.
/// Values outside the subtree are zero; `c` holds the history on the ancestors.
Solution solve_subproblem(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                          int k, int atom, const std::vector<double>& history, double w,
                          const SolveOptions& options = {});

/// Brute-force oracle over raw holdings: coordinate grid search refined by factors of 10 down to 1e-7,
/// restarted from 3 interior seeds, then a Brent coordinate polish. Portfolio dimension at most 6.
Solution solve_primal_oracle(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps);

/// Portfolio dimension used by the oracle: slots times nonterminal atoms.
int portfolio_dimension(const MarketModel& model);

struct PowerNoEndowment {
    Solution solution;
    AdaptedProcess A;   ///< c_k = A_k W_k, with W_0 = eps0
};

/// Power utility (uniform gamma), eps_k = 0 for k >= 1 and h = 0: solve at eps0 = 1 and scale.
PowerNoEndowment solve_power_no_endowment(const PricedMarket& market, const HabitPreferences& prefs,
                                          double eps0);

struct ExponentialCoefficients {
    std::vector<double> l, m, lp, mp;   ///< l_k, m_k, l'_k, m'_k (index k; l'_0, m'_0 unused)
    std::vector<RandomVariable> n;      ///< n_k at level k
    std::vector<RandomVariable> np;     ///< n'_k at level k-1 (index 0 unused)
    std::vector<RandomVariable> X;      ///< X_k = e^{-rho} M~_{k-1}/M~_k (index 0 unused)
};

struct ExponentialSolution {
    Solution solution;
    ExponentialCoefficients coefficients;
};

/// Exponential utility, bond-only market with deterministic rates, one-lag habits beta^{(k)}_{k-1} = beta.
ExponentialSolution solve_exponential_bonds(const PricedMarket& market, const HabitPreferences& prefs,
                                            const AdaptedProcess& eps);

/// Complete market, any Inada family: forward marginal-utility recursion closed by the budget.
Solution solve_complete_general(const PricedMarket& market, const HabitPreferences& prefs,
                                const AdaptedProcess& eps);

struct CompletePowerCoefficients {
    std::vector<std::vector<double>> delta;         ///< delta[i][k] = delta^{(i)}_k, k >= i (alpha uses the same)
    std::vector<std::vector<RandomVariable>> D;     ///< D[i][k] at level k, k >= i
    std::vector<std::vector<RandomVariable>> F;     ///< F[i][k] at level k
    double c0 = 0.0;
};

struct CompletePowerSolution {
    Solution solution;
    CompletePowerCoefficients coefficients;
};

/// Complete market, power utility with per-period gammas.
CompletePowerSolution solve_complete_power(const PricedMarket& market, const HabitPreferences& prefs,
                                           const AdaptedProcess& eps);

enum class Method { Auto, Newton, Oracle, Closed };
Method parse_method(const std::string& name);

/// Dispatch used by the CLI: Complete+Power -> complete power, Complete -> complete general,
/// bond-only+Exponential -> exponential recursion, otherwise Newton.
Solution solve(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
               Method method = Method::Auto);

/// Assembles a full-tree Solution from consumption alone (wealth, investment, portfolio, R, diagnostics).
Solution complete_solution(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                           AdaptedProcess c, std::string method);

}  // namespace habitopt
