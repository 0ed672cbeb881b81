#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "habitopt/habits.hpp"
#include "habitopt/market.hpp"
#include "habitopt/tree.hpp"

namespace habitopt {

enum class UtilityKind { Power, Log, Exponential, Custom };
std::string to_string(UtilityKind kind);

/// User-supplied utility; derivatives are undiscounted. `d3` is only needed by concavity probes.
struct CustomUtility {
    std::function<double(double)> value, d1, d2, d3, inverse_d1;
    bool inada = true;
};

/// u_k(x) = e^{-rho k} v(x) for one of the supported families.
class PeriodUtility {
public:
    static PeriodUtility power(double gamma, double discount);
    static PeriodUtility log(double discount);
    static PeriodUtility exponential(double gamma, double discount);
    static PeriodUtility custom(CustomUtility u, double discount);

    UtilityKind kind() const { return kind_; }
    double gamma() const { return gamma_; }
    double discount() const { return discount_; }
    /// Requires x > 0 (Inada families).
    bool inada() const;

    double value(double x) const;
    double d1(double x) const;
    double d2(double x) const;
    double d3(double x) const;
    /// Solves d1(x) = y for y > 0.
    double inverse_d1(double y) const;

private:
    UtilityKind kind_ = UtilityKind::Log;
    double gamma_ = 1.0;
    double discount_ = 1.0;
    std::shared_ptr<CustomUtility> custom_;
};

struct HabitPreferences {
    UtilityKind family = UtilityKind::Log;
    std::vector<double> gammas;         ///< per period (Power / Exponential)
    double rho = 0.0;
    HabitWeights beta;
    AdaptedProcess h;                   ///< exogenous habit, h_0 = 0; empty means zero
    std::vector<PeriodUtility> u;       ///< u_0..u_T

    int horizon() const { return static_cast<int>(u.size()) - 1; }
    bool inada() const { return family != UtilityKind::Exponential; }
    bool uniform_gamma() const;
    double habit(int k, int atom) const;

    static HabitPreferences power(int horizon, std::vector<double> gammas, double rho, HabitWeights beta,
                                  AdaptedProcess h = {});
    static HabitPreferences power(int horizon, double gamma, double rho, HabitWeights beta, AdaptedProcess h = {});
    static HabitPreferences log(int horizon, double rho, HabitWeights beta, AdaptedProcess h = {});
    static HabitPreferences exponential(int horizon, double gamma, double rho, HabitWeights beta,
                                        AdaptedProcess h = {});
    static HabitPreferences custom(std::vector<PeriodUtility> u, HabitWeights beta, AdaptedProcess h = {});
};

struct PerturbedConsumption {
    AdaptedProcess chat;
    int violations = 0;   ///< atoms with chat < 0
    double min_value = 0.0;
};

/// chat_k = c_k - sum_{l<k} beta^{(k)}_l c_l - h_k.
PerturbedConsumption perturbed_consumption(const HabitPreferences& p, const AdaptedProcess& c);

/// Per-period E[u_k(chat_k)]. Throws DomainError when chat <= 0 under an Inada family.
std::vector<double> period_utilities(const HabitPreferences& p, const AdaptedProcess& c);
double utility_value(const HabitPreferences& p, const AdaptedProcess& c);

/// R_k(c) = u'_k(chat_k) - sum_{m>k} beta^{(m)}_k E[u'_m(chat_m) | G_k].
AdaptedProcess habit_adjusted_marginal(const HabitPreferences& p, const AdaptedProcess& c);

/// ||P^k[R_k/R_{k-1}] - M_k/M_{k-1}|| for k = 1..T (index 0 is zero).
std::vector<double> foc_residual(const PayoffSpaceBasis& basis, const AdaptedProcess& aggregate,
                                 const HabitPreferences& p, const AdaptedProcess& c);

/// ||P^k[u'_k(chat_k)] - (M~_k/M~_{k-1}) u'_{k-1}(chat_{k-1})|| for k = 1..T (index 0 is zero).
std::vector<double> simplified_foc_residual(const PayoffSpaceBasis& basis, const AdaptedProcess& perturbed,
                                            const HabitPreferences& p, const AdaptedProcess& c);

}  // namespace habitopt
