#include "habitopt/preferences.hpp"

#include <cmath>
#include <limits>

#include "habitopt/error.hpp"

namespace habitopt {

std::string to_string(UtilityKind kind) {
    switch (kind) {
    case UtilityKind::Power: return "power";
    case UtilityKind::Log: return "log";
    case UtilityKind::Exponential: return "exp";
    case UtilityKind::Custom: return "custom";
    }
    return "custom";
}

PeriodUtility PeriodUtility::power(double gamma, double discount) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw Error(ErrorKind::InvalidInput, "power utility needs gamma > 0");
    }
    if (gamma == 1.0) return log(discount);
    PeriodUtility u;
    u.kind_ = UtilityKind::Power;
    u.gamma_ = gamma;
    u.discount_ = discount;
    return u;
}

PeriodUtility PeriodUtility::log(double discount) {
    PeriodUtility u;
    u.kind_ = UtilityKind::Log;
    u.gamma_ = 1.0;
    u.discount_ = discount;
    return u;
}

PeriodUtility PeriodUtility::exponential(double gamma, double discount) {
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw Error(ErrorKind::InvalidInput, "exponential utility needs gamma > 0");
    }
    PeriodUtility u;
    u.kind_ = UtilityKind::Exponential;
    u.gamma_ = gamma;
    u.discount_ = discount;
    return u;
}

PeriodUtility PeriodUtility::custom(CustomUtility c, double discount) {
    PeriodUtility u;
    u.kind_ = UtilityKind::Custom;
    u.discount_ = discount;
    u.custom_ = std::make_shared<CustomUtility>(std::move(c));
    return u;
}

bool PeriodUtility::inada() const {
    if (kind_ == UtilityKind::Exponential) return false;
    if (kind_ == UtilityKind::Custom) return custom_->inada;
    return true;
}

double PeriodUtility::value(double x) const {
    switch (kind_) {
    case UtilityKind::Power: return discount_ * std::pow(x, 1.0 - gamma_) / (1.0 - gamma_);
    case UtilityKind::Log: return discount_ * std::log(x);
    case UtilityKind::Exponential: return -discount_ * std::exp(-gamma_ * x);
    case UtilityKind::Custom: return discount_ * custom_->value(x);
    }
    return 0.0;
}

double PeriodUtility::d1(double x) const {
    switch (kind_) {
    case UtilityKind::Power: return discount_ * std::pow(x, -gamma_);
    case UtilityKind::Log: return discount_ / x;
    case UtilityKind::Exponential: return discount_ * gamma_ * std::exp(-gamma_ * x);
    case UtilityKind::Custom: return discount_ * custom_->d1(x);
    }
    return 0.0;
}

double PeriodUtility::d2(double x) const {
    switch (kind_) {
    case UtilityKind::Power: return -discount_ * gamma_ * std::pow(x, -gamma_ - 1.0);
    case UtilityKind::Log: return -discount_ / (x * x);
    case UtilityKind::Exponential: return -discount_ * gamma_ * gamma_ * std::exp(-gamma_ * x);
    case UtilityKind::Custom: return discount_ * custom_->d2(x);
    }
    return 0.0;
}

double PeriodUtility::d3(double x) const {
    switch (kind_) {
    case UtilityKind::Power: return discount_ * gamma_ * (gamma_ + 1.0) * std::pow(x, -gamma_ - 2.0);
    case UtilityKind::Log: return 2.0 * discount_ / (x * x * x);
    case UtilityKind::Exponential: return discount_ * gamma_ * gamma_ * gamma_ * std::exp(-gamma_ * x);
    case UtilityKind::Custom:
        if (!custom_->d3) throw Error(ErrorKind::WrongUtilityFamily, "custom utility has no third derivative");
        return discount_ * custom_->d3(x);
    }
    return 0.0;
}

double PeriodUtility::inverse_d1(double y) const {
    if (!(y > 0.0)) throw Error(ErrorKind::DomainViolation, "marginal utility must be positive");
    const double z = y / discount_;
    switch (kind_) {
    case UtilityKind::Power: return std::pow(z, -1.0 / gamma_);
    case UtilityKind::Log: return 1.0 / z;
    case UtilityKind::Exponential: return -std::log(z / gamma_) / gamma_;
    case UtilityKind::Custom:
        if (!custom_->inverse_d1) throw Error(ErrorKind::WrongUtilityFamily, "custom utility has no inverse marginal");
        return custom_->inverse_d1(z);
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

bool HabitPreferences::uniform_gamma() const {
    if (family != UtilityKind::Power && family != UtilityKind::Log) return false;
    for (const auto& ui : u) {
        if (ui.gamma() != u.front().gamma()) return false;
    }
    return true;
}

double HabitPreferences::habit(int k, int atom) const {
    if (h.empty()) return 0.0;
    return h[k][static_cast<std::size_t>(atom)];
}

namespace {

HabitPreferences assemble(UtilityKind family, std::vector<double> gammas, double rho, HabitWeights beta,
                          AdaptedProcess h, const std::function<PeriodUtility(double, double)>& make) {
    const int T = beta.horizon();
    if (static_cast<int>(gammas.size()) == 1) gammas.assign(static_cast<std::size_t>(T + 1), gammas[0]);
    if (static_cast<int>(gammas.size()) != T + 1) {
        throw Error(ErrorKind::InvalidInput, "expected one gamma per period");
    }
    if (!std::isfinite(rho)) throw Error(ErrorKind::InvalidInput, "rho must be finite");
    if (!h.empty()) {
        if (h.horizon() != T) throw Error(ErrorKind::InvalidInput, "habit process must have T+1 components");
        for (int k = 0; k <= T; ++k) {
            for (double v : h[k].values()) {
                if (!(v >= 0.0)) throw Error(ErrorKind::InvalidInput, "exogenous habits must be non-negative");
                if (k == 0 && v != 0.0) throw Error(ErrorKind::InvalidInput, "h_0 must be zero");
            }
        }
    }
    HabitPreferences p;
    p.family = family;
    p.rho = rho;
    p.beta = std::move(beta);
    p.h = std::move(h);
    for (int k = 0; k <= T; ++k) {
        p.u.push_back(make(gammas[static_cast<std::size_t>(k)], std::exp(-rho * k)));
    }
    p.gammas = std::move(gammas);
    bool all_log = true;
    for (const auto& ui : p.u) all_log = all_log && ui.kind() == UtilityKind::Log;
    if (family == UtilityKind::Power && all_log) p.family = UtilityKind::Log;
    return p;
}

}  // namespace

HabitPreferences HabitPreferences::power(int horizon, std::vector<double> gammas, double rho, HabitWeights beta,
                                         AdaptedProcess h) {
    if (beta.horizon() != horizon) throw Error(ErrorKind::InvalidInput, "habit weights horizon mismatch");
    return assemble(UtilityKind::Power, std::move(gammas), rho, std::move(beta), std::move(h),
                    [](double g, double d) { return PeriodUtility::power(g, d); });
}

HabitPreferences HabitPreferences::power(int horizon, double gamma, double rho, HabitWeights beta, AdaptedProcess h) {
    return power(horizon, std::vector<double>{gamma}, rho, std::move(beta), std::move(h));
}

HabitPreferences HabitPreferences::log(int horizon, double rho, HabitWeights beta, AdaptedProcess h) {
    if (beta.horizon() != horizon) throw Error(ErrorKind::InvalidInput, "habit weights horizon mismatch");
    return assemble(UtilityKind::Log, {1.0}, rho, std::move(beta), std::move(h),
                    [](double, double d) { return PeriodUtility::log(d); });
}

HabitPreferences HabitPreferences::exponential(int horizon, double gamma, double rho, HabitWeights beta,
                                               AdaptedProcess h) {
    if (beta.horizon() != horizon) throw Error(ErrorKind::InvalidInput, "habit weights horizon mismatch");
    return assemble(UtilityKind::Exponential, {gamma}, rho, std::move(beta), std::move(h),
                    [](double g, double d) { return PeriodUtility::exponential(g, d); });
}

HabitPreferences HabitPreferences::custom(std::vector<PeriodUtility> u, HabitWeights beta, AdaptedProcess h) {
    if (static_cast<int>(u.size()) != beta.horizon() + 1) {
        throw Error(ErrorKind::InvalidInput, "expected one utility per period");
    }
    HabitPreferences p;
    p.family = UtilityKind::Custom;
    p.beta = std::move(beta);
    p.h = std::move(h);
    p.u = std::move(u);
    for (const auto& ui : p.u) p.gammas.push_back(ui.gamma());
    return p;
}

// ---------------------------------------------------------------------------

PerturbedConsumption perturbed_consumption(const HabitPreferences& p, const AdaptedProcess& c) {
    const int T = c.horizon();
    if (T != p.horizon()) throw Error(ErrorKind::LevelMismatch, "consumption horizon differs from preferences");
    PerturbedConsumption out;
    std::vector<RandomVariable> chat;
    out.min_value = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= T; ++k) {
        RandomVariable x = c[k];
        for (int l = 0; l < k; ++l) {
            const double b = p.beta(k, l);
            if (b != 0.0) x = x - b * c[l];
        }
        if (!p.h.empty()) x = x - p.h[k];
        for (double v : x.values()) {
            if (v < 0.0) ++out.violations;
            out.min_value = std::min(out.min_value, v);
        }
        chat.push_back(std::move(x));
    }
    out.chat = AdaptedProcess(std::move(chat));
    return out;
}

namespace {

void check_domain(const HabitPreferences& p, const AdaptedProcess& chat) {
    for (int k = 0; k <= chat.horizon(); ++k) {
        if (!p.u[static_cast<std::size_t>(k)].inada()) continue;
        for (std::size_t a = 0; a < chat[k].size(); ++a) {
            if (!(chat[k][a] > 0.0)) throw DomainError(k, static_cast<int>(a), chat[k][a]);
        }
    }
}

RandomVariable marginal(const HabitPreferences& p, int k, const RandomVariable& chat) {
    const auto& u = p.u[static_cast<std::size_t>(k)];
    return chat.map([&u](double x) { return u.d1(x); });
}

}  // namespace

std::vector<double> period_utilities(const HabitPreferences& p, const AdaptedProcess& c) {
    const auto chat = perturbed_consumption(p, c).chat;
    check_domain(p, chat);
    std::vector<double> out;
    for (int k = 0; k <= chat.horizon(); ++k) {
        const auto& u = p.u[static_cast<std::size_t>(k)];
        out.push_back(expectation(chat[k].map([&u](double x) { return u.value(x); })));
    }
    return out;
}

double utility_value(const HabitPreferences& p, const AdaptedProcess& c) {
    double total = 0.0;
    for (double v : period_utilities(p, c)) total += v;
    return total;
}

AdaptedProcess habit_adjusted_marginal(const HabitPreferences& p, const AdaptedProcess& c) {
    const auto chat = perturbed_consumption(p, c).chat;
    check_domain(p, chat);
    const int T = chat.horizon();
    std::vector<RandomVariable> mu;
    for (int k = 0; k <= T; ++k) mu.push_back(marginal(p, k, chat[k]));
    std::vector<RandomVariable> r;
    for (int k = 0; k <= T; ++k) {
        RandomVariable x = mu[static_cast<std::size_t>(k)];
        for (int m = k + 1; m <= T; ++m) {
            const double b = p.beta(m, k);
            if (b != 0.0) x = x - b * condexp(mu[static_cast<std::size_t>(m)], k);
        }
        r.push_back(std::move(x));
    }
    return AdaptedProcess(std::move(r));
}

std::vector<double> foc_residual(const PayoffSpaceBasis& basis, const AdaptedProcess& aggregate,
                                 const HabitPreferences& p, const AdaptedProcess& c) {
    const auto r = habit_adjusted_marginal(p, c);
    const int T = r.horizon();
    std::vector<double> out(static_cast<std::size_t>(T + 1), 0.0);
    for (int k = 1; k <= T; ++k) {
        for (std::size_t a = 0; a < r[k - 1].size(); ++a) {
            if (r[k - 1][a] == 0.0) {
                throw Error(ErrorKind::DivisionByZeroSPD, "R_" + std::to_string(k - 1) + " vanishes on atom " +
                                                              std::to_string(a));
            }
        }
        const RandomVariable lhs = basis.project(k, r[k] / r[k - 1]);
        out[static_cast<std::size_t>(k)] = norm(lhs - aggregate[k] / aggregate[k - 1]);
    }
    return out;
}

std::vector<double> simplified_foc_residual(const PayoffSpaceBasis& basis, const AdaptedProcess& perturbed,
                                            const HabitPreferences& p, const AdaptedProcess& c) {
    const auto chat = perturbed_consumption(p, c).chat;
    check_domain(p, chat);
    const int T = chat.horizon();
    std::vector<double> out(static_cast<std::size_t>(T + 1), 0.0);
    for (int k = 1; k <= T; ++k) {
        const RandomVariable lhs = basis.project(k, marginal(p, k, chat[k]));
        const RandomVariable rhs = perturbed[k] / perturbed[k - 1] * marginal(p, k - 1, chat[k - 1]);
        out[static_cast<std::size_t>(k)] = norm(lhs - rhs);
    }
    return out;
}

}  // namespace habitopt
