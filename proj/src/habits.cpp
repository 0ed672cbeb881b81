#include "habitopt/habits.hpp"

#include <cmath>
#include <string>

#include "habitopt/error.hpp"

namespace habitopt {

HabitWeights::HabitWeights(int horizon)
    : horizon_(horizon),
      beta_(static_cast<std::size_t>((horizon + 1) * (horizon + 1)), 0.0),
      chains_(static_cast<std::size_t>((horizon + 1) * (horizon + 1)), 0.0) {
    rebuild_chains();
}

HabitWeights HabitWeights::one_lag(int horizon, double b) {
    HabitWeights w(horizon);
    for (int k = 1; k <= horizon; ++k) w.set(k, k - 1, b);
    return w;
}

HabitWeights HabitWeights::from_rows(int horizon, const std::vector<std::vector<double>>& rows) {
    HabitWeights w(horizon);
    if (static_cast<int>(rows.size()) > horizon + 1) {
        throw Error(ErrorKind::InvalidInput, "habit weight table has more rows than periods");
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k].size() > k) {
            for (std::size_t l = k; l < rows[k].size(); ++l) {
                if (rows[k][l] != 0.0) {
                    throw Error(ErrorKind::InvalidInput, "habit weight beta^(" + std::to_string(k) + ")_" +
                                                             std::to_string(l) + " must refer to a past period");
                }
            }
        }
        for (std::size_t l = 0; l < rows[k].size() && l < k; ++l) {
            w.set(static_cast<int>(k), static_cast<int>(l), rows[k][l]);
        }
    }
    return w;
}

double HabitWeights::operator()(int k, int l) const {
    if (l == k) return 1.0;
    if (l < 0 || l > k || k > horizon_) return 0.0;
    return beta_[static_cast<std::size_t>(k * (horizon_ + 1) + l)];
}

void HabitWeights::set(int k, int l, double value) {
    if (k < 1 || k > horizon_ || l < 0 || l >= k) {
        throw Error(ErrorKind::InvalidInput, "habit weight index out of range");
    }
    if (!(value >= 0.0) || !std::isfinite(value)) {
        throw Error(ErrorKind::InvalidInput, "habit weights must be non-negative");
    }
    beta_[static_cast<std::size_t>(k * (horizon_ + 1) + l)] = value;
    rebuild_chains();
}

bool HabitWeights::is_zero() const {
    for (double b : beta_) {
        if (b != 0.0) return false;
    }
    return true;
}

bool HabitWeights::is_one_lag(double* b) const {
    if (horizon_ < 1) return false;
    const double lag = (*this)(1, 0);
    for (int k = 1; k <= horizon_; ++k) {
        for (int l = 0; l < k; ++l) {
            const double expected = (l == k - 1) ? lag : 0.0;
            if ((*this)(k, l) != expected) return false;
        }
    }
    if (b) *b = lag;
    return true;
}

double HabitWeights::chain(int k, int j) const {
    if (j < k) return 0.0;
    return chains_[static_cast<std::size_t>(k * (horizon_ + 1) + j)];
}

void HabitWeights::rebuild_chains() {
    const int n = horizon_ + 1;
    // chain(k, j) = sum_{k < m <= j} beta^{(m)}_k chain(m, j), chain(j, j) = 1.
    for (int j = 0; j < n; ++j) {
        chains_[static_cast<std::size_t>(j * n + j)] = 1.0;
        for (int k = j - 1; k >= 0; --k) {
            double total = 0.0;
            for (int m = k + 1; m <= j; ++m) total += (*this)(m, k) * chains_[static_cast<std::size_t>(m * n + j)];
            chains_[static_cast<std::size_t>(k * n + j)] = total;
        }
    }
}

std::vector<std::vector<double>> HabitWeights::rows() const {
    std::vector<std::vector<double>> out(static_cast<std::size_t>(horizon_ + 1));
    for (int k = 0; k <= horizon_; ++k) {
        for (int l = 0; l < k; ++l) out[static_cast<std::size_t>(k)].push_back((*this)(k, l));
    }
    return out;
}

}  // namespace habitopt
