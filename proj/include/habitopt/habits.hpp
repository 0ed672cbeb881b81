#pragma once

#include <vector>

namespace habitopt {

/// Lower-triangular habit weights beta^{(k)}_l, l < k, with beta^{(k)}_k = 1 by convention.
class HabitWeights {
public:
    HabitWeights() = default;
    explicit HabitWeights(int horizon);

    static HabitWeights none(int horizon) { return HabitWeights(horizon); }
    /// beta^{(k)}_{k-1} = b, all other lags zero.
    static HabitWeights one_lag(int horizon, double b);
    /// rows[k][l] = beta^{(k)}_l for l < k; shorter rows are zero-padded.
    static HabitWeights from_rows(int horizon, const std::vector<std::vector<double>>& rows);

    int horizon() const { return horizon_; }
    double operator()(int k, int l) const;
    void set(int k, int l, double value);
    bool is_zero() const;
    /// beta^{(k)}_{k-1} == b for all k and no other lags.
    bool is_one_lag(double* b = nullptr) const;

    /// Sum over descending chains j = s_0 > s_1 > ... > s_m = k of beta^{(s_0)}_{s_1} ... beta^{(s_{m-1})}_{s_m};
    /// chain(k, k) = 1. These weights drive the perturbed aggregate SPD and the policy bounds.
    double chain(int k, int j) const;

    std::vector<std::vector<double>> rows() const;

private:
    void rebuild_chains();

    int horizon_ = 0;
    std::vector<double> beta_;    // (T+1) x (T+1), row k = period
    std::vector<double> chains_;  // chains_[k * (T+1) + j]
};

}  // namespace habitopt
