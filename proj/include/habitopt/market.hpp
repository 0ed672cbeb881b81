#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "habitopt/habits.hpp"
#include "habitopt/tree.hpp"

namespace habitopt {

/// Partition of the terminal atoms per level, the same shape as TreeDescription::levels.
using LeafPartitions = std::vector<std::vector<std::vector<int>>>;

/// Raw market inputs. Slot 0 (the bond) is implicit: price 1 before T, dividend r_k
/// (1 + r_T at the horizon).
struct MarketData {
    EventTree tree;
    int assets = 0;                            ///< number of risky securities N
    std::vector<AdaptedProcess> prices;        ///< [i], component k at level k; component T must vanish
    std::vector<AdaptedProcess> dividends;     ///< [i], component 0 is ignored
    std::vector<RandomVariable> rates;         ///< [k], k = 1..T, measurable at level k-1; rates[0] unused
    std::optional<LeafPartitions> sub_filtration;  ///< candidate F for idiosyncratic classification
};

class MarketModel {
public:
    /// Validates shapes, non-negativity and predictability of the rate.
    static MarketModel create(MarketData data);

    /// Market with only the one-period bond. `rates[k]` at level k-1.
    static MarketModel bonds_only(const EventTree& tree, std::vector<RandomVariable> rates);
    /// Bond-only market with deterministic rates r_1..r_T (`rates[0]` unused).
    static MarketModel bonds_only(const EventTree& tree, const std::vector<double>& rates);

    const EventTree& tree() const { return data_.tree; }
    int horizon() const { return data_.tree.horizon(); }
    int assets() const { return data_.assets; }
    int slots() const { return data_.assets + 1; }
    const MarketData& data() const { return data_; }

    double price(int slot, int k, int atom) const;
    double dividend(int slot, int k, int atom) const;
    double payoff(int slot, int k, int atom) const { return price(slot, k, atom) + dividend(slot, k, atom); }
    /// r_k on the level-k atom `atom` (looked up through its level-(k-1) ancestor).
    double rate_at(int k, int atom) const;
    const RandomVariable& rate(int k) const { return data_.rates.at(static_cast<std::size_t>(k)); }

    bool bond_only() const { return data_.assets == 0; }
    /// r_k constant across the atoms of each level within 1e-12.
    bool deterministic_rates() const;

private:
    explicit MarketModel(MarketData data) : data_(std::move(data)) {}
    MarketData data_;
};

/// Orthonormal basis of the payoff space L_k restricted to the children of one level-(k-1) atom.
struct LocalBasis {
    Eigen::VectorXd weights;     ///< conditional probabilities of the children
    Eigen::MatrixXd generators;  ///< children x slots, payoffs S^i_k + d^i_k
    Eigen::MatrixXd q;           ///< children x rank, orthonormal under the conditional inner product
    int rank = 0;
};

/// Payoff spaces L_1..L_T with per-parent orthonormal bases and the orthogonal projectors onto them.
class PayoffSpaceBasis {
public:
    static constexpr double kRankTolerance = 1e-10;

    static PayoffSpaceBasis build(const MarketModel& model);

    int horizon() const { return static_cast<int>(local_.size()) - 1; }
    int rank(int k) const;
    const LocalBasis& local(int k, int parent_atom) const;

    /// Generators indicator(B) (S^i_k + d^i_k), one per (level-(k-1) atom, slot).
    std::vector<RandomVariable> generators(int k) const;
    /// Orthonormal basis of L_k under the probability-weighted inner product.
    std::vector<RandomVariable> orthonormal(int k) const;

    /// Orthogonal projection onto L_k; the result lives at level k.
    RandomVariable project(int k, const RandomVariable& x) const;
    /// Projector matrix at level k: column j holds P^k[indicator of level-k atom j].
    Eigen::MatrixXd projector(int k) const;
    /// || X - P^k X || in the inner-product norm.
    double residual(int k, const RandomVariable& x) const;

private:
    EventTree tree_;
    std::vector<std::vector<LocalBasis>> local_;  // [k][parent atom], k = 1..T; index 0 unused
};

/// Maximum absolute violation of the SPD pricing identities for every asset and the bond.
double pricing_error(const MarketModel& model, const AdaptedProcess& spd);

/// Finds a strictly positive SPD by maximizing the smallest one-step ratio at every node.
/// Throws ArbitrageDetected when no ratio vector bounded below by 1e-8 exists.
AdaptedProcess check_no_arbitrage(const MarketModel& model);

/// A second, generally different positive SPD: minimizes a seeded random linear cost at every node
/// subject to ratios bounded below by a fraction of the max-min solution.
AdaptedProcess alternative_positive_spd(const MarketModel& model, std::uint64_t seed);

/// Aggregate SPD M_k = prod_{l<=k} P^l[R_l / R_{l-1}] for a positive SPD R.
/// Throws VanishingAggregateSPD if some M_k hits zero on an atom.
AdaptedProcess aggregate_spd(const PayoffSpaceBasis& basis, const AdaptedProcess& spd);

/// Perturbed aggregate SPD: M~_k = M_k + sum_{m>k} beta^{(m)}_k E[M~_m | G_k].
AdaptedProcess perturbed_aggregate_spd(const AdaptedProcess& aggregate, const HabitWeights& beta);

enum class MarketTag { Complete, TypeC, Idiosyncratic, General };
std::string to_string(MarketTag tag);

struct MarketClass {
    MarketTag tag = MarketTag::General;
    /// TypeC: for k = 1..T, the level-k atoms grouped into the atoms of H_k (index 0 unused).
    std::vector<std::vector<std::vector<int>>> intermediate;
    /// Idiosyncratic: the validated sub-filtration F.
    std::optional<LeafPartitions> sub_filtration;
};

/// Classifies the market. A supplied (or model-attached) sub-filtration failing a clause of the
/// idiosyncratic definition raises InvalidWitness naming the clause.
MarketClass classify_market(const MarketModel& model, const PayoffSpaceBasis& basis,
                            const std::optional<LeafPartitions>& candidate = std::nullopt);

/// W_k = sum_{l>=k} E[(M_l/M_k)(c_l - eps_l) | G_k] for k = 0..T (W_0 is the budget gap).
AdaptedProcess consumption_to_wealth(const AdaptedProcess& aggregate, const AdaptedProcess& c,
                                     const AdaptedProcess& eps);

/// c_k = eps_k + W_k - E[(M_{k+1}/M_k) W_{k+1} | G_k]. Throws NotInPayoffSpace if some W_k, k >= 1,
/// has projection residual above 1e-8.
AdaptedProcess wealth_to_consumption(const PayoffSpaceBasis& basis, const AdaptedProcess& aggregate,
                                     const AdaptedProcess& wealth, const AdaptedProcess& eps);

/// A market together with its payoff spaces, a positive SPD and the aggregate SPD.
struct PricedMarket {
    MarketModel model;
    PayoffSpaceBasis basis;
    AdaptedProcess spd;
    AdaptedProcess aggregate;

    static PricedMarket prepare(MarketModel model);

    const EventTree& tree() const { return model.tree(); }
    int horizon() const { return model.horizon(); }
};

}  // namespace habitopt
