#include "habitopt/market.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "habitopt/error.hpp"
#include "habitopt/lp.hpp"
#include "habitopt/random.hpp"

namespace habitopt {

namespace {

constexpr double kSpdFloor = 1e-8;

void check_process(const EventTree& tree, const AdaptedProcess& p, const char* what) {
    if (p.horizon() != tree.horizon()) {
        throw Error(ErrorKind::InvalidInput, std::string(what) + " must have T+1 components");
    }
    for (int k = 0; k <= tree.horizon(); ++k) {
        if (!(p[k].tree() == tree)) {
            throw Error(ErrorKind::InvalidInput, std::string(what) + " lives on a different tree");
        }
    }
}

}  // namespace

MarketModel MarketModel::create(MarketData data) {
    const EventTree& tree = data.tree;
    const int T = tree.horizon();
    if (data.assets < 0 || static_cast<int>(data.prices.size()) != data.assets ||
        static_cast<int>(data.dividends.size()) != data.assets) {
        throw Error(ErrorKind::InvalidInput, "price/dividend process count must equal the number of assets");
    }
    for (int i = 0; i < data.assets; ++i) {
        check_process(tree, data.prices[static_cast<std::size_t>(i)], "price process");
        check_process(tree, data.dividends[static_cast<std::size_t>(i)], "dividend process");
        for (int k = 0; k <= T; ++k) {
            for (double v : data.prices[static_cast<std::size_t>(i)][k].values()) {
                if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "prices must be non-negative");
                if (k == T && v != 0.0) throw Error(ErrorKind::InvalidInput, "prices must vanish at the horizon");
            }
            if (k == 0) continue;
            for (double v : data.dividends[static_cast<std::size_t>(i)][k].values()) {
                if (!(v >= 0.0) || !std::isfinite(v)) {
                    throw Error(ErrorKind::InvalidInput, "dividends must be non-negative");
                }
            }
        }
    }
    if (static_cast<int>(data.rates.size()) == T) {
        data.rates.insert(data.rates.begin(), RandomVariable::constant(tree, 0, 0.0));
    }
    if (static_cast<int>(data.rates.size()) != T + 1) {
        throw Error(ErrorKind::InvalidInput, "expected interest rates r_1..r_T");
    }
    data.rates[0] = RandomVariable::constant(tree, 0, 0.0);
    for (int k = 1; k <= T; ++k) {
        const auto& r = data.rates[static_cast<std::size_t>(k)];
        if (r.level() != k - 1 || !(r.tree() == tree)) {
            throw Error(ErrorKind::InvalidInput, "r_" + std::to_string(k) + " must be measurable at level " +
                                                     std::to_string(k - 1));
        }
        for (double v : r.values()) {
            if (!(v > -1.0) || !std::isfinite(v)) {
                throw Error(ErrorKind::InvalidInput, "interest rates must exceed -1");
            }
        }
    }
    return MarketModel(std::move(data));
}

MarketModel MarketModel::bonds_only(const EventTree& tree, std::vector<RandomVariable> rates) {
    MarketData data;
    data.tree = tree;
    data.rates = std::move(rates);
    return create(std::move(data));
}

MarketModel MarketModel::bonds_only(const EventTree& tree, const std::vector<double>& rates) {
    std::vector<RandomVariable> r;
    const auto offset = static_cast<std::size_t>(static_cast<int>(rates.size()) == tree.horizon() ? 1 : 0);
    r.push_back(RandomVariable::constant(tree, 0, 0.0));
    for (int k = 1; k <= tree.horizon(); ++k) {
        r.push_back(RandomVariable::constant(tree, k - 1, rates.at(static_cast<std::size_t>(k) - offset)));
    }
    return bonds_only(tree, std::move(r));
}

double MarketModel::price(int slot, int k, int atom) const {
    if (slot == 0) return k < horizon() ? 1.0 : 0.0;
    return data_.prices[static_cast<std::size_t>(slot - 1)][k][static_cast<std::size_t>(atom)];
}

double MarketModel::dividend(int slot, int k, int atom) const {
    if (k == 0) return 0.0;
    if (slot == 0) {
        const double r = rate_at(k, atom);
        return k < horizon() ? r : 1.0 + r;
    }
    return data_.dividends[static_cast<std::size_t>(slot - 1)][k][static_cast<std::size_t>(atom)];
}

double MarketModel::rate_at(int k, int atom) const {
    const auto& r = data_.rates.at(static_cast<std::size_t>(k));
    return r[static_cast<std::size_t>(tree().ancestor(k, atom, k - 1))];
}

bool MarketModel::deterministic_rates() const {
    for (int k = 1; k <= horizon(); ++k) {
        const auto& r = rate(k);
        if (r.max() - r.min() > 1e-12) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

PayoffSpaceBasis PayoffSpaceBasis::build(const MarketModel& model) {
    PayoffSpaceBasis basis;
    basis.tree_ = model.tree();
    const EventTree& tree = model.tree();
    const int T = tree.horizon();
    basis.local_.resize(static_cast<std::size_t>(T + 1));
    for (int k = 1; k <= T; ++k) {
        auto& level = basis.local_[static_cast<std::size_t>(k)];
        for (int parent = 0; parent < tree.atom_count(k - 1); ++parent) {
            const auto kids = tree.children(k - 1, parent);
            const auto n = static_cast<Eigen::Index>(kids.size());
            LocalBasis local;
            local.weights.resize(n);
            local.generators.resize(n, model.slots());
            for (Eigen::Index j = 0; j < n; ++j) {
                const int child = kids[static_cast<std::size_t>(j)];
                local.weights(j) = tree.conditional_prob(k, child);
                for (int s = 0; s < model.slots(); ++s) local.generators(j, s) = model.payoff(s, k, child);
            }
            const Eigen::VectorXd root = local.weights.cwiseSqrt();
            const Eigen::MatrixXd scaled = root.asDiagonal() * local.generators;
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled, Eigen::ComputeFullU);
            const auto& sigma = svd.singularValues();
            const double top = sigma.size() > 0 ? sigma(0) : 0.0;
            int rank = 0;
            for (Eigen::Index i = 0; i < sigma.size(); ++i) {
                if (sigma(i) > kRankTolerance * top) ++rank;
            }
            local.rank = rank;
            local.q = root.cwiseInverse().asDiagonal() * svd.matrixU().leftCols(rank);
            level.push_back(std::move(local));
        }
    }
    return basis;
}

int PayoffSpaceBasis::rank(int k) const {
    int total = 0;
    for (const auto& local : local_.at(static_cast<std::size_t>(k))) total += local.rank;
    return total;
}

const LocalBasis& PayoffSpaceBasis::local(int k, int parent_atom) const {
    return local_.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(parent_atom));
}

std::vector<RandomVariable> PayoffSpaceBasis::generators(int k) const {
    std::vector<RandomVariable> out;
    for (int parent = 0; parent < tree_.atom_count(k - 1); ++parent) {
        const auto& local = this->local(k, parent);
        const auto kids = tree_.children(k - 1, parent);
        for (Eigen::Index s = 0; s < local.generators.cols(); ++s) {
            auto g = RandomVariable::constant(tree_, k, 0.0);
            for (std::size_t j = 0; j < kids.size(); ++j) {
                g[static_cast<std::size_t>(kids[j])] = local.generators(static_cast<Eigen::Index>(j), s);
            }
            out.push_back(std::move(g));
        }
    }
    return out;
}

std::vector<RandomVariable> PayoffSpaceBasis::orthonormal(int k) const {
    std::vector<RandomVariable> out;
    for (int parent = 0; parent < tree_.atom_count(k - 1); ++parent) {
        const auto& local = this->local(k, parent);
        const auto kids = tree_.children(k - 1, parent);
        const double scale = 1.0 / std::sqrt(tree_.prob(k - 1, parent));
        for (int r = 0; r < local.rank; ++r) {
            auto e = RandomVariable::constant(tree_, k, 0.0);
            for (std::size_t j = 0; j < kids.size(); ++j) {
                e[static_cast<std::size_t>(kids[j])] = scale * local.q(static_cast<Eigen::Index>(j), r);
            }
            out.push_back(std::move(e));
        }
    }
    return out;
}

RandomVariable PayoffSpaceBasis::project(int k, const RandomVariable& x) const {
    if (k < 1 || k > horizon()) throw Error(ErrorKind::LevelMismatch, "projection index out of range");
    if (x.level() < k) return x.lifted(k);
    const RandomVariable xk = condexp(x, k);
    RandomVariable out = RandomVariable::constant(tree_, k, 0.0);
    for (int parent = 0; parent < tree_.atom_count(k - 1); ++parent) {
        const auto& local = this->local(k, parent);
        const auto kids = tree_.children(k - 1, parent);
        Eigen::VectorXd v(static_cast<Eigen::Index>(kids.size()));
        for (std::size_t j = 0; j < kids.size(); ++j) v(static_cast<Eigen::Index>(j)) = xk[static_cast<std::size_t>(kids[j])];
        const Eigen::VectorXd coef = local.q.transpose() * local.weights.asDiagonal() * v;
        const Eigen::VectorXd p = local.q * coef;
        for (std::size_t j = 0; j < kids.size(); ++j) out[static_cast<std::size_t>(kids[j])] = p(static_cast<Eigen::Index>(j));
    }
    return out;
}

Eigen::MatrixXd PayoffSpaceBasis::projector(int k) const {
    const int n = tree_.atom_count(k);
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int parent = 0; parent < tree_.atom_count(k - 1); ++parent) {
        const auto& local = this->local(k, parent);
        const auto kids = tree_.children(k - 1, parent);
        const Eigen::MatrixXd block = local.q * local.q.transpose() * local.weights.asDiagonal();
        for (std::size_t i = 0; i < kids.size(); ++i) {
            for (std::size_t j = 0; j < kids.size(); ++j) {
                p(kids[i], kids[j]) = block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
    }
    return p;
}

double PayoffSpaceBasis::residual(int k, const RandomVariable& x) const {
    return norm(x.lifted(std::max(k, x.level())) - project(k, x));
}

// ---------------------------------------------------------------------------

double pricing_error(const MarketModel& model, const AdaptedProcess& spd) {
    const EventTree& tree = model.tree();
    double worst = 0.0;
    for (int k = 0; k < tree.horizon(); ++k) {
        for (int a = 0; a < tree.atom_count(k); ++a) {
            const double rk = spd[k][static_cast<std::size_t>(a)];
            for (int s = 0; s < model.slots(); ++s) {
                double rhs = 0.0;
                for (int child : tree.children(k, a)) {
                    rhs += tree.conditional_prob(k + 1, child) * spd[k + 1][static_cast<std::size_t>(child)] *
                           model.payoff(s, k + 1, child);
                }
                worst = std::max(worst, std::abs(rk * model.price(s, k, a) - rhs));
            }
        }
    }
    return worst;
}

namespace {

struct NodeSystem {
    Eigen::MatrixXd a;  // slots x children: conditional prob * payoff
    Eigen::VectorXd b;  // prices at the node
};

NodeSystem node_system(const MarketModel& model, int k, int atom) {
    const EventTree& tree = model.tree();
    const auto kids = tree.children(k, atom);
    NodeSystem sys;
    sys.a.resize(model.slots(), static_cast<Eigen::Index>(kids.size()));
    sys.b.resize(model.slots());
    for (int s = 0; s < model.slots(); ++s) {
        sys.b(s) = model.price(s, k, atom);
        for (std::size_t j = 0; j < kids.size(); ++j) {
            sys.a(s, static_cast<Eigen::Index>(j)) =
                tree.conditional_prob(k + 1, kids[j]) * model.payoff(s, k + 1, kids[j]);
        }
    }
    return sys;
}

// Largest t such that some ratio vector q >= t solves the node's pricing system.
std::pair<double, Eigen::VectorXd> max_min_ratios(const NodeSystem& sys) {
    lp::Builder lp;
    const int t = lp.add_variable(0.0, -1.0);
    std::vector<int> y;
    for (Eigen::Index j = 0; j < sys.a.cols(); ++j) y.push_back(lp.add_variable(0.0, 0.0));
    for (Eigen::Index s = 0; s < sys.a.rows(); ++s) {
        std::vector<std::pair<int, double>> terms;
        double tsum = 0.0;
        for (Eigen::Index j = 0; j < sys.a.cols(); ++j) {
            terms.push_back({y[static_cast<std::size_t>(j)], sys.a(s, j)});
            tsum += sys.a(s, j);
        }
        terms.push_back({t, tsum});
        lp.add_constraint(std::move(terms), lp::Sense::Equal, sys.b(s));
    }
    const auto res = lp.minimize();
    if (res.status != lp::Status::Optimal) return {-1.0, {}};
    Eigen::VectorXd q(sys.a.cols());
    for (Eigen::Index j = 0; j < sys.a.cols(); ++j) q(j) = res.x(t) + res.x(y[static_cast<std::size_t>(j)]);
    return {res.x(t), q};
}

template <typename RatioFn>
AdaptedProcess spd_from_ratios(const MarketModel& model, RatioFn&& ratios) {
    const EventTree& tree = model.tree();
    auto spd = AdaptedProcess::zeros(tree);
    spd[0][0] = 1.0;
    for (int k = 0; k < tree.horizon(); ++k) {
        for (int a = 0; a < tree.atom_count(k); ++a) {
            const Eigen::VectorXd q = ratios(k, a, node_system(model, k, a));
            const auto kids = tree.children(k, a);
            for (std::size_t j = 0; j < kids.size(); ++j) {
                spd[k + 1][static_cast<std::size_t>(kids[j])] =
                    spd[k][static_cast<std::size_t>(a)] * q(static_cast<Eigen::Index>(j));
            }
        }
    }
    return spd;
}

}  // namespace

AdaptedProcess check_no_arbitrage(const MarketModel& model) {
    return spd_from_ratios(model, [](int k, int a, const NodeSystem& sys) {
        auto [t, q] = max_min_ratios(sys);
        if (t < kSpdFloor) {
            throw Error(ErrorKind::ArbitrageDetected, "no positive state price ratios at level " +
                                                          std::to_string(k) + ", atom " + std::to_string(a));
        }
        return q;
    });
}

AdaptedProcess alternative_positive_spd(const MarketModel& model, std::uint64_t seed) {
    int node = 0;
    return spd_from_ratios(model, [&](int k, int a, const NodeSystem& sys) {
        auto [t, q] = max_min_ratios(sys);
        if (t < kSpdFloor) {
            throw Error(ErrorKind::ArbitrageDetected, "no positive state price ratios at level " +
                                                          std::to_string(k) + ", atom " + std::to_string(a));
        }
        Rng rng(mix_seed(seed, static_cast<std::uint64_t>(node++)));
        const double floor = std::max(kSpdFloor, 1e-3 * t);
        lp::Builder lp;
        std::vector<int> vars;
        for (Eigen::Index j = 0; j < sys.a.cols(); ++j) vars.push_back(lp.add_variable(floor, rng.uniform(-1.0, 1.0)));
        for (Eigen::Index s = 0; s < sys.a.rows(); ++s) {
            std::vector<std::pair<int, double>> terms;
            for (Eigen::Index j = 0; j < sys.a.cols(); ++j) terms.push_back({vars[static_cast<std::size_t>(j)], sys.a(s, j)});
            lp.add_constraint(std::move(terms), lp::Sense::Equal, sys.b(s));
        }
        const auto res = lp.minimize();
        if (res.status != lp::Status::Optimal) return q;
        return Eigen::VectorXd(res.x);
    });
}

AdaptedProcess aggregate_spd(const PayoffSpaceBasis& basis, const AdaptedProcess& spd) {
    const EventTree& tree = spd[0].tree();
    std::vector<RandomVariable> m{RandomVariable::constant(tree, 0, 1.0)};
    for (int k = 1; k <= tree.horizon(); ++k) {
        for (double v : spd[k].values()) {
            if (!(v > 0.0)) throw Error(ErrorKind::PreconditionViolated, "aggregate SPD requires a positive SPD");
        }
        const RandomVariable step = basis.project(k, spd[k] / spd[k - 1]);
        RandomVariable mk = m.back() * step;
        const double scale = std::max(1.0, std::abs(mk.max()) + std::abs(mk.min()));
        for (int a = 0; a < tree.atom_count(k); ++a) {
            if (std::abs(mk[static_cast<std::size_t>(a)]) <= 1e-12 * scale) {
                throw Error(ErrorKind::VanishingAggregateSPD,
                            "M_" + std::to_string(k) + " vanishes on atom " + std::to_string(a));
            }
        }
        m.push_back(std::move(mk));
    }
    return AdaptedProcess(std::move(m));
}

AdaptedProcess perturbed_aggregate_spd(const AdaptedProcess& aggregate, const HabitWeights& beta) {
    const int T = aggregate.horizon();
    std::vector<RandomVariable> out(static_cast<std::size_t>(T + 1));
    for (int k = T; k >= 0; --k) {
        RandomVariable mk = aggregate[k];
        for (int m = k + 1; m <= T; ++m) {
            const double b = beta(m, k);
            if (b != 0.0) mk = mk + b * condexp(out[static_cast<std::size_t>(m)], k);
        }
        out[static_cast<std::size_t>(k)] = std::move(mk);
    }
    return AdaptedProcess(std::move(out));
}

std::string to_string(MarketTag tag) {
    switch (tag) {
    case MarketTag::Complete: return "Complete";
    case MarketTag::TypeC: return "TypeC";
    case MarketTag::Idiosyncratic: return "Idiosyncratic";
    case MarketTag::General: return "General";
    }
    return "General";
}

namespace {

bool close(double a, double b, double tol) { return std::abs(a - b) <= tol * std::max(1.0, std::max(std::abs(a), std::abs(b))); }

// Maps each leaf to its F-atom per level; validates that F is a filtration coarser than G.
std::vector<std::vector<int>> check_sub_filtration_clause_i(const EventTree& tree, const LeafPartitions& f) {
    const int T = tree.horizon();
    auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidWitness, "clause (i): " + why); };
    if (static_cast<int>(f.size()) != T + 1) fail("expected T+1 levels");
    std::vector<std::vector<int>> leaf_atom(static_cast<std::size_t>(T + 1),
                                            std::vector<int>(static_cast<std::size_t>(tree.leaf_count()), -1));
    for (int k = 0; k <= T; ++k) {
        const auto& atoms = f[static_cast<std::size_t>(k)];
        for (std::size_t a = 0; a < atoms.size(); ++a) {
            for (int leaf : atoms[a]) {
                if (leaf < 0 || leaf >= tree.leaf_count()) fail("leaf index out of range");
                auto& slot = leaf_atom[static_cast<std::size_t>(k)][static_cast<std::size_t>(leaf)];
                if (slot != -1) fail("F_" + std::to_string(k) + " is not a partition");
                slot = static_cast<int>(a);
            }
        }
        for (int v : leaf_atom[static_cast<std::size_t>(k)]) {
            if (v == -1) fail("F_" + std::to_string(k) + " does not cover every leaf");
        }
        if (k == 0 && atoms.size() != 1) fail("F_0 must be trivial");
        // F_k within G_k: every G_k atom sits inside one F_k atom.
        for (int g = 0; g < tree.atom_count(k); ++g) {
            const auto leaves = tree.leaves(k, g);
            for (int leaf : leaves) {
                if (leaf_atom[static_cast<std::size_t>(k)][static_cast<std::size_t>(leaf)] !=
                    leaf_atom[static_cast<std::size_t>(k)][static_cast<std::size_t>(leaves[0])]) {
                    fail("F_" + std::to_string(k) + " is not contained in G_" + std::to_string(k));
                }
            }
        }
        if (k > 0) {
            for (const auto& atom : atoms) {
                for (int leaf : atom) {
                    if (leaf_atom[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(leaf)] !=
                        leaf_atom[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(atom[0])]) {
                        fail("F is not nested at level " + std::to_string(k));
                    }
                }
            }
        }
    }
    return leaf_atom;
}

double leaf_mass(const EventTree& tree, const std::vector<int>& leaves) {
    double p = 0.0;
    for (int leaf : leaves) p += tree.leaf_probs()[static_cast<std::size_t>(leaf)];
    return p;
}

void check_clause_ii(const MarketModel& model, const LeafPartitions& f, const std::vector<std::vector<int>>& leaf_atom) {
    const EventTree& tree = model.tree();
    const int T = tree.horizon();
    auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidWitness, "clause (ii): " + why); };
    auto f_of_g = [&](int k, int g) { return leaf_atom[static_cast<std::size_t>(k)][static_cast<std::size_t>(tree.leaves(k, g)[0])]; };
    // Prices, dividends and rates must be expressible on F.
    for (int k = 0; k <= T; ++k) {
        std::vector<int> rep(f[static_cast<std::size_t>(k)].size(), -1);
        for (int g = 0; g < tree.atom_count(k); ++g) {
            int& r = rep[static_cast<std::size_t>(f_of_g(k, g))];
            if (r == -1) {
                r = g;
                continue;
            }
            for (int s = 0; s < model.slots(); ++s) {
                if (!close(model.price(s, k, g), model.price(s, k, r), 1e-12) ||
                    !close(model.dividend(s, k, g), model.dividend(s, k, r), 1e-12)) {
                    fail("asset " + std::to_string(s) + " is not F-adapted at level " + std::to_string(k));
                }
            }
        }
    }
    // Completeness with respect to F.
    for (int k = 1; k <= T; ++k) {
        const auto& parents = f[static_cast<std::size_t>(k - 1)];
        for (std::size_t pa = 0; pa < parents.size(); ++pa) {
            std::vector<int> kids;
            for (std::size_t c = 0; c < f[static_cast<std::size_t>(k)].size(); ++c) {
                const int leaf = f[static_cast<std::size_t>(k)][c][0];
                if (leaf_atom[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(leaf)] == static_cast<int>(pa)) {
                    kids.push_back(static_cast<int>(c));
                }
            }
            Eigen::MatrixXd g(static_cast<Eigen::Index>(kids.size()), model.slots());
            for (std::size_t j = 0; j < kids.size(); ++j) {
                const int leaf = f[static_cast<std::size_t>(k)][static_cast<std::size_t>(kids[j])][0];
                const int gatom = tree.atom_of_leaf(k, leaf);
                const double w = std::sqrt(leaf_mass(tree, f[static_cast<std::size_t>(k)][static_cast<std::size_t>(kids[j])]));
                for (int s = 0; s < model.slots(); ++s) g(static_cast<Eigen::Index>(j), s) = w * model.payoff(s, k, gatom);
            }
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(g);
            const auto& sigma = svd.singularValues();
            int rank = 0;
            for (Eigen::Index i = 0; i < sigma.size(); ++i) {
                if (sigma(i) > PayoffSpaceBasis::kRankTolerance * sigma(0)) ++rank;
            }
            if (rank != static_cast<int>(kids.size())) {
                fail("market is not complete with respect to F at level " + std::to_string(k));
            }
        }
    }
}

void check_clause_iii(const EventTree& tree, const LeafPartitions& f, const std::vector<std::vector<int>>& leaf_atom) {
    const int T = tree.horizon();
    for (int k = 0; k < T; ++k) {
        for (const auto& a : f[static_cast<std::size_t>(k + 1)]) {
            std::vector<char> in(static_cast<std::size_t>(tree.leaf_count()), 0);
            for (int leaf : a) in[static_cast<std::size_t>(leaf)] = 1;
            // E[1_A | F_k] per F_k atom.
            const auto& fk = f[static_cast<std::size_t>(k)];
            std::vector<double> by_f(fk.size());
            for (std::size_t b = 0; b < fk.size(); ++b) {
                double hit = 0.0;
                for (int leaf : fk[b]) {
                    if (in[static_cast<std::size_t>(leaf)]) hit += tree.leaf_probs()[static_cast<std::size_t>(leaf)];
                }
                by_f[b] = hit / leaf_mass(tree, fk[b]);
            }
            for (int g = 0; g < tree.atom_count(k); ++g) {
                double hit = 0.0;
                for (int leaf : tree.leaves(k, g)) {
                    if (in[static_cast<std::size_t>(leaf)]) hit += tree.leaf_probs()[static_cast<std::size_t>(leaf)];
                }
                const double by_g = hit / tree.prob(k, g);
                const int fa = leaf_atom[static_cast<std::size_t>(k)][static_cast<std::size_t>(tree.leaves(k, g)[0])];
                if (std::abs(by_g - by_f[static_cast<std::size_t>(fa)]) > 1e-10) {
                    throw Error(ErrorKind::InvalidWitness,
                                "clause (iii): E[X|G_" + std::to_string(k) + "] differs from E[X|F_" +
                                    std::to_string(k) + "] for an F_" + std::to_string(k + 1) + " indicator");
                }
            }
        }
    }
}

// Groups level-k atoms by the nonzero pattern of a positivity-preserving projector and checks that
// the projector is the conditional expectation onto the resulting partition.
std::optional<std::vector<std::vector<int>>> intermediate_partition(const EventTree& tree, int k,
                                                                    const Eigen::MatrixXd& p) {
    constexpr double kTol = 1e-10;
    const int n = tree.atom_count(k);
    if (p.minCoeff() < -kTol) return std::nullopt;
    std::vector<int> label(static_cast<std::size_t>(n));
    std::iota(label.begin(), label.end(), 0);
    std::function<int(int)> find = [&](int i) {
        while (label[static_cast<std::size_t>(i)] != i) i = label[static_cast<std::size_t>(i)] = label[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
        return i;
    };
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (std::abs(p(i, j)) > kTol) label[static_cast<std::size_t>(find(i))] = find(j);
        }
    }
    std::vector<std::vector<int>> blocks;
    std::vector<int> block_of(static_cast<std::size_t>(n), -1);
    for (int i = 0; i < n; ++i) {
        const int root = find(i);
        if (block_of[static_cast<std::size_t>(root)] == -1) {
            block_of[static_cast<std::size_t>(root)] = static_cast<int>(blocks.size());
            blocks.emplace_back();
        }
        blocks[static_cast<std::size_t>(block_of[static_cast<std::size_t>(root)])].push_back(i);
    }
    for (const auto& block : blocks) {
        double mass = 0.0;
        for (int j : block) mass += tree.prob(k, j);
        for (int i : block) {
            for (int j : block) {
                if (std::abs(p(i, j) - tree.prob(k, j) / mass) > 1e-9) return std::nullopt;
            }
        }
    }
    return blocks;
}

}  // namespace

MarketClass classify_market(const MarketModel& model, const PayoffSpaceBasis& basis,
                            const std::optional<LeafPartitions>& candidate) {
    const EventTree& tree = model.tree();
    const int T = tree.horizon();
    MarketClass out;
    bool complete = true;
    for (int k = 1; k <= T; ++k) complete = complete && basis.rank(k) == tree.atom_count(k);

    const auto& witness = candidate ? candidate : model.data().sub_filtration;
    if (!complete && witness) {
        const auto leaf_atom = check_sub_filtration_clause_i(tree, *witness);
        check_clause_ii(model, *witness, leaf_atom);
        check_clause_iii(tree, *witness, leaf_atom);
    }

    std::vector<std::vector<std::vector<int>>> partitions(static_cast<std::size_t>(T + 1));
    bool type_c = true;
    for (int k = 1; k <= T && type_c; ++k) {
        auto blocks = intermediate_partition(tree, k, basis.projector(k));
        if (!blocks) {
            type_c = false;
        } else {
            partitions[static_cast<std::size_t>(k)] = std::move(*blocks);
        }
    }
    if (complete) {
        out.tag = MarketTag::Complete;
        out.intermediate = std::move(partitions);
    } else if (witness) {
        out.tag = MarketTag::Idiosyncratic;
        out.sub_filtration = witness;
        if (type_c) out.intermediate = std::move(partitions);
    } else if (type_c) {
        out.tag = MarketTag::TypeC;
        out.intermediate = std::move(partitions);
    }
    return out;
}

AdaptedProcess consumption_to_wealth(const AdaptedProcess& aggregate, const AdaptedProcess& c,
                                     const AdaptedProcess& eps) {
    const int T = aggregate.horizon();
    std::vector<RandomVariable> terms;
    for (int l = 0; l <= T; ++l) terms.push_back(aggregate[l] * (c[l] - eps[l]));
    std::vector<RandomVariable> w;
    for (int k = 0; k <= T; ++k) {
        RandomVariable acc = RandomVariable::constant(aggregate[k].tree(), k, 0.0);
        for (int l = k; l <= T; ++l) acc = acc + condexp(terms[static_cast<std::size_t>(l)], k);
        w.push_back(acc / aggregate[k]);
    }
    return AdaptedProcess(std::move(w));
}

AdaptedProcess wealth_to_consumption(const PayoffSpaceBasis& basis, const AdaptedProcess& aggregate,
                                     const AdaptedProcess& wealth, const AdaptedProcess& eps) {
    const int T = aggregate.horizon();
    for (int k = 1; k <= T; ++k) {
        const double r = basis.residual(k, wealth[k]);
        if (r > 1e-8) {
            throw Error(ErrorKind::NotInPayoffSpace,
                        "W_" + std::to_string(k) + " has projection residual " + std::to_string(r));
        }
    }
    std::vector<RandomVariable> c;
    for (int k = 0; k <= T; ++k) {
        RandomVariable ck = eps[k] + wealth[k];
        if (k < T) ck = ck - condexp(aggregate[k + 1] * wealth[k + 1], k) / aggregate[k];
        c.push_back(std::move(ck));
    }
    return AdaptedProcess(std::move(c));
}

PricedMarket PricedMarket::prepare(MarketModel model) {
    PayoffSpaceBasis basis = PayoffSpaceBasis::build(model);
    AdaptedProcess spd = check_no_arbitrage(model);
    AdaptedProcess aggregate = aggregate_spd(basis, spd);
    return PricedMarket{std::move(model), std::move(basis), std::move(spd), std::move(aggregate)};
}

}  // namespace habitopt
