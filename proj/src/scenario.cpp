#include "habitopt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "habitopt/error.hpp"
#include "habitopt/problem.hpp"
#include "habitopt/random.hpp"

namespace habitopt {

std::string to_string(MarketFamily f) {
    switch (f) {
    case MarketFamily::Complete: return "complete";
    case MarketFamily::Bond: return "bond";
    case MarketFamily::TypeC: return "typec";
    case MarketFamily::Idiosyncratic: return "idiosyncratic";
    case MarketFamily::General: return "general";
    }
    return "general";
}

MarketFamily parse_market_family(const std::string& name) {
    for (auto f : {MarketFamily::Complete, MarketFamily::Bond, MarketFamily::TypeC, MarketFamily::Idiosyncratic,
                   MarketFamily::General}) {
        if (to_string(f) == name) return f;
    }
    throw Error(ErrorKind::InvalidInput, "unknown market family '" + name + "'");
}

namespace {

int child_position(const EventTree& tree, int k, int atom) {
    const auto kids = tree.children(k - 1, tree.parent(k, atom));
    return static_cast<int>(std::find(kids.begin(), kids.end(), atom) - kids.begin());
}

// Market-move path of every atom in a 4-ary tree (move = child position / 2), indexed per level.
std::vector<std::vector<int>> market_atoms(const EventTree& tree, LeafPartitions& partitions) {
    const int T = tree.horizon();
    std::vector<std::vector<std::vector<int>>> paths(static_cast<std::size_t>(T + 1));
    paths[0].push_back({});
    std::vector<std::vector<int>> index(static_cast<std::size_t>(T + 1));
    partitions.assign(static_cast<std::size_t>(T + 1), {});
    for (int k = 0; k <= T; ++k) {
        if (k > 0) {
            for (int a = 0; a < tree.atom_count(k); ++a) {
                auto p = paths[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(tree.parent(k, a))];
                p.push_back(child_position(tree, k, a) / 2);
                paths[static_cast<std::size_t>(k)].push_back(std::move(p));
            }
        }
        std::map<std::vector<int>, int> ids;
        for (const auto& p : paths[static_cast<std::size_t>(k)]) ids.emplace(p, 0);
        int next = 0;
        for (auto& [p, id] : ids) id = next++;
        auto& part = partitions[static_cast<std::size_t>(k)];
        part.assign(ids.size(), {});
        for (int a = 0; a < tree.atom_count(k); ++a) {
            const int id = ids.at(paths[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)]);
            index[static_cast<std::size_t>(k)].push_back(id);
            for (int leaf : tree.leaves(k, a)) part[static_cast<std::size_t>(id)].push_back(leaf);
        }
        for (auto& atom : part) std::sort(atom.begin(), atom.end());
    }
    return index;
}

struct Draft {
    EventTree tree;
    int assets = 0;
    std::vector<RandomVariable> rates;
    std::optional<LeafPartitions> filtration;
};

Scenario attempt(const ScenarioSeed& cfg, Rng& rng) {
    const auto& br = cfg.branching;
    const int T = static_cast<int>(br.size());
    if (T < 1) throw Error(ErrorKind::InvalidInput, "scenario needs at least one period");
    const bool idio = cfg.market == MarketFamily::Idiosyncratic;
    for (int b : br) {
        if (b < 1) throw Error(ErrorKind::InvalidInput, "branching must be positive");
        if (idio && b != 4) throw Error(ErrorKind::InvalidInput, "idiosyncratic scenarios use 4-ary nodes");
    }
    if (cfg.market == MarketFamily::General && *std::max_element(br.begin(), br.end()) < 3) {
        throw Error(ErrorKind::InvalidInput, "general scenarios need a node with at least 3 children");
    }

    // Tree. Idiosyncratic nodes cross a market move with an independent noise bit; the move
    // probability depends on the market path only.
    std::vector<std::vector<std::vector<double>>> cond(static_cast<std::size_t>(T));
    std::size_t atoms = 1;
    if (idio) {
        std::map<std::vector<int>, double> move_prob;
        std::vector<std::vector<int>> paths{{}};
        for (int k = 0; k < T; ++k) {
            std::vector<std::vector<int>> next_paths;
            for (std::size_t a = 0; a < atoms; ++a) {
                auto it = move_prob.find(paths[a]);
                if (it == move_prob.end()) it = move_prob.emplace(paths[a], rng.uniform(0.3, 0.7)).first;
                const double pf = it->second;
                const double pg = rng.uniform(0.3, 0.7);
                cond[static_cast<std::size_t>(k)].push_back({pf * pg, pf * (1 - pg), (1 - pf) * pg, (1 - pf) * (1 - pg)});
                for (int c = 0; c < 4; ++c) {
                    auto p = paths[a];
                    p.push_back(c / 2);
                    next_paths.push_back(std::move(p));
                }
            }
            paths = std::move(next_paths);
            atoms *= 4;
        }
    } else {
        for (int k = 0; k < T; ++k) {
            for (std::size_t a = 0; a < atoms; ++a) {
                std::vector<double> p;
                double total = 0.0;
                for (int c = 0; c < br[static_cast<std::size_t>(k)]; ++c) {
                    p.push_back(rng.uniform(0.2, 1.0));
                    total += p.back();
                }
                for (double& v : p) v /= total;
                cond[static_cast<std::size_t>(k)].push_back(std::move(p));
            }
            atoms *= static_cast<std::size_t>(br[static_cast<std::size_t>(k)]);
        }
    }
    const EventTree tree = EventTree::from_conditional(cond);

    LeafPartitions partitions;
    std::vector<std::vector<int>> f_index;
    if (idio) f_index = market_atoms(tree, partitions);
    auto key = [&](int k, int a) { return idio ? f_index[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)] : a; };
    auto keyed = [&](int level, double lo, double hi) {
        const int n = idio ? static_cast<int>(partitions[static_cast<std::size_t>(level)].size()) : tree.atom_count(level);
        std::vector<double> v;
        for (int i = 0; i < n; ++i) v.push_back(rng.uniform(lo, hi));
        return v;
    };

    // Interest rates.
    const bool stochastic = cfg.stochastic_rates && cfg.market == MarketFamily::General;
    std::vector<RandomVariable> rates{RandomVariable::constant(tree, 0, 0.0)};
    for (int k = 1; k <= T; ++k) {
        if (stochastic) {
            std::vector<double> r;
            for (int a = 0; a < tree.atom_count(k - 1); ++a) r.push_back(rng.integer(0, 1) ? 0.05 : 0.0);
            rates.emplace_back(tree, k - 1, std::move(r));
        } else {
            rates.push_back(RandomVariable::constant(tree, k - 1, rng.integer(0, 1) ? 0.05 : 0.0));
        }
    }

    // Asset count and, for type C, the block structure of every node's children.
    int assets = 0;
    std::vector<std::vector<std::vector<int>>> blocks(static_cast<std::size_t>(T));  // [k][parent] -> block id per child
    switch (cfg.market) {
    case MarketFamily::Bond: assets = 0; break;
    case MarketFamily::Complete: assets = *std::max_element(br.begin(), br.end()) - 1; break;
    case MarketFamily::Idiosyncratic: assets = 1; break;
    case MarketFamily::General: assets = std::max(1, *std::max_element(br.begin(), br.end()) - 2); break;
    case MarketFamily::TypeC:
        for (int k = 0; k < T; ++k) {
            for (int a = 0; a < tree.atom_count(k); ++a) {
                const int b = br[static_cast<std::size_t>(k)];
                const int nb = b == 1 ? 1 : rng.integer(1, b);
                std::vector<int> id(static_cast<std::size_t>(b));
                for (int c = 0; c < b; ++c) id[static_cast<std::size_t>(c)] = c < nb ? c : rng.integer(0, nb - 1);
                assets = std::max(assets, nb - 1);
                blocks[static_cast<std::size_t>(k)].push_back(std::move(id));
            }
        }
        break;
    }

    // One-step SPD ratios q = R_{k+1}/R_k, normalized to price the bond.
    std::vector<RandomVariable> q{RandomVariable::constant(tree, 0, 1.0)};
    for (int k = 1; k <= T; ++k) {
        const auto raw = keyed(k, 0.5, 1.5);
        RandomVariable qk = RandomVariable::constant(tree, k, 0.0);
        for (int p = 0; p < tree.atom_count(k - 1); ++p) {
            double mass = 0.0;
            for (int c : tree.children(k - 1, p)) mass += tree.conditional_prob(k, c) * raw[static_cast<std::size_t>(key(k, c))];
            const double target = 1.0 / (1.0 + rates[static_cast<std::size_t>(k)][static_cast<std::size_t>(p)]);
            for (int c : tree.children(k - 1, p)) qk[static_cast<std::size_t>(c)] = raw[static_cast<std::size_t>(key(k, c))] * target / mass;
        }
        q.push_back(std::move(qk));
    }

    MarketData data;
    data.tree = tree;
    data.assets = assets;
    data.rates = rates;
    for (int i = 0; i < assets; ++i) {
        auto price = AdaptedProcess::zeros(tree);
        auto div = AdaptedProcess::zeros(tree);
        for (int k = T; k >= 1; --k) {
            const auto raw = keyed(k, 0.2, 1.5);
            for (int p = 0; p < tree.atom_count(k - 1); ++p) {
                const auto kids = tree.children(k - 1, p);
                if (cfg.market == MarketFamily::TypeC) {
                    const auto& id = blocks[static_cast<std::size_t>(k - 1)][static_cast<std::size_t>(p)];
                    const int nb = *std::max_element(id.begin(), id.end()) + 1;
                    for (int b = 0; b < nb; ++b) {
                        double top = 0.0;
                        for (std::size_t j = 0; j < kids.size(); ++j) {
                            if (id[j] == b) top = std::max(top, price[k][static_cast<std::size_t>(kids[j])]);
                        }
                        const double v = top + raw[static_cast<std::size_t>(kids[static_cast<std::size_t>(std::find(id.begin(), id.end(), b) - id.begin())])];
                        for (std::size_t j = 0; j < kids.size(); ++j) {
                            if (id[j] == b) div[k][static_cast<std::size_t>(kids[j])] = v - price[k][static_cast<std::size_t>(kids[j])];
                        }
                    }
                } else {
                    for (int c : kids) div[k][static_cast<std::size_t>(c)] = raw[static_cast<std::size_t>(key(k, c))];
                }
                double s = 0.0;
                for (int c : kids) {
                    const auto cs = static_cast<std::size_t>(c);
                    s += tree.conditional_prob(k, c) * q[static_cast<std::size_t>(k)][cs] * (price[k][cs] + div[k][cs]);
                }
                price[k - 1][static_cast<std::size_t>(p)] = s;
            }
        }
        data.prices.push_back(std::move(price));
        data.dividends.push_back(std::move(div));
    }
    if (idio) data.sub_filtration = partitions;

    Scenario sc{cfg, MarketModel::create(std::move(data)), {}, {}, 0};

    // Preferences and endowments.
    const HabitWeights beta = cfg.habit == 0.0 ? HabitWeights::none(T) : HabitWeights::one_lag(T, cfg.habit);
    AdaptedProcess h;
    if (cfg.exogenous_habit) {
        h = AdaptedProcess::zeros(tree);
        for (int k = 1; k <= T; ++k) {
            for (auto& v : h[k].mutable_values()) v = rng.uniform(0.0, 0.1);
        }
    }
    switch (cfg.utility) {
    case UtilityKind::Power: sc.prefs = HabitPreferences::power(T, cfg.gamma, cfg.rho, beta, h); break;
    case UtilityKind::Log: sc.prefs = HabitPreferences::log(T, cfg.rho, beta, h); break;
    case UtilityKind::Exponential: sc.prefs = HabitPreferences::exponential(T, cfg.gamma, cfg.rho, beta, h); break;
    case UtilityKind::Custom: throw Error(ErrorKind::InvalidInput, "custom utilities cannot be generated");
    }
    sc.eps = AdaptedProcess::zeros(tree);
    sc.eps[0][0] = rng.uniform(1.0, 2.0);
    if (cfg.endowment_after_start) {
        for (int k = 1; k <= T; ++k) {
            for (auto& v : sc.eps[k].mutable_values()) v = rng.uniform(0.0, 1.0);
        }
    }
    return sc;
}

bool acceptable(const Scenario& sc) {
    try {
        const auto market = PricedMarket::prepare(sc.model);
        const auto cls = classify_market(market.model, market.basis);
        MarketTag want = MarketTag::General;
        switch (sc.seed.market) {
        case MarketFamily::Complete: want = MarketTag::Complete; break;
        case MarketFamily::Bond:
        case MarketFamily::TypeC: want = MarketTag::TypeC; break;
        case MarketFamily::Idiosyncratic: want = MarketTag::Idiosyncratic; break;
        case MarketFamily::General: want = MarketTag::General; break;
        }
        if (cls.tag != want) return false;
        if (sc.prefs.inada()) {
            PrimalProblem problem(market, sc.prefs, sc.eps, SubtreeRoot{0, 0, {}, sc.eps[0][0]});
            problem.interior_point();
        }
        return true;
    } catch (const Error&) {
        return false;
    }
}

}  // namespace

Scenario generate(const ScenarioSeed& seed) {
    for (int n = 0; n < 1000; ++n) {
        Rng rng(mix_seed(seed.seed, static_cast<std::uint64_t>(n)));
        Scenario sc = attempt(seed, rng);
        sc.attempts = n + 1;
        if (acceptable(sc)) return sc;
    }
    throw Error(ErrorKind::GenerationExhausted, "no acceptable scenario after 1000 attempts for seed " +
                                                    std::to_string(seed.seed));
}

}  // namespace habitopt
