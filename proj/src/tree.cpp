#include "habitopt/tree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "habitopt/error.hpp"

namespace habitopt {

struct EventTree::Impl {
    int horizon = 0;
    int leaves = 0;
    std::vector<std::vector<std::vector<int>>> atom_leaves;  // [level][atom] -> leaves
    std::vector<std::vector<int>> leaf_atom;                 // [level][leaf] -> atom
    std::vector<std::vector<int>> parent;                    // [level][atom]
    std::vector<std::vector<std::vector<int>>> children;     // [level][atom] -> atoms at level+1
    std::vector<std::vector<double>> atom_prob;              // [level][atom]
    std::vector<double> leaf_prob;
};

namespace {

constexpr double kProbTolerance = 1e-12;

}  // namespace

EventTree EventTree::build(const TreeDescription& d) {
    if (d.horizon < 1) {
        throw Error(ErrorKind::InvalidInput, "horizon must be at least 1");
    }
    if (static_cast<int>(d.levels.size()) != d.horizon + 1) {
        throw Error(ErrorKind::InvalidInput, "expected T+1 levels");
    }
    auto impl = std::make_shared<Impl>();
    impl->horizon = d.horizon;
    impl->leaves = static_cast<int>(d.probs.size());
    const int n = impl->leaves;
    if (n == 0) {
        throw Error(ErrorKind::BadProbability, "no terminal atoms");
    }

    double total = 0.0;
    for (double p : d.probs) {
        if (!(p > 0.0) || !std::isfinite(p)) {
            throw Error(ErrorKind::BadProbability, "terminal probabilities must be positive");
        }
        total += p;
    }
    if (std::abs(total - 1.0) > kProbTolerance) {
        throw Error(ErrorKind::BadProbability, "terminal probabilities sum to " + std::to_string(total));
    }
    impl->leaf_prob = d.probs;
    for (double& p : impl->leaf_prob) p /= total;

    const auto levels = static_cast<std::size_t>(d.horizon + 1);
    impl->atom_leaves = d.levels;
    impl->leaf_atom.assign(levels, std::vector<int>(static_cast<std::size_t>(n), -1));
    for (std::size_t k = 0; k < levels; ++k) {
        const auto& atoms = d.levels[k];
        if (atoms.empty()) {
            throw Error(ErrorKind::InvalidInput, "level " + std::to_string(k) + " has no atoms");
        }
        for (std::size_t a = 0; a < atoms.size(); ++a) {
            if (atoms[a].empty()) {
                throw Error(ErrorKind::InvalidInput, "empty atom at level " + std::to_string(k));
            }
            for (int leaf : atoms[a]) {
                if (leaf < 0 || leaf >= n) {
                    throw Error(ErrorKind::InvalidInput, "leaf index out of range");
                }
                auto& slot = impl->leaf_atom[k][static_cast<std::size_t>(leaf)];
                if (slot != -1) {
                    throw Error(ErrorKind::NonNested,
                                "leaf " + std::to_string(leaf) + " appears twice at level " + std::to_string(k));
                }
                slot = static_cast<int>(a);
            }
        }
        for (int leaf = 0; leaf < n; ++leaf) {
            if (impl->leaf_atom[k][static_cast<std::size_t>(leaf)] == -1) {
                throw Error(ErrorKind::NonNested,
                            "level " + std::to_string(k) + " does not cover leaf " + std::to_string(leaf));
            }
        }
    }
    if (d.levels[0].size() != 1) {
        throw Error(ErrorKind::NonNested, "level 0 must consist of a single atom");
    }
    for (const auto& atom : d.levels.back()) {
        if (atom.size() != 1) {
            throw Error(ErrorKind::NonNested, "terminal atoms must be single leaves");
        }
    }

    impl->parent.assign(levels, {});
    impl->children.assign(levels, {});
    impl->atom_prob.assign(levels, {});
    for (std::size_t k = 0; k < levels; ++k) {
        const auto& atoms = impl->atom_leaves[k];
        impl->atom_prob[k].resize(atoms.size());
        impl->children[k].resize(atoms.size());
        for (std::size_t a = 0; a < atoms.size(); ++a) {
            double p = 0.0;
            for (int leaf : atoms[a]) p += impl->leaf_prob[static_cast<std::size_t>(leaf)];
            impl->atom_prob[k][a] = p;
        }
        if (k == 0) {
            impl->parent[0] = {-1};
            continue;
        }
        impl->parent[k].resize(atoms.size());
        for (std::size_t a = 0; a < atoms.size(); ++a) {
            const int up = impl->leaf_atom[k - 1][static_cast<std::size_t>(atoms[a].front())];
            for (int leaf : atoms[a]) {
                if (impl->leaf_atom[k - 1][static_cast<std::size_t>(leaf)] != up) {
                    throw Error(ErrorKind::NonNested, "atom " + std::to_string(a) + " at level " +
                                                          std::to_string(k) + " straddles two parent atoms");
                }
            }
            impl->parent[k][a] = up;
            impl->children[k - 1][static_cast<std::size_t>(up)].push_back(static_cast<int>(a));
        }
    }
    return EventTree(std::move(impl));
}

EventTree EventTree::from_conditional(const std::vector<std::vector<std::vector<double>>>& child_probs) {
    const int horizon = static_cast<int>(child_probs.size());
    if (horizon < 1) {
        throw Error(ErrorKind::InvalidInput, "horizon must be at least 1");
    }
    // Expand the tree depth-first; each node records its probability and leaf range.
    struct Node {
        double prob;
        int first;
        int count;
    };
    std::vector<std::vector<Node>> nodes(static_cast<std::size_t>(horizon + 1));
    nodes[0].push_back({1.0, 0, 0});
    for (int k = 0; k < horizon; ++k) {
        const auto& level = child_probs[static_cast<std::size_t>(k)];
        if (level.size() != nodes[static_cast<std::size_t>(k)].size()) {
            throw Error(ErrorKind::InvalidInput, "child probability table does not match atom count");
        }
        for (std::size_t a = 0; a < level.size(); ++a) {
            for (double q : level[a]) {
                nodes[static_cast<std::size_t>(k) + 1].push_back({nodes[static_cast<std::size_t>(k)][a].prob * q, 0, 0});
            }
        }
    }
    TreeDescription d;
    d.horizon = horizon;
    const auto& last = nodes.back();
    for (const auto& leaf : last) d.probs.push_back(leaf.prob);
    d.levels.resize(static_cast<std::size_t>(horizon + 1));
    // Leaf ranges: walk back up, each atom owns the union of its children's ranges.
    std::vector<std::pair<int, int>> ranges(last.size());
    for (std::size_t i = 0; i < last.size(); ++i) ranges[i] = {static_cast<int>(i), 1};
    for (int k = horizon; k >= 0; --k) {
        auto& out = d.levels[static_cast<std::size_t>(k)];
        for (const auto& [first, count] : ranges) {
            std::vector<int> atom(static_cast<std::size_t>(count));
            std::iota(atom.begin(), atom.end(), first);
            out.push_back(std::move(atom));
        }
        if (k == 0) break;
        std::vector<std::pair<int, int>> up;
        std::size_t child = 0;
        for (const auto& branch : child_probs[static_cast<std::size_t>(k) - 1]) {
            const int first = ranges[child].first;
            int count = 0;
            for (std::size_t j = 0; j < branch.size(); ++j) count += ranges[child + j].second;
            child += branch.size();
            up.push_back({first, count});
        }
        ranges = std::move(up);
    }
    double total = std::accumulate(d.probs.begin(), d.probs.end(), 0.0);
    if (std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorKind::BadProbability, "conditional probabilities do not sum to one");
    }
    for (double& p : d.probs) p /= total;
    return build(d);
}

EventTree EventTree::uniform(const std::vector<int>& branching) {
    std::vector<std::vector<std::vector<double>>> child_probs;
    std::size_t atoms = 1;
    for (int b : branching) {
        if (b < 1) throw Error(ErrorKind::InvalidInput, "branching must be positive");
        child_probs.emplace_back(atoms, std::vector<double>(static_cast<std::size_t>(b), 1.0 / b));
        atoms *= static_cast<std::size_t>(b);
    }
    return from_conditional(child_probs);
}

int EventTree::horizon() const { return impl_->horizon; }
int EventTree::leaf_count() const { return impl_->leaves; }
int EventTree::atom_count(int level) const {
    return static_cast<int>(impl_->atom_leaves.at(static_cast<std::size_t>(level)).size());
}
int EventTree::total_atoms() const {
    int total = 0;
    for (const auto& level : impl_->atom_leaves) total += static_cast<int>(level.size());
    return total;
}

std::span<const int> EventTree::leaves(int level, int atom) const {
    return impl_->atom_leaves.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(atom));
}
std::span<const int> EventTree::children(int level, int atom) const {
    return impl_->children.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(atom));
}
int EventTree::parent(int level, int atom) const {
    return impl_->parent.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(atom));
}
int EventTree::ancestor(int level, int atom, int target_level) const {
    if (target_level > level) throw Error(ErrorKind::LevelMismatch, "ancestor must be at a coarser level");
    while (level > target_level) {
        atom = parent(level, atom);
        --level;
    }
    return atom;
}
int EventTree::atom_of_leaf(int level, int leaf) const {
    return impl_->leaf_atom.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(leaf));
}
double EventTree::prob(int level, int atom) const {
    return impl_->atom_prob.at(static_cast<std::size_t>(level)).at(static_cast<std::size_t>(atom));
}
double EventTree::conditional_prob(int level, int atom) const {
    return prob(level, atom) / prob(level - 1, parent(level, atom));
}
std::span<const double> EventTree::leaf_probs() const { return impl_->leaf_prob; }

TreeDescription EventTree::describe() const {
    return TreeDescription{impl_->horizon, impl_->atom_leaves, impl_->leaf_prob};
}

// ---------------------------------------------------------------------------

RandomVariable::RandomVariable(EventTree tree, int level, std::vector<double> values)
    : tree_(std::move(tree)), level_(level), values_(std::move(values)) {
    if (level_ < 0 || level_ > tree_.horizon()) {
        throw Error(ErrorKind::LevelMismatch, "level out of range");
    }
    if (static_cast<int>(values_.size()) != tree_.atom_count(level_)) {
        throw Error(ErrorKind::LevelMismatch, "value count does not match atom count at level " +
                                                  std::to_string(level_));
    }
}

RandomVariable RandomVariable::constant(const EventTree& tree, int level, double value) {
    return RandomVariable(tree, level, std::vector<double>(static_cast<std::size_t>(tree.atom_count(level)), value));
}

RandomVariable RandomVariable::indicator(const EventTree& tree, int level, int atom) {
    auto x = constant(tree, level, 0.0);
    x[static_cast<std::size_t>(atom)] = 1.0;
    return x;
}

double RandomVariable::value_at(int level, int atom) const {
    return values_[static_cast<std::size_t>(tree_.ancestor(level, atom, level_))];
}

RandomVariable RandomVariable::lifted(int level) const {
    if (level < level_) {
        throw Error(ErrorKind::LevelMismatch, "cannot lift a level-" + std::to_string(level_) +
                                                  " variable to coarser level " + std::to_string(level));
    }
    if (level == level_) return *this;
    std::vector<double> out(static_cast<std::size_t>(tree_.atom_count(level)));
    for (int a = 0; a < tree_.atom_count(level); ++a) {
        out[static_cast<std::size_t>(a)] = value_at(level, a);
    }
    return RandomVariable(tree_, level, std::move(out));
}

RandomVariable RandomVariable::map(const std::function<double(double)>& f) const {
    RandomVariable out = *this;
    for (double& v : out.values_) v = f(v);
    return out;
}

double RandomVariable::min() const { return *std::min_element(values_.begin(), values_.end()); }
double RandomVariable::max() const { return *std::max_element(values_.begin(), values_.end()); }

RandomVariable condexp(const RandomVariable& x, int level) {
    if (level > x.level()) {
        throw Error(ErrorKind::LevelMismatch, "conditional expectation target level " + std::to_string(level) +
                                                  " is finer than the variable's level " +
                                                  std::to_string(x.level()));
    }
    const EventTree& tree = x.tree();
    if (level == x.level()) return x;
    std::vector<double> out(static_cast<std::size_t>(tree.atom_count(level)), 0.0);
    for (int a = 0; a < tree.atom_count(x.level()); ++a) {
        out[static_cast<std::size_t>(tree.ancestor(x.level(), a, level))] +=
            tree.prob(x.level(), a) * x[static_cast<std::size_t>(a)];
    }
    for (int b = 0; b < tree.atom_count(level); ++b) out[static_cast<std::size_t>(b)] /= tree.prob(level, b);
    return RandomVariable(tree, level, std::move(out));
}

double expectation(const RandomVariable& x) {
    double total = 0.0;
    for (int a = 0; a < x.tree().atom_count(x.level()); ++a) {
        total += x.tree().prob(x.level(), a) * x[static_cast<std::size_t>(a)];
    }
    return total;
}

double inner(const RandomVariable& x, const RandomVariable& y) { return expectation(x * y); }

double norm(const RandomVariable& x) { return std::sqrt(inner(x, x)); }

RandomVariable combine(const RandomVariable& x, const RandomVariable& y,
                       const std::function<double(double, double)>& op) {
    const int level = std::max(x.level(), y.level());
    RandomVariable a = x.lifted(level);
    const RandomVariable b = y.lifted(level);
    auto& v = a.mutable_values();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = op(v[i], b[i]);
    return a;
}

RandomVariable operator+(const RandomVariable& x, const RandomVariable& y) {
    return combine(x, y, [](double a, double b) { return a + b; });
}
RandomVariable operator-(const RandomVariable& x, const RandomVariable& y) {
    return combine(x, y, [](double a, double b) { return a - b; });
}
RandomVariable operator*(const RandomVariable& x, const RandomVariable& y) {
    return combine(x, y, [](double a, double b) { return a * b; });
}
RandomVariable operator/(const RandomVariable& x, const RandomVariable& y) {
    return combine(x, y, [](double a, double b) { return a / b; });
}
RandomVariable operator*(double a, const RandomVariable& x) {
    return x.map([a](double v) { return a * v; });
}
RandomVariable operator+(const RandomVariable& x, double a) {
    return x.map([a](double v) { return v + a; });
}

AdaptedProcess::AdaptedProcess(std::vector<RandomVariable> components) : components_(std::move(components)) {
    for (std::size_t k = 0; k < components_.size(); ++k) {
        if (components_[k].level() != static_cast<int>(k)) {
            throw Error(ErrorKind::LevelMismatch, "component " + std::to_string(k) + " is not at level " +
                                                      std::to_string(k));
        }
    }
}

AdaptedProcess AdaptedProcess::zeros(const EventTree& tree) {
    std::vector<RandomVariable> comps;
    for (int k = 0; k <= tree.horizon(); ++k) comps.push_back(RandomVariable::constant(tree, k, 0.0));
    return AdaptedProcess(std::move(comps));
}

}  // namespace habitopt
