#pragma once

#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace habitopt {

/// Filtration description as nested partitions of the terminal atoms (leaves).
/// `levels[k]` lists the atoms of level k, each as the leaf indices it contains.
struct TreeDescription {
    int horizon = 0;
    std::vector<std::vector<std::vector<int>>> levels;
    std::vector<double> probs;
};

/// Finite filtered probability space. Immutable after construction; copies share state.
class EventTree {
public:
    EventTree() = default;

    static EventTree build(const TreeDescription& description);

    /// Builds a tree from conditional child probabilities: `child_probs[k][a]` holds the
    /// conditional probabilities of the children of atom a at level k (k = 0..T-1).
    /// Leaves are numbered depth-first, so every atom covers a contiguous leaf range.
    static EventTree from_conditional(const std::vector<std::vector<std::vector<double>>>& child_probs);

    /// Every node has `branching[k]` equally likely children at level k.
    static EventTree uniform(const std::vector<int>& branching);

    int horizon() const;
    int leaf_count() const;
    int atom_count(int level) const;
    int total_atoms() const;

    std::span<const int> leaves(int level, int atom) const;
    std::span<const int> children(int level, int atom) const;
    int parent(int level, int atom) const;
    int ancestor(int level, int atom, int target_level) const;
    int atom_of_leaf(int level, int leaf) const;

    double prob(int level, int atom) const;
    double conditional_prob(int level, int atom) const;  ///< P(atom | parent), level >= 1
    std::span<const double> leaf_probs() const;

    TreeDescription describe() const;

    bool operator==(const EventTree& other) const { return impl_ == other.impl_; }

private:
    struct Impl;
    explicit EventTree(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const Impl> impl_;
};

/// A random variable measurable at `level`, stored as one value per atom of that level.
class RandomVariable {
public:
    RandomVariable() = default;
    RandomVariable(EventTree tree, int level, std::vector<double> values);

    static RandomVariable constant(const EventTree& tree, int level, double value);
    static RandomVariable indicator(const EventTree& tree, int level, int atom);

    const EventTree& tree() const { return tree_; }
    int level() const { return level_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t atom) const { return values_[atom]; }
    double& operator[](std::size_t atom) { return values_[atom]; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& mutable_values() { return values_; }

    bool valid() const { return level_ >= 0 && !values_.empty(); }

    /// Value on the level-`level` atom containing the given atom (requires level >= this->level()).
    double value_at(int level, int atom) const;

    RandomVariable lifted(int level) const;
    RandomVariable map(const std::function<double(double)>& f) const;

    double min() const;
    double max() const;

private:
    EventTree tree_;
    int level_ = -1;
    std::vector<double> values_;
};

RandomVariable condexp(const RandomVariable& x, int level);
double expectation(const RandomVariable& x);
double inner(const RandomVariable& x, const RandomVariable& y);
double norm(const RandomVariable& x);

/// Pointwise combination after lifting both operands to the finer level.
RandomVariable combine(const RandomVariable& x, const RandomVariable& y,
                       const std::function<double(double, double)>& op);

RandomVariable operator+(const RandomVariable& x, const RandomVariable& y);
RandomVariable operator-(const RandomVariable& x, const RandomVariable& y);
RandomVariable operator*(const RandomVariable& x, const RandomVariable& y);
RandomVariable operator/(const RandomVariable& x, const RandomVariable& y);
RandomVariable operator*(double a, const RandomVariable& x);
RandomVariable operator+(const RandomVariable& x, double a);

/// Adapted process with one component per period 0..T; component k lives at level k.
class AdaptedProcess {
public:
    AdaptedProcess() = default;
    explicit AdaptedProcess(std::vector<RandomVariable> components);
    static AdaptedProcess zeros(const EventTree& tree);

    int horizon() const { return static_cast<int>(components_.size()) - 1; }
    const RandomVariable& operator[](int k) const { return components_.at(static_cast<std::size_t>(k)); }
    RandomVariable& operator[](int k) { return components_.at(static_cast<std::size_t>(k)); }
    const std::vector<RandomVariable>& components() const { return components_; }
    bool empty() const { return components_.empty(); }

private:
    std::vector<RandomVariable> components_;
};

}  // namespace habitopt
