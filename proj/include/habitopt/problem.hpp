#pragma once

#include <Eigen/Dense>

#include <vector>

#include "habitopt/market.hpp"
#include "habitopt/preferences.hpp"

namespace habitopt {

/// Where a (sub)problem is rooted and what is held fixed there.
struct SubtreeRoot {
    int level = 0;
    int atom = 0;
    std::vector<double> history;  ///< c_0..c_{level-1} along the ancestors of the root
    double resources = 0.0;       ///< eps_level + W_level at the root (eps_0 for the full problem)
};

/// Concave primal problem over one subtree, parametrized by the coordinates of W_{j+1} in the local
/// orthonormal basis of L_{j+1} at every nonterminal node. Consumption and perturbed consumption are
/// affine in those coordinates: c = c0 + A x, chat = chat0 + B x (one row per node of the subtree).
class PrimalProblem {
public:
    PrimalProblem(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                  SubtreeRoot root);

    int dimension() const { return static_cast<int>(a_.cols()); }
    int rows() const { return static_cast<int>(nodes_.size()); }

    struct Node {
        int level;
        int atom;
        int parent_row;   ///< -1 at the root
        int block;        ///< first coordinate of this node's W_{level+1} block, -1 at level T
        int rank;
        double weight;    ///< probability conditional on the root
    };
    const std::vector<Node>& nodes() const { return nodes_; }
    /// Row index of a node of the subtree, or -1.
    int row_of(int level, int atom) const;

    Eigen::VectorXd consumption(const Eigen::VectorXd& x) const { return c0_ + a_ * x; }
    Eigen::VectorXd perturbed(const Eigen::VectorXd& x) const { return chat0_ + b_ * x; }
    /// W at every node (zero at the root; the root's wealth lives in `resources`).
    Eigen::VectorXd wealth(const Eigen::VectorXd& x) const;
    /// Price at every node of the wealth carried into the next period.
    Eigen::VectorXd investment(const Eigen::VectorXd& x) const;

    /// True when every Inada period has chat > 0.
    bool in_domain(const Eigen::VectorXd& chat) const;
    double objective(const Eigen::VectorXd& x) const;
    /// Per-period contribution of the objective (indexed by period).
    std::vector<double> period_objective(const Eigen::VectorXd& x) const;
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const;

    /// Maximizes the smallest Inada chat by linear programming; throws Infeasible if it is not positive.
    Eigen::VectorXd interior_point() const;

    const Eigen::MatrixXd& consumption_map() const { return a_; }
    const Eigen::MatrixXd& perturbed_map() const { return b_; }
    const SubtreeRoot& root() const { return root_; }

private:
    std::vector<PeriodUtility> u_;
    SubtreeRoot root_;
    std::vector<Node> nodes_;
    std::vector<std::vector<int>> row_index_;  // [level][atom] -> row or -1
    Eigen::VectorXd c0_, chat0_;
    Eigen::MatrixXd a_, b_;
    Eigen::MatrixXd wealth_map_;   // rows x n
    Eigen::MatrixXd invest_map_;   // rows x n
};

}  // namespace habitopt
