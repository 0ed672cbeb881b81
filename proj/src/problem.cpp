#include "habitopt/problem.hpp"

#include <cmath>
#include <limits>

#include "habitopt/error.hpp"
#include "habitopt/lp.hpp"

namespace habitopt {

PrimalProblem::PrimalProblem(const PricedMarket& market, const HabitPreferences& prefs, const AdaptedProcess& eps,
                             SubtreeRoot root)
    : u_(prefs.u), root_(std::move(root)) {
    const EventTree& tree = market.tree();
    const int T = tree.horizon();
    const int k0 = root_.level;
    if (k0 < 0 || k0 > T || root_.atom < 0 || root_.atom >= tree.atom_count(k0)) {
        throw Error(ErrorKind::InvalidInput, "subproblem root is not an atom of the tree");
    }
    if (static_cast<int>(root_.history.size()) != k0) {
        throw Error(ErrorKind::InvalidInput, "history must list c_0..c_{k-1}");
    }
    if (prefs.horizon() != T) throw Error(ErrorKind::LevelMismatch, "preferences horizon differs from the tree");

    // Breadth-first enumeration of the subtree; coordinates are assigned per nonterminal node.
    row_index_.assign(static_cast<std::size_t>(T + 1), {});
    for (int k = 0; k <= T; ++k) row_index_[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(tree.atom_count(k)), -1);
    const double root_prob = tree.prob(k0, root_.atom);
    int n = 0;
    nodes_.push_back({k0, root_.atom, -1, -1, 0, 1.0});
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        Node& node = nodes_[i];
        row_index_[static_cast<std::size_t>(node.level)][static_cast<std::size_t>(node.atom)] = static_cast<int>(i);
        if (node.level == T) continue;
        node.rank = market.basis.local(node.level + 1, node.atom).rank;
        node.block = n;
        n += node.rank;
        const int level = node.level;
        const int atom = node.atom;
        for (int child : tree.children(level, atom)) {
            nodes_.push_back({level + 1, child, static_cast<int>(i), -1, 0, tree.prob(level + 1, child) / root_prob});
        }
    }

    const int rows = static_cast<int>(nodes_.size());
    wealth_map_ = Eigen::MatrixXd::Zero(rows, n);
    invest_map_ = Eigen::MatrixXd::Zero(rows, n);
    for (int i = 0; i < rows; ++i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        if (node.block < 0) continue;
        const auto& local = market.basis.local(node.level + 1, node.atom);
        const auto kids = tree.children(node.level, node.atom);
        const double r_here = market.spd[node.level][static_cast<std::size_t>(node.atom)];
        for (std::size_t j = 0; j < kids.size(); ++j) {
            const int row = row_of(node.level + 1, kids[j]);
            const auto q = local.q.row(static_cast<Eigen::Index>(j));
            wealth_map_.block(row, node.block, 1, node.rank) = q;
            const double ratio = market.spd[node.level + 1][static_cast<std::size_t>(kids[j])] / r_here;
            invest_map_.block(i, node.block, 1, node.rank) += local.weights(static_cast<Eigen::Index>(j)) * ratio * q;
        }
    }

    a_ = wealth_map_ - invest_map_;
    c0_.resize(rows);
    for (int i = 0; i < rows; ++i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        c0_(i) = i == 0 ? root_.resources : eps[node.level][static_cast<std::size_t>(node.atom)];
    }

    b_ = a_;
    chat0_ = c0_;
    for (int i = 0; i < rows; ++i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        chat0_(i) -= prefs.habit(node.level, node.atom);
        for (int l = 0; l < k0; ++l) chat0_(i) -= prefs.beta(node.level, l) * root_.history[static_cast<std::size_t>(l)];
        for (int anc = node.parent_row; anc >= 0; anc = nodes_[static_cast<std::size_t>(anc)].parent_row) {
            const double b = prefs.beta(node.level, nodes_[static_cast<std::size_t>(anc)].level);
            if (b == 0.0) continue;
            chat0_(i) -= b * c0_(anc);
            b_.row(i) -= b * a_.row(anc);
        }
    }
}

int PrimalProblem::row_of(int level, int atom) const {
    if (level < 0 || level >= static_cast<int>(row_index_.size())) return -1;
    const auto& r = row_index_[static_cast<std::size_t>(level)];
    if (atom < 0 || atom >= static_cast<int>(r.size())) return -1;
    return r[static_cast<std::size_t>(atom)];
}

Eigen::VectorXd PrimalProblem::wealth(const Eigen::VectorXd& x) const { return wealth_map_ * x; }

Eigen::VectorXd PrimalProblem::investment(const Eigen::VectorXd& x) const { return invest_map_ * x; }

bool PrimalProblem::in_domain(const Eigen::VectorXd& chat) const {
    for (int i = 0; i < rows(); ++i) {
        const auto& u = u_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(i)].level)];
        if (!std::isfinite(chat(i))) return false;
        if (u.inada() && !(chat(i) > 0.0)) return false;
    }
    return true;
}

double PrimalProblem::objective(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd chat = perturbed(x);
    if (!in_domain(chat)) return -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (int i = 0; i < rows(); ++i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        total += node.weight * u_[static_cast<std::size_t>(node.level)].value(chat(i));
    }
    return total;
}

std::vector<double> PrimalProblem::period_objective(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd chat = perturbed(x);
    std::vector<double> out(u_.size(), 0.0);
    for (int i = 0; i < rows(); ++i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(node.level)] += node.weight * u_[static_cast<std::size_t>(node.level)].value(chat(i));
    }
    return out;
}

Eigen::VectorXd PrimalProblem::gradient(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd chat = perturbed(x);
    Eigen::VectorXd g(rows());
    for (int i = 0; i < rows(); ++i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        g(i) = node.weight * u_[static_cast<std::size_t>(node.level)].d1(chat(i));
    }
    return b_.transpose() * g;
}

Eigen::MatrixXd PrimalProblem::hessian(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd chat = perturbed(x);
    Eigen::VectorXd d(rows());
    for (int i = 0; i < rows(); ++i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        d(i) = node.weight * u_[static_cast<std::size_t>(node.level)].d2(chat(i));
    }
    return b_.transpose() * d.asDiagonal() * b_;
}

Eigen::VectorXd PrimalProblem::interior_point() const {
    const int n = dimension();
    lp::Builder lp;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<int> x;
    for (int j = 0; j < n; ++j) x.push_back(lp.add_variable(-inf, 0.0));
    const int t = lp.add_variable(-inf, -1.0);
    // Cap t so the program stays bounded when chat can grow without limit.
    double cap = 1.0;
    for (int i = 0; i < rows(); ++i) cap = std::max(cap, std::abs(chat0_(i)));
    lp.add_constraint({{t, 1.0}}, lp::Sense::LessEqual, cap);
    bool any = false;
    for (int i = 0; i < rows(); ++i) {
        if (!u_[static_cast<std::size_t>(nodes_[static_cast<std::size_t>(i)].level)].inada()) continue;
        any = true;
        std::vector<std::pair<int, double>> terms;
        for (int j = 0; j < n; ++j) {
            if (b_(i, j) != 0.0) terms.push_back({x[static_cast<std::size_t>(j)], b_(i, j)});
        }
        terms.push_back({t, -1.0});
        lp.add_constraint(std::move(terms), lp::Sense::GreaterEqual, -chat0_(i));
    }
    if (!any) return Eigen::VectorXd::Zero(n);
    const auto res = lp.minimize();
    if (res.status != lp::Status::Optimal || !(res.x(t) > 0.0)) {
        throw Error(ErrorKind::Infeasible, "the addiction floor cannot be met: max-min perturbed consumption is " +
                                               (res.status == lp::Status::Optimal ? std::to_string(res.x(t))
                                                                                  : std::string("infeasible")));
    }
    Eigen::VectorXd out(n);
    for (int j = 0; j < n; ++j) out(j) = res.x(x[static_cast<std::size_t>(j)]);
    return out;
}

}  // namespace habitopt
