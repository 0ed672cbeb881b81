#include "habitopt/lp.hpp"

#include <cmath>
#include <limits>

namespace habitopt::lp {

namespace {

constexpr double kPivotTol = 1e-10;

class Tableau {
public:
    Tableau(Eigen::MatrixXd t, std::vector<int> basis) : t_(std::move(t)), basis_(std::move(basis)) {}

    // Runs simplex iterations on the objective stored in the last row (minimization, reduced costs).
    // Columns >= `allowed` are never entered.
    Status run(int allowed) {
        const int m = static_cast<int>(t_.rows()) - 1;
        for (int iter = 0; iter < 50000; ++iter) {
            int enter = -1;
            for (int j = 0; j < allowed; ++j) {
                if (t_(m, j) < -kPivotTol) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return Status::Optimal;
            int leave = -1;
            double best = std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) {
                const double a = t_(i, enter);
                if (a > kPivotTol) {
                    const double ratio = t_(i, t_.cols() - 1) / a;
                    if (ratio < best - 1e-14 ||
                        (std::abs(ratio - best) <= 1e-14 && leave >= 0 && basis_[i] < basis_[leave])) {
                        best = ratio;
                        leave = i;
                    }
                }
            }
            if (leave < 0) return Status::Unbounded;
            pivot(leave, enter);
        }
        return Status::Unbounded;
    }

    void pivot(int row, int col) {
        t_.row(row) /= t_(row, col);
        for (int i = 0; i < t_.rows(); ++i) {
            if (i != row && t_(i, col) != 0.0) t_.row(i) -= t_(i, col) * t_.row(row);
        }
        basis_[row] = col;
    }

    Eigen::MatrixXd& table() { return t_; }
    std::vector<int>& basis() { return basis_; }

private:
    Eigen::MatrixXd t_;
    std::vector<int> basis_;
};

}  // namespace

Result solve_standard(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c) {
    const int m = static_cast<int>(a.rows());
    const int n = static_cast<int>(a.cols());
    Result result;

    // Phase I: artificial variables n..n+m-1, rows normalised to b >= 0.
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m + 1, n + m + 1);
    std::vector<int> basis(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double sign = b(i) < 0 ? -1.0 : 1.0;
        t.block(i, 0, 1, n) = sign * a.row(i);
        t(i, n + i) = 1.0;
        t(i, n + m) = sign * b(i);
        basis[static_cast<std::size_t>(i)] = n + i;
    }
    for (int i = 0; i < m; ++i) t.row(m) -= t.row(i);
    for (int i = 0; i < m; ++i) t(m, n + i) = 0.0;

    Tableau tab(std::move(t), std::move(basis));
    tab.run(n + m);
    auto& tt = tab.table();
    const double scale = 1.0 + b.cwiseAbs().maxCoeff();
    if (-tt(m, n + m) > 1e-9 * scale) {
        result.status = Status::Infeasible;
        return result;
    }
    // Drive remaining artificials out of the basis where possible.
    for (int i = 0; i < m; ++i) {
        if (tab.basis()[static_cast<std::size_t>(i)] >= n) {
            for (int j = 0; j < n; ++j) {
                if (std::abs(tt(i, j)) > 1e-9) {
                    tab.pivot(i, j);
                    break;
                }
            }
        }
    }

    // Phase II objective row.
    tt.row(m).setZero();
    tt.block(m, 0, 1, n) = c.transpose();
    for (int i = 0; i < m; ++i) {
        const int col = tab.basis()[static_cast<std::size_t>(i)];
        if (col < n && tt(m, col) != 0.0) tt.row(m) -= tt(m, col) * tt.row(i);
    }
    // Artificials stuck in the basis sit on redundant rows; they stay at zero since
    // their columns are never allowed to re-enter.
    const Status status = tab.run(n);
    result.status = status;
    if (status != Status::Optimal) return result;
    result.x = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < m; ++i) {
        const int col = tab.basis()[static_cast<std::size_t>(i)];
        if (col < n) result.x(col) = tt(i, n + m);
    }
    result.objective = c.dot(result.x);
    return result;
}

int Builder::add_variable(double lower, double cost) {
    lower_.push_back(lower);
    cost_.push_back(cost);
    return static_cast<int>(lower_.size()) - 1;
}

void Builder::add_constraint(std::vector<std::pair<int, double>> terms, Sense sense, double rhs) {
    rows_.push_back(Row{std::move(terms), sense, rhs});
}

void Builder::set_cost(int var, double cost) { cost_.at(static_cast<std::size_t>(var)) = cost; }

Result Builder::minimize() const {
    // Standard-form columns: bounded variable x = lower + y (one column), free x = y+ - y- (two),
    // followed by one slack per inequality row.
    const int nv = variable_count();
    std::vector<int> column(static_cast<std::size_t>(nv));
    int cols = 0;
    for (int v = 0; v < nv; ++v) {
        column[static_cast<std::size_t>(v)] = cols;
        cols += std::isfinite(lower_[static_cast<std::size_t>(v)]) ? 1 : 2;
    }
    const int structural = cols;
    for (const auto& row : rows_) {
        if (row.sense != Sense::Equal) ++cols;
    }
    const int m = static_cast<int>(rows_.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(m, cols);
    Eigen::VectorXd b(m);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(cols);
    for (int v = 0; v < nv; ++v) {
        const int col = column[static_cast<std::size_t>(v)];
        c(col) = cost_[static_cast<std::size_t>(v)];
        if (!std::isfinite(lower_[static_cast<std::size_t>(v)])) c(col + 1) = -cost_[static_cast<std::size_t>(v)];
    }
    int slack = structural;
    for (int i = 0; i < m; ++i) {
        const auto& row = rows_[static_cast<std::size_t>(i)];
        double rhs = row.rhs;
        for (const auto& [v, coef] : row.terms) {
            const int col = column[static_cast<std::size_t>(v)];
            const double lo = lower_[static_cast<std::size_t>(v)];
            a(i, col) += coef;
            if (std::isfinite(lo)) {
                rhs -= coef * lo;
            } else {
                a(i, col + 1) -= coef;
            }
        }
        if (row.sense == Sense::LessEqual) a(i, slack++) = 1.0;
        if (row.sense == Sense::GreaterEqual) a(i, slack++) = -1.0;
        b(i) = rhs;
    }
    Result standard = solve_standard(a, b, c);
    Result out;
    out.status = standard.status;
    if (standard.status != Status::Optimal) return out;
    out.x = Eigen::VectorXd::Zero(nv);
    for (int v = 0; v < nv; ++v) {
        const int col = column[static_cast<std::size_t>(v)];
        const double lo = lower_[static_cast<std::size_t>(v)];
        out.x(v) = std::isfinite(lo) ? lo + standard.x(col) : standard.x(col) - standard.x(col + 1);
    }
    out.objective = 0.0;
    for (int v = 0; v < nv; ++v) out.objective += cost_[static_cast<std::size_t>(v)] * out.x(v);
    return out;
}

}  // namespace habitopt::lp
