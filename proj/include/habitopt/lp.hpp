#pragma once

#include <Eigen/Dense>

#include <vector>

namespace habitopt::lp {

enum class Status { Optimal, Infeasible, Unbounded };

struct Result {
    Status status = Status::Infeasible;
    Eigen::VectorXd x;
    double objective = 0.0;
};

/// minimize c'x subject to A x = b, x >= 0 (dense two-phase simplex, Bland's rule).
Result solve_standard(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c);

enum class Sense { LessEqual, Equal, GreaterEqual };

/// Small convenience layer mapping free / bounded variables and inequality rows onto standard form.
class Builder {
public:
    /// Adds a variable; `lower` may be -infinity (free variable). Returns its index.
    int add_variable(double lower, double cost);
    void add_constraint(std::vector<std::pair<int, double>> terms, Sense sense, double rhs);
    void set_cost(int var, double cost);

    /// Minimizes the accumulated cost. `x` in the result is indexed by builder variable.
    Result minimize() const;

    int variable_count() const { return static_cast<int>(lower_.size()); }

private:
    struct Row {
        std::vector<std::pair<int, double>> terms;
        Sense sense;
        double rhs;
    };
    std::vector<double> lower_;
    std::vector<double> cost_;
    std::vector<Row> rows_;
};

}  // namespace habitopt::lp
