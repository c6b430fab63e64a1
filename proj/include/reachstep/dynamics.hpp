#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reachstep/expression.hpp"
#include "reachstep/polynomial.hpp"

namespace reachstep {

/// x' = f(x) + sum_j g_j(x) u_j with outputs y = h(x).
struct ControlAffineSystem {
    VarTable vars;
    std::vector<Expr> f;               // n
    std::vector<std::vector<Expr>> g;  // n rows, m columns
    std::vector<Expr> h;               // m
    std::vector<Interval> state_box;   // n

    std::size_t state_dim() const { return vars.size(); }
    std::size_t input_dim() const { return g.empty() ? 0 : g.front().size(); }
    std::size_t output_dim() const { return h.size(); }

    /// Column j of g as a vector field.
    std::vector<Expr> g_column(std::size_t j) const;

    /// Throws SpecError on inconsistent dimensions, foreign variables or an
    /// empty box.
    void validate() const;
};

struct ZeroTestConfig {
    int samples = 64;
    std::uint64_t seed = 0;
    double tol = 1e-9;
    int rank_samples = 32;
};

struct RelativeDegreeProfile {
    std::vector<int> r;
    int sum_r = 0;
    bool fully_linearizable = false;
};

/// Lie derivative of a scalar along a vector field over `vars`.
Expr lie_derivative(const Expr& scalar, std::span<const Expr> field, const VarTable& vars);

/// nullopt when some r_i would exceed n or A(x) is rank deficient at a
/// majority of sampled points.
std::optional<RelativeDegreeProfile> vector_relative_degree(const ControlAffineSystem& sys,
                                                            const ZeroTestConfig& cfg = {});

/// Symbol used for the s-th derivative coordinate of output i (both 1-based).
std::string eta_name(std::size_t output, std::size_t level);

struct EtaMap {
    std::vector<std::vector<Expr>> chains;       // chains[i][s] = L_f^s h_i
    std::vector<std::vector<std::string>> names;  // names[i][s] = eta_name(i+1, s+1)
    VarTable symbols;                             // all eta symbols, output-major
    bool full_state = false;                      // sum r_i == n

    /// Bindings eta -> expression over x, for pulling controllers back.
    std::map<std::string, Expr> pullback() const;
};

EtaMap build_eta_map(const ControlAffineSystem& sys, const RelativeDegreeProfile& profile);

struct DecouplingData {
    std::vector<std::vector<Expr>> A;  // A[i][j] = L_{g_j} L_f^{r_i-1} h_i
    std::vector<Expr> Lfr;             // L_f^{r_i} h_i
};

DecouplingData decoupling(const ControlAffineSystem& sys, const RelativeDegreeProfile& profile);

/// Solves A u = rhs by LU with partial pivoting. Throws
/// SingularDecouplingError when the smallest singular value is below 1e-10.
Eigen::VectorXd solve_decoupled(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs);

/// Compiled A(x) and L_f^r h(x) for repeated evaluation.
class DecouplingEvaluator {
public:
    DecouplingEvaluator() = default;
    DecouplingEvaluator(const DecouplingData& dec, const VarTable& vars);

    void evaluate(std::span<const double> x, Eigen::MatrixXd& A, Eigen::VectorXd& Lfr) const;
    std::size_t size() const { return m_; }

private:
    std::size_t m_ = 0;
    Tape tape_;
};

/// u = A(x)^{-1} (v - L_f^r h(x)).
Eigen::VectorXd feedback_linearize(const DecouplingData& dec, std::span<const double> v_virtual,
                                   const VarTable& vars, std::span<const double> x);
Eigen::VectorXd feedback_linearize(const DecouplingData& dec, std::span<const Expr> v_virtual,
                                   const VarTable& vars, std::span<const double> x);

}  // namespace reachstep
