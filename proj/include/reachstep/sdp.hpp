#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace reachstep {

/// One upper-triangle entry of a symmetric block matrix; an off-diagonal
/// entry stands for both (row, col) and (col, row). 0-based.
struct SparseEntry {
    int block = 0;
    int row = 0;
    int col = 0;
    double value = 0.0;
};

/// Linear functional <A, X> + a^T s over block variables X and free scalars s.
struct LinearForm {
    std::vector<SparseEntry> entries;
    std::vector<std::pair<int, double>> free;  // (free index, coefficient)
};

/// min <C, X> + c^T s  subject to  <A_i, X> + a_i^T s = b_i,  X >= 0.
/// A positive block size is a dense PSD block; a negative size -k is a
/// diagonal block of k nonnegative scalars.
struct SdpProblem {
    std::vector<int> blocks;
    int num_free = 0;
    LinearForm objective;
    std::vector<LinearForm> constraints;
    std::vector<double> b;

    std::size_t num_constraints() const { return constraints.size(); }
    /// Throws std::invalid_argument when indices or sizes are inconsistent.
    void validate() const;
};

enum class SdpStatus { Optimal, Infeasible, NumericalFailure, IterationLimit };

const char* to_string(SdpStatus s);

struct SdpSolution {
    SdpStatus status = SdpStatus::NumericalFailure;
    std::vector<Eigen::MatrixXd> X;  // diagonal blocks stored as square diagonal matrices
    std::vector<Eigen::MatrixXd> Z;
    Eigen::VectorXd s;  // free scalars
    Eigen::VectorXd y;  // equality multipliers
    double primal_objective = 0.0;
    double dual_objective = 0.0;
    double gap = 0.0;  // |primal - dual|
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    int iterations = 0;
    std::string message;
};

struct SdpOptions {
    double gap_tol = 1e-8;
    double feas_tol = 1e-8;
    int max_iter = 200;

    /// Defaults with max_iter overridden by REACHSTEP_SDP_MAXITER when set.
    static SdpOptions from_env();
};

/// Primal-dual interior point method (HKM direction, Mehrotra
/// predictor-corrector). Deterministic for a given problem.
SdpSolution solve(const SdpProblem& p, const SdpOptions& opts = SdpOptions::from_env());

/// <A, X> for one linear form against given block values and free scalars.
double apply(const LinearForm& form, const std::vector<Eigen::MatrixXd>& X, const Eigen::VectorXd& s);

/// SDPA sparse text. Free scalars are written as a diagonal block of +/-
/// pairs appended after the problem's own blocks. Throws on an empty problem.
std::string to_sdpa(const SdpProblem& p);
void export_sdpa(const SdpProblem& p, const std::filesystem::path& path);

/// Parses SDPA sparse text back into a problem (without free scalars; split
/// pairs come back as an ordinary diagonal block). Throws ParseError.
SdpProblem parse_sdpa(const std::string& text);
SdpProblem read_sdpa(const std::filesystem::path& path);

/// Reads an SDPA output file (objValPrimal, objValDual, xVec, xMat, yMat).
/// `p` supplies the block structure, including the free-scalar split pairs
/// that `to_sdpa` appended. Throws ParseError with the offending line.
SdpSolution parse_sdpa_solution(const std::string& text, const SdpProblem& p);
SdpSolution import_solution(const std::filesystem::path& path, const SdpProblem& p);

}  // namespace reachstep
