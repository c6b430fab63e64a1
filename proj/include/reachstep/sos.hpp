#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "reachstep/dynamics.hpp"
#include "reachstep/polynomial.hpp"
#include "reachstep/sdp.hpp"

namespace reachstep {

/// Safe set {psi > 0} and target {phi < 0} over the output variables.
struct SemialgebraicSpec {
    VarTable vars;
    Polynomial psi;
    Polynomial phi;
    std::vector<Interval> output_box;  // sampling region for set checks

    /// Throws SpecError when psi or phi is constant or dimensions disagree.
    void validate() const;
};

struct SynthesisConfig {
    int deg_u = 3;
    int deg_s0 = -1;  // -1: automatic
    int deg_s1 = -1;
    double epsilon = 1e-2;
    double delta_tol = 1e-6;
    double regularization = 1e-9;  // weight of the Gram-trace and |k| terms while minimizing delta
    bool polish = true;            // second solve minimizing Gram traces and |k| at near-zero delta
    int set_samples = 20000;       // output-box samples for emptiness checks
    std::uint64_t seed = 0;
    SdpOptions sdp = SdpOptions::from_env();
};

struct GramBlock {
    std::vector<Monomial> basis;
    Eigen::MatrixXd Q;

    Polynomial polynomial(std::size_t num_vars) const;  // basis^T Q basis
};

struct BaseController {
    VarTable vars;
    std::vector<Polynomial> k1;
    double lambda = 0.0;
    double delta = 0.0;
    GramBlock sos;  // certificate polynomial
    GramBlock s0;
    GramBlock s1;
    bool certified = false;
    SdpStatus status = SdpStatus::NumericalFailure;
    int iterations = 0;
    std::string message;
};

enum class SosPhase { MinimizeDelta, Polish };

/// Coefficient-matching SDP for
///   L_{psi,u} - lambda psi + delta - s0 psi - s1 phi  in SOS,
/// with lambda >= epsilon, delta >= 0, s0 and s1 SOS.
struct SosProgram {
    ControlAffineSystem system;  // polynomial, outputs over spec.vars
    SemialgebraicSpec spec;
    SynthesisConfig config;
    SosPhase phase = SosPhase::MinimizeDelta;
    double delta_bound = 0.0;  // Polish only

    int degree = 0;  // certificate degree D
    int deg_s0 = 0;
    int deg_s1 = 0;
    std::vector<Monomial> control_basis;
    std::vector<Monomial> sos_basis;
    std::vector<Monomial> s0_basis;
    std::vector<Monomial> s1_basis;
    std::vector<Monomial> rows;  // monomial matched by each equality
    Polynomial psi_x;            // psi composed with the output map
    Polynomial phi_x;
    Polynomial drift;            // grad psi . f
    std::vector<Polynomial> input_gain;  // grad psi . g_j

    SdpProblem sdp;

    // Indices into the diagonal block (block 3).
    int k_plus(std::size_t j, std::size_t b) const { return static_cast<int>(j * control_basis.size() + b); }
    int k_minus(std::size_t j, std::size_t b) const {
        return static_cast<int>((system.input_dim() + j) * control_basis.size() + b);
    }
    int lambda_slack() const { return static_cast<int>(2 * system.input_dim() * control_basis.size()); }
    int delta_index() const { return lambda_slack() + 1; }
    int bound_slack() const { return lambda_slack() + 2; }
};

/// ydot = v, y = identity, over the output variables of the set definition.
ControlAffineSystem single_integrator(const SemialgebraicSpec& spec);

/// Throws SynthesisError for non-polynomial data, SpecError for constant sets.
SosProgram build_program(const ControlAffineSystem& sys, const SemialgebraicSpec& spec,
                         const SynthesisConfig& cfg, SosPhase phase = SosPhase::MinimizeDelta,
                         double delta_bound = 0.0);

/// Controller, lambda and delta from an SDP solution of `p`.
BaseController extract(const SosProgram& p, const SdpSolution& sol);

/// Minimizes delta, then (when certified and polishing is enabled) re-solves
/// at delta <= max(0.1 tol, 2 delta*) minimizing Gram traces and |k|.
/// Reports Infeasible when sampling finds no point of the safe set.
BaseController solve_program(const SosProgram& p);

struct SosResidual {
    double max_coefficient_error = 0.0;
    double min_eigenvalue_sos = 0.0;
    double min_eigenvalue_s0 = 0.0;
    double min_eigenvalue_s1 = 0.0;
};

/// Rebuilds the certificate identity from the extracted controller and Gram
/// blocks and reports the largest coefficient mismatch.
SosResidual verify_sos_residual(const SosProgram& p, const BaseController& c);

/// Fraction of output-box samples with psi > 0, and with psi > 0 and phi < 0.
std::pair<double, double> sample_set_fractions(const SemialgebraicSpec& spec, int samples, std::uint64_t seed);

nlohmann::json polynomial_to_json(const Polynomial& p);
Polynomial polynomial_from_json(const nlohmann::json& j, std::size_t num_vars);
nlohmann::json controller_to_json(const BaseController& c);
BaseController controller_from_json(const nlohmann::json& j);

}  // namespace reachstep
