#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "reachstep/dynamics.hpp"
#include "reachstep/sos.hpp"

namespace reachstep {

struct GainSchedule {
    std::vector<std::vector<double>> mu;  // mu[i][l-1] for layers l = 1..r_i-1
    double lambda = 0.0;

    static GainSchedule uniform(const RelativeDegreeProfile& profile, double mu, double lambda);
    /// Throws SpecError on shape mismatch, nonpositive mu or lambda < epsilon.
    void validate(const RelativeDegreeProfile& profile, double epsilon = 0.0) const;
};

/// d/dt of an expression over eta coordinates along eta_s' = eta_{s+1},
/// summed over every eta symbol of every output. Throws SynthesisError when
/// `e` depends on a top-of-chain coordinate, whose derivative involves u.
Expr total_time_derivative(const Expr& e, const EtaMap& eta);

/// Base controller and psi rewritten over eta_{i,1} in place of y_i.
Expr psi_over_eta(const SemialgebraicSpec& spec, const EtaMap& eta);
std::vector<Expr> base_over_eta(const BaseController& base, const EtaMap& eta);

/// chain[i][l-1] = k_l^i for l = 1..r_i-1 (empty when r_i = 1).
std::vector<std::vector<Expr>> build_chain(const BaseController& base, const SemialgebraicSpec& spec,
                                           const GainSchedule& gains, const EtaMap& eta);

/// b_i over eta without the -L_f^{r_i} h_i term, which is added from x at
/// evaluation time.
std::vector<Expr> build_controller(const BaseController& base, const SemialgebraicSpec& spec,
                                   const GainSchedule& gains, const EtaMap& eta,
                                   const std::vector<std::vector<Expr>>& chain);

/// psi minus the mu-weighted layer mismatches, over eta.
Expr build_psi(const SemialgebraicSpec& spec, const GainSchedule& gains, const EtaMap& eta,
               const std::vector<std::vector<Expr>>& chain);

/// Everything needed to evaluate Psi(x), k(x) and Psi'(x) at a state.
struct ClosedLoopSample {
    double psi = 0.0;          // Psi(x)
    double psi_base = 0.0;     // psi(y(x))
    double phi = 0.0;          // phi(y(x))
    Eigen::VectorXd y;
    Eigen::VectorXd u;
    Eigen::VectorXd xdot;
    double psi_dot = 0.0;
};

class EcgbfCertificate {
public:
    EcgbfCertificate() = default;
    /// Assembles evaluators from eta-side expressions. `psi_eta`, `chain` and
    /// `b_eta` must be over `eta.symbols`.
    EcgbfCertificate(ControlAffineSystem sys, SemialgebraicSpec spec, RelativeDegreeProfile profile,
                     GainSchedule gains, Expr psi_eta, std::vector<std::vector<Expr>> chain,
                     std::vector<Expr> b_eta);

    const ControlAffineSystem& system() const { return sys_; }
    const SemialgebraicSpec& spec() const { return spec_; }
    const RelativeDegreeProfile& profile() const { return profile_; }
    const GainSchedule& gains() const { return gains_; }
    const EtaMap& eta() const { return eta_; }
    const Expr& psi_eta() const { return psi_eta_; }
    const std::vector<std::vector<Expr>>& chain() const { return chain_; }
    const std::vector<Expr>& b_eta() const { return b_eta_; }
    /// Psi pulled back to the state variables.
    Expr psi_x() const;

    std::vector<double> eta_at(std::span<const double> x) const;
    double psi(std::span<const double> x) const;
    double psi_base(std::span<const double> x) const;  // psi(y(x))
    double phi(std::span<const double> x) const;
    std::vector<double> outputs(std::span<const double> x) const;
    /// b(x) and A(x).
    void controller_terms(std::span<const double> x, Eigen::VectorXd& b, Eigen::MatrixXd& A) const;
    /// k(x) = A(x)^-1 b(x); throws SingularDecouplingError.
    Eigen::VectorXd control(std::span<const double> x) const;
    /// Psi, u, x' and grad Psi . x'; throws SingularDecouplingError.
    ClosedLoopSample evaluate(std::span<const double> x) const;
    double psi_dot(std::span<const double> x) const { return evaluate(x).psi_dot; }

private:
    void eval_x(std::span<const double> x, std::vector<double>& out) const;
    void eval_eta(std::span<const double> eta, std::vector<double>& out) const;

    ControlAffineSystem sys_;
    SemialgebraicSpec spec_;
    RelativeDegreeProfile profile_;
    GainSchedule gains_;
    EtaMap eta_;
    Expr psi_eta_;
    std::vector<std::vector<Expr>> chain_;
    std::vector<Expr> b_eta_;

    // x tape: eta (N), d eta/dx (N n), f (n), g (n m), A (m m), L_f^r h (m).
    // eta tape: Psi, dPsi/deta (N), b (m).
    // Cheap tapes for set membership: eta over x, Psi over eta.
    Tape x_tape_;
    Tape eta_tape_;
    Tape coord_tape_;
    Tape psi_tape_;
    std::size_t N_ = 0;
};

/// Full pipeline from a certified base controller. Throws SpecError when the
/// system has no well-defined vector relative degree, SynthesisError when the
/// base controller is not certified.
EcgbfCertificate build_certificate(const ControlAffineSystem& sys, const SemialgebraicSpec& spec,
                                   const BaseController& base, const GainSchedule& gains,
                                   const ZeroTestConfig& zero_test = {});

struct SafeSamples {
    std::vector<std::vector<double>> states;
    std::size_t attempts = 0;
    double acceptance = 0.0;
};

/// Rejection sampling of {Psi > 0} over the state box. Throws EmptySetError
/// when the acceptance rate falls below 1e-4.
SafeSamples sample_safe_subset(const EcgbfCertificate& cert, std::size_t count, std::uint64_t seed);

struct LevelsetGrid {
    std::size_t var_a = 0;
    std::size_t var_b = 0;
    std::vector<double> a;  // resolution abscissae
    std::vector<double> b;
    std::vector<double> values;  // values[j * resolution + i] at (a[i], b[j])
    std::size_t resolution = 0;

    double at(std::size_t i, std::size_t j) const { return values[j * resolution + i]; }
};

/// Psi on a resolution x resolution grid of the (var_a, var_b) slice of the
/// state box, other coordinates held at `fixed`.
LevelsetGrid levelset_grid(const EcgbfCertificate& cert, std::size_t var_a, std::size_t var_b,
                           std::span<const double> fixed, std::size_t resolution);

nlohmann::json certificate_to_json(const EcgbfCertificate& cert);
/// Rebuilds a certificate from its serialized eta-side expressions.
EcgbfCertificate certificate_from_json(const nlohmann::json& j, const ControlAffineSystem& sys,
                                       const SemialgebraicSpec& spec, const ZeroTestConfig& zero_test = {});

}  // namespace reachstep
