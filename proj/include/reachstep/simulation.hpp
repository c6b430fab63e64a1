#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "reachstep/backstepping.hpp"

namespace reachstep {

struct SimConfig {
    double dt = 1e-3;
    double t_max = 20.0;
    bool stop_on_reach = true;
    bool stop_on_safety = true;
    bool stop_on_singular = true;
    std::uint64_t seed = 0;
    unsigned threads = 0;  // 0: hardware concurrency

    /// Throws SpecError unless dt > 0 and t_max >= dt.
    void validate() const;
};

enum class Outcome { Reached, SafetyViolated, SingularDecoupling, Timeout };

const char* to_string(Outcome o);

struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> states;
    std::vector<std::vector<double>> outputs;
    std::vector<std::vector<double>> inputs;  // NaN where the input is undefined
    std::vector<double> psi;                  // Psi(x(t))
    std::vector<double> psi_base;             // psi(y(t))
    Outcome outcome = Outcome::Timeout;
    double outcome_time = 0.0;

    std::size_t size() const { return times.size(); }
};

using VectorField = std::function<void(std::span<const double> x, std::span<double> xdot)>;

/// Classical four-stage Runge-Kutta step.
std::vector<double> integrate_step_rk4(const VectorField& field, std::span<const double> x, double dt);

/// Closed-loop simulation under k(x) with event detection at step granularity.
Trajectory run_trajectory(const EcgbfCertificate& cert, std::span<const double> x0, const SimConfig& cfg);

struct MonotonicityResult {
    double max_drop = 0.0;
    std::size_t step = 0;  // index k of the largest relative violation (Psi_k -> Psi_{k+1})
    bool pass = true;
};

/// Largest decrease of Psi between consecutive samples before the Reached
/// event; fails when some drop exceeds 1e-6 (1 + |Psi_k|).
MonotonicityResult monotonicity_audit(const Trajectory& traj);

struct BatchReport {
    std::vector<std::vector<double>> initial_states;
    std::vector<Trajectory> trajectories;
    std::vector<MonotonicityResult> audits;
    std::vector<double> min_psi_base;
    std::array<std::size_t, 4> counts{};  // indexed by Outcome
    double acceptance = 0.0;
    double max_drop = 0.0;
    std::size_t max_drop_trajectory = 0;
    SimConfig config;

    std::size_t count(Outcome o) const { return counts[static_cast<std::size_t>(o)]; }
    bool all_monotone() const;
};

/// Samples `count` initial states from {Psi > 0} and simulates them in
/// parallel; results are ordered by sample index.
BatchReport run_batch(const EcgbfCertificate& cert, std::size_t count, const SimConfig& cfg);

struct VerifyReport {
    std::size_t samples = 0;
    std::size_t attempts = 0;
    std::size_t singular = 0;  // sampled points with a singular decoupling matrix
    double min_margin = 0.0;   // min of Psi' - lambda Psi
    std::vector<double> worst_state;
    bool pass = false;
};

/// Monte-Carlo check of Psi' >= lambda Psi over {Psi >= 0} and {phi >= 0}.
/// Throws std::invalid_argument for a zero sample count and EmptySetError
/// when the sampled region appears empty.
VerifyReport verify_pointwise(const EcgbfCertificate& cert, std::size_t sample_count, std::uint64_t seed,
                              double lambda_scale = 1.0);

struct LinearizationCheck {
    double max_relative_error = 0.0;  // max over outputs and steps of |y_i^(r_i) - v_i| / |v_i|
    std::size_t samples = 0;
};

/// Drives the system with u = A(x)^-1 (v - L_f^r h) for a constant virtual
/// input v (nonzero entries), integrates with RK4 and measures each
/// y_i^(r_i) by an r_i-th finite difference of the recorded outputs.
LinearizationCheck linearization_residual(const ControlAffineSystem& sys, const RelativeDegreeProfile& profile,
                                          std::span<const double> x0, std::span<const double> v, double dt,
                                          std::size_t steps);

void write_trajectory_csv(std::ostream& os, const Trajectory& traj);
void export_csv(const Trajectory& traj, const std::filesystem::path& path);
void write_grid_csv(std::ostream& os, const LevelsetGrid& grid);
void export_csv(const LevelsetGrid& grid, const std::filesystem::path& path);
LevelsetGrid read_grid_csv(std::istream& is);

/// Safe-set and target zero contours (marching squares, 256 x 256 over the
/// output box) with the trajectories drawn in output coordinates.
std::string render_svg(const SemialgebraicSpec& spec, const std::vector<Trajectory>& trajectories,
                       std::size_t resolution = 256);
void export_svg(const SemialgebraicSpec& spec, const std::vector<Trajectory>& trajectories,
                const std::filesystem::path& path);

/// Line segments of the zero level of `values` sampled on the (xs, ys) grid,
/// values[j * xs.size() + i] at (xs[i], ys[j]).
std::vector<std::array<double, 4>> marching_squares(const std::vector<double>& xs, const std::vector<double>& ys,
                                                    const std::vector<double>& values);

nlohmann::json batch_report_json(const BatchReport& report);
nlohmann::json verify_report_json(const VerifyReport& report);

}  // namespace reachstep
