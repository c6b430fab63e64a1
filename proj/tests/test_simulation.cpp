#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "reachstep/error.hpp"
#include "reachstep/simulation.hpp"
#include "test_systems.hpp"

using namespace reachstep;
using namespace testsys;

namespace {

EcgbfCertificate di_cert(double lambda = 0.08, double mu = 1.0) {
    auto spec = sets({"y"}, "1 - y^2", "y^2 - 0.04", {{-1, 1}});
    return build_certificate(double_integrator(), spec, hand_base(spec.vars, {"-y"}, lambda),
                             GainSchedule{{{mu}}, lambda});
}

Trajectory series(std::vector<double> psi, Outcome o = Outcome::Timeout) {
    Trajectory t;
    t.psi = std::move(psi);
    t.outcome = o;
    return t;
}

std::string csv_of(const Trajectory& tr) {
    std::ostringstream os;
    write_trajectory_csv(os, tr);
    return os.str();
}

}  // namespace

TEST(Rk4, ExponentialStep) {
    VectorField f = [](std::span<const double> x, std::span<double> d) { d[0] = x[0]; };
    auto x = integrate_step_rk4(f, std::vector<double>{1.0}, 0.1);
    EXPECT_NEAR(x[0], 1.10517083, 1e-8);
    EXPECT_LT(std::abs(x[0] - std::exp(0.1)), 1e-7);
}

TEST(Rk4, FixedPointAndAffineExactness) {
    VectorField zero = [](std::span<const double>, std::span<double> d) { d[0] = 0.0; };
    VectorField one = [](std::span<const double>, std::span<double> d) { d[0] = 1.0; };
    EXPECT_EQ(integrate_step_rk4(zero, std::vector<double>{0.37}, 0.01)[0], 0.37);
    EXPECT_DOUBLE_EQ(integrate_step_rk4(one, std::vector<double>{0.25}, 0.125)[0], 0.375);
}

TEST(Trajectory, DoubleIntegratorReachesSafely) {
    auto c = di_cert();
    SimConfig cfg;
    auto tr = run_trajectory(c, std::vector<double>{0.8, 0.3}, cfg);
    EXPECT_EQ(tr.outcome, Outcome::Reached);
    EXPECT_LT(tr.outcome_time, cfg.t_max);
    EXPECT_LT(c.phi(tr.states.back()), 0.0);
    for (std::size_t k = 0; k < tr.size(); ++k) {
        EXPECT_GT(tr.psi_base[k], 0.0);
        EXPECT_LE(tr.psi[k], tr.psi_base[k]);
    }
    EXPECT_EQ(tr.times.size(), tr.states.size());
    EXPECT_EQ(tr.inputs.size(), tr.psi.size());
    EXPECT_TRUE(monotonicity_audit(tr).pass);
}

TEST(Trajectory, StartInTargetReachedImmediately) {
    auto tr = run_trajectory(di_cert(), std::vector<double>{0.05, 0.0}, SimConfig{});
    EXPECT_EQ(tr.outcome, Outcome::Reached);
    EXPECT_EQ(tr.outcome_time, 0.0);
    EXPECT_EQ(tr.size(), 1u);
}

TEST(Trajectory, TimeoutWithoutStops) {
    SimConfig cfg;
    cfg.t_max = 0.5;
    cfg.stop_on_reach = false;
    auto tr = run_trajectory(di_cert(), std::vector<double>{0.5, 0.0}, cfg);
    EXPECT_EQ(tr.outcome, Outcome::Timeout);
    EXPECT_NEAR(tr.outcome_time, 0.5, 1e-12);
    EXPECT_EQ(tr.size(), 501u);
}

TEST(Trajectory, InvalidConfig) {
    SimConfig cfg;
    cfg.dt = 0;
    EXPECT_THROW(cfg.validate(), SpecError);
    cfg.dt = 1;
    cfg.t_max = 0.5;
    EXPECT_THROW(cfg.validate(), SpecError);
}

TEST(Trajectory, BitwiseDeterministicCsv) {
    auto c = di_cert();
    auto a = run_trajectory(c, std::vector<double>{0.7, -0.4}, SimConfig{});
    auto b = run_trajectory(c, std::vector<double>{0.7, -0.4}, SimConfig{});
    EXPECT_EQ(csv_of(a), csv_of(b));
}

TEST(Trajectory, Rk4ObservedOrder) {
    auto c = di_cert();
    auto terminal = [&](double dt) {
        SimConfig cfg;
        cfg.dt = dt;
        cfg.t_max = 2.0;
        cfg.stop_on_reach = cfg.stop_on_safety = false;
        return run_trajectory(c, std::vector<double>{0.6, 0.2}, cfg).states.back();
    };
    auto a = terminal(0.1), b = terminal(0.05), d = terminal(0.025);
    double e1 = std::hypot(a[0] - b[0], a[1] - b[1]);
    double e2 = std::hypot(b[0] - d[0], b[1] - d[1]);
    EXPECT_GE(std::log2(e1 / e2), 3.5);
}

TEST(Monotonicity, ConstantAndReversed) {
    auto flat = monotonicity_audit(series({0.5, 0.5, 0.5}));
    EXPECT_EQ(flat.max_drop, 0.0);
    EXPECT_TRUE(flat.pass);
    auto rev = monotonicity_audit(series({0.1, 0.2, 0.3, 0.25, 0.4}));
    EXPECT_FALSE(rev.pass);
    EXPECT_EQ(rev.step, 2u);
    EXPECT_NEAR(rev.max_drop, 0.05, 1e-15);
    EXPECT_THROW(monotonicity_audit(series({1.0})), std::invalid_argument);
}

TEST(Monotonicity, ReachedSampleExcluded) {
    EXPECT_TRUE(monotonicity_audit(series({0.1, 0.2, 0.1}, Outcome::Reached)).pass);
    EXPECT_FALSE(monotonicity_audit(series({0.1, 0.2, 0.1}, Outcome::Timeout)).pass);
}

TEST(Batch, DoubleIntegratorAllReached) {
    SimConfig cfg;
    cfg.seed = 2;
    auto rep = run_batch(di_cert(), 20, cfg);
    EXPECT_EQ(rep.count(Outcome::Reached), 20u);
    std::size_t total = 0;
    for (auto c : rep.counts) total += c;
    EXPECT_EQ(total, 20u);
    EXPECT_TRUE(rep.all_monotone());
    auto j = batch_report_json(rep);
    EXPECT_EQ(j["counts"]["Reached"], 20);
    EXPECT_EQ(j["trajectories"].size(), 20u);
}

TEST(Batch, SingletonAndThreadIndependence) {
    auto c = di_cert();
    SimConfig one;
    one.threads = 1;
    SimConfig many;
    many.threads = 4;
    auto a = run_batch(c, 6, one), b = run_batch(c, 6, many);
    for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(csv_of(a.trajectories[i]), csv_of(b.trajectories[i]));
    auto s = run_batch(c, 1, one);
    EXPECT_EQ(s.trajectories.size(), 1u);
    EXPECT_EQ(batch_report_json(s)["trajectories"].size(), 1u);
}

TEST(Verify, PassFailAndInvalidCount) {
    auto c = di_cert();
    auto ok = verify_pointwise(c, 10000, 0);
    EXPECT_TRUE(ok.pass);
    EXPECT_EQ(ok.samples, 10000u);
    EXPECT_GE(ok.min_margin, -1e-8);
    EXPECT_FALSE(verify_pointwise(c, 2000, 0, 100.0).pass);
    EXPECT_THROW(verify_pointwise(c, 0, 0), std::invalid_argument);
}

TEST(Export, TrajectoryCsvLayout) {
    Trajectory tr;
    for (int k = 0; k < 3; ++k) {
        tr.times.push_back(k * 0.5);
        tr.states.push_back({1.0 * k, 2.0});
        tr.outputs.push_back({1.0 * k});
        tr.inputs.push_back({-1.0});
        tr.psi.push_back(0.25);
    }
    std::string csv = csv_of(tr);
    std::istringstream is(csv);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    ASSERT_EQ(lines.size(), 4u);
    EXPECT_EQ(lines[0], "t,x1,x2,y1,u1,psi");
    EXPECT_EQ(lines[2], "0.5,1,2,1,-1,0.25");
    EXPECT_EQ(csv.find('\r'), std::string::npos);
}

TEST(Export, GridCsvRoundTrip) {
    auto g = levelset_grid(di_cert(), 0, 1, std::vector<double>{0, 0}, 16);
    std::stringstream ss;
    write_grid_csv(ss, g);
    auto r = read_grid_csv(ss);
    EXPECT_EQ(r.resolution, g.resolution);
    EXPECT_EQ(r.var_a, 0u);
    EXPECT_EQ(r.var_b, 1u);
    EXPECT_EQ(r.a, g.a);
    EXPECT_EQ(r.b, g.b);
    EXPECT_EQ(r.values, g.values);
}

TEST(Export, MarchingSquaresCircle) {
    std::vector<double> xs, ys, v;
    for (int k = 0; k < 65; ++k) xs.push_back(-1.5 + 3.0 * k / 64), ys.push_back(xs.back());
    for (double y : ys)
        for (double x : xs) v.push_back(1 - x * x - y * y);
    auto segs = marching_squares(xs, ys, v);
    EXPECT_GT(segs.size(), 100u);
    for (const auto& s : segs) {
        EXPECT_NEAR(std::hypot(s[0], s[1]), 1.0, 0.01);
        EXPECT_NEAR(std::hypot(s[2], s[3]), 1.0, 0.01);
    }
}

TEST(Export, SvgHasContoursAndPolylines) {
    auto spec = sets({"y1", "y2"}, "4 - y1^2 - y2^2", "(y1 - 1)^2 + y2^2 - 0.25", {{-3, 3}, {-3, 3}});
    Trajectory tr;
    tr.outputs = {{-1, 0}, {0, 0.2}, {1, 0}};
    std::string svg = render_svg(spec, {tr});
    EXPECT_NE(svg.find("<svg"), std::string::npos);
    EXPECT_NE(svg.find("id=\"safe-set\""), std::string::npos);
    EXPECT_NE(svg.find("id=\"target-set\""), std::string::npos);
    EXPECT_NE(svg.find("<polyline"), std::string::npos);
    auto safe = svg.find("id=\"safe-set\"");
    EXPECT_NE(svg.find("d=\"M", safe), std::string::npos);
}
