#include <gtest/gtest.h>

#include "reachstep/error.hpp"
#include "reachstep/sos.hpp"

using namespace reachstep;

namespace {

Polynomial poly(const std::string& text, const VarTable& vars) { return *to_polynomial(parse_expression(text, &vars), vars); }

SemialgebraicSpec spec(const std::vector<std::string>& names, const std::string& psi, const std::string& phi,
                       std::vector<Interval> box) {
    SemialgebraicSpec s;
    s.vars = VarTable(names);
    s.psi = poly(psi, s.vars);
    s.phi = poly(phi, s.vars);
    s.output_box = std::move(box);
    return s;
}

SemialgebraicSpec toy() { return spec({"y"}, "1 - y^2", "y^2 - 0.04", {{-1.5, 1.5}}); }

SemialgebraicSpec example1() {
    return spec({"y1", "y2"}, "1 - y1^2 - y2^2",
                "2*((y2 - 0.1)/2)^2 + 3*((y1 + 0.4)/3)^4 + (3*y1 + 0.3)^2*(4*y2 + 0.2)^2 - 0.01",
                {{-1.2, 1.2}, {-1.2, 1.2}});
}

void expect_residual_ok(const SosProgram& p, const BaseController& c) {
    auto r = verify_sos_residual(p, c);
    EXPECT_LE(r.max_coefficient_error, 1e-7);
    EXPECT_GE(r.min_eigenvalue_sos, -1e-8);
    EXPECT_GE(r.min_eigenvalue_s0, -1e-8);
    EXPECT_GE(r.min_eigenvalue_s1, -1e-8);
}

}  // namespace

TEST(SosBuild, OneDimensionalLayout) {
    SynthesisConfig cfg;
    cfg.deg_u = 1;
    auto s = toy();
    auto p = build_program(single_integrator(s), s, cfg);
    // grad psi . u has degree 2, psi degree 2: D = 2, multipliers constant.
    EXPECT_EQ(p.degree, 2);
    EXPECT_EQ(p.deg_s0, 0);
    EXPECT_EQ(p.deg_s1, 0);
    EXPECT_EQ(p.sdp.blocks, (std::vector<int>{2, 1, 1, -6}));
    EXPECT_EQ(p.rows, (std::vector<Monomial>{{0}, {1}, {2}}));
    EXPECT_EQ(p.sdp.num_constraints(), 3u);
}

TEST(SosBuild, EveryMonomialHasOneRow) {
    auto s = example1();
    SynthesisConfig cfg;
    cfg.deg_s0 = cfg.deg_s1 = 2;
    auto p = build_program(single_integrator(s), s, cfg);
    EXPECT_EQ(p.degree, 6);
    EXPECT_EQ(p.rows, monomial_basis(2, 6));
    for (const auto& row : p.sdp.constraints) EXPECT_FALSE(row.entries.empty());
}

TEST(SosBuild, ConstantPsiRejected) {
    auto s = toy();
    s.psi = Polynomial::constant(1, 1.0);
    EXPECT_THROW(build_program(single_integrator(s), s, {}), SpecError);
}

TEST(SosBuild, NonPolynomialSystemRejected) {
    auto s = toy();
    auto sys = single_integrator(s);
    sys.f[0] = sin(Expr::variable("y"));
    EXPECT_THROW(build_program(sys, s, {}), SynthesisError);
}

TEST(SosSolve, OneDimensionalToyCertified) {
    SynthesisConfig cfg;
    cfg.deg_u = 1;
    auto s = toy();
    auto p = build_program(single_integrator(s), s, cfg);
    auto c = solve_program(p);
    ASSERT_TRUE(c.certified) << c.message;
    EXPECT_LE(c.delta, cfg.delta_tol);
    EXPECT_GE(c.lambda, cfg.epsilon);
    expect_residual_ok(p, c);
    // The controller points inward: k(y) y < 0 away from the origin.
    for (double y : {-0.9, -0.5, 0.5, 0.9}) EXPECT_LT(c.k1[0].evaluate(std::vector<double>{y}) * y, 0.0);
}

TEST(SosSolve, EmptySafeSetInfeasible) {
    auto s = toy();
    s.psi = poly("-1 - y^2", s.vars);
    auto c = solve_program(build_program(single_integrator(s), s, {}));
    EXPECT_EQ(c.status, SdpStatus::Infeasible);
    EXPECT_FALSE(c.certified);
}

TEST(SosSolve, PsiScalingInvariant) {
    SynthesisConfig cfg;
    cfg.deg_u = 1;
    auto s = toy();
    auto a = solve_program(build_program(single_integrator(s), s, cfg));
    s.psi = s.psi.scaled(3.0);
    auto b = solve_program(build_program(single_integrator(s), s, cfg));
    EXPECT_EQ(a.certified, b.certified);
    EXPECT_EQ(a.status, b.status);
}

TEST(SosSolve, Example1Certified) {
    auto s = example1();
    SynthesisConfig cfg;
    cfg.deg_s0 = cfg.deg_s1 = 2;
    auto p = build_program(single_integrator(s), s, cfg);
    auto c = solve_program(p);
    ASSERT_TRUE(c.certified) << c.message;
    EXPECT_LE(c.delta, 1e-6);
    expect_residual_ok(p, c);
}

TEST(SosResidualCheck, HandGram) {
    // (y + 1)^2 = [1 y] [[1 1] [1 1]] [1 y]^T.
    GramBlock g{{{0}, {1}}, Eigen::Matrix2d{{1, 1}, {1, 1}}};
    VarTable v({"y"});
    EXPECT_EQ(g.polynomial(1), poly("(y + 1)^2", v));
}

TEST(SosResidualCheck, PerturbationDetected) {
    SynthesisConfig cfg;
    cfg.deg_u = 1;
    auto s = toy();
    auto p = build_program(single_integrator(s), s, cfg);
    auto c = solve_program(p);
    ASSERT_TRUE(c.certified);
    c.sos.Q(0, 0) += 1e-3;
    EXPECT_GE(verify_sos_residual(p, c).max_coefficient_error, 9e-4);
}

TEST(SosJson, RoundTrip) {
    SynthesisConfig cfg;
    cfg.deg_u = 1;
    auto s = toy();
    auto c = solve_program(build_program(single_integrator(s), s, cfg));
    auto d = controller_from_json(controller_to_json(c));
    EXPECT_EQ(d.k1, c.k1);
    EXPECT_EQ(d.lambda, c.lambda);
    EXPECT_EQ(d.delta, c.delta);
    EXPECT_EQ(d.certified, c.certified);
    EXPECT_EQ(d.status, c.status);
    EXPECT_TRUE(d.sos.Q == c.sos.Q);
    EXPECT_EQ(d.s1.basis, c.s1.basis);
}
