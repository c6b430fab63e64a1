#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include "reachstep/error.hpp"
#include "reachstep/sdp.hpp"
#include "sdp_test_problems.hpp"

using namespace reachstep;
namespace fs = std::filesystem;

namespace {

double min_eig(const Eigen::MatrixXd& M) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

void expect_optimal_invariants(const SdpProblem& p, const SdpSolution& s) {
    ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
    double binf = 0.0;
    for (double v : p.b) binf = std::max(binf, std::abs(v));
    for (std::size_t i = 0; i < p.constraints.size(); ++i)
        EXPECT_LE(std::abs(apply(p.constraints[i], s.X, s.s) - p.b[i]), 1e-6 * (1 + binf));
    for (const auto& X : s.X) EXPECT_GE(min_eig(X), -1e-8);
    EXPECT_LE(s.gap, 1e-7 * (1 + std::abs(s.primal_objective)));
}

}  // namespace

TEST(SdpSolve, TwoByTwoEigenvalueToy) {
    auto p = testprob::two_by_two();
    auto s = solve(p);
    expect_optimal_invariants(p, s);
    EXPECT_NEAR(s.primal_objective, 1.0, 1e-7);
    EXPECT_NEAR(s.X[0](0, 0), 1.0, 1e-6);
}

TEST(SdpSolve, ForcedSolution) {
    auto p = testprob::forced_scalar();
    auto s = solve(p);
    expect_optimal_invariants(p, s);
    EXPECT_NEAR(s.X[0](0, 0), 1.0, 1e-8);
    EXPECT_NEAR(s.primal_objective, 0.0, 1e-8);
}

TEST(SdpSolve, SignContradictionIsInfeasible) {
    auto s = solve(testprob::infeasible_scalar());
    EXPECT_EQ(s.status, SdpStatus::Infeasible) << s.message;
}

TEST(SdpSolve, UnboundedIsReportedInfeasible) {
    SdpProblem p;
    p.blocks = {-2};
    p.objective.entries = {{0, 0, 0, -1.0}};
    p.constraints = {LinearForm{{{0, 0, 0, 1.0}, {0, 1, 1, -1.0}}, {}}};
    p.b = {0.0};
    auto s = solve(p);
    EXPECT_EQ(s.status, SdpStatus::Infeasible) << s.message;
}

TEST(SdpSolve, FreeScalars) {
    auto p = testprob::free_scalar_lp();
    auto s = solve(p);
    expect_optimal_invariants(p, s);
    EXPECT_NEAR(s.primal_objective, 1.0, 1e-7);
    EXPECT_NEAR(s.s(0), 1.0, 1e-6);
}

TEST(SdpSolve, RandomFeasibleProblems) {
    for (unsigned seed = 0; seed < 12; ++seed) {
        auto p = testprob::random_feasible(seed, 12, {5, 3, -4}, seed % 3);
        auto s = solve(p);
        expect_optimal_invariants(p, s);
        EXPECT_NEAR(s.primal_objective, s.dual_objective, 1e-7 * (1 + std::abs(s.primal_objective)));
    }
}

TEST(SdpSolve, Deterministic) {
    auto p = testprob::random_feasible(3, 10, {4, 4}, 1);
    auto a = solve(p);
    auto b = solve(p);
    EXPECT_EQ(a.iterations, b.iterations);
    EXPECT_EQ(a.primal_objective, b.primal_objective);
    EXPECT_EQ(a.dual_objective, b.dual_objective);
}

TEST(SdpSolve, IterationLimitAndEnvironment) {
    auto p = testprob::random_feasible(1, 10, {6}, 0);
    SdpOptions o;
    o.max_iter = 2;
    EXPECT_EQ(solve(p, o).status, SdpStatus::IterationLimit);
    setenv("REACHSTEP_SDP_MAXITER", "3", 1);
    EXPECT_EQ(SdpOptions::from_env().max_iter, 3);
    unsetenv("REACHSTEP_SDP_MAXITER");
    EXPECT_EQ(SdpOptions::from_env().max_iter, 200);
}

TEST(Sdpa, ExportLayoutAndRoundTrip) {
    auto p = testprob::two_by_two();
    std::string text = to_sdpa(p);
    EXPECT_EQ(text.find('\r'), std::string::npos);
    std::istringstream is(text);
    std::string l1, l2, l3;
    std::getline(is, l1);
    std::getline(is, l2);
    std::getline(is, l3);
    EXPECT_EQ(l1, "2");
    EXPECT_EQ(l2, "1");
    EXPECT_EQ(l3, "2");
    auto q = parse_sdpa(text);
    EXPECT_EQ(q.blocks, p.blocks);
    EXPECT_EQ(q.b, p.b);
    EXPECT_EQ(to_sdpa(q), text);
}

TEST(Sdpa, RoundTripReproducesMatrices) {
    auto p = testprob::random_feasible(5, 9, {4, -3}, 0);
    auto q = parse_sdpa(to_sdpa(p));
    std::mt19937_64 rng(1);
    std::normal_distribution<double> N;
    std::vector<Eigen::MatrixXd> X;
    for (int n : p.blocks) {
        Eigen::MatrixXd R = Eigen::MatrixXd::NullaryExpr(std::abs(n), std::abs(n), [&]() { return N(rng); });
        X.push_back(n > 0 ? Eigen::MatrixXd(R + R.transpose()) : Eigen::MatrixXd(R.diagonal().asDiagonal()));
    }
    Eigen::VectorXd s0;
    for (std::size_t i = 0; i < p.constraints.size(); ++i)
        EXPECT_DOUBLE_EQ(apply(q.constraints[i], X, s0), apply(p.constraints[i], X, s0));
    EXPECT_NEAR(apply(q.objective, X, s0), apply(p.objective, X, s0), 1e-14);
}

TEST(Sdpa, FreeScalarsBecomeSplitPairs) {
    auto p = testprob::free_scalar_lp();
    auto q = parse_sdpa(to_sdpa(p));
    ASSERT_EQ(q.blocks.size(), p.blocks.size() + 1);
    EXPECT_EQ(q.blocks.back(), -2 * p.num_free);
    auto sq = solve(q);
    ASSERT_EQ(sq.status, SdpStatus::Optimal);
    EXPECT_NEAR(sq.primal_objective, solve(p).primal_objective, 1e-7);
}

TEST(Sdpa, BytesDeterministic) {
    auto p = testprob::random_feasible(8, 7, {3, -2}, 2);
    EXPECT_EQ(to_sdpa(p), to_sdpa(p));
}

TEST(Sdpa, EmptyProblemRejected) {
    SdpProblem p;
    EXPECT_THROW(to_sdpa(p), std::invalid_argument);
}

TEST(Sdpa, MalformedInputLocated) {
    std::string text = "1\n1\n2\n1.0\n0 1 1 1 2.0\n1 1 1 x 1.0\n";
    try {
        parse_sdpa(text);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 6u);
    }
    auto p = testprob::forced_scalar();
    std::string sol = "objValPrimal = 0\nobjValDual = 0\nphase.value = pdOPT\nxVec =\n{1.0}\nxMat =\n{\n{ {1.0} }\n}\nyMat =\n{\n{ {1.0q} }\n}\n";
    try {
        parse_sdpa_solution(sol, p);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 12u);
    }
}

TEST(Sdpa, ImportMapsSdpaDualToPrimal) {
    auto p = testprob::free_scalar_lp();
    // SDPA primal x = -y; yMat holds our X, last block the s+/- pair.
    std::string sol =
        "phase.value = pdOPT\nobjValPrimal = -1\nobjValDual = -1\nxVec =\n{-1}\nxMat =\n{\n{0}\n{0,0}\n}\n"
        "yMat =\n{\n{0}\n{1.5,0.5}\n}\n";
    auto s = parse_sdpa_solution(sol, p);
    EXPECT_EQ(s.status, SdpStatus::Optimal);
    EXPECT_DOUBLE_EQ(s.primal_objective, 1.0);
    EXPECT_DOUBLE_EQ(s.s(0), 1.0);
    EXPECT_DOUBLE_EQ(s.y(0), 1.0);
}

TEST(Sdpa, ExternalSolverAgrees) {
    if (std::system("python3 -c 'import cvxpy' > /dev/null 2>&1") != 0) GTEST_SKIP() << "python3 with cvxpy not found";
    fs::path dir = fs::temp_directory_path() / "reachstep_sdpa_test";
    fs::create_directories(dir);
    std::vector<SdpProblem> corpus{testprob::two_by_two(), testprob::forced_scalar(), testprob::free_scalar_lp()};
    for (unsigned seed = 0; seed < 4; ++seed) corpus.push_back(testprob::random_feasible(seed, 8, {4, -3}, seed % 2));
    for (std::size_t k = 0; k < corpus.size(); ++k) {
        fs::path in = dir / ("p" + std::to_string(k) + ".dat-s");
        fs::path out = dir / ("p" + std::to_string(k) + ".out");
        export_sdpa(corpus[k], in);
        std::string cmd = "python3 " REACHSTEP_SOURCE_DIR "/tools/sdpa_solve.py " + in.string() + " " + out.string();
        ASSERT_EQ(std::system(cmd.c_str()), 0);
        auto ext = import_solution(out, corpus[k]);
        auto own = solve(corpus[k]);
        ASSERT_EQ(ext.status, SdpStatus::Optimal);
        ASSERT_EQ(own.status, SdpStatus::Optimal);
        EXPECT_NEAR(own.primal_objective, ext.primal_objective, 1e-5) << "problem " << k;
    }
}

TEST(Sdpa, StatusOnlyOutputImportsAsFailure) {
    auto p = testprob::forced_scalar();
    auto s = parse_sdpa_solution("phase.value = noINFO\nobjValPrimal = 0\nobjValDual = 0\n", p);
    EXPECT_EQ(s.status, SdpStatus::NumericalFailure);
    EXPECT_TRUE(s.X.empty());
    s = parse_sdpa_solution("phase.value = pINF_dUNBD\nobjValPrimal = 0\nobjValDual = 0\n", p);
    EXPECT_EQ(s.status, SdpStatus::Infeasible);
    EXPECT_THROW(parse_sdpa_solution("phase.value = pdOPT\nobjValPrimal = 0\nobjValDual = 0\n", p), ParseError);
}
