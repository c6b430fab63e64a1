#include "reachstep/sos.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "reachstep/error.hpp"
#include "reachstep/log.hpp"

namespace reachstep {

namespace {

int even_ceil(int d) { return d <= 0 ? 0 : d + (d % 2); }

Monomial product(const Monomial& a, const Monomial& b) {
    Monomial r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
    return r;
}

Polynomial require_polynomial(const Expr& e, const VarTable& vars, const std::string& what) {
    auto p = to_polynomial(e, vars);
    if (!p)
        throw SynthesisError(what + " is not polynomial; SOS synthesis needs polynomial data (use backstep for "
                                    "general systems)");
    return *p;
}

double min_eigenvalue(const Eigen::MatrixXd& M) {
    if (M.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues()(0);
}

// Coefficients of basis products weighted by `w`, keyed by result monomial.
void add_gram_rows(const std::vector<Monomial>& basis, const Polynomial& weight, int block,
                   const std::map<Monomial, int, GradedLex>& row_of, std::vector<LinearForm>& rows) {
    for (std::size_t a = 0; a < basis.size(); ++a)
        for (std::size_t b = a; b < basis.size(); ++b) {
            Monomial ab = product(basis[a], basis[b]);
            for (const auto& [m, c] : weight.terms()) {
                auto it = row_of.find(product(ab, m));
                if (it == row_of.end()) throw SynthesisError("internal: monomial outside certificate degree");
                rows[it->second].entries.push_back({block, static_cast<int>(a), static_cast<int>(b), -c});
            }
        }
}

void add_trace(LinearForm& obj, int block, std::size_t n, double w) {
    for (std::size_t i = 0; i < n; ++i) obj.entries.push_back({block, static_cast<int>(i), static_cast<int>(i), w});
}

}  // namespace

void SemialgebraicSpec::validate() const {
    if (vars.size() == 0) throw SpecError("safe-set definition has no output variables");
    if (psi.num_vars() != vars.size() || phi.num_vars() != vars.size())
        throw SpecError("psi and phi must be polynomials over the output variables");
    if (psi.degree() < 1) throw SpecError("psi is constant; the safe set must be described by a nonconstant polynomial");
    if (phi.degree() < 1) throw SpecError("phi is constant; the target set must be described by a nonconstant polynomial");
    if (!output_box.empty() && output_box.size() != vars.size())
        throw SpecError("output box dimension does not match the outputs");
    for (const auto& iv : output_box)
        if (!(iv.lo < iv.hi)) throw SpecError("output box interval is empty");
}

Polynomial GramBlock::polynomial(std::size_t num_vars) const {
    Polynomial p(num_vars);
    for (std::size_t a = 0; a < basis.size(); ++a)
        for (std::size_t b = 0; b < basis.size(); ++b) p.add_term(product(basis[a], basis[b]), Q(a, b));
    return p;
}

ControlAffineSystem single_integrator(const SemialgebraicSpec& spec) {
    ControlAffineSystem sys;
    sys.vars = spec.vars;
    std::size_t m = spec.vars.size();
    sys.f.assign(m, Expr(0.0));
    sys.g.assign(m, std::vector<Expr>(m, Expr(0.0)));
    for (std::size_t i = 0; i < m; ++i) {
        sys.g[i][i] = Expr(1.0);
        sys.h.push_back(Expr::variable(spec.vars.name(i)));
    }
    sys.state_box = spec.output_box.empty() ? std::vector<Interval>(m) : spec.output_box;
    return sys;
}

SosProgram build_program(const ControlAffineSystem& sys, const SemialgebraicSpec& spec, const SynthesisConfig& cfg,
                         SosPhase phase, double delta_bound) {
    spec.validate();
    if (sys.output_dim() != spec.vars.size()) throw SpecError("system outputs do not match the safe-set variables");
    if (cfg.deg_u < 0) throw SpecError("controller degree must be nonnegative");
    if (!(cfg.epsilon > 0.0)) throw SpecError("epsilon must be positive");

    SosProgram p;
    p.system = sys;
    p.spec = spec;
    p.config = cfg;
    p.phase = phase;
    p.delta_bound = delta_bound;

    const VarTable& xv = sys.vars;
    const std::size_t n = xv.size();
    const std::size_t m = sys.input_dim();

    std::map<std::string, Expr> out;
    for (std::size_t i = 0; i < spec.vars.size(); ++i) out[spec.vars.name(i)] = sys.h[i];
    p.psi_x = require_polynomial(substitute(spec.psi.to_expression(spec.vars), out), xv, "psi(h(x))");
    p.phi_x = require_polynomial(substitute(spec.phi.to_expression(spec.vars), out), xv, "phi(h(x))");
    std::vector<Polynomial> f, grad;
    for (std::size_t i = 0; i < n; ++i) {
        f.push_back(require_polynomial(sys.f[i], xv, "f"));
        grad.push_back(p.psi_x.derivative(i));
    }
    p.drift = Polynomial(n);
    for (std::size_t i = 0; i < n; ++i) p.drift = p.drift + grad[i] * f[i];
    int deg_gain = kMinusInfinity;
    for (std::size_t j = 0; j < m; ++j) {
        Polynomial gj(n);
        for (std::size_t i = 0; i < n; ++i) gj = gj + grad[i] * require_polynomial(sys.g[i][j], xv, "g");
        deg_gain = std::max(deg_gain, gj.degree());
        p.input_gain.push_back(std::move(gj));
    }

    const int dpsi = p.psi_x.degree();
    const int dphi = p.phi_x.degree();
    int core = dpsi;
    if (!p.drift.is_zero()) core = std::max(core, p.drift.degree());
    if (deg_gain != kMinusInfinity) core = std::max(core, deg_gain + cfg.deg_u);
    p.deg_s0 = cfg.deg_s0 >= 0 ? cfg.deg_s0 : even_ceil(core - std::max(dpsi, dphi));
    p.deg_s1 = cfg.deg_s1 >= 0 ? cfg.deg_s1 : even_ceil(core - std::max(dpsi, dphi));
    if (p.deg_s0 % 2 || p.deg_s1 % 2) throw SpecError("multiplier degrees must be even");
    p.degree = even_ceil(std::max({core, p.deg_s0 + dpsi, p.deg_s1 + dphi}));

    p.control_basis = monomial_basis(n, cfg.deg_u);
    p.sos_basis = monomial_basis(n, p.degree / 2);
    p.s0_basis = monomial_basis(n, p.deg_s0 / 2);
    p.s1_basis = monomial_basis(n, p.deg_s1 / 2);
    p.rows = monomial_basis(n, p.degree);

    std::map<Monomial, int, GradedLex> row_of;
    for (std::size_t r = 0; r < p.rows.size(); ++r) row_of[p.rows[r]] = static_cast<int>(r);

    const std::size_t nk = m * p.control_basis.size();
    const int diag = 2 * static_cast<int>(nk) + (phase == SosPhase::Polish ? 3 : 2);
    SdpProblem& sdp = p.sdp;
    sdp.blocks = {static_cast<int>(p.sos_basis.size()), static_cast<int>(p.s0_basis.size()),
                  static_cast<int>(p.s1_basis.size()), -diag};
    sdp.constraints.assign(p.rows.size(), LinearForm{});
    sdp.b.assign(p.rows.size(), 0.0);

    // Gram blocks enter with a minus sign; known terms move to the right side.
    add_gram_rows(p.sos_basis, Polynomial::constant(n, 1.0), 0, row_of, sdp.constraints);
    add_gram_rows(p.s0_basis, p.psi_x, 1, row_of, sdp.constraints);
    add_gram_rows(p.s1_basis, p.phi_x, 2, row_of, sdp.constraints);
    for (std::size_t j = 0; j < m; ++j)
        for (std::size_t b = 0; b < p.control_basis.size(); ++b)
            for (const auto& [mono, c] : p.input_gain[j].terms()) {
                int r = row_of.at(product(mono, p.control_basis[b]));
                sdp.constraints[r].entries.push_back({3, p.k_plus(j, b), p.k_plus(j, b), c});
                sdp.constraints[r].entries.push_back({3, p.k_minus(j, b), p.k_minus(j, b), -c});
            }
    for (const auto& [mono, c] : p.psi_x.terms()) {
        int r = row_of.at(mono);
        sdp.constraints[r].entries.push_back({3, p.lambda_slack(), p.lambda_slack(), -c});
        sdp.b[r] += cfg.epsilon * c;
    }
    for (const auto& [mono, c] : p.drift.terms()) sdp.b[row_of.at(mono)] -= c;
    sdp.constraints[row_of.at(Monomial(n, 0))].entries.push_back({3, p.delta_index(), p.delta_index(), 1.0});

    const double w = phase == SosPhase::Polish ? 1.0 : cfg.regularization;
    add_trace(sdp.objective, 0, p.sos_basis.size(), w);
    add_trace(sdp.objective, 1, p.s0_basis.size(), w);
    add_trace(sdp.objective, 2, p.s1_basis.size(), w);
    for (int i = 0; i < 2 * static_cast<int>(nk); ++i) sdp.objective.entries.push_back({3, i, i, w});
    if (phase == SosPhase::MinimizeDelta) {
        sdp.objective.entries.push_back({3, p.delta_index(), p.delta_index(), 1.0});
    } else {
        sdp.constraints.push_back(
            LinearForm{{{3, p.delta_index(), p.delta_index(), 1.0}, {3, p.bound_slack(), p.bound_slack(), 1.0}}, {}});
        sdp.b.push_back(delta_bound);
    }
    sdp.validate();
    return p;
}

BaseController extract(const SosProgram& p, const SdpSolution& sol) {
    BaseController c;
    const std::size_t n = p.system.state_dim();
    c.vars = p.system.vars;
    c.status = sol.status;
    c.iterations = sol.iterations;
    c.message = sol.message;
    if (sol.X.size() != 4) return c;
    const Eigen::MatrixXd& d = sol.X[3];
    for (std::size_t j = 0; j < p.system.input_dim(); ++j) {
        Polynomial k(n);
        for (std::size_t b = 0; b < p.control_basis.size(); ++b)
            k.add_term(p.control_basis[b], d(p.k_plus(j, b), p.k_plus(j, b)) - d(p.k_minus(j, b), p.k_minus(j, b)));
        c.k1.push_back(std::move(k));
    }
    c.lambda = p.config.epsilon + d(p.lambda_slack(), p.lambda_slack());
    c.delta = d(p.delta_index(), p.delta_index());
    c.sos = {p.sos_basis, sol.X[0]};
    c.s0 = {p.s0_basis, sol.X[1]};
    c.s1 = {p.s1_basis, sol.X[2]};
    const double psd_tol = -1e-8;
    c.certified = sol.status == SdpStatus::Optimal && c.delta <= p.config.delta_tol &&
                  c.lambda >= p.config.epsilon && min_eigenvalue(c.sos.Q) >= psd_tol &&
                  min_eigenvalue(c.s0.Q) >= psd_tol && min_eigenvalue(c.s1.Q) >= psd_tol;
    return c;
}

std::pair<double, double> sample_set_fractions(const SemialgebraicSpec& spec, int samples, std::uint64_t seed) {
    if (samples <= 0) throw std::invalid_argument("sample count must be positive");
    const std::size_t k = spec.vars.size();
    std::vector<Interval> box = spec.output_box.empty() ? std::vector<Interval>(k) : spec.output_box;
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> dist;
    for (const auto& iv : box) dist.emplace_back(iv.lo, iv.hi);
    std::vector<double> y(k);
    int safe = 0, target = 0;
    for (int s = 0; s < samples; ++s) {
        for (std::size_t i = 0; i < k; ++i) y[i] = dist[i](rng);
        if (spec.psi.evaluate(y) > 0.0) {
            ++safe;
            if (spec.phi.evaluate(y) < 0.0) ++target;
        }
    }
    return {static_cast<double>(safe) / samples, static_cast<double>(target) / samples};
}

BaseController solve_program(const SosProgram& p) {
    auto [safe, target] = sample_set_fractions(p.spec, p.config.set_samples, p.config.seed);
    if (safe == 0.0) {
        BaseController c;
        c.vars = p.system.vars;
        c.status = SdpStatus::Infeasible;
        c.message = "safe set appears empty: no sampled point of the output box has psi > 0";
        return c;
    }
    if (target == 0.0) log_warn("no sampled point lies in both the safe set and the target set");

    log_info("SOS program: degree " + std::to_string(p.degree) + ", " + std::to_string(p.rows.size()) +
             " equalities, Gram sizes " + std::to_string(p.sos_basis.size()) + "/" +
             std::to_string(p.s0_basis.size()) + "/" + std::to_string(p.s1_basis.size()));
    SdpSolution first = solve(p.sdp, p.config.sdp);
    BaseController c = extract(p, first);
    log_info("delta minimization: " + std::string(to_string(first.status)) + ", delta " + std::to_string(c.delta));
    if (!c.certified || !p.config.polish || p.phase == SosPhase::Polish) return c;

    double bound = std::max(0.1 * p.config.delta_tol, std::min(p.config.delta_tol, 2.0 * c.delta));
    SosProgram polish = build_program(p.system, p.spec, p.config, SosPhase::Polish, bound);
    SdpSolution second = solve(polish.sdp, p.config.sdp);
    BaseController d = extract(polish, second);
    log_info("polish: " + std::string(to_string(second.status)) + ", delta " + std::to_string(d.delta));
    if (!d.certified) {
        log_warn("polishing solve did not certify (" + d.message + "); keeping the delta-minimizing solution");
        return c;
    }
    d.iterations += c.iterations;
    return d;
}

SosResidual verify_sos_residual(const SosProgram& p, const BaseController& c) {
    const std::size_t n = p.system.state_dim();
    Polynomial lhs = p.drift;
    for (std::size_t j = 0; j < c.k1.size(); ++j) lhs = lhs + p.input_gain[j] * c.k1[j];
    lhs = lhs - p.psi_x.scaled(c.lambda) + Polynomial::constant(n, c.delta);
    lhs = lhs - c.s0.polynomial(n) * p.psi_x - c.s1.polynomial(n) * p.phi_x - c.sos.polynomial(n);
    SosResidual r;
    r.max_coefficient_error = lhs.max_abs_coefficient();
    r.min_eigenvalue_sos = min_eigenvalue(c.sos.Q);
    r.min_eigenvalue_s0 = min_eigenvalue(c.s0.Q);
    r.min_eigenvalue_s1 = min_eigenvalue(c.s1.Q);
    return r;
}

nlohmann::json polynomial_to_json(const Polynomial& p) {
    nlohmann::json terms = nlohmann::json::array();
    for (const auto& [m, c] : p.terms()) terms.push_back({{"exponents", m}, {"coefficient", c}});
    return terms;
}

Polynomial polynomial_from_json(const nlohmann::json& j, std::size_t num_vars) {
    if (!j.is_array()) throw SpecError("polynomial must be an array of terms");
    Polynomial p(num_vars);
    for (const auto& t : j) {
        auto m = t.at("exponents").get<Monomial>();
        if (m.size() != num_vars) throw SpecError("polynomial term has the wrong number of exponents");
        p.add_term(m, t.at("coefficient").get<double>());
    }
    return p;
}

namespace {

nlohmann::json gram_to_json(const GramBlock& g) {
    nlohmann::json q = nlohmann::json::array();
    for (Eigen::Index i = 0; i < g.Q.rows(); ++i) {
        std::vector<double> row(g.Q.cols());
        for (Eigen::Index k = 0; k < g.Q.cols(); ++k) row[k] = g.Q(i, k);
        q.push_back(row);
    }
    return {{"basis", g.basis}, {"Q", q}};
}

GramBlock gram_from_json(const nlohmann::json& j) {
    GramBlock g;
    g.basis = j.at("basis").get<std::vector<Monomial>>();
    auto q = j.at("Q").get<std::vector<std::vector<double>>>();
    g.Q.resize(q.size(), q.size());
    for (std::size_t i = 0; i < q.size(); ++i) {
        if (q[i].size() != q.size()) throw SpecError("Gram matrix is not square");
        for (std::size_t k = 0; k < q.size(); ++k) g.Q(i, k) = q[i][k];
    }
    return g;
}

}  // namespace

nlohmann::json controller_to_json(const BaseController& c) {
    nlohmann::json k = nlohmann::json::array();
    for (const auto& p : c.k1) k.push_back(polynomial_to_json(p));
    return {{"vars", c.vars.names()},
            {"k1", k},
            {"lambda", c.lambda},
            {"delta", c.delta},
            {"certified", c.certified},
            {"status", to_string(c.status)},
            {"iterations", c.iterations},
            {"gram", {{"sos", gram_to_json(c.sos)}, {"s0", gram_to_json(c.s0)}, {"s1", gram_to_json(c.s1)}}}};
}

BaseController controller_from_json(const nlohmann::json& j) {
    try {
        BaseController c;
        c.vars = VarTable(j.at("vars").get<std::vector<std::string>>());
        for (const auto& p : j.at("k1")) c.k1.push_back(polynomial_from_json(p, c.vars.size()));
        c.lambda = j.at("lambda").get<double>();
        c.delta = j.at("delta").get<double>();
        c.certified = j.at("certified").get<bool>();
        std::string st = j.at("status").get<std::string>();
        for (auto s : {SdpStatus::Optimal, SdpStatus::Infeasible, SdpStatus::NumericalFailure, SdpStatus::IterationLimit})
            if (st == to_string(s)) c.status = s;
        c.iterations = j.value("iterations", 0);
        const auto& g = j.at("gram");
        c.sos = gram_from_json(g.at("sos"));
        c.s0 = gram_from_json(g.at("s0"));
        c.s1 = gram_from_json(g.at("s1"));
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("malformed base controller: ") + e.what());
    }
}

}  // namespace reachstep
