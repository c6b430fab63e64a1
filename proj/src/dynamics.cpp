#include "reachstep/dynamics.hpp"

#include <cmath>
#include <random>

#include "reachstep/error.hpp"
#include "reachstep/log.hpp"

namespace reachstep {

std::vector<Expr> ControlAffineSystem::g_column(std::size_t j) const {
    std::vector<Expr> col;
    col.reserve(g.size());
    for (const auto& row : g) col.push_back(row.at(j));
    return col;
}

void ControlAffineSystem::validate() const {
    const std::size_t n = vars.size();
    if (n == 0) throw SpecError("system has no state variables");
    if (f.size() != n) throw SpecError("f has " + std::to_string(f.size()) + " entries, expected " + std::to_string(n));
    if (g.size() != n) throw SpecError("g has " + std::to_string(g.size()) + " rows, expected " + std::to_string(n));
    const std::size_t m = input_dim();
    if (m == 0) throw SpecError("system has no inputs");
    for (const auto& row : g)
        if (row.size() != m) throw SpecError("g rows have inconsistent lengths");
    if (h.size() != m) throw SpecError("number of outputs must equal number of inputs");
    if (state_box.size() != n) throw SpecError("state box dimension mismatch");
    for (std::size_t k = 0; k < n; ++k)
        if (!(state_box[k].lo < state_box[k].hi) || !std::isfinite(state_box[k].lo) ||
            !std::isfinite(state_box[k].hi))
            throw SpecError("empty or infinite box for " + vars.name(k));
    auto check = [&](const Expr& e, const std::string& where) {
        for (const auto& v : free_variables(e))
            if (!vars.contains(v)) throw SpecError(where + " uses unknown variable '" + v + "'");
    };
    for (const auto& e : f) check(e, "f");
    for (const auto& row : g)
        for (const auto& e : row) check(e, "g");
    for (const auto& e : h) check(e, "outputs");
}

Expr lie_derivative(const Expr& scalar, std::span<const Expr> field, const VarTable& vars) {
    if (field.size() != vars.size()) throw std::invalid_argument("vector field dimension mismatch");
    Expr sum(0.0);
    for (std::size_t k = 0; k < field.size(); ++k) {
        if (field[k].is_zero()) continue;
        Expr d = differentiate(scalar, vars.name(k));
        if (d.is_zero()) continue;
        sum = add(sum, mul(d, field[k]));
    }
    return sum;
}

namespace {

Eigen::MatrixXd evaluate_matrix(const std::vector<std::vector<Expr>>& A, const VarTable& vars,
                                std::span<const double> x) {
    const auto m = static_cast<Eigen::Index>(A.size());
    Eigen::MatrixXd out(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) out(i, j) = evaluate(A[i][j], vars, x);
    return out;
}

}  // namespace

std::optional<RelativeDegreeProfile> vector_relative_degree(const ControlAffineSystem& sys,
                                                            const ZeroTestConfig& cfg) {
    const std::size_t n = sys.state_dim();
    const std::size_t m = sys.input_dim();
    if (m == 0 || sys.output_dim() != m) throw SpecError("relative degree needs m >= 1 outputs and inputs");
    std::vector<std::vector<Expr>> columns;
    for (std::size_t j = 0; j < m; ++j) columns.push_back(sys.g_column(j));

    RelativeDegreeProfile prof;
    std::vector<std::vector<Expr>> A(m);
    for (std::size_t i = 0; i < m; ++i) {
        Expr L = sys.h[i];
        int found = 0;
        for (std::size_t k = 0; k < n && !found; ++k) {
            std::vector<Expr> row;
            bool any = false;
            for (std::size_t j = 0; j < m; ++j) {
                Expr lg = lie_derivative(L, columns[j], sys.vars);
                row.push_back(lg);
                if (!is_identically_zero(lg, sys.vars, sys.state_box, cfg.samples, cfg.seed, cfg.tol)) any = true;
            }
            if (any) {
                found = static_cast<int>(k) + 1;
                A[i] = std::move(row);
            } else {
                L = lie_derivative(L, sys.f, sys.vars);
            }
        }
        if (!found) return std::nullopt;
        prof.r.push_back(found);
        prof.sum_r += found;
    }

    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<double> x(n);
    int failures = 0;
    for (int s = 0; s < cfg.rank_samples; ++s) {
        for (std::size_t k = 0; k < n; ++k)
            x[k] = sys.state_box[k].lo + (sys.state_box[k].hi - sys.state_box[k].lo) * unit(rng);
        try {
            Eigen::JacobiSVD<Eigen::MatrixXd> svd(evaluate_matrix(A, sys.vars, x));
            const auto& sv = svd.singularValues();
            if (!(sv(sv.size() - 1) > 1e-8 * sv(0))) ++failures;
        } catch (const EvaluationError&) {
            ++failures;
        }
    }
    if (2 * failures > cfg.rank_samples) return std::nullopt;

    prof.fully_linearizable = prof.sum_r == static_cast<int>(n);
    if (prof.sum_r < static_cast<int>(n))
        log_warn("sum of relative degrees " + std::to_string(prof.sum_r) + " < n = " + std::to_string(n) +
                 ": internal dynamics are not covered by the certificate");
    return prof;
}

std::string eta_name(std::size_t output, std::size_t level) {
    return "eta" + std::to_string(output) + "_" + std::to_string(level);
}

std::map<std::string, Expr> EtaMap::pullback() const {
    std::map<std::string, Expr> b;
    for (std::size_t i = 0; i < chains.size(); ++i)
        for (std::size_t s = 0; s < chains[i].size(); ++s) b.emplace(names[i][s], chains[i][s]);
    return b;
}

EtaMap build_eta_map(const ControlAffineSystem& sys, const RelativeDegreeProfile& profile) {
    if (profile.r.size() != sys.output_dim()) throw std::invalid_argument("profile does not match system");
    EtaMap map;
    for (std::size_t i = 0; i < profile.r.size(); ++i) {
        std::vector<Expr> chain{sys.h[i]};
        for (int s = 1; s < profile.r[i]; ++s) chain.push_back(lie_derivative(chain.back(), sys.f, sys.vars));
        std::vector<std::string> names;
        for (int s = 0; s < profile.r[i]; ++s) {
            names.push_back(eta_name(i + 1, static_cast<std::size_t>(s) + 1));
            map.symbols.add(names.back());
        }
        map.chains.push_back(std::move(chain));
        map.names.push_back(std::move(names));
    }
    map.full_state = profile.sum_r == static_cast<int>(sys.state_dim());
    return map;
}

DecouplingData decoupling(const ControlAffineSystem& sys, const RelativeDegreeProfile& profile) {
    const std::size_t m = sys.input_dim();
    DecouplingData dec;
    std::vector<std::vector<Expr>> columns;
    for (std::size_t j = 0; j < m; ++j) columns.push_back(sys.g_column(j));
    for (std::size_t i = 0; i < m; ++i) {
        Expr L = sys.h[i];
        for (int s = 1; s < profile.r[i]; ++s) L = lie_derivative(L, sys.f, sys.vars);
        std::vector<Expr> row;
        for (std::size_t j = 0; j < m; ++j) row.push_back(lie_derivative(L, columns[j], sys.vars));
        dec.A.push_back(std::move(row));
        dec.Lfr.push_back(lie_derivative(L, sys.f, sys.vars));
    }
    return dec;
}

Eigen::VectorXd solve_decoupled(const Eigen::MatrixXd& A, const Eigen::VectorXd& rhs) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const auto& sv = svd.singularValues();
    double smin = sv.size() ? sv(sv.size() - 1) : 0.0;
    if (!(smin >= 1e-10)) throw SingularDecouplingError(smin);
    return A.partialPivLu().solve(rhs);
}

DecouplingEvaluator::DecouplingEvaluator(const DecouplingData& dec, const VarTable& vars) : m_(dec.A.size()) {
    std::vector<Expr> outs;
    for (const auto& row : dec.A)
        for (const auto& e : row) outs.push_back(e);
    for (const auto& e : dec.Lfr) outs.push_back(e);
    tape_ = Tape(outs, vars);
}

void DecouplingEvaluator::evaluate(std::span<const double> x, Eigen::MatrixXd& A, Eigen::VectorXd& Lfr) const {
    thread_local std::vector<double> scratch;
    std::vector<double> out(m_ * m_ + m_);
    tape_.evaluate(x, out, scratch);
    const auto m = static_cast<Eigen::Index>(m_);
    A.resize(m, m);
    Lfr.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) A(i, j) = out[static_cast<std::size_t>(i * m + j)];
        Lfr(i) = out[m_ * m_ + static_cast<std::size_t>(i)];
    }
}

Eigen::VectorXd feedback_linearize(const DecouplingData& dec, std::span<const double> v_virtual,
                                   const VarTable& vars, std::span<const double> x) {
    const auto m = static_cast<Eigen::Index>(dec.A.size());
    if (static_cast<Eigen::Index>(v_virtual.size()) != m) throw std::invalid_argument("virtual input dimension");
    Eigen::MatrixXd A = evaluate_matrix(dec.A, vars, x);
    Eigen::VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) rhs(i) = v_virtual[static_cast<std::size_t>(i)] - evaluate(dec.Lfr[i], vars, x);
    return solve_decoupled(A, rhs);
}

Eigen::VectorXd feedback_linearize(const DecouplingData& dec, std::span<const Expr> v_virtual,
                                   const VarTable& vars, std::span<const double> x) {
    std::vector<double> v;
    for (const auto& e : v_virtual) v.push_back(evaluate(e, vars, x));
    return feedback_linearize(dec, v, vars, x);
}

}  // namespace reachstep
