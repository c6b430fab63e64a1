#include "reachstep/backstepping.hpp"

#include <cmath>
#include <random>

#include "reachstep/error.hpp"
#include "reachstep/log.hpp"

namespace reachstep {

namespace {

Expr eta_var(const EtaMap& eta, std::size_t i, std::size_t s) { return Expr::variable(eta.names[i][s]); }

std::map<std::string, Expr> outputs_to_eta(const VarTable& outputs, const EtaMap& eta) {
    if (outputs.size() != eta.names.size()) throw SpecError("output variables do not match the system outputs");
    std::map<std::string, Expr> b;
    for (std::size_t i = 0; i < outputs.size(); ++i) b[outputs.name(i)] = eta_var(eta, i, 0);
    return b;
}

std::vector<double>& scratch_buffer() {
    thread_local std::vector<double> s;
    return s;
}

RelativeDegreeProfile require_profile(const ControlAffineSystem& sys, const ZeroTestConfig& zt) {
    auto profile = vector_relative_degree(sys, zt);
    if (!profile) throw SpecError("the system has no well-defined vector relative degree");
    return *profile;
}

}  // namespace

GainSchedule GainSchedule::uniform(const RelativeDegreeProfile& profile, double mu, double lambda) {
    GainSchedule g;
    for (int r : profile.r) g.mu.emplace_back(static_cast<std::size_t>(std::max(r - 1, 0)), mu);
    g.lambda = lambda;
    return g;
}

void GainSchedule::validate(const RelativeDegreeProfile& profile, double epsilon) const {
    if (mu.size() != profile.r.size()) throw SpecError("gain schedule needs one mu list per output");
    for (std::size_t i = 0; i < mu.size(); ++i) {
        if (static_cast<int>(mu[i].size()) != profile.r[i] - 1)
            throw SpecError("output " + std::to_string(i + 1) + " needs " + std::to_string(profile.r[i] - 1) +
                            " mu values");
        for (double v : mu[i])
            if (!(v > 0.0) || !std::isfinite(v)) throw SpecError("mu values must be positive and finite");
    }
    if (!(lambda >= epsilon) || !std::isfinite(lambda)) throw SpecError("lambda must be finite and at least epsilon");
}

Expr total_time_derivative(const Expr& e, const EtaMap& eta) {
    Expr d(0.0);
    for (std::size_t i = 0; i < eta.names.size(); ++i) {
        const auto& names = eta.names[i];
        if (!names.empty() && depends_on(e, names.back()))
            throw SynthesisError("time derivative of " + names.back() + " involves the input");
        for (std::size_t s = 0; s + 1 < names.size(); ++s)
            if (depends_on(e, names[s])) d = d + differentiate(e, names[s]) * eta_var(eta, i, s + 1);
    }
    return d;
}

Expr psi_over_eta(const SemialgebraicSpec& spec, const EtaMap& eta) {
    return substitute(spec.psi.to_expression(spec.vars), outputs_to_eta(spec.vars, eta));
}

std::vector<Expr> base_over_eta(const BaseController& base, const EtaMap& eta) {
    auto b = outputs_to_eta(base.vars, eta);
    std::vector<Expr> k;
    for (const auto& p : base.k1) k.push_back(substitute(p.to_expression(base.vars), b));
    if (k.size() != eta.names.size()) throw SpecError("base controller has the wrong number of components");
    return k;
}

std::vector<std::vector<Expr>> build_chain(const BaseController& base, const SemialgebraicSpec& spec,
                                           const GainSchedule& gains, const EtaMap& eta) {
    auto k1 = base_over_eta(base, eta);
    Expr psi = psi_over_eta(spec, eta);
    const double half_lambda = gains.lambda / 2.0;
    std::vector<std::vector<Expr>> chain(eta.names.size());
    for (std::size_t i = 0; i < eta.names.size(); ++i) {
        const std::size_t r = eta.names[i].size();
        if (r < 2) continue;
        chain[i].push_back(k1[i]);
        Expr P = -differentiate(psi, eta.names[i][0]);
        for (std::size_t l = 2; l < r; ++l) {
            const Expr& prev = chain[i].back();
            double mu = gains.mu.at(i).at(l - 2);
            Expr err = eta_var(eta, i, l - 1) - prev;
            Expr k = scale(P, -mu) + total_time_derivative(prev, eta) + scale(err, half_lambda);
            P = scale(err, 1.0 / mu);
            chain[i].push_back(k);
        }
    }
    return chain;
}

std::vector<Expr> build_controller(const BaseController& base, const SemialgebraicSpec& spec,
                                   const GainSchedule& gains, const EtaMap& eta,
                                   const std::vector<std::vector<Expr>>& chain) {
    auto k1 = base_over_eta(base, eta);
    Expr psi = psi_over_eta(spec, eta);
    const double half_lambda = gains.lambda / 2.0;
    std::vector<Expr> b;
    for (std::size_t i = 0; i < eta.names.size(); ++i) {
        const std::size_t r = eta.names[i].size();
        if (r == 1) {
            b.push_back(k1[i]);
            continue;
        }
        // P_{r-1}: -dpsi/dy_i for the first layer, the scaled mismatch above it.
        Expr P = -differentiate(psi, eta.names[i][0]);
        if (r > 2) P = scale(eta_var(eta, i, r - 2) - chain[i][r - 3], 1.0 / gains.mu.at(i).at(r - 3));
        const Expr& last = chain[i][r - 2];
        double mu = gains.mu.at(i).at(r - 2);
        b.push_back(scale(P, -mu) + total_time_derivative(last, eta) +
                    scale(eta_var(eta, i, r - 1) - last, half_lambda));
    }
    return b;
}

Expr build_psi(const SemialgebraicSpec& spec, const GainSchedule& gains, const EtaMap& eta,
               const std::vector<std::vector<Expr>>& chain) {
    Expr psi = psi_over_eta(spec, eta);
    for (std::size_t i = 0; i < chain.size(); ++i)
        for (std::size_t l = 0; l < chain[i].size(); ++l) {
            Expr err = eta_var(eta, i, l + 1) - chain[i][l];
            psi = psi - scale(pow(err, 2), 1.0 / (2.0 * gains.mu.at(i).at(l)));
        }
    return psi;
}

EcgbfCertificate::EcgbfCertificate(ControlAffineSystem sys, SemialgebraicSpec spec, RelativeDegreeProfile profile,
                                   GainSchedule gains, Expr psi_eta, std::vector<std::vector<Expr>> chain,
                                   std::vector<Expr> b_eta)
    : sys_(std::move(sys)), spec_(std::move(spec)), profile_(std::move(profile)), gains_(std::move(gains)),
      psi_eta_(std::move(psi_eta)), chain_(std::move(chain)), b_eta_(std::move(b_eta)) {
    gains_.validate(profile_);
    eta_ = build_eta_map(sys_, profile_);
    DecouplingData dec = decoupling(sys_, profile_);
    const std::size_t n = sys_.state_dim();
    const std::size_t m = sys_.input_dim();
    N_ = eta_.symbols.size();

    std::vector<Expr> xs;
    for (const auto& c : eta_.chains) xs.insert(xs.end(), c.begin(), c.end());
    for (const auto& c : eta_.chains)
        for (const auto& e : c) {
            auto g = gradient(e, sys_.vars);
            xs.insert(xs.end(), g.begin(), g.end());
        }
    xs.insert(xs.end(), sys_.f.begin(), sys_.f.end());
    for (std::size_t i = 0; i < n; ++i) xs.insert(xs.end(), sys_.g[i].begin(), sys_.g[i].end());
    for (std::size_t i = 0; i < m; ++i) xs.insert(xs.end(), dec.A[i].begin(), dec.A[i].end());
    xs.insert(xs.end(), dec.Lfr.begin(), dec.Lfr.end());
    x_tape_ = Tape(xs, sys_.vars);
    coord_tape_ = Tape(std::vector<Expr>(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(N_)), sys_.vars);
    psi_tape_ = Tape({psi_eta_}, eta_.symbols);

    std::vector<Expr> es{psi_eta_};
    auto g = gradient(psi_eta_, eta_.symbols);
    es.insert(es.end(), g.begin(), g.end());
    es.insert(es.end(), b_eta_.begin(), b_eta_.end());
    eta_tape_ = Tape(es, eta_.symbols);
}

void EcgbfCertificate::eval_x(std::span<const double> x, std::vector<double>& out) const {
    if (x.size() != sys_.state_dim()) throw std::invalid_argument("state has the wrong dimension");
    out.resize(x_tape_.num_outputs());
    x_tape_.evaluate(x, out, scratch_buffer());
}

void EcgbfCertificate::eval_eta(std::span<const double> eta, std::vector<double>& out) const {
    out.resize(eta_tape_.num_outputs());
    eta_tape_.evaluate(eta, out, scratch_buffer());
}

Expr EcgbfCertificate::psi_x() const { return substitute(psi_eta_, eta_.pullback()); }

std::vector<double> EcgbfCertificate::eta_at(std::span<const double> x) const {
    if (x.size() != sys_.state_dim()) throw std::invalid_argument("state has the wrong dimension");
    std::vector<double> out(N_);
    coord_tape_.evaluate(x, out, scratch_buffer());
    return out;
}

std::vector<double> EcgbfCertificate::outputs(std::span<const double> x) const {
    auto e = eta_at(x);
    std::vector<double> y;
    std::size_t k = 0;
    for (const auto& names : eta_.names) {
        y.push_back(e[k]);
        k += names.size();
    }
    return y;
}

double EcgbfCertificate::psi(std::span<const double> x) const {
    auto e = eta_at(x);
    double out = 0.0;
    psi_tape_.evaluate(e, std::span<double>(&out, 1), scratch_buffer());
    return out;
}

double EcgbfCertificate::psi_base(std::span<const double> x) const { return spec_.psi.evaluate(outputs(x)); }

double EcgbfCertificate::phi(std::span<const double> x) const { return spec_.phi.evaluate(outputs(x)); }

void EcgbfCertificate::controller_terms(std::span<const double> x, Eigen::VectorXd& b, Eigen::MatrixXd& A) const {
    const std::size_t n = sys_.state_dim(), m = sys_.input_dim();
    std::vector<double> xo, eo;
    eval_x(x, xo);
    eval_eta(std::span<const double>(xo.data(), N_), eo);
    std::size_t off = N_ + N_ * n + n + n * m;
    A.resize(m, m);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) A(i, j) = xo[off + i * m + j];
    off += m * m;
    b.resize(m);
    for (std::size_t i = 0; i < m; ++i) b(i) = eo[1 + N_ + i] - xo[off + i];
}

Eigen::VectorXd EcgbfCertificate::control(std::span<const double> x) const {
    Eigen::VectorXd b;
    Eigen::MatrixXd A;
    controller_terms(x, b, A);
    return solve_decoupled(A, b);
}

ClosedLoopSample EcgbfCertificate::evaluate(std::span<const double> x) const {
    const std::size_t n = sys_.state_dim(), m = sys_.input_dim();
    std::vector<double> xo, eo;
    eval_x(x, xo);
    eval_eta(std::span<const double>(xo.data(), N_), eo);

    ClosedLoopSample s;
    s.psi = eo[0];
    s.y.resize(eta_.names.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < eta_.names.size(); ++i) {
        s.y(i) = xo[k];
        k += eta_.names[i].size();
    }
    std::vector<double> y(s.y.data(), s.y.data() + s.y.size());
    s.psi_base = spec_.psi.evaluate(y);
    s.phi = spec_.phi.evaluate(y);

    const std::size_t jac = N_, fo = jac + N_ * n, go = fo + n, ao = go + n * m, lo = ao + m * m;
    Eigen::MatrixXd A(m, m);
    Eigen::VectorXd b(m);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < m; ++j) A(i, j) = xo[ao + i * m + j];
        b(i) = eo[1 + N_ + i] - xo[lo + i];
    }
    s.u = solve_decoupled(A, b);
    s.xdot.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double v = xo[fo + i];
        for (std::size_t j = 0; j < m; ++j) v += xo[go + i * m + j] * s.u(j);
        s.xdot(i) = v;
    }
    double pd = 0.0;
    for (std::size_t q = 0; q < N_; ++q) {
        double row = 0.0;
        for (std::size_t i = 0; i < n; ++i) row += xo[jac + q * n + i] * s.xdot(i);
        pd += eo[1 + q] * row;
    }
    s.psi_dot = pd;
    return s;
}

EcgbfCertificate build_certificate(const ControlAffineSystem& sys, const SemialgebraicSpec& spec,
                                   const BaseController& base, const GainSchedule& gains,
                                   const ZeroTestConfig& zero_test) {
    if (!base.certified) throw SynthesisError("base controller is not certified");
    sys.validate();
    RelativeDegreeProfile profile = require_profile(sys, zero_test);
    gains.validate(profile);
    EtaMap eta = build_eta_map(sys, profile);
    auto chain = build_chain(base, spec, gains, eta);
    auto b = build_controller(base, spec, gains, eta, chain);
    Expr psi = build_psi(spec, gains, eta, chain);
    return EcgbfCertificate(sys, spec, profile, gains, psi, chain, b);
}

SafeSamples sample_safe_subset(const EcgbfCertificate& cert, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("sample count must be at least 1");
    const auto& box = cert.system().state_box;
    const std::size_t n = cert.system().state_dim();
    const std::size_t max_attempts = count * 10000;
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> dist;
    for (const auto& iv : box) dist.emplace_back(iv.lo, iv.hi);
    SafeSamples out;
    std::vector<double> x(n);
    while (out.states.size() < count && out.attempts < max_attempts) {
        for (std::size_t i = 0; i < n; ++i) x[i] = dist[i](rng);
        ++out.attempts;
        if (cert.psi(x) > 0.0) out.states.push_back(x);
    }
    out.acceptance = static_cast<double>(out.states.size()) / static_cast<double>(out.attempts);
    if (out.states.size() < count)
        throw EmptySetError("safe subset appears empty: acceptance rate " + std::to_string(out.acceptance) +
                            " after " + std::to_string(out.attempts) + " samples (try a larger mu)");
    log_info("safe-subset acceptance " + std::to_string(out.acceptance));
    return out;
}

LevelsetGrid levelset_grid(const EcgbfCertificate& cert, std::size_t var_a, std::size_t var_b,
                           std::span<const double> fixed, std::size_t resolution) {
    const std::size_t n = cert.system().state_dim();
    if (var_a == var_b || var_a >= n || var_b >= n) throw std::invalid_argument("slice variables must be distinct");
    if (fixed.size() != n) throw std::invalid_argument("fixed state has the wrong dimension");
    if (resolution < 2) throw std::invalid_argument("resolution must be at least 2");
    LevelsetGrid g;
    g.var_a = var_a;
    g.var_b = var_b;
    g.resolution = resolution;
    const auto& box = cert.system().state_box;
    auto axis = [&](const Interval& iv) {
        std::vector<double> v(resolution);
        for (std::size_t k = 0; k < resolution; ++k)
            v[k] = iv.lo + (iv.hi - iv.lo) * static_cast<double>(k) / static_cast<double>(resolution - 1);
        return v;
    };
    g.a = axis(box[var_a]);
    g.b = axis(box[var_b]);
    std::vector<double> x(fixed.begin(), fixed.end());
    g.values.resize(resolution * resolution);
    for (std::size_t j = 0; j < resolution; ++j)
        for (std::size_t i = 0; i < resolution; ++i) {
            x[var_a] = g.a[i];
            x[var_b] = g.b[j];
            g.values[j * resolution + i] = cert.psi(x);
        }
    return g;
}

nlohmann::json certificate_to_json(const EcgbfCertificate& cert) {
    nlohmann::json chain = nlohmann::json::array();
    for (const auto& c : cert.chain()) {
        nlohmann::json layer = nlohmann::json::array();
        for (const auto& e : c) layer.push_back(to_string(e));
        chain.push_back(layer);
    }
    nlohmann::json b = nlohmann::json::array();
    for (const auto& e : cert.b_eta()) b.push_back(to_string(e));
    return {{"relative_degree", cert.profile().r},
            {"eta", cert.eta().symbols.names()},
            {"lambda", cert.gains().lambda},
            {"mu", cert.gains().mu},
            {"psi", to_string(cert.psi_eta())},
            {"chain", chain},
            {"b", b}};
}

EcgbfCertificate certificate_from_json(const nlohmann::json& j, const ControlAffineSystem& sys,
                                       const SemialgebraicSpec& spec, const ZeroTestConfig& zero_test) {
    RelativeDegreeProfile profile = require_profile(sys, zero_test);
    try {
        if (j.at("relative_degree").get<std::vector<int>>() != profile.r)
            throw SpecError("certificate relative degree does not match the system");
        EtaMap eta = build_eta_map(sys, profile);
        if (j.at("eta").get<std::vector<std::string>>() != eta.symbols.names())
            throw SpecError("certificate coordinates do not match the system");
        GainSchedule gains;
        gains.lambda = j.at("lambda").get<double>();
        gains.mu = j.at("mu").get<std::vector<std::vector<double>>>();
        auto parse = [&](const nlohmann::json& s) { return parse_expression(s.get<std::string>(), &eta.symbols); };
        Expr psi = parse(j.at("psi"));
        std::vector<std::vector<Expr>> chain;
        for (const auto& layer : j.at("chain")) {
            chain.emplace_back();
            for (const auto& e : layer) chain.back().push_back(parse(e));
        }
        std::vector<Expr> b;
        for (const auto& e : j.at("b")) b.push_back(parse(e));
        if (chain.size() != profile.r.size() || b.size() != profile.r.size())
            throw SpecError("certificate has the wrong number of outputs");
        return EcgbfCertificate(sys, spec, profile, gains, psi, chain, b);
    } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("malformed certificate: ") + e.what());
    }
}

}  // namespace reachstep
