// Acceptance suite: one line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "reachstep/pipeline.hpp"
#include "reachstep/sdp.hpp"

using namespace reachstep;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = REACHSTEP_SOURCE_DIR;
const std::vector<std::string> kFixtures{"example1", "dubins", "arm"};

fs::path fixture(const std::string& name) { return kRoot / "fixtures" / (name + ".json"); }

struct Verdict {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) pass = false;
        if (detail.tellp() > 0) detail << "; ";
        detail << what << (ok ? "" : " [x]");
    }
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(double v, const char* spec = "%.3g") {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

int quiet(const std::function<int(std::ostream&)>& body) {
    std::ostringstream out, err;
    int code = run_command([&] { return body(out); }, err);
    if (code != kExitOk && code != kExitVerification && code != kExitSynthesis) std::cerr << err.str();
    return code;
}

struct Workspace {
    fs::path dir;
    std::map<std::string, double> synth_seconds;
    std::map<std::string, int> synth_code;
    std::map<std::string, int> backstep_code;

    fs::path base(const std::string& n) const { return dir / (n + ".base.json"); }
    fs::path cert(const std::string& n) const { return dir / (n + ".cert.json"); }
};

Workspace prepare() {
    Workspace w;
    w.dir = fs::temp_directory_path() / "reachstep_acceptance";
    fs::remove_all(w.dir);
    fs::create_directories(w.dir);
    for (const auto& n : std::vector<std::string>{"example1", "dubins", "arm", "double_integrator"}) {
        Stopwatch sw;
        w.synth_code[n] = quiet([&](std::ostream& os) { return cmd_synth({fixture(n), w.base(n), std::nullopt}, os); });
        w.synth_seconds[n] = sw.seconds();
        BackstepOptions o;
        o.spec = fixture(n);
        o.base = w.base(n);
        o.out = w.cert(n);
        w.backstep_code[n] = w.synth_code[n] == kExitOk ? quiet([&](std::ostream& os) { return cmd_backstep(o, os); }) : -1;
    }
    return w;
}

void criterion_relative_degree(Verdict& r, const Workspace&) {
    for (const auto& n : kFixtures) {
        Stopwatch sw;
        std::ostringstream out, err;
        int code = run_command([&] { return cmd_analyze({fixture(n), true}, out); }, err);
        double t = sw.seconds();
        json j = code == kExitOk ? json::parse(out.str()) : json::object();
        bool ok = code == kExitOk && j["relative_degree"] == json::array({2, 2}) && t < 1.0;
        r.check(ok, n + " " + (j.contains("relative_degree") ? j["relative_degree"].dump() : "undefined") + " in " +
                        fmt(t) + " s");
    }
}

void criterion_synthesis(Verdict& r, const Workspace& w) {
    json base = read_json_file(w.base("example1"));
    double delta = base["controller"]["delta"];
    bool ok = w.synth_code.at("example1") == kExitOk && base["controller"]["certified"].get<bool>() && delta <= 1e-6 &&
              w.synth_seconds.at("example1") < 60.0;
    r.check(ok, "example1 certified, delta " + fmt(delta) + ", lambda " +
                    fmt(base["controller"]["lambda"].get<double>()) + " in " + fmt(w.synth_seconds.at("example1")) +
                    " s");
}

void criterion_certificate(Verdict& r, const Workspace& w) {
    for (const auto& n : kFixtures) {
        if (w.backstep_code.at(n) != kExitOk) {
            r.check(false, n + " has no certificate");
            continue;
        }
        VerifyOptions o;
        o.spec = fixture(n);
        o.cert = w.cert(n);
        o.samples = 10000;
        o.out = w.dir / (n + ".verify.json");
        Stopwatch sw;
        int code = quiet([&](std::ostream& os) { return cmd_verify(o, os); });
        double t = sw.seconds();
        json rep = read_json_file(*o.out);
        double margin = rep["pointwise"]["min_margin"];
        bool ok = code == kExitOk && rep["pointwise"]["samples"] == 10000 && margin >= -1e-6 && t < 30.0;
        r.check(ok, n + " min(Psi'-lambda Psi) " + fmt(margin) + " in " + fmt(t) + " s");
    }
}

void criterion_batch(Verdict& r, const Workspace& w) {
    for (const auto& n : kFixtures) {
        SimulateOptions o;
        o.spec = fixture(n);
        o.cert = w.cert(n);
        o.n = 100;
        o.out = w.dir / (n + ".sim");
        Stopwatch sw;
        int code = quiet([&](std::ostream& os) { return cmd_simulate(o, os); });
        double t = sw.seconds();
        json rep = read_json_file(o.out / "report.json");
        int reached = rep["counts"]["Reached"], violated = rep["counts"]["SafetyViolated"];
        bool monotone = rep["all_monotone"];
        bool ok = code == kExitOk && rep["count"] == 100 && reached == 100 && violated == 0 && monotone && t < 120.0;
        r.check(ok, n + " reached " + std::to_string(reached) + "/100, violated " + std::to_string(violated) +
                        (monotone ? ", monotone" : ", NOT monotone") + " in " + fmt(t) + " s");
    }
}

void criterion_nesting(Verdict& r, const Workspace& w) {
    for (const auto& n : std::vector<std::string>{"dubins", "arm"}) {
        BackstepOptions o;
        o.spec = fixture(n);
        o.base = w.base(n);
        o.out = w.dir / (n + ".sweep");
        o.mu_sweep = {0.1, 1, 10};
        int code = quiet([&](std::ostream& os) { return cmd_backstep(o, os); });
        json rep = read_json_file(o.out / "nesting.json");
        const auto& lv = load_spec(fixture(n)).levelset;
        std::string slice = lv ? lv->a + "," + lv->b : "?";
        std::ostringstream cells;
        for (const auto& s : rep["sweep"]) cells << (cells.tellp() > 0 ? "<=" : "") << s["positive_cells"].get<int>();
        bool ok = code == kExitOk && rep["resolution"] == 256 && rep["counterexamples"] == 0;
        r.check(ok, n + " slice (" + slice + ") cells " + cells.str() + ", counterexamples " +
                        std::to_string(rep["counterexamples"].get<int>()));
    }
}

// u for the double integrator p'' = u with output p, written out by hand:
// u = mu psi'(p) + k1'(p) q + (lambda/2)(q - k1(p)).
void criterion_oracle(Verdict& r, const Workspace& w) {
    auto spec = load_spec(fixture("double_integrator"));
    auto profile = vector_relative_degree(spec.system, {});
    auto check_base = [&](const BaseController& base, double mu, const std::string& label) {
        auto cert = build_certificate(spec.system, spec.sets, base, GainSchedule::uniform(*profile, mu, base.lambda));
        auto eval1 = [](const Polynomial& p, double y, bool derivative) {
            double acc = 0.0;
            for (const auto& [e, c] : p.terms()) {
                int k = e[0];
                if (derivative) acc += k ? c * k * std::pow(y, k - 1) : 0.0;
                else acc += c * std::pow(y, k);
            }
            return acc;
        };
        std::mt19937_64 rng(2024);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        double worst = 0.0, largest = 0.0;
        for (int i = 0; i < 100; ++i) {
            double p = U(rng), q = U(rng);
            double dpsi = eval1(spec.sets.psi, p, true);
            double k = eval1(base.k1[0], p, false), dk = eval1(base.k1[0], p, true);
            double u_hand = mu * dpsi + dk * q + 0.5 * base.lambda * (q - k);
            std::vector<double> x{p, q};
            worst = std::max(worst, std::abs(cert.control(x)(0) - u_hand));
            largest = std::max(largest, std::abs(u_hand));
        }
        r.check(worst <= 1e-10, label + " max |du| " + fmt(worst) + " (max |u| " + fmt(largest) + ")");
    };
    check_base(controller_from_json(read_json_file(w.base("double_integrator"))["controller"]), 1.0,
               "synthesized k1");
    BaseController hand;
    hand.vars = spec.sets.vars;
    hand.k1 = {*to_polynomial(parse_expression("-y1 - 0.5*y1^3", &hand.vars), hand.vars)};
    hand.lambda = 2.0;
    hand.certified = true;
    check_base(hand, 3.0, "k1 = -y - y^3/2, mu 3");
}

double derivative_5pt(const Expr& e, const VarTable& vars, std::vector<double> x, std::size_t k) {
    const double h = 1e-3 * std::max(1.0, std::abs(x[k]));
    const double x0 = x[k];
    auto at = [&](double t) {
        x[k] = x0 + t * h;
        return evaluate(e, vars, x);
    };
    return (at(-2) - 8 * at(-1) + 8 * at(1) - at(2)) / (12 * h);
}

void hygiene_derivatives(Verdict& r) {
    std::mt19937_64 rng(7);
    std::size_t exprs = 0, points = 0;
    double worst = 0.0;
    for (const auto& n : kFixtures) {
        auto spec = load_spec(fixture(n));
        auto run = [&](const Expr& e, const VarTable& vars, const std::vector<Interval>& box) {
            ++exprs;
            for (const auto& name : free_variables(e)) {
                if (!vars.contains(name)) continue;
                std::size_t idx = vars.index(name);
                Expr d = differentiate(e, name);
                int taken = 0;
                for (int attempt = 0; attempt < 5000 && taken < 100; ++attempt) {
                    std::vector<double> x;
                    for (const auto& iv : box) x.push_back(std::uniform_real_distribution<double>(iv.lo, iv.hi)(rng));
                    double val = evaluate(e, vars, x), exact = evaluate(d, vars, x);
                    if (std::abs(val) < 1e-3 || std::abs(val) > 1e3 || std::abs(exact) < 1e-3 || std::abs(exact) > 1e3)
                        continue;
                    worst = std::max(worst, std::abs(derivative_5pt(e, vars, x, idx) - exact) / std::abs(exact));
                    ++taken;
                    ++points;
                }
            }
        };
        const auto& sys = spec.system;
        for (const auto& e : sys.f) run(e, sys.vars, sys.state_box);
        for (const auto& row : sys.g)
            for (const auto& e : row) run(e, sys.vars, sys.state_box);
        for (const auto& e : sys.h) run(e, sys.vars, sys.state_box);
        run(spec.sets.psi.to_expression(spec.sets.vars), spec.sets.vars, spec.sets.output_box);
        run(spec.sets.phi.to_expression(spec.sets.vars), spec.sets.vars, spec.sets.output_box);
    }
    r.check(worst <= 1e-6, "d/dx vs finite differences max rel err " + fmt(worst) + " over " + std::to_string(points) +
                               " points, " + std::to_string(exprs) + " expressions");
}

void hygiene_gram(Verdict& r, const Workspace& w) {
    double worst = 0.0, min_eig = 0.0;
    int certified = 0;
    for (const auto& [n, code] : w.synth_code) {
        if (code != kExitOk) continue;
        json b = read_json_file(w.base(n));
        worst = std::max(worst, b["program"]["residual"].get<double>());
        min_eig = std::min(min_eig, b["program"]["min_eigenvalue"].get<double>());
        ++certified;
    }
    r.check(certified == 4 && worst <= 1e-7 && min_eig >= -1e-8,
            "Gram residual max " + fmt(worst) + " over " + std::to_string(certified) + " certified solves");
}

void hygiene_external(Verdict& r, const Workspace& w) {
    if (std::system("python3 -c 'import cvxpy' > /dev/null 2>&1") != 0) {
        r.check(false, "external SDPA solver unavailable (python3 with cvxpy)");
        return;
    }
    double worst = 0.0;
    int solved = 0;
    for (const auto& n : std::vector<std::string>{"example1", "dubins", "arm", "double_integrator"}) {
        auto spec = load_spec(fixture(n));
        auto prog = build_program(single_integrator(spec.sets), spec.sets, spec.synthesis);
        fs::path in = w.dir / (n + ".dat-s"), out = w.dir / (n + ".sdpa.out");
        export_sdpa(prog.sdp, in);
        auto p = read_sdpa(in);
        std::string cmd = "python3 " + (kRoot / "tools" / "sdpa_solve.py").string() + " " + in.string() + " " +
                          out.string() + " > /dev/null 2>&1";
        if (std::system(cmd.c_str()) != 0) {
            r.check(false, n + " external solve failed");
            continue;
        }
        auto ext = import_solution(out, p);
        auto own = solve(p);
        if (ext.status != SdpStatus::Optimal || own.status != SdpStatus::Optimal) {
            r.check(false, n + " status " + to_string(own.status) + "/" + to_string(ext.status));
            continue;
        }
        worst = std::max(worst, std::abs(own.primal_objective - ext.primal_objective));
        ++solved;
    }
    r.check(solved == 4 && worst <= 1e-5, "embedded vs external objective gap " + fmt(worst) + " on " +
                                              std::to_string(solved) + " programs");
}

void hygiene_rk4(Verdict& r) {
    auto spec = load_spec(fixture("double_integrator"));
    BaseController hand;
    hand.vars = spec.sets.vars;
    hand.k1 = {*to_polynomial(parse_expression("-y1 - 0.5*y1^3", &hand.vars), hand.vars)};
    hand.lambda = 0.5;
    hand.certified = true;
    auto profile = vector_relative_degree(spec.system, {});
    auto cert = build_certificate(spec.system, spec.sets, hand, GainSchedule::uniform(*profile, 1.0, hand.lambda));
    auto terminal = [&](double dt) {
        SimConfig cfg;
        cfg.dt = dt;
        cfg.t_max = 2.0;
        cfg.stop_on_reach = cfg.stop_on_safety = false;
        std::vector<double> x0{0.6, -0.2};
        return run_trajectory(cert, x0, cfg).states.back();
    };
    auto a = terminal(0.04), b = terminal(0.02), c = terminal(0.01);
    double e1 = std::hypot(a[0] - b[0], a[1] - b[1]), e2 = std::hypot(b[0] - c[0], b[1] - c[1]);
    double order = std::log2(e1 / e2);
    r.check(order >= 3.5, "RK4 observed order " + fmt(order, "%.2f"));
}

void criterion_hygiene(Verdict& r, const Workspace& w) {
    hygiene_derivatives(r);
    hygiene_gram(r, w);
    hygiene_external(r, w);
    hygiene_rk4(r);
}

void criterion_linearization(Verdict& r, const Workspace&) {
    for (const auto& n : kFixtures) {
        auto spec = load_spec(fixture(n));
        auto profile = vector_relative_degree(spec.system, {});
        std::mt19937_64 rng(3);
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> x0;
            for (const auto& iv : spec.system.state_box)
                x0.push_back(iv.lo + (iv.hi - iv.lo) * std::uniform_real_distribution<double>(0.25, 0.75)(rng));
            std::vector<double> v{0.5, -0.3};
            worst = std::max(worst, linearization_residual(spec.system, *profile, x0, v, 1e-3, 200).max_relative_error);
        }
        r.check(worst <= 1e-3, n + " max rel err " + fmt(worst));
    }
}

}  // namespace

int main() {
    Workspace w = prepare();
    struct Criterion {
        const char* name;
        std::function<void(Verdict&, const Workspace&)> run;
    };
    std::vector<Criterion> criteria{
        {"relative degrees", criterion_relative_degree},
        {"synthesis", criterion_synthesis},
        {"certificate inequality", criterion_certificate},
        {"reach-avoid batch", criterion_batch},
        {"mu nesting", criterion_nesting},
        {"oracle equivalence", criterion_oracle},
        {"numerical hygiene", criterion_hygiene},
        {"feedback linearization", criterion_linearization},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Verdict r;
        Stopwatch sw;
        try {
            criteria[i].run(r, w);
        } catch (const std::exception& e) {
            r.check(false, std::string("error: ") + e.what());
        }
        failed += !r.pass;
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << i + 1 << ". " << criteria[i].name << ": " << r.detail.str()
                  << " (" << fmt(sw.seconds()) << " s)" << std::endl;
    }
    std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed ? 1 : 0;
}
