#include "reachstep/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <thread>

#include "reachstep/error.hpp"
#include "reachstep/log.hpp"

namespace reachstep {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    return os;
}

void check_written(std::ofstream& os, const std::filesystem::path& path) {
    os.flush();
    if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace

void SimConfig::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw SpecError("sim.dt must be positive");
    if (!(t_max >= dt) || !std::isfinite(t_max)) throw SpecError("sim.t_max must be at least dt");
}

const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Reached: return "Reached";
        case Outcome::SafetyViolated: return "SafetyViolated";
        case Outcome::SingularDecoupling: return "SingularDecoupling";
        case Outcome::Timeout: return "Timeout";
    }
    return "?";
}

std::vector<double> integrate_step_rk4(const VectorField& field, std::span<const double> x, double dt) {
    const std::size_t n = x.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), t(n), out(n);
    field(x, k1);
    for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + 0.5 * dt * k1[i];
    field(t, k2);
    for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + 0.5 * dt * k2[i];
    field(t, k3);
    for (std::size_t i = 0; i < n; ++i) t[i] = x[i] + dt * k3[i];
    field(t, k4);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    return out;
}

Trajectory run_trajectory(const EcgbfCertificate& cert, std::span<const double> x0, const SimConfig& cfg) {
    cfg.validate();
    const std::size_t n = cert.system().state_dim();
    const std::size_t m = cert.system().input_dim();
    if (x0.size() != n) throw std::invalid_argument("initial state has the wrong dimension");
    const auto steps = static_cast<std::size_t>(std::llround(cfg.t_max / cfg.dt));

    Trajectory tr;
    std::vector<double> x(x0.begin(), x0.end());
    if (cert.psi(x) <= 0.0) log_warn("initial state outside the certified safe subset (Psi <= 0)");

    VectorField field = [&](std::span<const double> s, std::span<double> d) {
        auto e = cert.evaluate(s);
        for (std::size_t i = 0; i < n; ++i) d[i] = e.xdot(i);
    };

    for (std::size_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * cfg.dt;
        tr.times.push_back(t);
        tr.states.push_back(x);
        bool singular = false;
        ClosedLoopSample s;
        try {
            s = cert.evaluate(x);
        } catch (const SingularDecouplingError&) {
            if (!cfg.stop_on_singular) throw;
            singular = true;
        }
        if (singular) {
            tr.outputs.push_back(cert.outputs(x));
            tr.inputs.emplace_back(m, kNaN);
            tr.psi.push_back(cert.psi(x));
            tr.psi_base.push_back(cert.psi_base(x));
            tr.outcome = Outcome::SingularDecoupling;
            tr.outcome_time = t;
            return tr;
        }
        tr.outputs.emplace_back(s.y.data(), s.y.data() + s.y.size());
        tr.inputs.emplace_back(s.u.data(), s.u.data() + s.u.size());
        tr.psi.push_back(s.psi);
        tr.psi_base.push_back(s.psi_base);
        if (cfg.stop_on_reach && s.phi < 0.0) {
            tr.outcome = Outcome::Reached;
            tr.outcome_time = t;
            return tr;
        }
        if (cfg.stop_on_safety && s.psi_base <= 0.0) {
            tr.outcome = Outcome::SafetyViolated;
            tr.outcome_time = t;
            return tr;
        }
        if (k == steps) {
            tr.outcome = Outcome::Timeout;
            tr.outcome_time = t;
            return tr;
        }
        try {
            x = integrate_step_rk4(field, x, cfg.dt);
        } catch (const SingularDecouplingError&) {
            if (!cfg.stop_on_singular) throw;
            tr.outcome = Outcome::SingularDecoupling;
            tr.outcome_time = t;
            return tr;
        }
    }
}

MonotonicityResult monotonicity_audit(const Trajectory& traj) {
    MonotonicityResult r;
    if (traj.psi.size() < 2) throw std::invalid_argument("monotonicity audit needs at least two samples");
    std::size_t end = traj.psi.size();
    if (traj.outcome == Outcome::Reached) end = traj.psi.size() - 1;  // last sample is the Reached event
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < end; ++k) {
        double drop = traj.psi[k] - traj.psi[k + 1];
        double rel = drop - 1e-6 * (1.0 + std::abs(traj.psi[k]));
        r.max_drop = std::max(r.max_drop, drop);
        if (rel > worst) {
            worst = rel;
            r.step = k;
        }
    }
    r.pass = !(worst > 0.0);
    return r;
}

bool BatchReport::all_monotone() const {
    return std::all_of(audits.begin(), audits.end(), [](const MonotonicityResult& a) { return a.pass; });
}

BatchReport run_batch(const EcgbfCertificate& cert, std::size_t count, const SimConfig& cfg) {
    cfg.validate();
    auto samples = sample_safe_subset(cert, count, cfg.seed);
    BatchReport rep;
    rep.config = cfg;
    rep.acceptance = samples.acceptance;
    rep.initial_states = samples.states;
    rep.trajectories.resize(count);

    unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = next++; i < count; i = next++)
                    rep.trajectories[i] = run_trajectory(cert, rep.initial_states[i], cfg);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    for (std::size_t i = 0; i < count; ++i) {
        const auto& tr = rep.trajectories[i];
        ++rep.counts[static_cast<std::size_t>(tr.outcome)];
        rep.min_psi_base.push_back(*std::min_element(tr.psi_base.begin(), tr.psi_base.end()));
        rep.audits.push_back(tr.size() >= 2 ? monotonicity_audit(tr) : MonotonicityResult{});
        if (rep.audits.back().max_drop > rep.max_drop) {
            rep.max_drop = rep.audits.back().max_drop;
            rep.max_drop_trajectory = i;
        }
    }
    return rep;
}

VerifyReport verify_pointwise(const EcgbfCertificate& cert, std::size_t sample_count, std::uint64_t seed,
                              double lambda_scale) {
    if (sample_count == 0) throw std::invalid_argument("invalid sample count: must be at least 1");
    const auto& box = cert.system().state_box;
    const std::size_t n = cert.system().state_dim();
    const double lambda = cert.gains().lambda * lambda_scale;
    std::mt19937_64 rng(seed);
    std::vector<std::uniform_real_distribution<double>> dist;
    for (const auto& iv : box) dist.emplace_back(iv.lo, iv.hi);

    VerifyReport r;
    r.min_margin = std::numeric_limits<double>::infinity();
    const std::size_t max_attempts = sample_count * 10000;
    std::vector<double> x(n);
    while (r.samples < sample_count && r.attempts < max_attempts) {
        for (std::size_t i = 0; i < n; ++i) x[i] = dist[i](rng);
        ++r.attempts;
        if (cert.psi(x) < 0.0 || cert.phi(x) < 0.0) continue;
        try {
            auto s = cert.evaluate(x);
            double margin = s.psi_dot - lambda * s.psi;
            if (margin < r.min_margin) {
                r.min_margin = margin;
                r.worst_state = x;
            }
            ++r.samples;
        } catch (const SingularDecouplingError&) {
            ++r.singular;
        }
    }
    if (r.samples == 0) throw EmptySetError("no sampled state satisfies Psi >= 0 and phi >= 0");
    if (r.samples < sample_count)
        log_warn("verification drew only " + std::to_string(r.samples) + " of " + std::to_string(sample_count) +
                 " samples");
    r.pass = r.min_margin >= -1e-6;
    return r;
}

LinearizationCheck linearization_residual(const ControlAffineSystem& sys, const RelativeDegreeProfile& profile,
                                          std::span<const double> x0, std::span<const double> v, double dt,
                                          std::size_t steps) {
    const std::size_t n = sys.state_dim(), m = sys.input_dim();
    if (x0.size() != n || v.size() != m) throw std::invalid_argument("linearization check: dimension mismatch");
    int rmax = 0;
    for (int r : profile.r) rmax = std::max(rmax, r);
    if (steps <= static_cast<std::size_t>(rmax)) throw std::invalid_argument("linearization check: too few steps");
    for (double vi : v)
        if (vi == 0.0) throw std::invalid_argument("linearization check: virtual input entries must be nonzero");

    DecouplingEvaluator dec(decoupling(sys, profile), sys.vars);
    std::vector<Expr> fg(sys.f);
    for (std::size_t i = 0; i < n; ++i) fg.insert(fg.end(), sys.g[i].begin(), sys.g[i].end());
    Tape field_tape(fg, sys.vars);
    Tape output_tape(sys.h, sys.vars);
    Eigen::VectorXd vv = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(m));

    VectorField field = [&](std::span<const double> x, std::span<double> xdot) {
        std::vector<double> scratch, fgv(fg.size());
        Eigen::MatrixXd A;
        Eigen::VectorXd Lfr;
        dec.evaluate(x, A, Lfr);
        Eigen::VectorXd u = solve_decoupled(A, vv - Lfr);
        field_tape.evaluate(x, fgv, scratch);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = fgv[i];
            for (std::size_t j = 0; j < m; ++j) acc += fgv[n + i * m + j] * u(static_cast<Eigen::Index>(j));
            xdot[i] = acc;
        }
    };

    std::vector<std::vector<double>> ys;
    std::vector<double> x(x0.begin(), x0.end());
    ys.push_back(output_tape.evaluate(x));
    for (std::size_t k = 0; k < steps; ++k) {
        x = integrate_step_rk4(field, x, dt);
        ys.push_back(output_tape.evaluate(x));
    }

    LinearizationCheck out;
    for (std::size_t i = 0; i < m; ++i) {
        const int r = profile.r[i];
        // Binomial stencil: sum_j (-1)^(r-j) C(r, j) y_{k+j} / dt^r.
        std::vector<double> w(static_cast<std::size_t>(r) + 1);
        for (int j = 0; j <= r; ++j) {
            double c = 1.0;
            for (int t = 0; t < j; ++t) c = c * (r - t) / (t + 1);
            w[static_cast<std::size_t>(j)] = ((r - j) % 2 ? -c : c) / std::pow(dt, r);
        }
        for (std::size_t k = 0; k + static_cast<std::size_t>(r) < ys.size(); ++k) {
            double d = 0.0;
            for (int j = 0; j <= r; ++j) d += w[static_cast<std::size_t>(j)] * ys[k + static_cast<std::size_t>(j)][i];
            out.max_relative_error = std::max(out.max_relative_error, std::abs(d - v[i]) / std::abs(v[i]));
            ++out.samples;
        }
    }
    return out;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
    const std::size_t n = traj.states.empty() ? 0 : traj.states[0].size();
    const std::size_t m = traj.outputs.empty() ? 0 : traj.outputs[0].size();
    const std::size_t mu = traj.inputs.empty() ? 0 : traj.inputs[0].size();
    os << "t";
    for (std::size_t i = 0; i < n; ++i) os << ",x" << i + 1;
    for (std::size_t i = 0; i < m; ++i) os << ",y" << i + 1;
    for (std::size_t i = 0; i < mu; ++i) os << ",u" << i + 1;
    os << ",psi\n";
    for (std::size_t k = 0; k < traj.size(); ++k) {
        os << fmt(traj.times[k]);
        for (double v : traj.states[k]) os << ',' << fmt(v);
        for (double v : traj.outputs[k]) os << ',' << fmt(v);
        for (double v : traj.inputs[k]) os << ',' << fmt(v);
        os << ',' << fmt(traj.psi[k]) << '\n';
    }
}

void export_csv(const Trajectory& traj, const std::filesystem::path& path) {
    auto os = open_out(path);
    write_trajectory_csv(os, traj);
    check_written(os, path);
}

void write_grid_csv(std::ostream& os, const LevelsetGrid& grid) {
    os << 'x' << grid.var_a + 1 << ",x" << grid.var_b + 1 << ",psi\n";
    for (std::size_t j = 0; j < grid.resolution; ++j)
        for (std::size_t i = 0; i < grid.resolution; ++i)
            os << fmt(grid.a[i]) << ',' << fmt(grid.b[j]) << ',' << fmt(grid.at(i, j)) << '\n';
}

void export_csv(const LevelsetGrid& grid, const std::filesystem::path& path) {
    auto os = open_out(path);
    write_grid_csv(os, grid);
    check_written(os, path);
}

LevelsetGrid read_grid_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError("empty grid file", 1, 1);
    LevelsetGrid g;
    unsigned va = 0, vb = 0;
    if (std::sscanf(line.c_str(), "x%u,x%u,psi", &va, &vb) != 2 || va == 0 || vb == 0)
        throw ParseError("bad grid header", 1, 1);
    g.var_a = va - 1;
    g.var_b = vb - 1;
    std::vector<std::array<double, 3>> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::array<double, 3> r{};
        std::istringstream ls(line);
        char c1 = 0, c2 = 0;
        if (!(ls >> r[0] >> c1 >> r[1] >> c2 >> r[2]) || c1 != ',' || c2 != ',')
            throw ParseError("malformed grid row", lineno, 1);
        rows.push_back(r);
    }
    auto res = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(rows.size()))));
    if (res * res != rows.size() || res < 2) throw ParseError("grid is not square", lineno, 1);
    g.resolution = res;
    for (std::size_t i = 0; i < res; ++i) g.a.push_back(rows[i][0]);
    for (std::size_t j = 0; j < res; ++j) g.b.push_back(rows[j * res][1]);
    for (const auto& r : rows) g.values.push_back(r[2]);
    return g;
}

std::vector<std::array<double, 4>> marching_squares(const std::vector<double>& xs, const std::vector<double>& ys,
                                                    const std::vector<double>& values) {
    const std::size_t nx = xs.size(), ny = ys.size();
    if (values.size() != nx * ny) throw std::invalid_argument("grid size mismatch");
    std::vector<std::array<double, 4>> segs;
    auto v = [&](std::size_t i, std::size_t j) { return values[j * nx + i]; };
    for (std::size_t j = 0; j + 1 < ny; ++j)
        for (std::size_t i = 0; i + 1 < nx; ++i) {
            // Corners counterclockwise from (i, j).
            const double cx[4] = {xs[i], xs[i + 1], xs[i + 1], xs[i]};
            const double cy[4] = {ys[j], ys[j], ys[j + 1], ys[j + 1]};
            const double cv[4] = {v(i, j), v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)};
            std::vector<std::array<double, 2>> pts;
            for (int e = 0; e < 4; ++e) {
                int a = e, b = (e + 1) % 4;
                if ((cv[a] > 0) == (cv[b] > 0)) continue;
                double t = cv[a] / (cv[a] - cv[b]);
                pts.push_back({cx[a] + t * (cx[b] - cx[a]), cy[a] + t * (cy[b] - cy[a])});
            }
            if (pts.size() == 2) {
                segs.push_back({pts[0][0], pts[0][1], pts[1][0], pts[1][1]});
            } else if (pts.size() == 4) {
                // Saddle: the center sign decides which corners connect.
                double center = (cv[0] + cv[1] + cv[2] + cv[3]) / 4.0;
                bool join = (center > 0) == (cv[0] > 0);
                if (join) {
                    segs.push_back({pts[0][0], pts[0][1], pts[1][0], pts[1][1]});
                    segs.push_back({pts[2][0], pts[2][1], pts[3][0], pts[3][1]});
                } else {
                    segs.push_back({pts[0][0], pts[0][1], pts[3][0], pts[3][1]});
                    segs.push_back({pts[1][0], pts[1][1], pts[2][0], pts[2][1]});
                }
            }
        }
    return segs;
}

std::string render_svg(const SemialgebraicSpec& spec, const std::vector<Trajectory>& trajectories,
                       std::size_t resolution) {
    if (spec.vars.size() != 2) throw std::invalid_argument("SVG plots need exactly two outputs");
    if (resolution < 2) throw std::invalid_argument("resolution must be at least 2");
    std::vector<Interval> box = spec.output_box.empty() ? std::vector<Interval>(2) : spec.output_box;
    const double W = 600.0, H = 600.0;
    auto px = [&](double a) { return (a - box[0].lo) / (box[0].hi - box[0].lo) * W; };
    auto py = [&](double b) { return H - (b - box[1].lo) / (box[1].hi - box[1].lo) * H; };

    std::vector<double> xs(resolution), ys(resolution);
    for (std::size_t k = 0; k < resolution; ++k) {
        double t = static_cast<double>(k) / static_cast<double>(resolution - 1);
        xs[k] = box[0].lo + t * (box[0].hi - box[0].lo);
        ys[k] = box[1].lo + t * (box[1].hi - box[1].lo);
    }
    auto contour = [&](const Polynomial& p, const char* id, const char* color) {
        std::vector<double> vals(resolution * resolution);
        for (std::size_t j = 0; j < resolution; ++j)
            for (std::size_t i = 0; i < resolution; ++i) vals[j * resolution + i] = p.evaluate(std::vector<double>{xs[i], ys[j]});
        std::ostringstream d;
        d.precision(6);
        for (const auto& s : marching_squares(xs, ys, vals))
            d << 'M' << px(s[0]) << ' ' << py(s[1]) << 'L' << px(s[2]) << ' ' << py(s[3]);
        std::ostringstream o;
        o << "<path id=\"" << id << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" d=\""
          << d.str() << "\"/>\n";
        return o.str();
    };

    std::ostringstream os;
    os.precision(6);
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << ' ' << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << contour(spec.psi, "safe-set", "black");
    os << contour(spec.phi, "target-set", "green");
    for (const auto& tr : trajectories) {
        if (tr.outputs.empty()) continue;
        const std::size_t stride = std::max<std::size_t>(1, tr.outputs.size() / 2000);
        os << "<polyline class=\"trajectory\" fill=\"none\" stroke=\"steelblue\" stroke-dasharray=\"4 2\" points=\"";
        for (std::size_t k = 0; k < tr.outputs.size(); k += stride)
            os << px(tr.outputs[k][0]) << ',' << py(tr.outputs[k][1]) << ' ';
        os << px(tr.outputs.back()[0]) << ',' << py(tr.outputs.back()[1]) << "\"/>\n";
        os << "<circle fill=\"orange\" r=\"3\" cx=\"" << px(tr.outputs.front()[0]) << "\" cy=\""
           << py(tr.outputs.front()[1]) << "\"/>\n";
        double ex = px(tr.outputs.back()[0]), ey = py(tr.outputs.back()[1]);
        os << "<path stroke=\"green\" stroke-width=\"1.5\" d=\"M" << ex - 4 << ' ' << ey - 4 << 'L' << ex + 4 << ' '
           << ey + 4 << 'M' << ex - 4 << ' ' << ey + 4 << 'L' << ex + 4 << ' ' << ey - 4 << "\"/>\n";
    }
    os << "</svg>\n";
    return os.str();
}

void export_svg(const SemialgebraicSpec& spec, const std::vector<Trajectory>& trajectories,
                const std::filesystem::path& path) {
    auto os = open_out(path);
    os << render_svg(spec, trajectories);
    check_written(os, path);
}

nlohmann::json batch_report_json(const BatchReport& report) {
    nlohmann::json counts;
    for (auto o : {Outcome::Reached, Outcome::SafetyViolated, Outcome::SingularDecoupling, Outcome::Timeout})
        counts[to_string(o)] = report.count(o);
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t i = 0; i < report.trajectories.size(); ++i) {
        const auto& tr = report.trajectories[i];
        runs.push_back({{"index", i},
                        {"x0", report.initial_states[i]},
                        {"outcome", to_string(tr.outcome)},
                        {"outcome_time", tr.outcome_time},
                        {"min_psi", report.min_psi_base[i]},
                        {"max_Psi_drop", report.audits[i].max_drop},
                        {"monotone", report.audits[i].pass}});
    }
    return {{"count", report.trajectories.size()},
            {"counts", counts},
            {"acceptance", report.acceptance},
            {"all_monotone", report.all_monotone()},
            {"max_Psi_drop", {{"value", report.max_drop}, {"trajectory", report.max_drop_trajectory}}},
            {"dt", report.config.dt},
            {"t_max", report.config.t_max},
            {"seed", report.config.seed},
            {"trajectories", runs}};
}

nlohmann::json verify_report_json(const VerifyReport& report) {
    return {{"samples", report.samples},
            {"attempts", report.attempts},
            {"singular", report.singular},
            {"min_margin", report.min_margin},
            {"worst_state", report.worst_state},
            {"pass", report.pass}};
}

}  // namespace reachstep
