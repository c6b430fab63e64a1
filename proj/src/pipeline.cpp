#include "reachstep/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <ostream>

#include "reachstep/error.hpp"
#include "reachstep/log.hpp"

namespace reachstep {

namespace {

using nlohmann::json;

constexpr const char* kBaseFormat = "reachstep-base/1";
constexpr const char* kCertFormat = "reachstep-certificate/1";

RelativeDegreeProfile profile_of(const SystemSpec& spec) {
    auto p = vector_relative_degree(spec.system);
    if (!p) throw SpecError("the system has no well-defined vector relative degree");
    return *p;
}

std::string mu_label(double mu) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", mu);
    return buf;
}

std::string degree_list(const std::vector<int>& r) {
    std::string s = "{";
    for (std::size_t i = 0; i < r.size(); ++i) s += (i ? "," : "") + std::to_string(r[i]);
    return s + "}";
}

void check_format(const json& doc, const char* format, const char* body, const std::string& what) {
    if (!doc.is_object() || doc.value("format", "") != format || !doc.contains(body))
        throw SpecError(what + " is not a " + format + " file");
}

}  // namespace

int run_command(const std::function<int()>& body, std::ostream& err) {
    try {
        return body();
    } catch (const StaleError& e) {
        err << "stale input: " << e.what() << '\n';
        return kExitStale;
    } catch (const SynthesisError& e) {
        err << "synthesis failed: " << e.what() << '\n';
        return kExitSynthesis;
    } catch (const EmptySetError& e) {
        err << "synthesis failed: " << e.what() << '\n';
        return kExitSynthesis;
    } catch (const SpecError& e) {
        err << "invalid system file: " << e.what() << '\n';
        return kExitSpec;
    } catch (const ParseError& e) {
        err << "parse error: " << e.what() << '\n';
        return kExitSpec;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitSpec;
    } catch (const std::invalid_argument& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitSpec;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInternal;
    }
}

OutputFormat parse_format(const std::string& s) {
    if (s == "json") return OutputFormat::Json;
    if (s == "csv") return OutputFormat::Csv;
    if (s == "svg") return OutputFormat::Svg;
    throw std::invalid_argument("unknown format " + s + " (expected csv, svg or json)");
}

json analyze_report(const SystemSpec& spec) {
    auto p = vector_relative_degree(spec.system);
    json j = {{"system", spec.name}, {"n", spec.system.state_dim()}, {"m", spec.system.input_dim()}};
    if (!p) {
        j["defined"] = false;
        return j;
    }
    j["defined"] = true;
    j["relative_degree"] = p->r;
    j["sum"] = p->sum_r;
    j["fully_linearizable"] = p->fully_linearizable;
    return j;
}

json base_document(const SystemSpec& spec, const SosProgram& program, const BaseController& c) {
    auto r = verify_sos_residual(program, c);
    json controller = controller_to_json(c);
    return {{"format", kBaseFormat},
            {"input_hash", synthesis_input_hash(spec.document)},
            {"content_hash", json_hash(controller)},
            {"system", spec.name},
            {"controller", controller},
            {"program",
             {{"degree", program.degree},
              {"equalities", program.rows.size()},
              {"gram_sizes", {program.sos_basis.size(), program.s0_basis.size(), program.s1_basis.size()}},
              {"epsilon", program.config.epsilon},
              {"delta_tol", program.config.delta_tol},
              {"residual", r.max_coefficient_error},
              {"min_eigenvalue", std::min({r.min_eigenvalue_sos, r.min_eigenvalue_s0, r.min_eigenvalue_s1})}}}};
}

json certificate_document(const SystemSpec& spec, const json& base_doc, const EcgbfCertificate& cert) {
    json body = certificate_to_json(cert);
    return {{"format", kCertFormat},
            {"input_hash", synthesis_input_hash(spec.document)},
            {"base_hash", json_hash(base_doc)},
            {"content_hash", json_hash(body)},
            {"system", spec.name},
            {"certificate", body}};
}

BaseController load_base(const SystemSpec& spec, const json& base_doc) {
    check_format(base_doc, kBaseFormat, "controller", "base controller");
    if (base_doc.value("input_hash", "") != synthesis_input_hash(spec.document))
        throw StaleError("base controller was synthesized from a different system file; rerun synth");
    if (base_doc.value("content_hash", "") != json_hash(base_doc.at("controller")))
        throw StaleError("base controller does not match its recorded hash; rerun synth");
    return controller_from_json(base_doc.at("controller"));
}

EcgbfCertificate load_certificate(const SystemSpec& spec, const json& cert_doc) {
    check_format(cert_doc, kCertFormat, "certificate", "certificate");
    if (cert_doc.value("input_hash", "") != synthesis_input_hash(spec.document))
        throw StaleError("certificate was built from a different system file; rerun synth and backstep");
    if (cert_doc.value("content_hash", "") != json_hash(cert_doc.at("certificate")))
        throw StaleError("certificate does not match its recorded hash; rerun backstep");
    return certificate_from_json(cert_doc.at("certificate"), spec.system, spec.sets);
}

std::vector<std::vector<double>> shape_mu(const RelativeDegreeProfile& profile, const std::vector<double>& mu) {
    std::vector<std::vector<double>> out;
    std::size_t layers = 0;
    for (int r : profile.r) layers += static_cast<std::size_t>(std::max(r - 1, 0));
    if (mu.size() != 1 && mu.size() != layers)
        throw std::invalid_argument("--mu needs one value or " + std::to_string(layers) + " values");
    std::size_t k = 0;
    for (int r : profile.r) {
        out.emplace_back();
        for (int l = 1; l < r; ++l) out.back().push_back(mu.size() == 1 ? mu[0] : mu[k++]);
    }
    return out;
}

NestingReport mu_nesting(const SystemSpec& spec, const BaseController& base, const std::vector<double>& mu,
                         std::size_t resolution) {
    auto profile = profile_of(spec);
    NestingReport rep;
    rep.mu = mu;
    std::sort(rep.mu.begin(), rep.mu.end());
    std::size_t a = 0, b = 1;
    if (spec.levelset) {
        a = spec.system.vars.index(spec.levelset->a);
        b = spec.system.vars.index(spec.levelset->b);
    }
    auto fixed = spec.slice_point();
    for (double m : rep.mu) {
        GainSchedule g = spec.gains(profile, base.lambda);
        g.mu = shape_mu(profile, {m});
        auto cert = build_certificate(spec.system, spec.sets, base, g);
        rep.grids.push_back(levelset_grid(cert, a, b, fixed, resolution));
        const auto& v = rep.grids.back().values;
        rep.positive_cells.push_back(static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](double p) { return p > 0; })));
        if (rep.grids.size() == 1) {
            std::vector<double> x = fixed;
            for (std::size_t j = 0; j < resolution; ++j)
                for (std::size_t i = 0; i < resolution; ++i) {
                    x[a] = rep.grids[0].a[i];
                    x[b] = rep.grids[0].b[j];
                    if (cert.psi_base(x) > 0) ++rep.safe_cells;
                }
        }
    }
    for (std::size_t k = 0; k + 1 < rep.grids.size(); ++k)
        for (std::size_t c = 0; c < rep.grids[k].values.size(); ++c)
            if (rep.grids[k].values[c] > 0 && !(rep.grids[k + 1].values[c] > 0)) ++rep.counterexamples;
    return rep;
}

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out) {
    auto spec = load_spec(o.spec);
    auto j = analyze_report(spec);
    if (o.json) {
        out << j.dump(2) << '\n';
    } else if (!j["defined"].get<bool>()) {
        out << "vector relative degree undefined\n";
    } else {
        int sum = j["sum"], n = j["n"];
        out << "vector relative degree " << degree_list(j["relative_degree"].get<std::vector<int>>()) << ", "
            << (sum == n ? "fully linearizable" : "internal dynamics") << " (sum=" << sum
            << (sum == n ? "=n)\n" : "<n=" + std::to_string(n) + ")\n");
    }
    return j["defined"].get<bool>() ? kExitOk : kExitSpec;
}

int cmd_synth(const SynthOptions& o, std::ostream& out) {
    auto spec = load_spec(o.spec);
    auto program = build_program(single_integrator(spec.sets), spec.sets, spec.synthesis);
    if (o.export_sdpa) {
        export_sdpa(program.sdp, *o.export_sdpa);
        out << "wrote " << o.export_sdpa->string() << '\n';
    }
    auto c = solve_program(program);
    auto doc = base_document(spec, program, c);
    write_json_file(doc, o.out);
    out << std::setprecision(6) << "status " << to_string(c.status) << ", delta " << c.delta << ", lambda "
        << c.lambda << ", residual " << doc["program"]["residual"].get<double>() << '\n';
    out << (c.certified ? "certified" : "not certified") << "; wrote " << o.out.string() << '\n';
    if (!c.certified) {
        if (!c.message.empty()) out << c.message << '\n';
        return kExitSynthesis;
    }
    return kExitOk;
}

int cmd_backstep(const BackstepOptions& o, std::ostream& out) {
    auto spec = load_spec(o.spec);
    json base_doc = read_json_file(o.base);
    auto base = load_base(spec, base_doc);
    if (!base.certified) throw SynthesisError("base controller is not certified");
    auto profile = profile_of(spec);

    if (o.mu_sweep.empty()) {
        GainSchedule g = spec.gains(profile, base.lambda);
        if (!o.mu.empty()) g.mu = shape_mu(profile, o.mu);
        auto cert = build_certificate(spec.system, spec.sets, base, g);
        write_json_file(certificate_document(spec, base_doc, cert), o.out);
        out << "relative degree " << degree_list(profile.r) << ", lambda " << g.lambda << "; wrote " << o.out.string()
            << '\n';
        return kExitOk;
    }

    std::filesystem::create_directories(o.out);
    std::size_t res = spec.levelset ? spec.levelset->resolution : 256;
    auto rep = mu_nesting(spec, base, o.mu_sweep, res);
    json per_mu = json::array();
    for (std::size_t k = 0; k < rep.mu.size(); ++k) {
        GainSchedule g = spec.gains(profile, base.lambda);
        g.mu = shape_mu(profile, {rep.mu[k]});
        auto cert = build_certificate(spec.system, spec.sets, base, g);
        auto path = o.out / ("cert_mu" + mu_label(rep.mu[k]) + ".json");
        write_json_file(certificate_document(spec, base_doc, cert), path);
        if (o.format == OutputFormat::Csv) export_csv(rep.grids[k], o.out / ("levelset_mu" + mu_label(rep.mu[k]) + ".csv"));
        double ratio = rep.safe_cells ? static_cast<double>(rep.positive_cells[k]) / static_cast<double>(rep.safe_cells) : 0.0;
        per_mu.push_back({{"mu", rep.mu[k]}, {"certificate", path.string()}, {"positive_cells", rep.positive_cells[k]},
                          {"volume_ratio", ratio}});
        out << "mu " << rep.mu[k] << ": |C_Psi|/|C| on slice " << ratio << "; wrote " << path.string() << '\n';
    }
    json report = {{"resolution", res},
                   {"safe_cells", rep.safe_cells},
                   {"counterexamples", rep.counterexamples},
                   {"nested", rep.counterexamples == 0},
                   {"sweep", per_mu}};
    write_json_file(report, o.out / "nesting.json");
    out << "nesting counterexamples " << rep.counterexamples << '\n';
    return kExitOk;
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out) {
    if (o.n && *o.n == 0) throw std::invalid_argument("--n must be at least 1");
    auto spec = load_spec(o.spec);
    auto cert = load_certificate(spec, read_json_file(o.cert));
    SimConfig cfg = spec.sim;
    if (o.seed) cfg.seed = *o.seed;
    std::size_t n = o.n.value_or(spec.sim_count);
    auto rep = run_batch(cert, n, cfg);

    std::filesystem::create_directories(o.out);
    write_json_file(batch_report_json(rep), o.out / "report.json");
    if (o.format == OutputFormat::Csv) {
        for (std::size_t i = 0; i < rep.trajectories.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "traj_%03zu.csv", i);
            export_csv(rep.trajectories[i], o.out / name);
        }
    } else if (o.format == OutputFormat::Svg) {
        export_svg(spec.sets, rep.trajectories, o.out / "trajectories.svg");
    }
    out << "Reached " << rep.count(Outcome::Reached) << "/" << n << ", SafetyViolated "
        << rep.count(Outcome::SafetyViolated) << ", SingularDecoupling " << rep.count(Outcome::SingularDecoupling)
        << ", Timeout " << rep.count(Outcome::Timeout) << "; monotonicity "
        << (rep.all_monotone() ? "pass" : "fail") << "; wrote " << (o.out / "report.json").string() << '\n';
    return kExitOk;
}

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
    if (o.samples == 0) throw std::invalid_argument("invalid sample count: --samples must be at least 1");
    auto spec = load_spec(o.spec);
    auto cert = load_certificate(spec, read_json_file(o.cert));
    std::uint64_t seed = o.seed.value_or(spec.sim.seed);
    auto v = verify_pointwise(cert, o.samples, seed);
    json report = {{"pointwise", verify_report_json(v)}};
    bool monotone = true;
    if (o.trajectories > 0) {
        SimConfig cfg = spec.sim;
        cfg.seed = seed;
        auto rep = run_batch(cert, o.trajectories, cfg);
        monotone = rep.all_monotone();
        report["monotonicity"] = {{"trajectories", o.trajectories},
                                  {"pass", monotone},
                                  {"max_Psi_drop", rep.max_drop}};
    }
    bool pass = v.pass && monotone;
    report["pass"] = pass;
    if (o.out) write_json_file(report, *o.out);
    out << std::setprecision(6) << "min(Psi' - lambda Psi) = " << v.min_margin << " over " << v.samples
        << " samples" << (v.singular ? " (" + std::to_string(v.singular) + " singular skipped)" : "")
        << "; monotonicity " << (monotone ? "pass" : "fail") << "; " << (pass ? "PASS" : "FAIL") << '\n';
    return pass ? kExitOk : kExitVerification;
}

}  // namespace reachstep
