#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "reachstep/pipeline.hpp"

using namespace reachstep;

namespace {

std::vector<double> parse_list(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t used = 0;
        double x = std::stod(item, &used);
        if (used != item.size()) throw std::invalid_argument("bad number in list: " + item);
        v.push_back(x);
    }
    if (v.empty()) throw std::invalid_argument("empty list");
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reach-avoid controller synthesis via SOS programming and backstepping"};
    app.require_subcommand(1);

    AnalyzeOptions ao;
    auto* analyze = app.add_subcommand("analyze", "report the vector relative degree");
    analyze->add_option("spec", ao.spec, "system definition file")->required()->check(CLI::ExistingFile);
    analyze->add_flag("--json", ao.json, "print the report as JSON");

    SynthOptions so;
    std::string sdpa;
    auto* synth = app.add_subcommand("synth", "synthesize the base controller by SOS programming");
    synth->add_option("spec", so.spec, "system definition file")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", so.out, "base controller file");
    synth->add_option("--export-sdpa", sdpa, "also write the SDP in SDPA sparse format");

    BackstepOptions bo;
    std::string mu, sweep, bformat = "json";
    auto* backstep = app.add_subcommand("backstep", "lift the base controller to the full dynamics");
    backstep->add_option("spec", bo.spec, "system definition file")->required()->check(CLI::ExistingFile);
    backstep->add_option("base", bo.base, "base controller file")->required()->check(CLI::ExistingFile);
    backstep->add_option("--mu", mu, "mu gains: one value or one per layer, comma separated");
    backstep->add_option("--mu-sweep", sweep, "comma separated mu values; writes one certificate each");
    backstep->add_option("--out", bo.out, "certificate file, or output directory with --mu-sweep");
    backstep->add_option("--format", bformat, "json or csv (level-set grids with --mu-sweep)");

    SimulateOptions mo;
    std::size_t n = 0;
    std::uint64_t sim_seed = 0;
    std::string mformat = "json";
    auto* simulate = app.add_subcommand("simulate", "simulate closed-loop trajectories");
    simulate->add_option("spec", mo.spec, "system definition file")->required()->check(CLI::ExistingFile);
    simulate->add_option("cert", mo.cert, "certificate file")->required()->check(CLI::ExistingFile);
    auto* n_opt = simulate->add_option("--n", n, "number of trajectories");
    auto* seed_opt = simulate->add_option("--seed", sim_seed, "sampling seed");
    simulate->add_option("--out", mo.out, "output directory");
    simulate->add_option("--format", mformat, "csv, svg or json");

    VerifyOptions vo;
    std::uint64_t ver_seed = 0;
    std::string vout;
    auto* verify = app.add_subcommand("verify", "sample-check the certificate inequality and monotonicity");
    verify->add_option("spec", vo.spec, "system definition file")->required()->check(CLI::ExistingFile);
    verify->add_option("cert", vo.cert, "certificate file")->required()->check(CLI::ExistingFile);
    verify->add_option("--samples", vo.samples, "pointwise samples");
    verify->add_option("--trajectories", vo.trajectories, "trajectories for the monotonicity audit");
    auto* vseed_opt = verify->add_option("--seed", ver_seed, "sampling seed");
    verify->add_option("--out", vout, "report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitSpec;
    }

    return run_command(
        [&]() -> int {
            if (*analyze) return cmd_analyze(ao, std::cout);
            if (*synth) {
                if (!sdpa.empty()) so.export_sdpa = sdpa;
                return cmd_synth(so, std::cout);
            }
            if (*backstep) {
                if (!mu.empty()) bo.mu = parse_list(mu);
                if (!sweep.empty()) bo.mu_sweep = parse_list(sweep);
                bo.format = parse_format(bformat);
                return cmd_backstep(bo, std::cout);
            }
            if (*simulate) {
                if (n_opt->count()) mo.n = n;
                if (seed_opt->count()) mo.seed = sim_seed;
                mo.format = parse_format(mformat);
                return cmd_simulate(mo, std::cout);
            }
            if (vseed_opt->count()) vo.seed = ver_seed;
            if (!vout.empty()) vo.out = vout;
            return cmd_verify(vo, std::cout);
        },
        std::cerr);
}
