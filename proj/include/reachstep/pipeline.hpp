#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "reachstep/spec_file.hpp"

namespace reachstep {

enum ExitCode : int {
    kExitOk = 0,
    kExitInternal = 1,
    kExitSpec = 2,  // also usage errors
    kExitSynthesis = 3,
    kExitStale = 4,
    kExitVerification = 5,
};

/// Runs `body`, mapping toolkit exceptions to exit codes and printing the
/// message to `err`.
int run_command(const std::function<int()>& body, std::ostream& err);

enum class OutputFormat { Json, Csv, Svg };
OutputFormat parse_format(const std::string& s);

struct AnalyzeOptions {
    std::filesystem::path spec;
    bool json = false;
};

struct SynthOptions {
    std::filesystem::path spec;
    std::filesystem::path out = "base.json";
    std::optional<std::filesystem::path> export_sdpa;
};

struct BackstepOptions {
    std::filesystem::path spec;
    std::filesystem::path base;
    std::filesystem::path out = "cert.json";  // directory when sweeping
    std::vector<double> mu;                   // one value (uniform) or one per layer, output-major
    std::vector<double> mu_sweep;
    OutputFormat format = OutputFormat::Json;
};

struct SimulateOptions {
    std::filesystem::path spec;
    std::filesystem::path cert;
    std::optional<std::size_t> n;
    std::optional<std::uint64_t> seed;
    std::filesystem::path out = "sim";
    OutputFormat format = OutputFormat::Json;
};

struct VerifyOptions {
    std::filesystem::path spec;
    std::filesystem::path cert;
    std::size_t samples = 10000;
    std::size_t trajectories = 10;  // runs for the monotonicity audit
    std::optional<std::uint64_t> seed;
    std::optional<std::filesystem::path> out;
};

nlohmann::json analyze_report(const SystemSpec& spec);

/// Base-controller file: controller plus the synthesis-input hash.
nlohmann::json base_document(const SystemSpec& spec, const SosProgram& program, const BaseController& c);
/// Certificate file: certificate plus the input hash and the base-file hash.
nlohmann::json certificate_document(const SystemSpec& spec, const nlohmann::json& base_doc,
                                    const EcgbfCertificate& cert);

/// Loads a base file, refusing one synthesized from a different spec.
BaseController load_base(const SystemSpec& spec, const nlohmann::json& base_doc);
/// Loads a certificate file, refusing one built from a different spec.
EcgbfCertificate load_certificate(const SystemSpec& spec, const nlohmann::json& cert_doc);

/// Flattened output-major mu list to a schedule shape; one value is uniform.
std::vector<std::vector<double>> shape_mu(const RelativeDegreeProfile& profile, const std::vector<double>& mu);

struct NestingReport {
    std::vector<double> mu;
    std::vector<std::size_t> positive_cells;  // per mu
    std::size_t safe_cells = 0;               // psi(y) > 0 on the slice
    std::size_t counterexamples = 0;          // cells positive at smaller mu but not at larger
    std::vector<LevelsetGrid> grids;
};

/// Psi grids on the system file's level-set slice for each mu; checks nesting.
NestingReport mu_nesting(const SystemSpec& spec, const BaseController& base, const std::vector<double>& mu,
                         std::size_t resolution);

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out);
int cmd_synth(const SynthOptions& o, std::ostream& out);
int cmd_backstep(const BackstepOptions& o, std::ostream& out);
int cmd_simulate(const SimulateOptions& o, std::ostream& out);
int cmd_verify(const VerifyOptions& o, std::ostream& out);

}  // namespace reachstep
