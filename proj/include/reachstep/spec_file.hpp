#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "reachstep/backstepping.hpp"
#include "reachstep/dynamics.hpp"
#include "reachstep/simulation.hpp"
#include "reachstep/sos.hpp"

namespace reachstep {

struct LevelsetSlice {
    std::string a;
    std::string b;
    std::map<std::string, double> fixed;
    std::size_t resolution = 256;
};

/// A parsed system-definition file.
struct SystemSpec {
    std::string name;
    std::string description;
    std::map<std::string, double> parameters;
    ControlAffineSystem system;
    SemialgebraicSpec sets;
    SynthesisConfig synthesis;
    std::vector<std::vector<double>> mu;  // empty: uniform mu_default
    double mu_default = 1.0;
    std::optional<double> lambda;
    SimConfig sim;
    std::size_t sim_count = 100;
    std::optional<LevelsetSlice> levelset;
    nlohmann::json document;

    /// Gains for the given relative-degree profile, falling back to the base
    /// controller's lambda.
    GainSchedule gains(const RelativeDegreeProfile& profile, double base_lambda) const;
    /// State with the slice's fixed values (zero elsewhere).
    std::vector<double> slice_point() const;
};

/// Structural check mirroring schemas/system-spec.v1.json. Returns one
/// message per violation, each prefixed with its JSON pointer.
std::vector<std::string> validate_spec_document(const nlohmann::json& doc);

/// Throws SpecError (schema violations, bad expressions with their location,
/// inconsistent dimensions).
SystemSpec parse_spec(const nlohmann::json& doc);
SystemSpec load_spec(const std::filesystem::path& path);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const nlohmann::json& j, const std::filesystem::path& path);

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(const std::string& bytes);
/// Hash of the document fields that determine synthesis and backstepping.
std::string synthesis_input_hash(const nlohmann::json& doc);
/// Hash of a JSON document in canonical (sorted, compact) form.
std::string json_hash(const nlohmann::json& j);

}  // namespace reachstep
