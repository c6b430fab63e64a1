#include "reachstep/spec_file.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <openssl/evp.h>

#include "reachstep/error.hpp"

namespace reachstep {

namespace {

using nlohmann::json;

class Checker {
public:
    std::vector<std::string> errors;

    void fail(const std::string& ptr, const std::string& msg) { errors.push_back(ptr + ": " + msg); }

    bool number(const json& j, const std::string& ptr) {
        if (j.is_number()) return true;
        fail(ptr, "expected a number");
        return false;
    }
    bool positive(const json& j, const std::string& ptr) {
        if (!number(j, ptr)) return false;
        if (j.get<double>() > 0) return true;
        fail(ptr, "must be positive");
        return false;
    }
    bool integer(const json& j, const std::string& ptr, long long minimum) {
        if (!j.is_number_integer()) {
            fail(ptr, "expected an integer");
            return false;
        }
        if (j.get<long long>() < minimum) {
            fail(ptr, "must be at least " + std::to_string(minimum));
            return false;
        }
        return true;
    }
    bool string(const json& j, const std::string& ptr) {
        if (j.is_string() && !j.get<std::string>().empty()) return true;
        fail(ptr, "expected a nonempty string");
        return false;
    }
    bool identifier(const json& j, const std::string& ptr) {
        static const std::regex re("^[A-Za-z_][A-Za-z0-9_]*$");
        if (!string(j, ptr)) return false;
        if (std::regex_match(j.get<std::string>(), re)) return true;
        fail(ptr, "not an identifier");
        return false;
    }
    bool array(const json& j, const std::string& ptr, std::size_t min_items) {
        if (!j.is_array()) {
            fail(ptr, "expected an array");
            return false;
        }
        if (j.size() < min_items) {
            fail(ptr, "needs at least " + std::to_string(min_items) + " items");
            return false;
        }
        return true;
    }
    void strings(const json& j, const std::string& ptr, bool ident) {
        if (!array(j, ptr, 1)) return;
        for (std::size_t i = 0; i < j.size(); ++i) {
            std::string p = ptr + "/" + std::to_string(i);
            if (ident) identifier(j[i], p);
            else string(j[i], p);
        }
    }
    void interval(const json& j, const std::string& ptr) {
        if (!array(j, ptr, 2)) return;
        if (j.size() != 2) fail(ptr, "interval needs exactly two numbers");
        else if (number(j[0], ptr + "/0") && number(j[1], ptr + "/1") && !(j[0].get<double>() < j[1].get<double>()))
            fail(ptr, "interval must have lo < hi");
    }
    void only(const json& j, const std::string& ptr, std::initializer_list<const char*> keys) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            bool known = false;
            for (const char* k : keys) known = known || it.key() == k;
            if (!known) fail(ptr + "/" + it.key(), "unknown property");
        }
    }
};

std::map<std::string, double> parameters_of(const json& doc) {
    std::map<std::string, double> p;
    if (doc.contains("parameters"))
        for (auto it = doc["parameters"].begin(); it != doc["parameters"].end(); ++it) p[it.key()] = it.value();
    return p;
}

Expr parse_field(const json& j, const std::string& ptr, const VarTable& vars,
                 const std::map<std::string, double>& params) {
    try {
        return parse_expression(j.get<std::string>(), &vars, &params);
    } catch (const ParseError& e) {
        throw SpecError(ptr + ": " + e.what());
    }
}

std::vector<Interval> bounding_box(const ControlAffineSystem& sys) {
    const std::size_t m = sys.output_dim(), n = sys.state_dim();
    Tape tape(sys.h, sys.vars);
    std::mt19937_64 rng(0);
    std::vector<std::uniform_real_distribution<double>> dist;
    for (const auto& iv : sys.state_box) dist.emplace_back(iv.lo, iv.hi);
    std::vector<Interval> box(m, Interval{INFINITY, -INFINITY});
    std::vector<double> x(n), y(m), scratch;
    for (int s = 0; s < 4096; ++s) {
        for (std::size_t i = 0; i < n; ++i) x[i] = dist[i](rng);
        tape.evaluate(x, y, scratch);
        for (std::size_t i = 0; i < m; ++i) {
            box[i].lo = std::min(box[i].lo, y[i]);
            box[i].hi = std::max(box[i].hi, y[i]);
        }
    }
    for (auto& iv : box)
        if (!(iv.lo < iv.hi)) iv = {iv.lo - 1.0, iv.lo + 1.0};
    return box;
}

}  // namespace

std::vector<std::string> validate_spec_document(const json& doc) {
    Checker c;
    if (!doc.is_object()) {
        c.fail("", "document must be an object");
        return c.errors;
    }
    c.only(doc, "", {"$schema", "name", "description", "parameters", "state_vars", "inputs", "f", "g", "outputs",
                     "output_vars", "output_box", "psi", "phi", "synthesis", "gains", "sim", "levelset"});
    for (const char* k : {"state_vars", "inputs", "f", "g", "outputs", "psi", "phi"})
        if (!doc.contains(k)) c.fail(std::string("/") + k, "required property missing");
    for (const char* k : {"$schema", "name", "description"})
        if (doc.contains(k) && !doc[k].is_string()) c.fail(std::string("/") + k, "expected a string");
    if (doc.contains("parameters")) {
        if (!doc["parameters"].is_object()) c.fail("/parameters", "expected an object");
        else
            for (auto it = doc["parameters"].begin(); it != doc["parameters"].end(); ++it)
                c.number(it.value(), "/parameters/" + it.key());
    }
    if (doc.contains("state_vars") && c.array(doc["state_vars"], "/state_vars", 1))
        for (std::size_t i = 0; i < doc["state_vars"].size(); ++i) {
            const json& v = doc["state_vars"][i];
            std::string p = "/state_vars/" + std::to_string(i);
            if (!v.is_object()) {
                c.fail(p, "expected an object");
                continue;
            }
            c.only(v, p, {"name", "lo", "hi"});
            for (const char* k : {"name", "lo", "hi"})
                if (!v.contains(k)) c.fail(p + "/" + k, "required property missing");
            if (v.contains("name")) c.identifier(v["name"], p + "/name");
            if (v.contains("lo") && v.contains("hi") && c.number(v["lo"], p + "/lo") && c.number(v["hi"], p + "/hi") &&
                !(v["lo"].get<double>() < v["hi"].get<double>()))
                c.fail(p, "box bounds must satisfy lo < hi");
        }
    if (doc.contains("inputs")) c.integer(doc["inputs"], "/inputs", 1);
    if (doc.contains("f")) c.strings(doc["f"], "/f", false);
    if (doc.contains("g") && c.array(doc["g"], "/g", 1))
        for (std::size_t i = 0; i < doc["g"].size(); ++i) c.strings(doc["g"][i], "/g/" + std::to_string(i), false);
    if (doc.contains("outputs")) c.strings(doc["outputs"], "/outputs", false);
    if (doc.contains("output_vars")) c.strings(doc["output_vars"], "/output_vars", true);
    if (doc.contains("output_box") && c.array(doc["output_box"], "/output_box", 1))
        for (std::size_t i = 0; i < doc["output_box"].size(); ++i)
            c.interval(doc["output_box"][i], "/output_box/" + std::to_string(i));
    for (const char* k : {"psi", "phi"})
        if (doc.contains(k)) c.string(doc[k], std::string("/") + k);
    if (doc.contains("synthesis")) {
        const json& s = doc["synthesis"];
        if (!s.is_object()) c.fail("/synthesis", "expected an object");
        else {
            c.only(s, "/synthesis", {"deg_u", "deg_s0", "deg_s1", "epsilon", "delta_tol"});
            if (s.contains("deg_u")) c.integer(s["deg_u"], "/synthesis/deg_u", 0);
            for (const char* k : {"deg_s0", "deg_s1"})
                if (s.contains(k) && c.integer(s[k], std::string("/synthesis/") + k, 0) && s[k].get<long long>() % 2)
                    c.fail(std::string("/synthesis/") + k, "must be even");
            for (const char* k : {"epsilon", "delta_tol"})
                if (s.contains(k)) c.positive(s[k], std::string("/synthesis/") + k);
        }
    }
    if (doc.contains("gains")) {
        const json& g = doc["gains"];
        if (!g.is_object()) c.fail("/gains", "expected an object");
        else {
            c.only(g, "/gains", {"mu", "lambda"});
            if (g.contains("mu")) {
                if (g["mu"].is_number()) c.positive(g["mu"], "/gains/mu");
                else if (c.array(g["mu"], "/gains/mu", 0))
                    for (std::size_t i = 0; i < g["mu"].size(); ++i) {
                        std::string p = "/gains/mu/" + std::to_string(i);
                        if (c.array(g["mu"][i], p, 0))
                            for (std::size_t l = 0; l < g["mu"][i].size(); ++l)
                                c.positive(g["mu"][i][l], p + "/" + std::to_string(l));
                    }
            }
            if (g.contains("lambda")) c.positive(g["lambda"], "/gains/lambda");
        }
    }
    if (doc.contains("sim")) {
        const json& s = doc["sim"];
        if (!s.is_object()) c.fail("/sim", "expected an object");
        else {
            c.only(s, "/sim", {"dt", "t_max", "n", "seed"});
            for (const char* k : {"dt", "t_max"})
                if (s.contains(k)) c.positive(s[k], std::string("/sim/") + k);
            if (s.contains("n")) c.integer(s["n"], "/sim/n", 1);
            if (s.contains("seed")) c.integer(s["seed"], "/sim/seed", 0);
        }
    }
    if (doc.contains("levelset")) {
        const json& l = doc["levelset"];
        if (!l.is_object()) c.fail("/levelset", "expected an object");
        else {
            c.only(l, "/levelset", {"slice", "fixed", "resolution"});
            if (!l.contains("slice")) c.fail("/levelset/slice", "required property missing");
            else if (c.array(l["slice"], "/levelset/slice", 2)) {
                if (l["slice"].size() != 2) c.fail("/levelset/slice", "needs exactly two variables");
                for (std::size_t i = 0; i < l["slice"].size(); ++i)
                    c.identifier(l["slice"][i], "/levelset/slice/" + std::to_string(i));
            }
            if (l.contains("fixed")) {
                if (!l["fixed"].is_object()) c.fail("/levelset/fixed", "expected an object");
                else
                    for (auto it = l["fixed"].begin(); it != l["fixed"].end(); ++it)
                        c.number(it.value(), "/levelset/fixed/" + it.key());
            }
            if (l.contains("resolution")) c.integer(l["resolution"], "/levelset/resolution", 2);
        }
    }
    return c.errors;
}

SystemSpec parse_spec(const json& doc) {
    auto errors = validate_spec_document(doc);
    if (!errors.empty()) {
        std::string msg = "system file does not match the schema:";
        for (const auto& e : errors) msg += "\n  " + e;
        throw SpecError(msg);
    }
    SystemSpec s;
    s.document = doc;
    s.name = doc.value("name", "");
    s.description = doc.value("description", "");
    s.parameters = parameters_of(doc);

    ControlAffineSystem& sys = s.system;
    for (const auto& v : doc["state_vars"]) {
        std::string name = v["name"];
        if (sys.vars.contains(name)) throw SpecError("/state_vars: duplicate variable " + name);
        if (s.parameters.count(name)) throw SpecError("/state_vars: " + name + " is also a parameter");
        sys.vars.add(name);
        sys.state_box.push_back({v["lo"].get<double>(), v["hi"].get<double>()});
    }
    const std::size_t n = sys.vars.size();
    const auto m = doc["inputs"].get<std::size_t>();
    if (doc["f"].size() != n) throw SpecError("/f: expected " + std::to_string(n) + " entries");
    if (doc["g"].size() != n) throw SpecError("/g: expected " + std::to_string(n) + " rows");
    if (doc["outputs"].size() != m)
        throw SpecError("/outputs: expected " + std::to_string(m) + " outputs (one per input)");
    for (std::size_t i = 0; i < n; ++i) {
        sys.f.push_back(parse_field(doc["f"][i], "/f/" + std::to_string(i), sys.vars, s.parameters));
        if (doc["g"][i].size() != m)
            throw SpecError("/g/" + std::to_string(i) + ": expected " + std::to_string(m) + " columns");
        std::vector<Expr> row;
        for (std::size_t j = 0; j < m; ++j)
            row.push_back(parse_field(doc["g"][i][j], "/g/" + std::to_string(i) + "/" + std::to_string(j), sys.vars,
                                      s.parameters));
        sys.g.push_back(std::move(row));
    }
    for (std::size_t i = 0; i < m; ++i)
        sys.h.push_back(parse_field(doc["outputs"][i], "/outputs/" + std::to_string(i), sys.vars, s.parameters));
    sys.validate();

    std::vector<std::string> ynames;
    if (doc.contains("output_vars")) ynames = doc["output_vars"].get<std::vector<std::string>>();
    else
        for (std::size_t i = 0; i < m; ++i) ynames.push_back("y" + std::to_string(i + 1));
    if (ynames.size() != m) throw SpecError("/output_vars: expected " + std::to_string(m) + " names");
    s.sets.vars = VarTable(ynames);
    for (const char* k : {"psi", "phi"}) {
        Expr e = parse_field(doc[k], std::string("/") + k, s.sets.vars, s.parameters);
        auto p = to_polynomial(e, s.sets.vars);
        if (!p) throw SpecError(std::string("/") + k + ": must be a polynomial in the output variables");
        (std::string(k) == "psi" ? s.sets.psi : s.sets.phi) = *p;
    }
    if (doc.contains("output_box")) {
        if (doc["output_box"].size() != m) throw SpecError("/output_box: expected " + std::to_string(m) + " intervals");
        for (const auto& iv : doc["output_box"]) s.sets.output_box.push_back({iv[0].get<double>(), iv[1].get<double>()});
    } else {
        s.sets.output_box = bounding_box(sys);
    }
    s.sets.validate();

    if (doc.contains("synthesis")) {
        const json& j = doc["synthesis"];
        s.synthesis.deg_u = j.value("deg_u", s.synthesis.deg_u);
        s.synthesis.deg_s0 = j.value("deg_s0", s.synthesis.deg_s0);
        s.synthesis.deg_s1 = j.value("deg_s1", s.synthesis.deg_s1);
        s.synthesis.epsilon = j.value("epsilon", s.synthesis.epsilon);
        s.synthesis.delta_tol = j.value("delta_tol", s.synthesis.delta_tol);
    }
    if (doc.contains("gains")) {
        const json& g = doc["gains"];
        if (g.contains("mu")) {
            if (g["mu"].is_number()) s.mu_default = g["mu"].get<double>();
            else s.mu = g["mu"].get<std::vector<std::vector<double>>>();
        }
        if (g.contains("lambda")) s.lambda = g["lambda"].get<double>();
    }
    if (doc.contains("sim")) {
        const json& j = doc["sim"];
        s.sim.dt = j.value("dt", s.sim.dt);
        s.sim.t_max = j.value("t_max", s.sim.t_max);
        s.sim.seed = j.value("seed", s.sim.seed);
        s.sim_count = j.value("n", s.sim_count);
    }
    s.sim.validate();
    if (doc.contains("levelset")) {
        const json& l = doc["levelset"];
        LevelsetSlice ls;
        ls.a = l["slice"][0];
        ls.b = l["slice"][1];
        if (!sys.vars.contains(ls.a) || !sys.vars.contains(ls.b) || ls.a == ls.b)
            throw SpecError("/levelset/slice: needs two distinct state variables");
        if (l.contains("fixed"))
            for (auto it = l["fixed"].begin(); it != l["fixed"].end(); ++it) {
                if (!sys.vars.contains(it.key())) throw SpecError("/levelset/fixed: unknown variable " + it.key());
                ls.fixed[it.key()] = it.value();
            }
        ls.resolution = l.value("resolution", ls.resolution);
        s.levelset = ls;
    }
    return s;
}

GainSchedule SystemSpec::gains(const RelativeDegreeProfile& profile, double base_lambda) const {
    GainSchedule g = GainSchedule::uniform(profile, mu_default, lambda.value_or(base_lambda));
    if (!mu.empty()) g.mu = mu;
    g.validate(profile);
    return g;
}

std::vector<double> SystemSpec::slice_point() const {
    std::vector<double> x(system.state_dim(), 0.0);
    if (levelset)
        for (const auto& [k, v] : levelset->fixed) x[system.vars.index(k)] = v;
    return x;
}

SystemSpec load_spec(const std::filesystem::path& path) { return parse_spec(read_json_file(path)); }

json read_json_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    try {
        return json::parse(ss.str());
    } catch (const json::parse_error& e) {
        // nlohmann reports a byte offset; convert it to line and column.
        std::string text = ss.str();
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw SpecError(path.string() + ": invalid JSON (line " + std::to_string(line) + ", column " +
                        std::to_string(col) + ")");
    }
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os << j.dump(2) << '\n';
    if (!os) throw IoError("failed writing " + path.string());
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 15];
    }
    return out;
}

std::string json_hash(const json& j) { return sha256_hex(j.dump()); }

std::string synthesis_input_hash(const json& doc) {
    json sub = json::object();
    for (const char* k : {"parameters", "state_vars", "inputs", "f", "g", "outputs", "output_vars", "output_box",
                          "psi", "phi", "synthesis"})
        if (doc.contains(k)) sub[k] = doc[k];
    return json_hash(sub);
}

}  // namespace reachstep
