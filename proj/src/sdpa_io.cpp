#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "reachstep/error.hpp"
#include "reachstep/sdp.hpp"

namespace reachstep {

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

using Key = std::tuple<int, int, int>;  // block, row, col (1-based)

std::map<Key, double> collect(const LinearForm& f, double sign, int free_block) {
    std::map<Key, double> out;
    for (const auto& e : f.entries) out[{e.block + 1, e.row + 1, e.col + 1}] += sign * e.value;
    for (const auto& [k, v] : f.free) {
        // s = s+ - s-; the objective matrix carries the opposite sign on s-.
        double pos = sign * v;
        out[{free_block, 2 * k + 1, 2 * k + 1}] += pos;
        out[{free_block, 2 * k + 2, 2 * k + 2}] -= pos;
    }
    return out;
}

void write_matrix(std::ostringstream& os, int matno, const std::map<Key, double>& entries) {
    for (const auto& [key, v] : entries) {
        if (v == 0.0) continue;
        auto [blk, i, j] = key;
        os << matno << ' ' << blk << ' ' << i << ' ' << j << ' ' << fmt(v) << '\n';
    }
}

[[noreturn]] void parse_fail(const std::string& what, std::size_t line) { throw ParseError(what, line, 1); }

// Splits into lines, dropping SDPA comment lines that start with '*' or '"'.
std::vector<std::pair<std::size_t, std::string>> content_lines(const std::string& text) {
    std::vector<std::pair<std::size_t, std::string>> out;
    std::istringstream is(text);
    std::string line;
    std::size_t no = 0;
    while (std::getline(is, line)) {
        ++no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos) continue;
        if (line[first] == '*' || line[first] == '"') continue;
        out.emplace_back(no, line);
    }
    return out;
}

std::vector<std::string> tokens(std::string line) {
    for (char& c : line)
        if (c == ',' || c == '{' || c == '}' || c == '(' || c == ')') c = ' ';
    std::istringstream is(line);
    std::vector<std::string> out;
    std::string t;
    while (is >> t) out.push_back(t);
    return out;
}

double to_double(const std::string& t, std::size_t line) {
    char* end = nullptr;
    double v = std::strtod(t.c_str(), &end);
    if (end == t.c_str() || *end != '\0' || !std::isfinite(v)) parse_fail("malformed number '" + t + "'", line);
    return v;
}

long to_long(const std::string& t, std::size_t line) {
    char* end = nullptr;
    long v = std::strtol(t.c_str(), &end, 10);
    if (end == t.c_str() || *end != '\0') parse_fail("malformed integer '" + t + "'", line);
    return v;
}

}  // namespace

std::string to_sdpa(const SdpProblem& p) {
    p.validate();
    if (p.constraints.empty() || (p.blocks.empty() && p.num_free == 0))
        throw std::invalid_argument("degenerate problem: nothing to export");
    const int free_block = p.num_free > 0 ? static_cast<int>(p.blocks.size()) + 1 : 0;
    std::ostringstream os;
    os << p.constraints.size() << '\n';
    os << p.blocks.size() + (p.num_free > 0 ? 1 : 0) << '\n';
    for (std::size_t k = 0; k < p.blocks.size(); ++k) os << (k ? " " : "") << p.blocks[k];
    if (p.num_free > 0) os << (p.blocks.empty() ? "" : " ") << -2 * p.num_free;
    os << '\n';
    for (std::size_t i = 0; i < p.b.size(); ++i) os << (i ? " " : "") << fmt(p.b[i]);
    os << '\n';
    // Our primal is the SDPA dual: F0 = -C, Fi = Ai, c = b.
    write_matrix(os, 0, collect(p.objective, -1.0, free_block));
    for (std::size_t i = 0; i < p.constraints.size(); ++i)
        write_matrix(os, static_cast<int>(i) + 1, collect(p.constraints[i], 1.0, free_block));
    return os.str();
}

void export_sdpa(const SdpProblem& p, const std::filesystem::path& path) {
    std::string text = to_sdpa(p);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

SdpProblem parse_sdpa(const std::string& text) {
    auto lines = content_lines(text);
    std::size_t idx = 0;
    auto next_tokens = [&](const char* what) {
        if (idx >= lines.size()) parse_fail(std::string("missing ") + what, lines.empty() ? 1 : lines.back().first + 1);
        const auto& line = lines[idx++];
        return std::make_pair(line.first, tokens(line.second));
    };
    SdpProblem p;
    auto [l1, t1] = next_tokens("constraint count");
    if (t1.empty()) parse_fail("missing constraint count", l1);
    long m = to_long(t1[0], l1);
    auto [l2, t2] = next_tokens("block count");
    if (t2.empty()) parse_fail("missing block count", l2);
    long nb = to_long(t2[0], l2);
    if (m < 0 || nb <= 0) parse_fail("invalid counts", l2);
    std::vector<std::string> sizes;
    std::size_t lsz = 0;
    while (static_cast<long>(sizes.size()) < nb) {
        auto [l, t] = next_tokens("block sizes");
        lsz = l;
        sizes.insert(sizes.end(), t.begin(), t.end());
    }
    for (long k = 0; k < nb; ++k) {
        long s = to_long(sizes[static_cast<std::size_t>(k)], lsz);
        if (s == 0) parse_fail("zero block size", lsz);
        p.blocks.push_back(static_cast<int>(s));
    }
    std::vector<std::string> bvals;
    std::size_t lb = 0;
    while (static_cast<long>(bvals.size()) < m) {
        auto [l, t] = next_tokens("right-hand side");
        lb = l;
        bvals.insert(bvals.end(), t.begin(), t.end());
    }
    for (long i = 0; i < m; ++i) p.b.push_back(to_double(bvals[static_cast<std::size_t>(i)], lb));
    p.constraints.resize(static_cast<std::size_t>(m));
    for (; idx < lines.size(); ++idx) {
        auto [no, line] = lines[idx];
        auto t = tokens(line);
        if (t.size() != 5) parse_fail("expected 'matno blkno i j value'", no);
        long mat = to_long(t[0], no), blk = to_long(t[1], no), i = to_long(t[2], no), j = to_long(t[3], no);
        double v = to_double(t[4], no);
        if (mat < 0 || mat > m) parse_fail("matrix number out of range", no);
        if (blk < 1 || blk > nb) parse_fail("block number out of range", no);
        int n = std::abs(p.blocks[static_cast<std::size_t>(blk - 1)]);
        if (i < 1 || j < 1 || i > n || j > n) parse_fail("index outside block", no);
        if (i > j) std::swap(i, j);
        if (p.blocks[static_cast<std::size_t>(blk - 1)] < 0 && i != j) parse_fail("off-diagonal entry in diagonal block", no);
        SparseEntry e{static_cast<int>(blk - 1), static_cast<int>(i - 1), static_cast<int>(j - 1), v};
        if (mat == 0) {
            e.value = -v;
            p.objective.entries.push_back(e);
        } else {
            p.constraints[static_cast<std::size_t>(mat - 1)].entries.push_back(e);
        }
    }
    return p;
}

SdpProblem read_sdpa(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_sdpa(ss.str());
}

namespace {

// Parses a brace-delimited block list as written by SDPA: each top-level item
// is either {a,b,...} (diagonal) or {{..},{..}} (dense rows).
struct BraceParser {
    const std::string& text;
    const std::vector<std::size_t>& line_of;
    std::size_t pos = 0;

    std::size_t line() const { return line_of.empty() ? 1 : line_of[std::min(pos, line_of.size() - 1)]; }
    void ws() {
        while (pos < text.size() && (std::isspace(static_cast<unsigned char>(text[pos])) || text[pos] == ','))
            ++pos;
    }
    void expect(char c) {
        ws();
        if (pos >= text.size() || text[pos] != c) parse_fail(std::string("expected '") + c + "'", line());
        ++pos;
    }
    bool peek(char c) {
        ws();
        return pos < text.size() && text[pos] == c;
    }
    double number() {
        ws();
        std::size_t start = pos;
        while (pos < text.size() && (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '.' ||
                                     text[pos] == '-' || text[pos] == '+'))
            ++pos;
        return to_double(text.substr(start, pos - start), line());
    }
    std::vector<double> list() {
        expect('{');
        std::vector<double> v;
        while (!peek('}')) v.push_back(number());
        expect('}');
        return v;
    }
    Eigen::MatrixXd block() {
        expect('{');
        if (peek('{')) {
            std::vector<std::vector<double>> rows;
            while (peek('{')) rows.push_back(list());
            expect('}');
            const auto n = static_cast<Eigen::Index>(rows.size());
            Eigen::MatrixXd M(n, n);
            for (Eigen::Index r = 0; r < n; ++r) {
                if (static_cast<Eigen::Index>(rows[static_cast<std::size_t>(r)].size()) != n)
                    parse_fail("dense block is not square", line());
                for (Eigen::Index c = 0; c < n; ++c) M(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
            }
            return M;
        }
        std::vector<double> d;
        while (!peek('}')) d.push_back(number());
        expect('}');
        Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
        return v.asDiagonal();
    }
    std::vector<Eigen::MatrixXd> blocks() {
        expect('{');
        std::vector<Eigen::MatrixXd> out;
        while (peek('{')) out.push_back(block());
        expect('}');
        return out;
    }
};

}  // namespace

namespace {

bool infeasible_phase(const std::string& phase) {
    return phase != "noINFO" &&
           (phase.find("INF") != std::string::npos || phase.find("UNBD") != std::string::npos);
}

}  // namespace

SdpSolution parse_sdpa_solution(const std::string& text, const SdpProblem& p) {
    SdpSolution sol;
    bool have_primal = false, have_dual = false, have_x = false, have_xmat = false, have_ymat = false;
    std::istringstream is(text);
    std::string line;
    std::size_t no = 0;
    std::vector<std::pair<std::size_t, std::string>> lines;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.emplace_back(++no, line);
    }
    std::vector<Eigen::MatrixXd> xmat, ymat;
    Eigen::VectorXd xvec;
    std::string phase;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        const auto& [ln, l] = lines[k];
        auto eq = l.find('=');
        if (eq == std::string::npos) continue;
        std::string key = l.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), [](unsigned char c) { return std::isspace(c); }), key.end());
        std::string rest = l.substr(eq + 1);
        auto trim = [](std::string s) {
            auto a = s.find_first_not_of(" \t");
            auto b = s.find_last_not_of(" \t");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        rest = trim(rest);
        if (key == "objValPrimal") {
            sol.dual_objective = -to_double(rest, ln);
            have_primal = true;
        } else if (key == "objValDual") {
            sol.primal_objective = -to_double(rest, ln);
            have_dual = true;
        } else if (key == "phase.value") {
            phase = rest;
        } else if (key == "xVec" || key == "xMat" || key == "yMat") {
            // Gather following text until braces balance.
            std::string buf = rest;
            std::vector<std::size_t> line_of(buf.size(), ln);
            int depth = 0;
            auto count = [&](const std::string& s) {
                for (char c : s) depth += c == '{' ? 1 : c == '}' ? -1 : 0;
            };
            count(buf);
            bool started = buf.find('{') != std::string::npos;
            while ((!started || depth > 0) && k + 1 < lines.size()) {
                ++k;
                const auto& [ln2, l2] = lines[k];
                buf += '\n';
                line_of.push_back(ln2);
                buf += l2;
                line_of.insert(line_of.end(), l2.size(), ln2);
                count(l2);
                if (l2.find('{') != std::string::npos) started = true;
            }
            if (depth != 0) parse_fail("unbalanced braces in " + key, ln);
            BraceParser bp{buf, line_of};
            if (key == "xVec") {
                auto v = bp.list();
                xvec = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
                have_x = true;
            } else if (key == "xMat") {
                xmat = bp.blocks();
                have_xmat = true;
            } else {
                ymat = bp.blocks();
                have_ymat = true;
            }
        }
    }
    if (!have_primal || !have_dual) parse_fail("missing objValPrimal/objValDual", no);
    const bool optimal = phase.find("OPT") != std::string::npos;
    if (!optimal && !have_x && !have_xmat && !have_ymat) {
        // Status-only output from a failed solve.
        sol.status = infeasible_phase(phase) ? SdpStatus::Infeasible : SdpStatus::NumericalFailure;
        sol.message = "imported (" + (phase.empty() ? std::string("no phase") : phase) + ")";
        return sol;
    }
    if (!have_x || !have_xmat || !have_ymat) parse_fail("missing xVec/xMat/yMat", no);
    const std::size_t expected_blocks = p.blocks.size() + (p.num_free > 0 ? 1 : 0);
    if (xmat.size() != expected_blocks || ymat.size() != expected_blocks)
        parse_fail("block count does not match the problem", no);
    if (static_cast<std::size_t>(xvec.size()) != p.constraints.size())
        parse_fail("xVec length does not match the constraint count", no);
    for (std::size_t k = 0; k < p.blocks.size(); ++k) {
        if (ymat[k].rows() != std::abs(p.blocks[k])) parse_fail("block size mismatch", no);
        sol.X.push_back(ymat[k]);
        sol.Z.push_back(xmat[k]);
    }
    sol.s = Eigen::VectorXd::Zero(p.num_free);
    if (p.num_free > 0) {
        const auto& F = ymat.back();
        if (F.rows() != 2 * p.num_free) parse_fail("free-scalar block size mismatch", no);
        for (int k = 0; k < p.num_free; ++k) sol.s(k) = F(2 * k, 2 * k) - F(2 * k + 1, 2 * k + 1);
    }
    sol.y = -xvec;
    sol.gap = std::abs(sol.primal_objective - sol.dual_objective);
    if (optimal)
        sol.status = SdpStatus::Optimal;
    else if (infeasible_phase(phase))
        sol.status = SdpStatus::Infeasible;
    else
        sol.status = SdpStatus::NumericalFailure;
    sol.message = "imported (" + (phase.empty() ? std::string("no phase") : phase) + ")";
    return sol;
}

SdpSolution import_solution(const std::filesystem::path& path, const SdpProblem& p) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_sdpa_solution(ss.str(), p);
}

}  // namespace reachstep
