#include "reachstep/polynomial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "reachstep/error.hpp"

namespace reachstep {

int total_degree(const Monomial& m) { return std::accumulate(m.begin(), m.end(), 0); }

bool GradedLex::operator()(const Monomial& a, const Monomial& b) const {
    int da = total_degree(a);
    int db = total_degree(b);
    if (da != db) return da < db;
    return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
}

Polynomial Polynomial::constant(std::size_t num_vars, double c) {
    Polynomial p(num_vars);
    p.add_term(Monomial(num_vars, 0), c);
    return p;
}

Polynomial Polynomial::variable(std::size_t num_vars, std::size_t index) {
    if (index >= num_vars) throw std::out_of_range("variable index");
    Monomial m(num_vars, 0);
    m[index] = 1;
    return monomial(m);
}

Polynomial Polynomial::monomial(const Monomial& m, double c) {
    Polynomial p(m.size());
    p.add_term(m, c);
    return p;
}

int Polynomial::degree() const {
    int d = kMinusInfinity;
    for (const auto& [m, c] : terms_) d = std::max(d, total_degree(m));
    return d;
}

double Polynomial::coefficient(const Monomial& m) const {
    auto it = terms_.find(m);
    return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::max_abs_coefficient() const {
    double r = 0.0;
    for (const auto& [m, c] : terms_) r = std::max(r, std::abs(c));
    return r;
}

void Polynomial::add_term(const Monomial& m, double c) {
    if (m.size() != num_vars_) throw std::invalid_argument("monomial length mismatch");
    if (c == 0.0) return;
    auto [it, inserted] = terms_.emplace(m, c);
    if (!inserted) {
        it->second += c;
        if (it->second == 0.0) terms_.erase(it);
    }
}

void Polynomial::check_compatible(const Polynomial& o) const {
    if (num_vars_ != o.num_vars_) throw std::invalid_argument("polynomials over different variable counts");
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
    check_compatible(o);
    Polynomial r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, c);
    return r;
}

Polynomial Polynomial::operator-(const Polynomial& o) const {
    check_compatible(o);
    Polynomial r = *this;
    for (const auto& [m, c] : o.terms_) r.add_term(m, -c);
    return r;
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
    check_compatible(o);
    Polynomial r(num_vars_);
    Monomial m(num_vars_);
    for (const auto& [ma, ca] : terms_)
        for (const auto& [mb, cb] : o.terms_) {
            for (std::size_t k = 0; k < num_vars_; ++k) m[k] = ma[k] + mb[k];
            r.add_term(m, ca * cb);
        }
    return r;
}

Polynomial Polynomial::operator-() const { return scaled(-1.0); }

Polynomial Polynomial::scaled(double c) const {
    Polynomial r(num_vars_);
    if (c == 0.0) return r;
    for (const auto& [m, v] : terms_) r.add_term(m, v * c);
    return r;
}

Polynomial Polynomial::pow(int exponent) const {
    if (exponent < 0) throw std::invalid_argument("negative exponent");
    Polynomial r = constant(num_vars_, 1.0);
    Polynomial base = *this;
    while (exponent > 0) {
        if (exponent & 1) r = r * base;
        exponent >>= 1;
        if (exponent) base = base * base;
    }
    return r;
}

Polynomial Polynomial::derivative(std::size_t var) const {
    if (var >= num_vars_) throw std::out_of_range("variable index");
    Polynomial r(num_vars_);
    for (const auto& [m, c] : terms_) {
        if (m[var] == 0) continue;
        Monomial d = m;
        --d[var];
        r.add_term(d, c * m[var]);
    }
    return r;
}

double Polynomial::evaluate(std::span<const double> point) const {
    if (point.size() != num_vars_) throw std::invalid_argument("point dimension mismatch");
    double sum = 0.0;
    for (const auto& [m, c] : terms_) {
        double t = c;
        for (std::size_t k = 0; k < num_vars_; ++k)
            for (int p = 0; p < m[k]; ++p) t *= point[k];
        sum += t;
    }
    return sum;
}

Expr Polynomial::to_expression(const VarTable& vars) const {
    if (vars.size() != num_vars_) throw std::invalid_argument("variable table size mismatch");
    std::vector<Expr> symbols;
    for (const auto& n : vars.names()) symbols.push_back(Expr::variable(n));
    Expr sum(0.0);
    for (const auto& [m, c] : terms_) {
        Expr t(1.0);
        for (std::size_t k = 0; k < num_vars_; ++k) t = mul(t, reachstep::pow(symbols[k], m[k]));
        sum = add(sum, mul(Expr(c), t));
    }
    return sum;
}

std::vector<Monomial> monomial_basis(std::size_t k, int d) {
    if (d < 0) throw std::invalid_argument("negative degree");
    std::vector<Monomial> out;
    Monomial m(k, 0);
    // Enumerates exponent vectors of total degree t with the first variable
    // descending, which is graded-lex order within each degree.
    auto fill = [&](auto&& self, std::size_t pos, int remaining) -> void {
        if (pos + 1 >= k) {
            if (k > 0) m[k - 1] = remaining;
            out.push_back(m);
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            m[pos] = e;
            self(self, pos + 1, remaining - e);
        }
    };
    for (int t = 0; t <= d; ++t) {
        if (k == 0) {
            if (t == 0) out.push_back(m);
            continue;
        }
        fill(fill, 0, t);
    }
    return out;
}

std::optional<Polynomial> to_polynomial(const Expr& root, const VarTable& vars) {
    const std::size_t n = vars.size();
    std::unordered_map<const Node*, std::optional<Polynomial>> memo;
    auto rec = [&](auto&& self, const Expr& e) -> std::optional<Polynomial> {
        if (auto it = memo.find(e.get()); it != memo.end()) return it->second;
        std::optional<Polynomial> r;
        auto both = [&](auto&& combine) -> std::optional<Polynomial> {
            auto a = self(self, e.lhs());
            if (!a) return std::nullopt;
            auto b = self(self, e.rhs());
            if (!b) return std::nullopt;
            return combine(*a, *b);
        };
        switch (e.op()) {
            case Op::Const: r = Polynomial::constant(n, e.value()); break;
            case Op::Var:
                if (vars.contains(e.name())) r = Polynomial::variable(n, vars.index(e.name()));
                break;
            case Op::Add: r = both([](const Polynomial& a, const Polynomial& b) { return a + b; }); break;
            case Op::Sub: r = both([](const Polynomial& a, const Polynomial& b) { return a - b; }); break;
            case Op::Mul: r = both([](const Polynomial& a, const Polynomial& b) { return a * b; }); break;
            case Op::Div: {
                auto a = self(self, e.lhs());
                auto b = self(self, e.rhs());
                if (a && b && b->degree() == 0) r = a->scaled(1.0 / b->coefficient(Monomial(n, 0)));
                break;
            }
            case Op::Neg:
                if (auto a = self(self, e.lhs())) r = -*a;
                break;
            case Op::Pow:
                if (auto a = self(self, e.lhs())) r = a->pow(e.exponent());
                break;
            case Op::Sin:
            case Op::Cos: {
                auto a = self(self, e.lhs());
                if (a && a->degree() <= 0) {
                    double c = a->coefficient(Monomial(n, 0));
                    r = Polynomial::constant(n, e.op() == Op::Sin ? std::sin(c) : std::cos(c));
                }
                break;
            }
        }
        memo.emplace(e.get(), r);
        return r;
    };
    return rec(rec, root);
}

bool is_identically_zero(const Expr& e, const VarTable& vars, std::span<const Interval> box, int samples,
                         std::uint64_t seed, double tol) {
    if (samples < 1) throw std::invalid_argument("samples must be >= 1");
    if (auto p = to_polynomial(e, vars)) return p->max_abs_coefficient() <= tol;
    if (box.size() != vars.size()) throw std::invalid_argument("box dimension mismatch");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Tape tape({e}, vars);
    std::vector<double> x(vars.size());
    std::vector<double> scratch;
    double out = 0.0;
    for (int s = 0; s < samples; ++s) {
        for (std::size_t k = 0; k < x.size(); ++k) x[k] = box[k].lo + (box[k].hi - box[k].lo) * unit(rng);
        try {
            tape.evaluate(x, std::span<double>(&out, 1), scratch);
        } catch (const EvaluationError&) {
            continue;
        }
        if (!(std::abs(out) <= tol)) return false;
    }
    return true;
}

}  // namespace reachstep
