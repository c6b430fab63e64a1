#include "reachstep/expression.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "reachstep/error.hpp"

namespace reachstep {

// ---------------------------------------------------------------- VarTable

VarTable::VarTable(std::vector<std::string> names) {
    for (auto& n : names) add(n);
}

std::size_t VarTable::add(const std::string& name) {
    if (index_.count(name)) throw std::invalid_argument("duplicate variable '" + name + "'");
    index_.emplace(name, names_.size());
    names_.push_back(name);
    return names_.size() - 1;
}

std::size_t VarTable::index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown variable '" + name + "'");
    return it->second;
}

// -------------------------------------------------------------------- Expr

namespace {

std::shared_ptr<const Node> make_node(Node n) { return std::make_shared<const Node>(std::move(n)); }

const std::shared_ptr<const Node>& zero_node() {
    static const auto z = make_node(Node{Op::Const, 0.0, 0, {}, Expr(std::shared_ptr<const Node>()), Expr(std::shared_ptr<const Node>())});
    return z;
}

const std::shared_ptr<const Node>& one_node() {
    static const auto o = make_node(Node{Op::Const, 1.0, 0, {}, Expr(std::shared_ptr<const Node>()), Expr(std::shared_ptr<const Node>())});
    return o;
}

Expr unary(Op op, const Expr& a) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = Expr(std::shared_ptr<const Node>());
    return Expr(make_node(std::move(n)));
}

Expr binary(Op op, const Expr& a, const Expr& b) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    return Expr(make_node(std::move(n)));
}

}  // namespace

Expr::Expr() : node_(zero_node()) {}

Expr::Expr(double value) : node_(value == 0.0 ? zero_node() : value == 1.0 ? one_node() : nullptr) {
    if (!node_) {
        if (!std::isfinite(value)) throw std::invalid_argument("non-finite constant");
        Node n;
        n.op = Op::Const;
        n.value = value;
        n.a = Expr(std::shared_ptr<const Node>());
        n.b = Expr(std::shared_ptr<const Node>());
        node_ = make_node(std::move(n));
    }
}

Expr Expr::constant(double value) { return Expr(value); }

Expr Expr::variable(const std::string& name) {
    Node n;
    n.op = Op::Var;
    n.name = name;
    n.a = Expr(std::shared_ptr<const Node>());
    n.b = Expr(std::shared_ptr<const Node>());
    return Expr(make_node(std::move(n)));
}

Op Expr::op() const { return node_->op; }
bool Expr::is_constant(double v) const { return node_->op == Op::Const && node_->value == v; }
double Expr::value() const { return node_->value; }
const std::string& Expr::name() const { return node_->name; }
int Expr::exponent() const { return node_->exponent; }
Expr Expr::lhs() const { return node_->a; }
Expr Expr::rhs() const { return node_->b; }

// ------------------------------------------------------ smart constructors

Expr add(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr(a.value() + b.value());
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (b.op() == Op::Neg) return sub(a, b.lhs());
    if (b.is_constant() && b.value() < 0) return sub(a, Expr(-b.value()));
    return binary(Op::Add, a, b);
}

Expr sub(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr(a.value() - b.value());
    if (b.is_zero()) return a;
    if (a.is_zero()) return neg(b);
    if (a.same(b)) return Expr(0.0);
    if (b.op() == Op::Neg) return add(a, b.lhs());
    return binary(Op::Sub, a, b);
}

Expr neg(const Expr& a) {
    if (a.is_constant()) return Expr(-a.value());
    if (a.op() == Op::Neg) return a.lhs();
    return unary(Op::Neg, a);
}

Expr mul(const Expr& a, const Expr& b) {
    if (a.is_constant() && b.is_constant()) return Expr(a.value() * b.value());
    if (a.is_zero() || b.is_zero()) return Expr(0.0);
    if (a.is_constant(1.0)) return b;
    if (b.is_constant(1.0)) return a;
    if (a.is_constant(-1.0)) return neg(b);
    if (b.is_constant(-1.0)) return neg(a);
    if (a.op() == Op::Neg) return neg(mul(a.lhs(), b));
    if (b.op() == Op::Neg) return neg(mul(a, b.lhs()));
    if (b.is_constant()) return mul(b, a);  // constants lead
    if (a.is_constant() && b.op() == Op::Mul && b.lhs().is_constant())
        return mul(Expr(a.value() * b.lhs().value()), b.rhs());
    if (a.same(b)) return pow(a, 2);
    return binary(Op::Mul, a, b);
}

Expr div(const Expr& a, const Expr& b) {
    if (b.is_zero()) throw std::domain_error("division by the constant zero");
    if (a.is_zero()) return Expr(0.0);
    if (b.is_constant(1.0)) return a;
    if (a.is_constant() && b.is_constant()) return Expr(a.value() / b.value());
    if (b.is_constant()) return mul(Expr(1.0 / b.value()), a);
    if (a.same(b)) return Expr(1.0);
    if (a.op() == Op::Neg) return neg(div(a.lhs(), b));
    return binary(Op::Div, a, b);
}

Expr pow(const Expr& a, int exponent) {
    if (exponent < 0) throw std::invalid_argument("negative exponent");
    if (exponent == 0) return Expr(1.0);
    if (exponent == 1) return a;
    if (a.is_constant()) return Expr(std::pow(a.value(), exponent));
    if (a.op() == Op::Pow) return pow(a.lhs(), a.exponent() * exponent);
    if (a.op() == Op::Neg) {
        Expr inner = pow(a.lhs(), exponent);
        return exponent % 2 == 0 ? inner : neg(inner);
    }
    Node n;
    n.op = Op::Pow;
    n.exponent = exponent;
    n.a = a;
    n.b = Expr(std::shared_ptr<const Node>());
    return Expr(make_node(std::move(n)));
}

Expr sin(const Expr& a) {
    if (a.is_constant()) return Expr(std::sin(a.value()));
    if (a.op() == Op::Neg) return neg(sin(a.lhs()));
    return unary(Op::Sin, a);
}

Expr cos(const Expr& a) {
    if (a.is_constant()) return Expr(std::cos(a.value()));
    if (a.op() == Op::Neg) return cos(a.lhs());
    return unary(Op::Cos, a);
}

Expr scale(const Expr& a, double factor) { return mul(Expr(factor), a); }

// ------------------------------------------------------------ traversal

namespace {

// Post-order over distinct nodes.
template <class Fn>
void visit_dag(const Expr& root, Fn&& fn) {
    std::unordered_set<const Node*> seen;
    std::vector<std::pair<Expr, bool>> stack{{root, false}};
    while (!stack.empty()) {
        auto [e, expanded] = stack.back();
        stack.pop_back();
        if (expanded) {
            fn(e);
            continue;
        }
        if (!seen.insert(e.get()).second) continue;
        stack.push_back({e, true});
        switch (e.op()) {
            case Op::Const:
            case Op::Var: break;
            case Op::Add:
            case Op::Sub:
            case Op::Mul:
            case Op::Div:
                stack.push_back({e.rhs(), false});
                stack.push_back({e.lhs(), false});
                break;
            default: stack.push_back({e.lhs(), false}); break;
        }
    }
}

using Memo = std::unordered_map<const Node*, Expr>;

Expr rebuild(const Expr& e, const Memo& memo) {
    auto m = [&](const Expr& c) { return memo.at(c.get()); };
    switch (e.op()) {
        case Op::Const:
        case Op::Var: return e;
        case Op::Add: return add(m(e.lhs()), m(e.rhs()));
        case Op::Sub: return sub(m(e.lhs()), m(e.rhs()));
        case Op::Mul: return mul(m(e.lhs()), m(e.rhs()));
        case Op::Div: return div(m(e.lhs()), m(e.rhs()));
        case Op::Neg: return neg(m(e.lhs()));
        case Op::Pow: return pow(m(e.lhs()), e.exponent());
        case Op::Sin: return sin(m(e.lhs()));
        case Op::Cos: return cos(m(e.lhs()));
    }
    return e;
}

}  // namespace

Expr differentiate(const Expr& root, const std::string& var) {
    Memo d;
    visit_dag(root, [&](const Expr& e) {
        auto D = [&](const Expr& c) { return d.at(c.get()); };
        Expr r;
        switch (e.op()) {
            case Op::Const: r = Expr(0.0); break;
            case Op::Var: r = Expr(e.name() == var ? 1.0 : 0.0); break;
            case Op::Add: r = add(D(e.lhs()), D(e.rhs())); break;
            case Op::Sub: r = sub(D(e.lhs()), D(e.rhs())); break;
            case Op::Mul: r = add(mul(D(e.lhs()), e.rhs()), mul(e.lhs(), D(e.rhs()))); break;
            case Op::Div: {
                Expr da = D(e.lhs());
                Expr db = D(e.rhs());
                r = sub(div(da, e.rhs()), div(mul(e.lhs(), db), pow(e.rhs(), 2)));
                break;
            }
            case Op::Neg: r = neg(D(e.lhs())); break;
            case Op::Pow:
                r = mul(mul(Expr(static_cast<double>(e.exponent())), pow(e.lhs(), e.exponent() - 1)), D(e.lhs()));
                break;
            case Op::Sin: r = mul(cos(e.lhs()), D(e.lhs())); break;
            case Op::Cos: r = neg(mul(sin(e.lhs()), D(e.lhs()))); break;
        }
        d.emplace(e.get(), r);
    });
    return d.at(root.get());
}

std::vector<Expr> gradient(const Expr& e, const VarTable& vars) {
    std::vector<Expr> g;
    g.reserve(vars.size());
    for (const auto& v : vars.names()) g.push_back(differentiate(e, v));
    return g;
}

Expr substitute(const Expr& root, const std::map<std::string, Expr>& bindings) {
    Memo s;
    visit_dag(root, [&](const Expr& e) {
        if (e.op() == Op::Var) {
            auto it = bindings.find(e.name());
            s.emplace(e.get(), it == bindings.end() ? e : it->second);
        } else {
            s.emplace(e.get(), rebuild(e, s));
        }
    });
    return s.at(root.get());
}

namespace {

double eval_memo(const Expr& root, const std::function<double(const std::string&)>& lookup) {
    std::unordered_map<const Node*, double> v;
    visit_dag(root, [&](const Expr& e) {
        auto V = [&](const Expr& c) { return v.at(c.get()); };
        double r = 0.0;
        switch (e.op()) {
            case Op::Const: r = e.value(); break;
            case Op::Var: r = lookup(e.name()); break;
            case Op::Add: r = V(e.lhs()) + V(e.rhs()); break;
            case Op::Sub: r = V(e.lhs()) - V(e.rhs()); break;
            case Op::Mul: r = V(e.lhs()) * V(e.rhs()); break;
            case Op::Div: {
                double den = V(e.rhs());
                if (den == 0.0) throw EvaluationError("division by zero", to_string(e.rhs()));
                r = V(e.lhs()) / den;
                break;
            }
            case Op::Neg: r = -V(e.lhs()); break;
            case Op::Pow: r = std::pow(V(e.lhs()), e.exponent()); break;
            case Op::Sin: r = std::sin(V(e.lhs())); break;
            case Op::Cos: r = std::cos(V(e.lhs())); break;
        }
        v.emplace(e.get(), r);
    });
    return v.at(root.get());
}

}  // namespace

double evaluate(const Expr& e, const VarTable& vars, std::span<const double> point) {
    if (point.size() != vars.size()) throw std::invalid_argument("point dimension mismatch");
    return eval_memo(e, [&](const std::string& name) {
        if (!vars.contains(name)) throw EvaluationError("unbound variable", name);
        return point[vars.index(name)];
    });
}

double evaluate(const Expr& e, const std::map<std::string, double>& point) {
    return eval_memo(e, [&](const std::string& name) {
        auto it = point.find(name);
        if (it == point.end()) throw EvaluationError("unbound variable", name);
        return it->second;
    });
}

std::vector<std::string> free_variables(const Expr& e) {
    std::set<std::string> names;
    visit_dag(e, [&](const Expr& n) {
        if (n.op() == Op::Var) names.insert(n.name());
    });
    return {names.begin(), names.end()};
}

bool depends_on(const Expr& e, const std::string& var) {
    bool found = false;
    visit_dag(e, [&](const Expr& n) {
        if (n.op() == Op::Var && n.name() == var) found = true;
    });
    return found;
}

std::size_t dag_size(const Expr& e) {
    std::size_t n = 0;
    visit_dag(e, [&](const Expr&) { ++n; });
    return n;
}

// ---------------------------------------------------------------- printing

namespace {

int precedence(const Expr& e) {
    switch (e.op()) {
        case Op::Add:
        case Op::Sub: return 1;
        case Op::Mul:
        case Op::Div: return 2;
        case Op::Neg: return 3;
        case Op::Pow: return 4;
        case Op::Const: return e.value() < 0 ? 3 : 5;
        default: return 5;
    }
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void print(const Expr& e, std::string& out);

void print_operand(const Expr& e, int min_prec, std::string& out) {
    if (precedence(e) < min_prec) {
        out += '(';
        print(e, out);
        out += ')';
    } else {
        print(e, out);
    }
}

void print(const Expr& e, std::string& out) {
    switch (e.op()) {
        case Op::Const: out += format_number(e.value()); break;
        case Op::Var: out += e.name(); break;
        case Op::Add:
            print_operand(e.lhs(), 1, out);
            out += " + ";
            print_operand(e.rhs(), 2, out);
            break;
        case Op::Sub:
            print_operand(e.lhs(), 1, out);
            out += " - ";
            print_operand(e.rhs(), 2, out);
            break;
        case Op::Mul:
            print_operand(e.lhs(), 2, out);
            out += '*';
            print_operand(e.rhs(), 3, out);
            break;
        case Op::Div:
            print_operand(e.lhs(), 2, out);
            out += '/';
            print_operand(e.rhs(), 3, out);
            break;
        case Op::Neg:
            out += '-';
            print_operand(e.lhs(), 3, out);
            break;
        case Op::Pow:
            print_operand(e.lhs(), 5, out);
            out += '^';
            out += std::to_string(e.exponent());
            break;
        case Op::Sin:
            out += "sin(";
            print(e.lhs(), out);
            out += ')';
            break;
        case Op::Cos:
            out += "cos(";
            print(e.lhs(), out);
            out += ')';
            break;
    }
}

}  // namespace

std::string to_string(const Expr& e) {
    std::string out;
    print(e, out);
    return out;
}

// ----------------------------------------------------------------- parsing

namespace {

class Parser {
public:
    Parser(const std::string& text, const VarTable* allowed, const std::map<std::string, double>* constants)
        : text_(text), allowed_(allowed), constants_(constants) {}

    Expr parse() {
        Expr e = expression();
        skip_ws();
        if (pos_ != text_.size()) fail("unexpected '" + std::string(1, text_[pos_]) + "'");
        return e;
    }

private:
    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, 1, pos_ + 1); }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expression() {
        Expr e = term();
        for (;;) {
            if (accept('+'))
                e = add(e, term());
            else if (accept('-'))
                e = sub(e, term());
            else
                return e;
        }
    }

    Expr term() {
        Expr e = unary_expr();
        for (;;) {
            if (accept('*')) {
                e = mul(e, unary_expr());
            } else if (accept('/')) {
                std::size_t at = pos_;
                Expr d = unary_expr();
                if (d.is_zero()) {
                    pos_ = at;
                    fail("division by the constant zero");
                }
                e = div(e, d);
            } else {
                return e;
            }
        }
    }

    Expr unary_expr() {
        if (accept('-')) return neg(unary_expr());
        if (accept('+')) return unary_expr();
        return power();
    }

    Expr power() {
        Expr base = primary();
        while (accept('^')) {
            skip_ws();
            std::size_t start = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (start == pos_) fail("exponent must be a nonnegative integer literal");
            if (pos_ < text_.size() && (text_[pos_] == '.' || text_[pos_] == 'e' || text_[pos_] == 'E'))
                fail("exponent must be a nonnegative integer literal");
            base = pow(base, std::stoi(text_.substr(start, pos_ - start)));
        }
        return base;
    }

    Expr primary() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of expression");
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            Expr e = expression();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < text_.size() &&
                   (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
                ++pos_;
            std::string id = text_.substr(start, pos_ - start);
            skip_ws();
            if (pos_ < text_.size() && text_[pos_] == '(') {
                ++pos_;
                Expr arg = expression();
                if (!accept(')')) fail("expected ')'");
                if (id == "sin") return sin(arg);
                if (id == "cos") return cos(arg);
                pos_ = start;
                fail("unknown function '" + id + "'");
            }
            if (constants_) {
                auto it = constants_->find(id);
                if (it != constants_->end()) return Expr(it->second);
            }
            if (allowed_ && !allowed_->contains(id)) {
                pos_ = start;
                fail("unknown identifier '" + id + "'");
            }
            return Expr::variable(id);
        }
        fail("unexpected '" + std::string(1, c) + "'");
    }

    Expr number() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_;
            ++pos_;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            } else {
                pos_ = save;
            }
        }
        std::string lit = text_.substr(start, pos_ - start);
        if (lit == ".") {
            pos_ = start;
            fail("malformed number");
        }
        double v = std::strtod(lit.c_str(), nullptr);
        if (!std::isfinite(v)) {
            pos_ = start;
            fail("number out of range");
        }
        return Expr(v);
    }

    const std::string& text_;
    const VarTable* allowed_;
    const std::map<std::string, double>* constants_;
    std::size_t pos_ = 0;
};

}  // namespace

Expr parse_expression(const std::string& text, const VarTable* allowed,
                      const std::map<std::string, double>* constants) {
    return Parser(text, allowed, constants).parse();
}

// -------------------------------------------------------------------- Tape

Tape::Tape(const std::vector<Expr>& outputs, const VarTable& inputs) : num_inputs_(inputs.size()) {
    std::unordered_map<const Node*, std::uint32_t> slot;
    auto slot_of = [&](const Expr& e) { return slot.at(e.get()); };
    for (const auto& root : outputs) {
        visit_dag(root, [&](const Expr& e) {
            if (slot.count(e.get())) return;
            if (e.op() == Op::Var) {
                if (!inputs.contains(e.name()))
                    throw EvaluationError("tape input table lacks variable", e.name());
                slot.emplace(e.get(), static_cast<std::uint32_t>(inputs.index(e.name())));
                return;
            }
            Instr in{e.op(), 0, 0, 0, 0.0};
            switch (e.op()) {
                case Op::Const: in.value = e.value(); break;
                case Op::Add:
                case Op::Sub:
                case Op::Mul:
                case Op::Div:
                    in.a = slot_of(e.lhs());
                    in.b = slot_of(e.rhs());
                    break;
                case Op::Pow:
                    in.exponent = e.exponent();
                    in.a = slot_of(e.lhs());
                    break;
                default: in.a = slot_of(e.lhs()); break;
            }
            if (e.op() == Op::Div) {
                denominators_.push_back(e.rhs());
                denominator_slots_.push_back(static_cast<std::uint32_t>(code_.size()));
            }
            slot.emplace(e.get(), static_cast<std::uint32_t>(num_inputs_ + code_.size()));
            code_.push_back(in);
        });
        outputs_.push_back(slot_of(root));
    }
}

void Tape::evaluate(std::span<const double> inputs, std::span<double> outputs, std::vector<double>& s) const {
    if (inputs.size() != num_inputs_) throw std::invalid_argument("tape input dimension mismatch");
    if (outputs.size() != outputs_.size()) throw std::invalid_argument("tape output dimension mismatch");
    s.resize(num_inputs_ + code_.size());
    std::copy(inputs.begin(), inputs.end(), s.begin());
    double* v = s.data();
    std::size_t k = num_inputs_;
    for (std::size_t i = 0; i < code_.size(); ++i, ++k) {
        const Instr& in = code_[i];
        switch (in.op) {
            case Op::Const: v[k] = in.value; break;
            case Op::Add: v[k] = v[in.a] + v[in.b]; break;
            case Op::Sub: v[k] = v[in.a] - v[in.b]; break;
            case Op::Mul: v[k] = v[in.a] * v[in.b]; break;
            case Op::Div:
                if (v[in.b] == 0.0) {
                    for (std::size_t d = 0; d < denominator_slots_.size(); ++d)
                        if (denominator_slots_[d] == i)
                            throw EvaluationError("division by zero", to_string(denominators_[d]));
                    throw EvaluationError("division by zero", "?");
                }
                v[k] = v[in.a] / v[in.b];
                break;
            case Op::Neg: v[k] = -v[in.a]; break;
            case Op::Pow: v[k] = std::pow(v[in.a], in.exponent); break;
            case Op::Sin: v[k] = std::sin(v[in.a]); break;
            case Op::Cos: v[k] = std::cos(v[in.a]); break;
            case Op::Var: break;
        }
    }
    for (std::size_t o = 0; o < outputs_.size(); ++o) outputs[o] = v[outputs_[o]];
}

std::vector<double> Tape::evaluate(std::span<const double> inputs) const {
    std::vector<double> out(outputs_.size());
    std::vector<double> scratch;
    evaluate(inputs, out, scratch);
    return out;
}

}  // namespace reachstep
