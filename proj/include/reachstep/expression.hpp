#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace reachstep {

/// Ordered set of distinct variable names. The position of a name is its
/// index for evaluation and for polynomial exponent vectors.
class VarTable {
public:
    VarTable() = default;
    explicit VarTable(std::vector<std::string> names);

    /// Appends a variable; throws if the name is already present.
    std::size_t add(const std::string& name);

    std::size_t size() const { return names_.size(); }
    const std::string& name(std::size_t i) const { return names_.at(i); }
    const std::vector<std::string>& names() const { return names_; }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }
    /// Throws std::out_of_range for unknown names.
    std::size_t index(const std::string& name) const;

    bool operator==(const VarTable& other) const { return names_ == other.names_; }

private:
    std::vector<std::string> names_;
    std::unordered_map<std::string, std::size_t> index_;
};

enum class Op : std::uint8_t { Const, Var, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos };

struct Node;

/// Immutable symbolic scalar expression. Copies share structure; the
/// underlying nodes form a DAG and every transformation preserves sharing.
class Expr {
public:
    Expr();  // the constant 0
    Expr(double value);  // NOLINT(google-explicit-constructor)

    static Expr constant(double value);
    static Expr variable(const std::string& name);

    Op op() const;
    bool is_constant() const { return op() == Op::Const; }
    bool is_constant(double value) const;
    bool is_zero() const { return is_constant(0.0); }
    double value() const;             // Const only
    const std::string& name() const;  // Var only
    int exponent() const;             // Pow only
    Expr lhs() const;                 // unary and binary nodes
    Expr rhs() const;                 // binary nodes

    const Node* get() const { return node_.get(); }
    bool same(const Expr& other) const { return node_ == other.node_; }

    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<const Node> node_;
};

struct Node {
    Op op;
    double value = 0.0;
    int exponent = 0;
    std::string name;
    Expr a;
    Expr b;
};

// Smart constructors. Each applies local simplification: constant folding,
// additive and multiplicative identities, the zero annihilator, x^0 and x^1,
// nested integer powers, double negation, and sin/cos of constants.
Expr add(const Expr& a, const Expr& b);
Expr sub(const Expr& a, const Expr& b);
Expr mul(const Expr& a, const Expr& b);
Expr div(const Expr& a, const Expr& b);
Expr neg(const Expr& a);
Expr pow(const Expr& a, int exponent);
Expr sin(const Expr& a);
Expr cos(const Expr& a);
Expr scale(const Expr& a, double factor);

inline Expr operator+(const Expr& a, const Expr& b) { return add(a, b); }
inline Expr operator-(const Expr& a, const Expr& b) { return sub(a, b); }
inline Expr operator*(const Expr& a, const Expr& b) { return mul(a, b); }
inline Expr operator/(const Expr& a, const Expr& b) { return div(a, b); }
inline Expr operator-(const Expr& a) { return neg(a); }

/// Partial derivative with respect to the variable `var`.
Expr differentiate(const Expr& e, const std::string& var);

/// Gradient with respect to every variable of `vars`, sharing one memo table
/// per component.
std::vector<Expr> gradient(const Expr& e, const VarTable& vars);

/// Simultaneous substitution of variables by expressions.
Expr substitute(const Expr& e, const std::map<std::string, Expr>& bindings);

/// Evaluates with IEEE doubles. `point` is indexed by `vars`. Throws
/// EvaluationError on division by zero or unbound variables.
double evaluate(const Expr& e, const VarTable& vars, std::span<const double> point);
double evaluate(const Expr& e, const std::map<std::string, double>& point);

/// Names of all variables referenced by `e`.
std::vector<std::string> free_variables(const Expr& e);
bool depends_on(const Expr& e, const std::string& var);

/// Number of distinct nodes in the DAG.
std::size_t dag_size(const Expr& e);

/// Infix rendering that `parse_expression` reads back exactly.
std::string to_string(const Expr& e);

/// Parses the infix grammar: `+ - * / ^`, `sin(...)`, `cos(...)`, decimal
/// literals, identifiers, parentheses. `^` takes a nonnegative integer
/// literal. Identifiers found in `constants` are replaced by their value;
/// when `allowed` is non-null any other identifier must be listed there.
/// Throws ParseError with a 1-based column.
Expr parse_expression(const std::string& text,
                      const VarTable* allowed = nullptr,
                      const std::map<std::string, double>* constants = nullptr);

/// Linearized DAG of several expressions over a fixed input table, for hot
/// evaluation loops. Shared subexpressions are evaluated once.
class Tape {
public:
    Tape() = default;
    Tape(const std::vector<Expr>& outputs, const VarTable& inputs);

    std::size_t num_inputs() const { return num_inputs_; }
    std::size_t num_outputs() const { return outputs_.size(); }
    std::size_t num_instructions() const { return code_.size(); }

    /// Evaluates all outputs. `scratch` is resized as needed; reuse it
    /// across calls to avoid allocation. Throws EvaluationError on division
    /// by zero.
    void evaluate(std::span<const double> inputs, std::span<double> outputs,
                  std::vector<double>& scratch) const;
    std::vector<double> evaluate(std::span<const double> inputs) const;

private:
    struct Instr {
        Op op;
        int exponent;
        std::uint32_t a;
        std::uint32_t b;
        double value;
    };
    std::size_t num_inputs_ = 0;
    std::vector<Instr> code_;
    std::vector<std::uint32_t> outputs_;
    std::vector<Expr> denominators_;  // kept alive for error messages
    std::vector<std::uint32_t> denominator_slots_;
};

}  // namespace reachstep
