#pragma once

#include <climits>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "reachstep/expression.hpp"

namespace reachstep {

using Monomial = std::vector<int>;

/// Graded lexicographic order: lower total degree first, ties broken so that
/// y1 > y2 > ... (for two variables: 1, y1, y2, y1^2, y1*y2, y2^2).
struct GradedLex {
    bool operator()(const Monomial& a, const Monomial& b) const;
};

int total_degree(const Monomial& m);

/// Degree reported for the zero polynomial.
inline constexpr int kMinusInfinity = INT_MIN;

/// Sparse real polynomial over a fixed number of variables. Zero
/// coefficients are never stored.
class Polynomial {
public:
    using Terms = std::map<Monomial, double, GradedLex>;

    explicit Polynomial(std::size_t num_vars = 0) : num_vars_(num_vars) {}
    static Polynomial constant(std::size_t num_vars, double c);
    static Polynomial variable(std::size_t num_vars, std::size_t index);
    static Polynomial monomial(const Monomial& m, double c = 1.0);

    std::size_t num_vars() const { return num_vars_; }
    const Terms& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    /// kMinusInfinity for the zero polynomial.
    int degree() const;
    double coefficient(const Monomial& m) const;
    double max_abs_coefficient() const;

    /// Adds c to the coefficient of m, erasing the term when it cancels.
    void add_term(const Monomial& m, double c);

    Polynomial operator+(const Polynomial& o) const;
    Polynomial operator-(const Polynomial& o) const;
    Polynomial operator*(const Polynomial& o) const;
    Polynomial operator-() const;
    Polynomial scaled(double c) const;
    Polynomial pow(int exponent) const;
    Polynomial derivative(std::size_t var) const;

    double evaluate(std::span<const double> point) const;
    Expr to_expression(const VarTable& vars) const;

    bool operator==(const Polynomial& o) const = default;

private:
    void check_compatible(const Polynomial& o) const;

    std::size_t num_vars_;
    Terms terms_;
};

/// All monomials of total degree <= d in k variables, graded-lex ordered.
std::vector<Monomial> monomial_basis(std::size_t k, int d);

/// Expanded canonical form, or nullopt when `e` contains a variable
/// denominator or a trigonometric function of a variable.
std::optional<Polynomial> to_polynomial(const Expr& e, const VarTable& vars);

struct Interval {
    double lo = -1.0;
    double hi = 1.0;
};

/// Zero test. Polynomials are decided on their canonical form (all
/// coefficients within `tol`); anything else is evaluated at `samples`
/// uniform points of `box`. A tiny but nonzero polynomial such as x*1e-12
/// passes: that is the known false-positive mode.
bool is_identically_zero(const Expr& e, const VarTable& vars, std::span<const Interval> box,
                         int samples = 64, std::uint64_t seed = 0, double tol = 1e-9);

}  // namespace reachstep
