#include <gtest/gtest.h>

#include <random>

#include "reachstep/polynomial.hpp"

using namespace reachstep;

namespace {

Polynomial random_poly(std::mt19937_64& rng, std::size_t nvars, int max_deg) {
    std::uniform_int_distribution<int> coef(-5, 5);
    std::uniform_int_distribution<int> terms(0, 5);
    std::uniform_int_distribution<int> deg(0, max_deg);
    Polynomial p(nvars);
    int t = terms(rng);
    for (int k = 0; k < t; ++k) {
        int d = deg(rng);
        Monomial m(nvars, 0);
        std::uniform_int_distribution<std::size_t> var(0, nvars - 1);
        for (int e = 0; e < d; ++e) ++m[var(rng)];
        p.add_term(m, coef(rng));
    }
    return p;
}

}  // namespace

TEST(MonomialBasis, GradedLexOrderAndSizes) {
    auto b = monomial_basis(2, 2);
    std::vector<Monomial> expected{{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
    EXPECT_EQ(b, expected);
    EXPECT_EQ(monomial_basis(1, 0), std::vector<Monomial>{{0}});
    EXPECT_EQ(monomial_basis(3, 2).size(), 10u);
    EXPECT_EQ(monomial_basis(2, 5).size(), 21u);
    EXPECT_THROW(monomial_basis(2, -1), std::invalid_argument);
}

TEST(MonomialBasis, MatchesMapOrder) {
    auto b = monomial_basis(3, 4);
    EXPECT_TRUE(std::is_sorted(b.begin(), b.end(), GradedLex{}));
}

TEST(ToPolynomial, BinomialExpansion) {
    VarTable v({"y1", "y2"});
    auto p = to_polynomial(parse_expression("(y1+y2)^2"), v);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->terms().size(), 3u);
    EXPECT_DOUBLE_EQ(p->coefficient({2, 0}), 1.0);
    EXPECT_DOUBLE_EQ(p->coefficient({1, 1}), 2.0);
    EXPECT_DOUBLE_EQ(p->coefficient({0, 2}), 1.0);
}

TEST(ToPolynomial, NonPolynomialAndZero) {
    VarTable v({"x"});
    EXPECT_FALSE(to_polynomial(parse_expression("sin(x)+1"), v).has_value());
    EXPECT_FALSE(to_polynomial(parse_expression("1/(1+x)"), v).has_value());
    auto z = to_polynomial(Expr(0.0), v);
    ASSERT_TRUE(z);
    EXPECT_TRUE(z->is_zero());
    EXPECT_EQ(z->degree(), kMinusInfinity);
    auto c = to_polynomial(parse_expression("x/4 + sin(0)"), v);
    ASSERT_TRUE(c);
    EXPECT_DOUBLE_EQ(c->coefficient({1}), 0.25);
}

TEST(ToPolynomial, RoundTripOnCanonicalForms) {
    std::mt19937_64 rng(17);
    VarTable v({"a", "b", "c"});
    for (int i = 0; i < 200; ++i) {
        Polynomial p = random_poly(rng, 3, 4);
        auto back = to_polynomial(p.to_expression(v), v);
        ASSERT_TRUE(back);
        EXPECT_EQ(*back, p);
        auto text = to_polynomial(parse_expression(to_string(p.to_expression(v))), v);
        ASSERT_TRUE(text);
        EXPECT_EQ(*text, p);
    }
}

TEST(PolynomialRing, AxiomsHoldExactly) {
    std::mt19937_64 rng(23);
    for (int i = 0; i < 300; ++i) {
        std::size_t n = 1 + i % 4;
        Polynomial a = random_poly(rng, n, 4), b = random_poly(rng, n, 4), c = random_poly(rng, n, 4);
        EXPECT_EQ(a + b, b + a);
        EXPECT_EQ(a * b, b * a);
        EXPECT_EQ((a + b) + c, a + (b + c));
        EXPECT_EQ((a * b) * c, a * (b * c));
        EXPECT_EQ(a * (b + c), a * b + a * c);
        EXPECT_TRUE((a - a).is_zero());
    }
}

TEST(PolynomialRing, NoStoredZeros) {
    Polynomial p(1);
    p.add_term({1}, 2.0);
    p.add_term({1}, -2.0);
    EXPECT_TRUE(p.is_zero());
    EXPECT_TRUE(p.terms().empty());
}

TEST(ZeroTest, Examples) {
    VarTable x({"x"});
    Interval unit{-1.0, 1.0};
    std::vector<Interval> box{unit};
    EXPECT_TRUE(is_identically_zero(parse_expression("x - x"), x, box));
    VarTable th({"theta"});
    EXPECT_TRUE(is_identically_zero(parse_expression("sin(theta)^2 + cos(theta)^2 - 1"), th, box, 64, 0, 1e-9));
    // Known false-positive mode: a sub-tolerance coefficient.
    EXPECT_TRUE(is_identically_zero(parse_expression("x*1e-12"), x, box, 64, 0, 1e-9));
    EXPECT_FALSE(is_identically_zero(parse_expression("sin(x)*1e-3"), x, box));
    EXPECT_FALSE(is_identically_zero(parse_expression("x"), x, box));
    EXPECT_THROW(is_identically_zero(parse_expression("x"), x, box, 0), std::invalid_argument);
}

TEST(ZeroTest, DeterministicForSeed) {
    VarTable x({"x"});
    std::vector<Interval> box{{-1.0, 1.0}};
    Expr e = parse_expression("sin(x)*1e-10 + cos(x)*1e-10");
    EXPECT_EQ(is_identically_zero(e, x, box, 16, 4, 1e-10), is_identically_zero(e, x, box, 16, 4, 1e-10));
}
