#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "mvlstm/numerics.hpp"
#include "mvlstm/rng.hpp"

using namespace mvlstm;

TEST_CASE("matvec identity and zero") {
    Matrix id = Matrix::identity(2);
    Vector v{3.0, -1.0};
    CHECK(matvec(id, v) == v);

    Matrix zero(3, 2);
    Vector any{5.0, 7.0};
    CHECK(matvec(zero, any) == Vector{0.0, 0.0, 0.0});
}

TEST_CASE("matvec hand arithmetic") {
    Matrix m(2, 2);
    m(0, 0) = 1.0;
    m(0, 1) = 2.0;
    m(1, 0) = 3.0;
    m(1, 1) = 4.0;
    // brute-force dot products: (1*1+2*1, 3*1+4*1)
    CHECK(matvec(m, Vector{1.0, 1.0}) == Vector{3.0, 7.0});
}

TEST_CASE("matvec rejects mismatched shapes with both named") {
    Matrix m(3, 2);
    Vector v(4);
    CHECK_THROWS_WITH_AS(matvec(m, v), "matvec: matrix is 3x2 but vector has dim 4",
                         std::invalid_argument);
}

TEST_CASE("matvec distributes over vector addition") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t rows = 1 + rng.integer(6);
        const std::size_t cols = 1 + rng.integer(6);
        Matrix m(rows, cols);
        for (double& x : m.data) x = rng.uniform(-1.0, 1.0);
        Vector a(cols), b(cols);
        for (double& x : a.data) x = rng.uniform(-1.0, 1.0);
        for (double& x : b.data) x = rng.uniform(-1.0, 1.0);

        const Vector lhs = matvec(m, add(a, b));
        const Vector rhs = add(matvec(m, a), matvec(m, b));
        for (std::size_t i = 0; i < rows; ++i) {
            const double scale = std::max({std::abs(lhs[i]), std::abs(rhs[i]), 1.0});
            CHECK(std::abs(lhs[i] - rhs[i]) / scale < 1e-12);
        }
    }
}

TEST_CASE("matvec_transposed agrees with explicit transpose") {
    Rng rng(7);
    Matrix m(3, 4);
    for (double& x : m.data) x = rng.uniform(-2.0, 2.0);
    Vector v(3);
    for (double& x : v.data) x = rng.uniform(-2.0, 2.0);

    Matrix mt(4, 3);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 4; ++c) mt(c, r) = m(r, c);
    const Vector expected = matvec(mt, v);
    const Vector got = matvec_transposed(m, v);
    for (std::size_t i = 0; i < 4; ++i) CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-14));
}

TEST_CASE("sigmoid reference points") {
    CHECK(sigmoid(Vector{0.0})[0] == 0.5);
    // 1/(1+e^{-ln 3}) = 3/4
    const double ln3 = std::log(3.0);
    CHECK(sigmoid(Vector{ln3})[0] == doctest::Approx(0.75).epsilon(1e-15));
    // symmetry sigma(-x) = 1 - sigma(x)
    CHECK(sigmoid(Vector{-ln3})[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("tanh reference points") {
    CHECK(tanh_act(Vector{0.0})[0] == 0.0);
    CHECK(tanh_act(Vector{1.0})[0] == doctest::Approx(0.7615941559557649).epsilon(1e-15));
    Rng rng(3);
    for (int k = 0; k < 20; ++k) {
        const double x = rng.uniform(-5.0, 5.0);
        CHECK(tanh_act(Vector{x})[0] + tanh_act(Vector{-x})[0] == 0.0);
    }
}

TEST_CASE("activations stay inside open intervals at extreme inputs") {
    for (double x : {1e6, 50.0, 745.0, -1e6, -50.0, -745.0}) {
        const double s = sigmoid(Vector{x})[0];
        CHECK(s > 0.0);
        CHECK(s < 1.0);
        const double t = tanh_act(Vector{x})[0];
        CHECK(t > -1.0);
        CHECK(t < 1.0);
        CHECK(std::isfinite(s));
        CHECK(std::isfinite(t));
    }
}

TEST_CASE("sigmoid is monotone") {
    Rng rng(17);
    double prev_x = -1e6;
    double prev_s = sigmoid(Vector{prev_x})[0];
    for (int k = 0; k < 200; ++k) {
        const double x = prev_x + rng.uniform(0.0, 1e4);
        const double s = sigmoid(Vector{x})[0];
        CHECK(s >= prev_s);
        prev_x = x;
        prev_s = s;
    }
}

TEST_CASE("operations are deterministic") {
    Rng rng(11);
    Matrix m(5, 5);
    for (double& x : m.data) x = rng.uniform(-1.0, 1.0);
    Vector v(5);
    for (double& x : v.data) x = rng.uniform(-1.0, 1.0);
    CHECK(matvec(m, v) == matvec(m, v));
    CHECK(sigmoid(v) == sigmoid(v));
    CHECK(tanh_act(v) == tanh_act(v));
}

TEST_CASE("vector helpers") {
    Vector a{1.0, 2.0, 3.0};
    Vector b{4.0, -1.0, 0.5};
    CHECK(add(a, b) == Vector{5.0, 1.0, 3.5});
    CHECK(sub(a, b) == Vector{-3.0, 3.0, 2.5});
    CHECK(hadamard(a, b) == Vector{4.0, -2.0, 1.5});
    CHECK(dot(a, b) == doctest::Approx(3.5));
    CHECK(max_abs(b) == 4.0);
    CHECK(max_abs_diff(a, b) == 3.0);
    CHECK(euclidean_distance(Vector{1.0, 0.0}, Vector{0.0, 1.0}) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(add(a, Vector{1.0}), std::invalid_argument);
}

TEST_CASE("accumulate_outer") {
    Matrix m(2, 3, 1.0);
    accumulate_outer(m, Vector{1.0, 2.0}, Vector{3.0, 4.0, 5.0});
    CHECK(m(0, 0) == 4.0);
    CHECK(m(0, 2) == 6.0);
    CHECK(m(1, 1) == 9.0);
    CHECK_THROWS_AS(accumulate_outer(m, Vector{1.0}, Vector{1.0, 2.0, 3.0}),
                    std::invalid_argument);
}
