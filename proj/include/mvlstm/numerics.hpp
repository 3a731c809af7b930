#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace mvlstm {

// Dense double-precision vector. The only numeric currency of the library
// together with Matrix; everything recurrent is built on these two.
struct Vector {
    std::vector<double> data;

    Vector() = default;
    explicit Vector(std::size_t n, double value = 0.0) : data(n, value) {}
    Vector(std::initializer_list<double> xs) : data(xs) {}

    std::size_t size() const { return data.size(); }
    bool empty() const { return data.empty(); }
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }
    auto begin() { return data.begin(); }
    auto end() { return data.end(); }
    auto begin() const { return data.begin(); }
    auto end() const { return data.end(); }

    bool operator==(const Vector&) const = default;
};

// Row-major dense matrix.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double value = 0.0)
        : rows(r), cols(c), data(r * c, value) {}

    static Matrix identity(std::size_t n);

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    bool operator==(const Matrix&) const = default;
};

// m . v; throws std::invalid_argument naming both shapes on mismatch
Vector matvec(const Matrix& m, const Vector& v);

// m^T . v (reverse-mode companion of matvec)
Vector matvec_transposed(const Matrix& m, const Vector& v);

// m += u v^T
void accumulate_outer(Matrix& m, const Vector& u, const Vector& v);

// acc += m . v, accumulating in place; all gate pre-activation sums are
// assembled through this one helper so that structurally parallel paths
// execute the same instruction sequence (needed for exact tied-path checks)
void add_matvec(Vector& acc, const Matrix& m, const Vector& v);

Vector add(const Vector& a, const Vector& b);
Vector sub(const Vector& a, const Vector& b);
Vector hadamard(const Vector& a, const Vector& b);
void add_in_place(Vector& a, const Vector& b);
double dot(const Vector& a, const Vector& b);
double max_abs(const Vector& a);
double max_abs_diff(const Vector& a, const Vector& b);
double euclidean_distance(const Vector& a, const Vector& b);

// Numerically stable logistic; output clamped to the open interval (0,1)
// even where exp() would saturate the closed endpoints.
double sigmoid_scalar(double x);
// tanh clamped to the open interval (-1,1); odd symmetry preserved.
double tanh_scalar(double x);

Vector sigmoid(const Vector& v);
Vector tanh_act(const Vector& v);

}  // namespace mvlstm
