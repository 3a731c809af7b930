#include "mvlstm/numerics.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace mvlstm {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& m, const Vector& v) {
    std::ostringstream msg;
    msg << op << ": matrix is " << m.rows << "x" << m.cols << " but vector has dim "
        << v.size();
    throw std::invalid_argument(msg.str());
}

[[noreturn]] void dim_error(const char* op, std::size_t a, std::size_t b) {
    std::ostringstream msg;
    msg << op << ": vector dims " << a << " and " << b << " differ";
    throw std::invalid_argument(msg.str());
}

void check_same(const char* op, const Vector& a, const Vector& b) {
    if (a.size() != b.size()) dim_error(op, a.size(), b.size());
}

}  // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Vector matvec(const Matrix& m, const Vector& v) {
    if (m.cols != v.size()) shape_error("matvec", m, v);
    Vector out(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.data.data() + r * m.cols;
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += row[c] * v[c];
        out[r] = acc;
    }
    return out;
}

Vector matvec_transposed(const Matrix& m, const Vector& v) {
    if (m.rows != v.size()) shape_error("matvec_transposed", m, v);
    Vector out(m.cols);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.data.data() + r * m.cols;
        const double vr = v[r];
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += row[c] * vr;
    }
    return out;
}

void accumulate_outer(Matrix& m, const Vector& u, const Vector& v) {
    if (m.rows != u.size() || m.cols != v.size()) {
        std::ostringstream msg;
        msg << "accumulate_outer: matrix is " << m.rows << "x" << m.cols
            << " but outer product is " << u.size() << "x" << v.size();
        throw std::invalid_argument(msg.str());
    }
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* row = m.data.data() + r * m.cols;
        const double ur = u[r];
        for (std::size_t c = 0; c < m.cols; ++c) row[c] += ur * v[c];
    }
}

void add_matvec(Vector& acc, const Matrix& m, const Vector& v) {
    if (m.cols != v.size()) shape_error("add_matvec", m, v);
    if (m.rows != acc.size()) dim_error("add_matvec", acc.size(), m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* row = m.data.data() + r * m.cols;
        double sum = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) sum += row[c] * v[c];
        acc[r] += sum;
    }
}

Vector add(const Vector& a, const Vector& b) {
    check_same("add", a, b);
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
    return out;
}

Vector sub(const Vector& a, const Vector& b) {
    check_same("sub", a, b);
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
    check_same("hadamard", a, b);
    Vector out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
    return out;
}

void add_in_place(Vector& a, const Vector& b) {
    check_same("add_in_place", a, b);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

double dot(const Vector& a, const Vector& b) {
    check_same("dot", a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double max_abs(const Vector& a) {
    double m = 0.0;
    for (double x : a) m = std::max(m, std::abs(x));
    return m;
}

double max_abs_diff(const Vector& a, const Vector& b) {
    check_same("max_abs_diff", a, b);
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double euclidean_distance(const Vector& a, const Vector& b) {
    check_same("euclidean_distance", a, b);
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

double sigmoid_scalar(double x) {
    double r;
    if (x >= 0.0) {
        r = 1.0 / (1.0 + std::exp(-x));
    } else {
        const double e = std::exp(x);
        r = e / (1.0 + e);
    }
    // exp saturates for |x| beyond ~745; keep the contract's open interval
    if (r <= 0.0) return std::numeric_limits<double>::min();
    if (r >= 1.0) return std::nextafter(1.0, 0.0);
    return r;
}

double tanh_scalar(double x) {
    const double r = std::tanh(x);
    if (r >= 1.0) return std::nextafter(1.0, 0.0);
    if (r <= -1.0) return std::nextafter(-1.0, 0.0);
    return r;
}

Vector sigmoid(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = sigmoid_scalar(v[i]);
    return out;
}

Vector tanh_act(const Vector& v) {
    Vector out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = tanh_scalar(v[i]);
    return out;
}

}  // namespace mvlstm
