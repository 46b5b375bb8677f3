#include "cstwa/matrix.hpp"

#include <cmath>
#include <string>

namespace cstwa {

namespace {

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes (" + std::to_string(a.rows) + "x" +
                     std::to_string(a.cols) + ") vs (" + std::to_string(b.rows) + "x" +
                     std::to_string(b.cols) + ")");
}

} // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) shape_fail("matmul", a, b);
    Matrix c(a.rows, b.cols);
    for (Index i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (Index k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.row(k);
            for (Index j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) shape_fail("matmul_tn", a, b);
    Matrix c(a.cols, b.cols);
    for (Index i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        const double* brow = b.row(i);
        for (Index p = 0; p < a.cols; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c.row(p);
            for (Index j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols != b.cols) shape_fail("matmul_nt", a, b);
    return matmul(a, transpose(b));
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (Index i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        for (Index j = 0; j < a.cols; ++j) t.at(j, i) = arow[j];
    }
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) c.v[i] = a.v[i] * b.v[i];
    return c;
}

void add_rowwise_inplace(Matrix& a, std::span<const double> bias) {
    if (static_cast<std::size_t>(a.cols) != bias.size())
        throw ShapeError("add_rowwise: bias length " + std::to_string(bias.size()) + " vs cols " +
                         std::to_string(a.cols));
    for (Index i = 0; i < a.rows; ++i) {
        double* arow = a.row(i);
        for (Index j = 0; j < a.cols; ++j) arow[j] += bias[static_cast<std::size_t>(j)];
    }
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c(a.rows, a.cols);
    for (std::size_t i = 0; i < a.size(); ++i) c.v[i] = a.v[i] + b.v[i];
    return c;
}

Matrix blend(double alpha, const Matrix& fresh, double beta, const Matrix& prev) {
    require_same_shape(fresh, prev, "blend");
    Matrix c(fresh.rows, fresh.cols);
    for (std::size_t i = 0; i < fresh.size(); ++i) c.v[i] = alpha * fresh.v[i] + beta * prev.v[i];
    return c;
}

bool all_finite(std::span<const double> xs) {
    for (const double x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

void require_finite(std::span<const double> xs, const char* what) {
    if (!all_finite(xs)) throw NumericError(std::string("non-finite values in ") + what);
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (a.rows != b.rows || a.cols != b.cols) shape_fail(what, a, b);
}

} // namespace cstwa
