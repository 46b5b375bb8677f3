#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cstwa/errors.hpp"

namespace cstwa {

using Index = std::int64_t;

// Dense row-major matrix of doubles. The reference numeric type everywhere;
// gradient checks require 64-bit precision.
struct Matrix {
    Index rows = 0;
    Index cols = 0;
    std::vector<double> v;

    Matrix() = default;
    Matrix(Index r, Index c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r * c), fill) {}

    double& at(Index i, Index j) { return v[static_cast<std::size_t>(i * cols + j)]; }
    double at(Index i, Index j) const { return v[static_cast<std::size_t>(i * cols + j)]; }

    double* row(Index i) { return v.data() + i * cols; }
    const double* row(Index i) const { return v.data() + i * cols; }

    std::span<double> row_span(Index i) { return {row(i), static_cast<std::size_t>(cols)}; }
    std::span<const double> row_span(Index i) const { return {row(i), static_cast<std::size_t>(cols)}; }

    std::size_t size() const { return v.size(); }
    void zero() { std::fill(v.begin(), v.end(), 0.0); }
};

// c = a * b,  a: (p,q)  b: (q,r)
Matrix matmul(const Matrix& a, const Matrix& b);

// c = a^T * b,  a: (q,p)  b: (q,r)  ->  (p,r)
Matrix matmul_tn(const Matrix& a, const Matrix& b);

// c = a * b^T,  a: (p,q)  b: (r,q)  ->  (p,r)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);

// out[i][j] = a[i][j] * b[i][j]
Matrix hadamard(const Matrix& a, const Matrix& b);

void add_rowwise_inplace(Matrix& a, std::span<const double> bias);

// a + b and alpha*a + beta*b, elementwise.
Matrix add(const Matrix& a, const Matrix& b);
Matrix blend(double alpha, const Matrix& fresh, double beta, const Matrix& prev);

bool all_finite(std::span<const double> xs);
void require_finite(std::span<const double> xs, const char* what);

void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

} // namespace cstwa
