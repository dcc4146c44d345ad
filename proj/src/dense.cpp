#include "bsb/dense.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace bsb {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

namespace {

inline void check_mm(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("matmul: shape mismatch");
}

// ikj order so the inner loop streams over contiguous rows of b.
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
    double* ri = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        const double* bk = b.row(k);
        for (std::size_t j = 0; j < b.cols; ++j) ri[j] += aik * bk[j];
    }
}

}  // namespace

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_mm(a, b);
    Matrix out(a.rows, b.cols);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < a.rows; ++i) matmul_row(a, b, out, i);
    return out;
}

Vec matvec(const Matrix& a, const Vec& v) {
    if (a.cols != v.size()) throw std::invalid_argument("matvec: shape mismatch");
    Vec out(a.rows, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ri = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += ri[j] * v[j];
        out[i] = s;
    }
    return out;
}

Vec vecmat(const Vec& v, const Matrix& a) {
    if (a.rows != v.size()) throw std::invalid_argument("vecmat: shape mismatch");
    Vec out(a.cols, 0.0);
    // column result written serially per j keeps the sum order fixed
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t j = 0; j < a.cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) s += v[i] * a(i, j);
        out[j] = s;
    }
    return out;
}

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
    check_mm(a, b);
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) matmul_row(a, b, out, i);
    return out;
}

Vec matvec(const Matrix& a, const Vec& v) {
    if (a.cols != v.size()) throw std::invalid_argument("matvec: shape mismatch");
    Vec out(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* ri = a.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += ri[j] * v[j];
        out[i] = s;
    }
    return out;
}

Vec vecmat(const Vec& v, const Matrix& a) {
    if (a.rows != v.size()) throw std::invalid_argument("vecmat: shape mismatch");
    Vec out(a.cols, 0.0);
    for (std::size_t j = 0; j < a.cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) s += v[i] * a(i, j);
        out[j] = s;
    }
    return out;
}

}  // namespace serial

double max_abs(const Vec& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

double sup_diff(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows || a.cols != b.cols)
        throw std::invalid_argument("sup_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    return m;
}

double sup_diff(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw std::invalid_argument("sup_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

void configure_threads_from_env() {
#ifdef _OPENMP
    if (const char* s = std::getenv("BSB_THREADS")) {
        int n = std::atoi(s);
        if (n > 0) omp_set_num_threads(n);
    }
#endif
}

}  // namespace bsb
