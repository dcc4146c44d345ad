#ifndef BSB_DENSE_HPP
#define BSB_DENSE_HPP

#include <cstddef>
#include <vector>

namespace bsb {

using Vec = std::vector<double>;

/// Dense row-major matrix. Small enough instances that we keep everything dense.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row(std::size_t i) { return data.data() + i * cols; }
    const double* row(std::size_t i) const { return data.data() + i * cols; }

    static Matrix identity(std::size_t n);
};

// Hot kernels. The unqualified versions use OpenMP when compiled with it;
// bsb::serial keeps plain single-threaded loops as the reference used by
// tests and the benchmark.

Matrix matmul(const Matrix& a, const Matrix& b);
Vec matvec(const Matrix& a, const Vec& v);   // a * v
Vec vecmat(const Vec& v, const Matrix& a);   // v^T * a

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Vec matvec(const Matrix& a, const Vec& v);
Vec vecmat(const Vec& v, const Matrix& a);
}  // namespace serial

double max_abs(const Vec& v);
double sup_diff(const Matrix& a, const Matrix& b);
double sup_diff(const Vec& a, const Vec& b);

/// Reads BSB_THREADS and caps the OpenMP thread count. No-op without OpenMP.
void configure_threads_from_env();

}  // namespace bsb

#endif
