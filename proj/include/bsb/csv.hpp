#ifndef BSB_CSV_HPP
#define BSB_CSV_HPP

#include <string>
#include <vector>

#include "bsb/dense.hpp"

namespace bsb {

/// Write-temp-then-rename so readers never observe a partial file.
void write_text_atomic(const std::string& path, const std::string& content);

std::string format_double(double v);

/// Dense matrix dump with the `# n,dt,topology` header convention used for
/// generators (dt 0) and kernels.
void write_matrix_csv(const std::string& path, const Matrix& m, double dt,
                      const std::string& topology);

struct MatrixCsv {
    Matrix matrix;
    double dt = 0.0;
    std::string topology;
};

MatrixCsv read_matrix_csv(const std::string& path);

/// Long-form field dump: one `k,z,value` row per entry, row index offset by
/// k_offset (pressure and residual fields start at time 1).
void write_field_csv(const std::string& path, const Matrix& field, std::size_t k_offset);

/// Marginals with grid coordinates: `k,z,x,value`.
void write_marginals_csv(const std::string& path, const std::vector<Vec>& marginals,
                         const Vec& points);

}  // namespace bsb

#endif
