#include "bsb/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace bsb {

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp);
        out << content;
        if (!out) throw std::runtime_error("write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("rename failed for " + path);
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_matrix_csv(const std::string& path, const Matrix& m, double dt,
                      const std::string& topology) {
    std::ostringstream out;
    out << "# n,dt,topology\n";
    out << "# " << m.rows << "," << format_double(dt) << "," << topology << "\n";
    for (std::size_t i = 0; i < m.rows; ++i) {
        for (std::size_t j = 0; j < m.cols; ++j) {
            if (j) out << ",";
            out << format_double(m(i, j));
        }
        out << "\n";
    }
    write_text_atomic(path, out.str());
}

MatrixCsv read_matrix_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("# n,dt,topology", 0) != 0)
        throw std::runtime_error(path + ": missing header");
    if (!std::getline(in, line) || line.rfind("# ", 0) != 0)
        throw std::runtime_error(path + ": missing header values");
    MatrixCsv out;
    {
        std::istringstream hs(line.substr(2));
        std::string tok;
        std::getline(hs, tok, ',');
        const std::size_t n = static_cast<std::size_t>(std::stoul(tok));
        std::getline(hs, tok, ',');
        out.dt = std::stod(tok);
        std::getline(hs, out.topology, ',');
        out.matrix = Matrix(n, n);
    }
    for (std::size_t i = 0; i < out.matrix.rows; ++i) {
        if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated matrix");
        std::istringstream ls(line);
        std::string tok;
        for (std::size_t j = 0; j < out.matrix.cols; ++j) {
            if (!std::getline(ls, tok, ',')) throw std::runtime_error(path + ": short row");
            out.matrix(i, j) = std::stod(tok);
        }
    }
    return out;
}

void write_field_csv(const std::string& path, const Matrix& field, std::size_t k_offset) {
    std::ostringstream out;
    out << "k,z,value\n";
    for (std::size_t k = 0; k < field.rows; ++k)
        for (std::size_t z = 0; z < field.cols; ++z)
            out << (k + k_offset) << "," << z << "," << format_double(field(k, z)) << "\n";
    write_text_atomic(path, out.str());
}

void write_marginals_csv(const std::string& path, const std::vector<Vec>& marginals,
                         const Vec& points) {
    std::ostringstream out;
    out << "k,z,x,value\n";
    for (std::size_t k = 0; k < marginals.size(); ++k)
        for (std::size_t z = 0; z < marginals[k].size(); ++z)
            out << k << "," << z << "," << format_double(points[z]) << ","
                << format_double(marginals[k][z]) << "\n";
    write_text_atomic(path, out.str());
}

}  // namespace bsb
