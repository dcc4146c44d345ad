#include "bsb/ou_gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "bsb/rng.hpp"

namespace bsb {

namespace {

// Cholesky factor of a small SPD matrix; empty on failure.
bool cholesky(const Matrix& a, Matrix& l) {
    const std::size_t n = a.rows;
    if (a.cols != n) return false;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j)
            if (std::fabs(a(i, j) - a(j, i)) > 1e-12 * (1.0 + std::fabs(a(i, j)))) return false;
    l = Matrix(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) return false;
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return true;
}

// Solves A X = B with A = L L^T.
Matrix chol_solve(const Matrix& l, const Matrix& b) {
    const std::size_t n = l.rows;
    Matrix x = b;
    for (std::size_t col = 0; col < b.cols; ++col) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x(i, col);
            for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * x(k, col);
            x(i, col) = s / l(i, i);
        }
        for (std::size_t i = n; i-- > 0;) {
            double s = x(i, col);
            for (std::size_t k = i + 1; k < n; ++k) s -= l(k, i) * x(k, col);
            x(i, col) = s / l(i, i);
        }
    }
    return x;
}

double chol_logdet(const Matrix& l) {
    double s = 0.0;
    for (std::size_t i = 0; i < l.rows; ++i) s += std::log(l(i, i));
    return 2.0 * s;
}

Matrix gamma2(double c) {
    Matrix m(2, 2);
    m(0, 0) = m(1, 1) = 1.0;
    m(0, 1) = m(1, 0) = c;
    return m;
}

Matrix submatrix(const Matrix& a, const std::vector<std::size_t>& rows,
                 const std::vector<std::size_t>& cols) {
    Matrix m(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j) m(i, j) = a(rows[i], cols[j]);
    return m;
}

Matrix mul2(const Matrix& a, const Matrix& b) { return serial::matmul(a, b); }

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

double trace(const Matrix& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) s += a(i, i);
    return s;
}

/// Conditional law of coords B given coords A for a centred Gaussian.
struct Conditional {
    Matrix mean_map;  // |B| x |A|
    Matrix cov;       // |B| x |B|
};

Conditional condition_on(const Matrix& sigma, const std::vector<std::size_t>& a_idx,
                         const std::vector<std::size_t>& b_idx) {
    Matrix saa = submatrix(sigma, a_idx, a_idx);
    Matrix sba = submatrix(sigma, b_idx, a_idx);
    Matrix sbb = submatrix(sigma, b_idx, b_idx);
    Matrix l;
    if (!cholesky(saa, l)) throw std::invalid_argument("condition_on: conditioning block not SPD");
    Matrix inv_saa_sab = chol_solve(l, transpose(sba));  // |A| x |B|
    Conditional out;
    out.mean_map = transpose(inv_saa_sab);
    Matrix corr = mul2(out.mean_map, transpose(sba));
    out.cov = sbb;
    for (std::size_t i = 0; i < out.cov.data.size(); ++i) out.cov.data[i] -= corr.data[i];
    return out;
}

}  // namespace

Matrix ToeplitzCov::assemble() const {
    Matrix m(4, 4);
    const double row[4] = {1.0, r, s, c};
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            m(i, j) = row[i > j ? i - j : j - i];
    return m;
}

BridgePoint bridge_marginal(const OUBridgeParams& p, double t) {
    if (!(p.T > 0.0)) throw std::invalid_argument("bridge_marginal: T must be > 0");
    if (t < 0.0 || t > p.T) throw std::invalid_argument("bridge_marginal: t outside [0,T]");
    const double sT = std::sinh(p.T);
    const double sa = std::sinh(p.T - t);
    const double sb = std::sinh(t);
    return {sa / sT * p.x + sb / sT * p.y, 2.0 * sa * sb / sT};
}

Vec sample_bridge(const OUBridgeParams& p, const Vec& times, std::uint64_t seed) {
    if (!(p.T > 0.0)) throw std::invalid_argument("sample_bridge: T must be > 0");
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < 0.0 || times[i] > p.T)
            throw std::invalid_argument("sample_bridge: time outside [0,T]");
        if (i > 0 && times[i] < times[i - 1])
            throw std::invalid_argument("sample_bridge: times must be sorted");
    }
    Rng rng(seed);
    Vec out;
    out.reserve(times.size());
    double t_prev = 0.0;
    double v = p.x;
    for (double t : times) {
        const double h = p.T - t_prev;  // remaining horizon, bridge from (v) to (y)
        const double s = t - t_prev;
        if (s == 0.0 && t_prev == 0.0 && t == 0.0) {
            out.push_back(p.x);
            continue;
        }
        OUBridgeParams seg{v, p.y, h};
        BridgePoint bp = bridge_marginal(seg, s);
        v = bp.mean + std::sqrt(std::max(0.0, bp.variance)) * rng.normal();
        if (t >= p.T) v = p.y;  // exact pin, no roundoff residue
        t_prev = t;
        out.push_back(v);
    }
    return out;
}

double mixture_variance(const BridgeMixtureSpec& spec, double t) {
    if (!(spec.T > 0.0)) throw std::invalid_argument("mixture_variance: T must be > 0");
    if (t < 0.0 || t > spec.T)
        throw std::invalid_argument("mixture_variance: t outside [0,T]");
    const double sT = std::sinh(spec.T);
    const double sa = std::sinh(spec.T - t);
    const double sb = std::sinh(t);
    return (sa * sa + 2.0 * spec.rho * sa * sb + sb * sb) / (sT * sT) + 2.0 * sa * sb / sT;
}

bool verify_invariance(const BridgeMixtureSpec& spec, double tol) {
    if (!(tol > 0.0)) throw std::invalid_argument("verify_invariance: tol must be > 0");
    double worst = 0.0;
    for (int i = 0; i <= 100; ++i) {
        const double t = spec.T * static_cast<double>(i) / 100.0;
        worst = std::max(worst, std::fabs(mixture_variance(spec, t) - 1.0));
    }
    return worst <= tol;
}

std::array<double, 4> toeplitz_eigenvalues(const ToeplitzCov& tc) {
    const double r = tc.r, s = tc.s, c = tc.c;
    // discriminants are (c-r)^2 + 4(r+-s)^2, nonnegative by inspection
    const double d1 = c * c - 2.0 * c * r + 5.0 * r * r + 8.0 * r * s + 4.0 * s * s;
    const double d2 = c * c - 2.0 * c * r + 5.0 * r * r - 8.0 * r * s + 4.0 * s * s;
    const double q1 = std::sqrt(std::max(0.0, d1));
    const double q2 = std::sqrt(std::max(0.0, d2));
    std::array<double, 4> ev = {0.5 * (c + r + 2.0 + q1), 0.5 * (c + r + 2.0 - q1),
                                0.5 * (-c - r + 2.0 + q2), 0.5 * (-c - r + 2.0 - q2)};
    std::sort(ev.begin(), ev.end());
    return ev;
}

std::optional<std::pair<double, double>> feasible_c_interval(double r, double s) {
    if (!(std::fabs(r) < 1.0)) throw std::invalid_argument("feasible_c_interval: need |r| < 1");
    if (!(s > 2.0 * r * r - 1.0 && s < 1.0)) return std::nullopt;
    const double lo = (s * s + 2.0 * r * s + r * r - r - 1.0) / (r + 1.0);
    const double hi = (s * s - 2.0 * r * s + r * r + r - 1.0) / (r - 1.0);
    if (!(lo < hi)) return std::nullopt;
    return std::make_pair(lo, hi);
}

double gaussian_kl(const Matrix& cov1, const Matrix& cov2) {
    if (cov1.rows != cov1.cols || cov2.rows != cov2.cols || cov1.rows != cov2.rows)
        throw std::invalid_argument("gaussian_kl: dimension mismatch");
    Matrix l1, l2;
    if (!cholesky(cov1, l1)) throw std::invalid_argument("gaussian_kl: cov1 not SPD");
    if (!cholesky(cov2, l2)) throw std::invalid_argument("gaussian_kl: cov2 not SPD");
    Matrix ratio = chol_solve(l2, cov1);  // cov2^{-1} cov1
    const double d = static_cast<double>(cov1.rows);
    return 0.5 * (trace(ratio) - d + chol_logdet(l2) - chol_logdet(l1));
}

ExistenceReport existence_certificate(double c) {
    ExistenceReport rep;
    rep.c = c;
    rep.r = std::exp(-1.0 / 3.0);
    const double r = rep.r;
    const double s_lo = 2.0 * r * r - 1.0;
    const double s_hi = 1.0;

    auto min_eig = [&](double s) {
        return toeplitz_eigenvalues({r, s, c})[0];
    };

    // coarse scan, then ternary refinement of the best witness
    double best_s = 0.0, best = -std::numeric_limits<double>::infinity();
    const double step = 1e-3;
    for (double s = s_lo + step; s < s_hi; s += step) {
        const double v = min_eig(s);
        if (v > best) {
            best = v;
            best_s = s;
        }
    }
    {
        double lo = std::max(s_lo, best_s - step);
        double hi = std::min(s_hi, best_s + step);
        while (hi - lo > 1e-9) {
            const double m1 = lo + (hi - lo) / 3.0;
            const double m2 = hi - (hi - lo) / 3.0;
            if (min_eig(m1) < min_eig(m2))
                lo = m1;
            else
                hi = m2;
        }
        best_s = 0.5 * (lo + hi);
        best = min_eig(best_s);
    }
    rep.s = best_s;
    rep.min_eigenvalue = best;
    rep.cov = {r, best_s, c};
    const bool pd = best > 0.0;

    rep.endpoint_kl = std::fabs(c) < 1.0
                          ? gaussian_kl(gamma2(c), gamma2(std::exp(-1.0)))
                          : std::numeric_limits<double>::infinity();

    bool invariance = true;
    for (int segment = 0; segment < 3; ++segment)
        invariance = invariance && verify_invariance({r, 1.0 / 3.0}, 1e-10);
    rep.invariance_ok = invariance;

    if (pd) {
        // expected divergence of the interior pair law given the endpoints,
        // integrated over pi = gamma_c
        const Matrix sigma_q = rep.cov.assemble();
        const Matrix sigma_r = ToeplitzCov{r, std::exp(-2.0 / 3.0), std::exp(-1.0)}.assemble();
        const std::vector<std::size_t> ends = {0, 3}, mid = {1, 2};
        Conditional cq = condition_on(sigma_q, ends, mid);
        Conditional cr = condition_on(sigma_r, ends, mid);
        Matrix lr;
        if (!cholesky(cr.cov, lr))
            throw std::logic_error("existence_certificate: reference conditional not SPD");
        Matrix lq;
        if (!cholesky(cq.cov, lq))
            throw std::logic_error("existence_certificate: candidate conditional not SPD");
        Matrix ratio = chol_solve(lr, cq.cov);
        Matrix dm = cq.mean_map;
        for (std::size_t i = 0; i < dm.data.size(); ++i) dm.data[i] -= cr.mean_map.data[i];
        Matrix quad = chol_solve(lr, mul2(mul2(dm, gamma2(c)), transpose(dm)));
        rep.interior_kl = 0.5 * (trace(ratio) - 2.0 + chol_logdet(lr) - chol_logdet(lq) +
                                 trace(quad));
        rep.feasible = invariance && std::isfinite(rep.endpoint_kl) &&
                       std::isfinite(rep.interior_kl);
    } else {
        rep.interior_kl = std::numeric_limits<double>::quiet_NaN();
        rep.feasible = false;
    }
    return rep;
}

double mc_mixture_marginal_test(const BridgeMixtureSpec& spec, double t, std::size_t n,
                                std::uint64_t seed) {
    if (n < 1000) throw std::invalid_argument("mc_mixture_marginal_test: need n >= 1000");
    if (!(std::fabs(spec.rho) < 1.0))
        throw std::invalid_argument("mc_mixture_marginal_test: need |rho| < 1");
    Rng rng(seed);
    const double cr = std::sqrt(1.0 - spec.rho * spec.rho);
    double sum = 0.0, sumsq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double x = z1;
        const double y = spec.rho * z1 + cr * z2;
        BridgePoint bp = bridge_marginal({x, y, spec.T}, t);
        const double v = bp.mean + std::sqrt(std::max(0.0, bp.variance)) * rng.normal();
        sum += v;
        sumsq += v * v;
    }
    const double nn = static_cast<double>(n);
    const double mean = sum / nn;
    const double var = (sumsq - nn * mean * mean) / (nn - 1.0);
    const double target = mixture_variance(spec, t);
    const double se = target * std::sqrt(2.0 / (nn - 1.0));
    return (var - target) / se;
}

}  // namespace bsb
