#include <chrono>
#include <cstdio>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "bsb/densities.hpp"
#include "bsb/generator.hpp"
#include "bsb/solver.hpp"

using Clock = std::chrono::high_resolution_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

bsb::Matrix random_matrix(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    bsb::Matrix m(n, n);
    for (double& v : m.data) v = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    return m;
}

int threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace

int main() {
    bsb::configure_threads_from_env();
    std::printf("kernel benchmark, %d thread(s)\n", threads());
    std::printf("%-28s %12s %12s %8s\n", "kernel", "serial [s]", "parallel [s]", "speedup");

    {
        const std::size_t n = 256;
        bsb::Matrix a = random_matrix(n, 1), b = random_matrix(n, 2);
        auto t0 = Clock::now();
        bsb::Matrix r1 = bsb::serial::matmul(a, b);
        for (int i = 0; i < 9; ++i) r1 = bsb::serial::matmul(a, b);
        const double ts = seconds_since(t0) / 10.0;
        t0 = Clock::now();
        bsb::Matrix r2 = bsb::matmul(a, b);
        for (int i = 0; i < 9; ++i) r2 = bsb::matmul(a, b);
        const double tp = seconds_since(t0) / 10.0;
        std::printf("%-28s %12.6f %12.6f %8.2f  (agree %.1e)\n", "matmul 256x256", ts, tp,
                    ts / tp, bsb::sup_diff(r1, r2));
    }

    {
        const std::size_t n = 2048;
        bsb::Matrix a = random_matrix(n, 3);
        bsb::Vec v(n, 1.0 / static_cast<double>(n));
        auto t0 = Clock::now();
        bsb::Vec r1;
        for (int i = 0; i < 50; ++i) r1 = bsb::serial::matvec(a, v);
        const double ts = seconds_since(t0) / 50.0;
        t0 = Clock::now();
        bsb::Vec r2;
        for (int i = 0; i < 50; ++i) r2 = bsb::matvec(a, v);
        const double tp = seconds_since(t0) / 50.0;
        std::printf("%-28s %12.6f %12.6f %8.2f  (agree %.1e)\n", "matvec 2048", ts, tp, ts / tp,
                    bsb::sup_diff(r1, r2));
    }

    {
        // end-to-end: one OU constrained solve (message passing dominates)
        bsb::Grid g = bsb::build_grid(64, 16.0, bsb::Topology::truncated);
        bsb::GeneratorMatrix gen = bsb::ou_generator(g);
        bsb::TransitionKernel k = bsb::transition(gen, 1.0 / 8.0);
        bsb::ReferenceChain chain = bsb::build_reference(k, 8, bsb::discretized_gaussian(g));
        bsb::ConstraintSet cs = bsb::make_constraints(
            chain, std::vector<bsb::Vec>(7, bsb::discretized_gaussian(g)),
            bsb::gaussian_coupling(g, 0.9));
        auto t0 = Clock::now();
        auto [pot, rep] = bsb::solve_bs(chain, cs, 1e-9, 500);
        const double tsolve = seconds_since(t0);
        std::printf("%-28s %12s %12.6f %8s  (%zu sweeps, gap %.1e)\n", "ou solve n=64 K=8", "-",
                    tsolve, "-", rep.iterations, rep.constraint_gap);
    }
    return 0;
}
