// Benchmarks the serial reference kernels against the OpenMP variants and
// verifies that both produce identical bits.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "kepler/kernels.hpp"
#include "kepler/rng.hpp"

using namespace kepler;

namespace {

double now() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    return v;
}

template <typename F>
double time_best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const double t0 = now();
        f();
        best = std::min(best, now() - t0);
    }
    return best;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
    return std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

} // namespace

int main(int argc, char** argv) {
    int n = 256, reps = 3, threads = 0;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string flag = argv[i];
        const int value = std::atoi(argv[i + 1]);
        if (flag == "--size") n = value;
        else if (flag == "--reps") reps = value;
        else if (flag == "--threads") threads = value;
        else {
            std::fprintf(stderr, "usage: kernel_bench [--size N] [--reps R] [--threads T]\n");
            return 1;
        }
    }

    Rng rng(7);
    std::printf("%-24s %12s %12s %9s %6s\n", "kernel", "serial_s", "parallel_s", "speedup",
                "bits");

    // matmul n x n x n
    {
        const auto a = random_vec(static_cast<std::size_t>(n) * n, rng);
        const auto b = random_vec(static_cast<std::size_t>(n) * n, rng);
        std::vector<double> c_serial(static_cast<std::size_t>(n) * n);
        std::vector<double> c_parallel(c_serial.size());
        const double ts = time_best_of(reps, [&] {
            kernels::matmul_serial(a.data(), b.data(), c_serial.data(), n, n, n, false, false);
        });
        if (threads > 0) kernels::set_threads(threads);
        const double tp = time_best_of(reps, [&] {
            kernels::matmul_parallel(a.data(), b.data(), c_parallel.data(), n, n, n, false,
                                     false);
        });
        std::printf("%-24s %12.6f %12.6f %8.2fx %6s\n",
                    ("matmul " + std::to_string(n) + "^3").c_str(), ts, tp, ts / tp,
                    same_bits(c_serial, c_parallel) ? "equal" : "DIFF");
    }

    // candidate scoring over a 200k x 64 table
    {
        const int rows = 200000, d = 64;
        const auto table = random_vec(static_cast<std::size_t>(rows) * d, rng);
        const auto q = random_vec(d, rng);
        std::vector<double> out_serial(rows), out_parallel(rows);
        const double ts = time_best_of(reps, [&] {
            kernels::pnorm_to_rows_serial(q.data(), table.data(), out_serial.data(), rows, d, 1);
        });
        const double tp = time_best_of(reps, [&] {
            kernels::pnorm_to_rows_parallel(q.data(), table.data(), out_parallel.data(), rows, d,
                                            1);
        });
        std::printf("%-24s %12.6f %12.6f %8.2fx %6s\n", "pnorm_to_rows 200k x 64", ts, tp,
                    ts / tp, same_bits(out_serial, out_parallel) ? "equal" : "DIFF");
        std::printf("  scoring throughput: %.3g candidates/s (serial)\n", rows / ts);

        const double tds = time_best_of(reps, [&] {
            kernels::dot_rows_serial(q.data(), table.data(), out_serial.data(), rows, d);
        });
        const double tdp = time_best_of(reps, [&] {
            kernels::dot_rows_parallel(q.data(), table.data(), out_parallel.data(), rows, d);
        });
        std::printf("%-24s %12.6f %12.6f %8.2fx %6s\n", "dot_rows 200k x 64", tds, tdp,
                    tds / tdp, same_bits(out_serial, out_parallel) ? "equal" : "DIFF");
    }
    return 0;
}
