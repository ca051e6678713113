#include "kepler/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace kepler::kernels {

namespace {
int g_threads = 1;

inline double cell(const double* m, int r, int c, int ld) {
    return m[static_cast<std::size_t>(r) * ld + c];
}

// One output element: dot product accumulated in ascending k.
// Shared by both paths so they are arithmetically identical.
inline double matmul_element(const double* a, const double* b, int i, int j,
                             int k, int m, int n, bool trans_a, bool trans_b) {
    double acc = 0.0;
    for (int kk = 0; kk < k; ++kk) {
        const double av = trans_a ? cell(a, kk, i, m) : cell(a, i, kk, k);
        const double bv = trans_b ? cell(b, j, kk, k) : cell(b, kk, j, n);
        acc += av * bv;
    }
    return acc;
}

inline double pnorm_element(const double* q, const double* row, int d, int p) {
    double acc = 0.0;
    if (p == 1) {
        for (int j = 0; j < d; ++j) acc += std::fabs(q[j] - row[j]);
        return acc;
    }
    for (int j = 0; j < d; ++j) {
        const double diff = q[j] - row[j];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

inline double pnorm_shifted_element(const double* shift, const double* target, const double* row,
                                    int d, int p) {
    double acc = 0.0;
    if (p == 1) {
        for (int j = 0; j < d; ++j) acc += std::fabs(row[j] + shift[j] - target[j]);
        return acc;
    }
    for (int j = 0; j < d; ++j) {
        const double diff = row[j] + shift[j] - target[j];
        acc += diff * diff;
    }
    return std::sqrt(acc);
}

inline double dot_element(const double* w, const double* row, int d) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += w[j] * row[j];
    return acc;
}
} // namespace

void set_threads(int n) {
    g_threads = n < 1 ? 1 : n;
#ifdef _OPENMP
    omp_set_num_threads(g_threads);
#endif
}

int threads() { return g_threads; }

void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n, bool trans_a, bool trans_b) {
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            c[static_cast<std::size_t>(i) * n + j] =
                matmul_element(a, b, i, j, k, m, n, trans_a, trans_b);
}

void matmul_parallel(const double* a, const double* b, double* c,
                     int m, int k, int n, bool trans_a, bool trans_b) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            c[static_cast<std::size_t>(i) * n + j] =
                matmul_element(a, b, i, j, k, m, n, trans_a, trans_b);
}

void matmul(const double* a, const double* b, double* c,
            int m, int k, int n, bool trans_a, bool trans_b) {
    if (g_threads > 1 && m > 1)
        matmul_parallel(a, b, c, m, k, n, trans_a, trans_b);
    else
        matmul_serial(a, b, c, m, k, n, trans_a, trans_b);
}

void pnorm_to_rows_serial(const double* q, const double* table, double* out,
                          int n, int d, int p) {
    if (p != 1 && p != 2) throw std::invalid_argument("pnorm_to_rows: p must be 1 or 2");
    for (int i = 0; i < n; ++i)
        out[i] = pnorm_element(q, table + static_cast<std::size_t>(i) * d, d, p);
}

void pnorm_to_rows_parallel(const double* q, const double* table, double* out,
                            int n, int d, int p) {
    if (p != 1 && p != 2) throw std::invalid_argument("pnorm_to_rows: p must be 1 or 2");
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        out[i] = pnorm_element(q, table + static_cast<std::size_t>(i) * d, d, p);
}

void pnorm_to_rows(const double* q, const double* table, double* out,
                   int n, int d, int p) {
    if (g_threads > 1 && n > 1)
        pnorm_to_rows_parallel(q, table, out, n, d, p);
    else
        pnorm_to_rows_serial(q, table, out, n, d, p);
}

void pnorm_shifted_rows_serial(const double* shift, const double* target, const double* table,
                               double* out, int n, int d, int p) {
    if (p != 1 && p != 2) throw std::invalid_argument("pnorm_shifted_rows: p must be 1 or 2");
    for (int i = 0; i < n; ++i)
        out[i] = pnorm_shifted_element(shift, target, table + static_cast<std::size_t>(i) * d,
                                       d, p);
}

void pnorm_shifted_rows_parallel(const double* shift, const double* target, const double* table,
                                 double* out, int n, int d, int p) {
    if (p != 1 && p != 2) throw std::invalid_argument("pnorm_shifted_rows: p must be 1 or 2");
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        out[i] = pnorm_shifted_element(shift, target, table + static_cast<std::size_t>(i) * d,
                                       d, p);
}

void pnorm_shifted_rows(const double* shift, const double* target, const double* table,
                        double* out, int n, int d, int p) {
    if (g_threads > 1 && n > 1)
        pnorm_shifted_rows_parallel(shift, target, table, out, n, d, p);
    else
        pnorm_shifted_rows_serial(shift, target, table, out, n, d, p);
}

void dot_rows_serial(const double* w, const double* table, double* out, int n, int d) {
    for (int i = 0; i < n; ++i)
        out[i] = dot_element(w, table + static_cast<std::size_t>(i) * d, d);
}

void dot_rows_parallel(const double* w, const double* table, double* out, int n, int d) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i)
        out[i] = dot_element(w, table + static_cast<std::size_t>(i) * d, d);
}

void dot_rows(const double* w, const double* table, double* out, int n, int d) {
    if (g_threads > 1 && n > 1)
        dot_rows_parallel(w, table, out, n, d);
    else
        dot_rows_serial(w, table, out, n, d);
}

} // namespace kepler::kernels
