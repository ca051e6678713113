#pragma once
// Hot numeric loops. Each kernel has a serial reference implementation and an
// OpenMP variant that partitions work across output rows; the per-element
// arithmetic (k-ascending accumulation) is identical in both, so results are
// bitwise equal for any thread count. The serial versions stay as the test
// oracle; tools/kernel_bench compares throughput.

#include <cstdint>

namespace kepler::kernels {

// Process-wide worker count. 1 = serial reference path.
void set_threads(int n);
int threads();

// C(m x n) = op(A) * op(B); op is transpose when the flag is set.
// A is m x k (or k x m transposed), B is k x n (or n x k transposed).
void matmul_serial(const double* a, const double* b, double* c,
                   int m, int k, int n, bool trans_a, bool trans_b);
void matmul_parallel(const double* a, const double* b, double* c,
                     int m, int k, int n, bool trans_a, bool trans_b);
void matmul(const double* a, const double* b, double* c,
            int m, int k, int n, bool trans_a, bool trans_b);

// out[i] = || q - table[i] ||_p over n rows of width d, p in {1, 2}.
// Translational candidate scoring (evaluator hot path).
void pnorm_to_rows_serial(const double* q, const double* table, double* out,
                          int n, int d, int p);
void pnorm_to_rows_parallel(const double* q, const double* table, double* out,
                            int n, int d, int p);
void pnorm_to_rows(const double* q, const double* table, double* out,
                   int n, int d, int p);

// out[i] = || table[i] + shift - target ||_p. Head-side translational
// scoring; keeps the summand order of the scalar distance so ranks agree
// with per-candidate recomputation exactly.
void pnorm_shifted_rows_serial(const double* shift, const double* target, const double* table,
                               double* out, int n, int d, int p);
void pnorm_shifted_rows_parallel(const double* shift, const double* target, const double* table,
                                 double* out, int n, int d, int p);
void pnorm_shifted_rows(const double* shift, const double* target, const double* table,
                        double* out, int n, int d, int p);

// out[i] = sum_j w[j] * table[i][j]. Bilinear candidate scoring.
void dot_rows_serial(const double* w, const double* table, double* out, int n, int d);
void dot_rows_parallel(const double* w, const double* table, double* out, int n, int d);
void dot_rows(const double* w, const double* table, double* out, int n, int d);

} // namespace kepler::kernels
