#pragma once

#include <cstddef>

// Inner matrix kernels. Loop orders chosen so the inner loop always runs
// over contiguous memory; -O3 vectorizes these well enough for desk scale.
namespace clcsca::kernels {

// C[m,n] += or = A[m,k] * B[k,n]
inline void mm_nn(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += or = A[m,k] * B[n,k]^T  (rows of A dotted with rows of B)
inline void mm_nt(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = accumulate ? crow[j] + s : s;
        }
    }
}

// C[k,n] += or = A[m,k]^T * B[m,n]
inline void mm_tn(const double* a, const double* b, double* c,
                  std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    if (!accumulate) {
        for (std::size_t i = 0; i < k * n; ++i) c[i] = 0.0;
    }
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace clcsca::kernels
