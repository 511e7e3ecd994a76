#include "gemm.hpp"

#include <algorithm>

namespace gastkit::nn::kernel {

namespace {

// Eight-lane vectors via the GCC/Clang vector extension; unaligned access.
typedef double v8 __attribute__((vector_size(64), aligned(8), may_alias));

constexpr std::size_t MR = 4;
constexpr std::size_t NR = 16;

inline v8 load(const double* p) { return *reinterpret_cast<const v8*>(p); }
inline void store(double* p, v8 v) { *reinterpret_cast<v8*>(p) = v; }
inline v8 splat(double x) { return v8{x, x, x, x, x, x, x, x}; }

inline double hsum(v8 v) {
    return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
}

// C[m x n] += A * B[k x n], A(i, p) = a[i * ars + p * acs].
void gemm_b_rowmajor(std::size_t m, std::size_t n, std::size_t k, const double* a, std::size_t ars, std::size_t acs,
                     const double* b, double* c) {
    std::size_t j0 = 0;
    for (; j0 + NR <= n; j0 += NR) {
        std::size_t i = 0;
        for (; i + MR <= m; i += MR) {
            v8 acc[MR][2] = {};
            const double* ap = a + i * ars;
            const double* bp = b + j0;
            for (std::size_t p = 0; p < k; ++p, bp += n) {
                const v8 b0 = load(bp), b1 = load(bp + 8);
                for (std::size_t r = 0; r < MR; ++r) {
                    const v8 av = splat(ap[r * ars + p * acs]);
                    acc[r][0] += av * b0;
                    acc[r][1] += av * b1;
                }
            }
            for (std::size_t r = 0; r < MR; ++r) {
                double* cr = c + (i + r) * n + j0;
                store(cr, load(cr) + acc[r][0]);
                store(cr + 8, load(cr + 8) + acc[r][1]);
            }
        }
        for (; i < m; ++i) {
            v8 acc0 = {}, acc1 = {};
            const double* bp = b + j0;
            for (std::size_t p = 0; p < k; ++p, bp += n) {
                const v8 av = splat(a[i * ars + p * acs]);
                acc0 += av * load(bp);
                acc1 += av * load(bp + 8);
            }
            double* cr = c + i * n + j0;
            store(cr, load(cr) + acc0);
            store(cr + 8, load(cr + 8) + acc1);
        }
    }
    if (j0 < n) {
        for (std::size_t i = 0; i < m; ++i) {
            double* cr = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a[i * ars + p * acs];
                const double* bp = b + p * n;
                for (std::size_t j = j0; j < n; ++j) cr[j] += av * bp[j];
            }
        }
    }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    gemm_b_rowmajor(m, n, k, a, k, 1, b, c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    gemm_b_rowmajor(m, n, k, a, 1, m, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c) {
    // Blocks of 4 rows of A against 2 rows of B, both walked along k.
    constexpr std::size_t BR = 2;
    const std::size_t kv = k - k % 8;
    auto tail = [&](const double* x, const double* y) {
        double s = 0.0;
        for (std::size_t t = kv; t < k; ++t) s += x[t] * y[t];
        return s;
    };
    std::size_t i = 0;
    for (; i + MR <= m; i += MR) {
        std::size_t j = 0;
        for (; j + BR <= n; j += BR) {
            v8 acc[MR][BR] = {};
            const double* ar = a + i * k;
            const double* br = b + j * k;
            for (std::size_t t = 0; t < kv; t += 8) {
                const v8 b0 = load(br + t), b1 = load(br + k + t);
                for (std::size_t r = 0; r < MR; ++r) {
                    const v8 av = load(ar + r * k + t);
                    acc[r][0] += av * b0;
                    acc[r][1] += av * b1;
                }
            }
            for (std::size_t r = 0; r < MR; ++r)
                for (std::size_t q = 0; q < BR; ++q)
                    c[(i + r) * n + j + q] += hsum(acc[r][q]) + tail(ar + r * k, br + q * k);
        }
        for (; j < n; ++j) {
            for (std::size_t r = 0; r < MR; ++r) {
                const double* ar = a + (i + r) * k;
                const double* br = b + j * k;
                v8 acc = {};
                for (std::size_t t = 0; t < kv; t += 8) acc += load(ar + t) * load(br + t);
                c[(i + r) * n + j] += hsum(acc) + tail(ar, br);
            }
        }
    }
    for (; i < m; ++i) {
        const double* ar = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* br = b + j * k;
            v8 acc = {};
            for (std::size_t t = 0; t < kv; t += 8) acc += load(ar + t) * load(br + t);
            c[i * n + j] += hsum(acc) + tail(ar, br);
        }
    }
}

}  // namespace gastkit::nn::kernel
