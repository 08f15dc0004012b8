// Dense row-major matrix used throughout the model core. Matrix products go
// through CBLAS; everything else is plain loops.
#pragma once

#include <cblas.h>

#include <cassert>
#include <cstddef>
#include <vector>

namespace metal {

template <class S>
struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<S> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, S(0)) {}
    Mat(int r, int c, std::vector<S> data) : rows(r), cols(c), a(std::move(data)) {
        assert(a.size() == static_cast<size_t>(r) * c);
    }

    S& operator()(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
    S operator()(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    void fill(S v) { std::fill(a.begin(), a.end(), v); }
};

inline void gemm_raw(bool ta, bool tb, int m, int n, int k, float alpha, const float* A, int lda,
                     const float* B, int ldb, float beta, float* C, int ldc) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, A, lda, B, ldb, beta, C, ldc);
}

inline void gemm_raw(bool ta, bool tb, int m, int n, int k, double alpha, const double* A, int lda,
                     const double* B, int ldb, double beta, double* C, int ldc) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, A, lda, B, ldb, beta, C, ldc);
}

// C = alpha * op(A) * op(B) + beta * C, with op() controlled by ta/tb.
template <class S>
void gemm(bool ta, bool tb, S alpha, const Mat<S>& A, const Mat<S>& B, S beta, Mat<S>& C) {
    const int m = ta ? A.cols : A.rows;
    const int k = ta ? A.rows : A.cols;
    const int kb = tb ? B.cols : B.rows;
    const int n = tb ? B.rows : B.cols;
    assert(k == kb);
    (void)kb;
    assert(C.rows == m && C.cols == n);
    gemm_raw(ta, tb, m, n, k, alpha, A.a.data(), A.cols, B.a.data(), B.cols, beta, C.a.data(),
             C.cols);
}

template <class S>
Mat<S> matmul_val(const Mat<S>& A, const Mat<S>& B, bool ta = false, bool tb = false) {
    Mat<S> C(ta ? A.cols : A.rows, tb ? B.rows : B.cols);
    gemm(ta, tb, S(1), A, B, S(0), C);
    return C;
}

}  // namespace metal
