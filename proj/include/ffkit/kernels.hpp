#pragma once

#include <cstdint>

namespace ffkit::kernels {

// Dense numeric kernels behind the tensor ops. Every parallel version assigns
// each output element to exactly one thread and keeps the per-element
// accumulation order of the serial reference, so results are bit-identical
// for any thread count. The serial references stay in the build for tests and
// for the benchmark target.

struct Conv2DDims {
    int64_t in_channels = 0, in_h = 0, in_w = 0;
    int64_t out_channels = 0, kernel_h = 0, kernel_w = 0;
    int64_t stride = 1, pad = 0;

    int64_t out_h() const { return (in_h + 2 * pad - kernel_h) / stride + 1; }
    int64_t out_w() const { return (in_w + 2 * pad - kernel_w) / stride + 1; }
};

// c[m x n] (+)= op(a) * op(b) with op = transpose when the flag is set;
// a is m x k (or k x m transposed), b is k x n (or n x k transposed).
template <class T>
void gemm_serial(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
                 const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm_omp(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
              const T* a, const T* b, T* c, bool accumulate);
template <class T>
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k,
          const T* a, const T* b, T* c, bool accumulate);

// y[oc,i,j] = bias[oc] + sum_{ic,u,v} x[ic, i*s-p+u, j*s-p+v] * w[oc,ic,u,v]
// (zero padding; bias may be null)
template <class T>
void conv2d_serial(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y);
template <class T>
void conv2d_omp(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y);
template <class T>
void conv2d(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y);

// dx += conv-transpose of dy with w (gather form: each dx element sums its
// contributing outputs in a fixed order)
template <class T>
void conv2d_grad_input_serial(const Conv2DDims& d, const T* dy, const T* w, T* dx);
template <class T>
void conv2d_grad_input_omp(const Conv2DDims& d, const T* dy, const T* w, T* dx);
template <class T>
void conv2d_grad_input(const Conv2DDims& d, const T* dy, const T* w, T* dx);

// dw += correlation of x with dy; dbias += per-channel sums (either may be null)
template <class T>
void conv2d_grad_weights_serial(const Conv2DDims& d, const T* x, const T* dy, T* dw, T* dbias);
template <class T>
void conv2d_grad_weights_omp(const Conv2DDims& d, const T* x, const T* dy, T* dw, T* dbias);
template <class T>
void conv2d_grad_weights(const Conv2DDims& d, const T* x, const T* dy, T* dw, T* dbias);

}  // namespace ffkit::kernels
