#include "ffkit/kernels.hpp"

#include <cstring>
#include <utility>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ffkit::kernels {

namespace {

bool want_parallel(int64_t flops) {
#ifdef _OPENMP
    return !omp_in_parallel() && omp_get_max_threads() > 1 && flops >= (1 << 15);
#else
    (void)flops;
    return false;
#endif
}

template <class Body>
void for_rows(int64_t n, bool parallel, const Body& body) {
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < n; ++i) body(i);
    } else {
        for (int64_t i = 0; i < n; ++i) body(i);
    }
}

// Per output element the accumulation order is l ascending in every variant,
// so serial and parallel results match bit for bit.
template <class T>
void gemm_impl(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
               const T* a, const T* b, T* c, bool acc, bool parallel) {
    if (!ta && !tb) {
        for_rows(m, parallel, [&](int64_t i) {
            T* crow = c + i * n;
            if (!acc) std::memset(crow, 0, sizeof(T) * n);
            const T* arow = a + i * k;
            for (int64_t l = 0; l < k; ++l) {
                const T av = arow[l];
                const T* brow = b + l * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        });
    } else if (!ta && tb) {
        for_rows(m, parallel, [&](int64_t i) {
            T* crow = c + i * n;
            const T* arow = a + i * k;
            for (int64_t j = 0; j < n; ++j) {
                const T* brow = b + j * k;
                T s = 0;
                for (int64_t l = 0; l < k; ++l) s += arow[l] * brow[l];
                crow[j] = acc ? crow[j] + s : s;
            }
        });
    } else if (ta && !tb) {
        for_rows(m, parallel, [&](int64_t i) {
            T* crow = c + i * n;
            if (!acc) std::memset(crow, 0, sizeof(T) * n);
            for (int64_t l = 0; l < k; ++l) {
                const T av = a[l * m + i];
                const T* brow = b + l * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        });
    } else {
        for_rows(m, parallel, [&](int64_t i) {
            T* crow = c + i * n;
            for (int64_t j = 0; j < n; ++j) {
                const T* brow = b + j * k;
                T s = 0;
                for (int64_t l = 0; l < k; ++l) s += a[l * m + i] * brow[l];
                crow[j] = acc ? crow[j] + s : s;
            }
        });
    }
}

// output positions o with o*stride - pad + u inside [0, in_extent)
inline void out_range(int64_t u, int64_t stride, int64_t pad, int64_t in_extent,
                      int64_t out_extent, int64_t& o0, int64_t& o1) {
    const int64_t lo = pad - u;
    o0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
    const int64_t hi = in_extent - 1 + pad - u;
    o1 = hi < 0 ? 0 : std::min(out_extent, hi / stride + 1);
    if (o0 > o1) o0 = o1;
}

// Both conv passes run axpy style with the output column as the inner loop;
// each output element still accumulates its terms in (ic, u, v) order, and
// each input-gradient element in (oc, u, v) order, so results match a
// per-element reference bit for bit.
struct TapRanges {
    std::vector<int64_t> i0, i1, j0, j1;  // indexed by kernel tap

    TapRanges(const Conv2DDims& d) {
        const int64_t oh = d.out_h(), ow = d.out_w();
        i0.resize(std::size_t(d.kernel_h));
        i1.resize(std::size_t(d.kernel_h));
        j0.resize(std::size_t(d.kernel_w));
        j1.resize(std::size_t(d.kernel_w));
        for (int64_t u = 0; u < d.kernel_h; ++u)
            out_range(u, d.stride, d.pad, d.in_h, oh, i0[std::size_t(u)], i1[std::size_t(u)]);
        for (int64_t v = 0; v < d.kernel_w; ++v)
            out_range(v, d.stride, d.pad, d.in_w, ow, j0[std::size_t(v)], j1[std::size_t(v)]);
    }
};

template <class T>
void conv2d_impl(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y, bool parallel) {
    const int64_t oh = d.out_h(), ow = d.out_w();
    const int64_t ksz = d.kernel_h * d.kernel_w;
    const TapRanges r(d);
    for_rows(d.out_channels, parallel, [&](int64_t oc) {
        const T* wk = w + oc * d.in_channels * ksz;
        T* yc = y + oc * oh * ow;
        const T b0 = bias ? bias[oc] : T(0);
        for (int64_t t = 0; t < oh * ow; ++t) yc[t] = b0;
        for (int64_t ic = 0; ic < d.in_channels; ++ic) {
            const T* xc = x + ic * d.in_h * d.in_w;
            const T* wc = wk + ic * ksz;
            for (int64_t u = 0; u < d.kernel_h; ++u) {
                for (int64_t v = 0; v < d.kernel_w; ++v) {
                    const T wv = wc[u * d.kernel_w + v];
                    const int64_t j0 = r.j0[std::size_t(v)], j1 = r.j1[std::size_t(v)];
                    for (int64_t i = r.i0[std::size_t(u)]; i < r.i1[std::size_t(u)]; ++i) {
                        const T* xrow = xc + (i * d.stride - d.pad + u) * d.in_w - d.pad + v;
                        T* yrow = yc + i * ow;
                        for (int64_t j = j0; j < j1; ++j) yrow[j] += wv * xrow[j * d.stride];
                    }
                }
            }
        }
    });
}

template <class T>
void conv2d_grad_input_impl(const Conv2DDims& d, const T* dy, const T* w, T* dx, bool parallel) {
    const int64_t oh = d.out_h(), ow = d.out_w();
    const int64_t ksz = d.kernel_h * d.kernel_w;
    const TapRanges r(d);
    for_rows(d.in_channels, parallel, [&](int64_t ic) {
        T* dxc = dx + ic * d.in_h * d.in_w;
        for (int64_t oc = 0; oc < d.out_channels; ++oc) {
            const T* dyc = dy + oc * oh * ow;
            const T* wc = w + (oc * d.in_channels + ic) * ksz;
            for (int64_t u = 0; u < d.kernel_h; ++u) {
                for (int64_t v = 0; v < d.kernel_w; ++v) {
                    const T wv = wc[u * d.kernel_w + v];
                    const int64_t j0 = r.j0[std::size_t(v)], j1 = r.j1[std::size_t(v)];
                    for (int64_t i = r.i0[std::size_t(u)]; i < r.i1[std::size_t(u)]; ++i) {
                        const T* dyrow = dyc + i * ow;
                        T* dxrow = dxc + (i * d.stride - d.pad + u) * d.in_w - d.pad + v;
                        for (int64_t j = j0; j < j1; ++j) dxrow[j * d.stride] += wv * dyrow[j];
                    }
                }
            }
        }
    });
}

template <class T>
void conv2d_grad_weights_impl(const Conv2DDims& d, const T* x, const T* dy, T* dw, T* dbias,
                              bool parallel) {
    const int64_t oh = d.out_h(), ow = d.out_w();
    for_rows(d.out_channels, parallel, [&](int64_t oc) {
        const T* dyc = dy + oc * oh * ow;
        if (dbias) {
            T s = 0;
            for (int64_t t = 0; t < oh * ow; ++t) s += dyc[t];
            dbias[oc] += s;
        }
        if (!dw) return;
        for (int64_t ic = 0; ic < d.in_channels; ++ic) {
            const T* xc = x + ic * d.in_h * d.in_w;
            T* dwc = dw + (oc * d.in_channels + ic) * d.kernel_h * d.kernel_w;
            for (int64_t u = 0; u < d.kernel_h; ++u) {
                // output rows whose tap u lands inside the input
                int64_t i0 = 0;
                while (i0 < oh && i0 * d.stride - d.pad + u < 0) ++i0;
                int64_t i1 = oh;
                while (i1 > i0 && (i1 - 1) * d.stride - d.pad + u >= d.in_h) --i1;
                for (int64_t v = 0; v < d.kernel_w; ++v) {
                    int64_t j0 = 0;
                    while (j0 < ow && j0 * d.stride - d.pad + v < 0) ++j0;
                    int64_t j1 = ow;
                    while (j1 > j0 && (j1 - 1) * d.stride - d.pad + v >= d.in_w) --j1;
                    T s = 0;
                    for (int64_t i = i0; i < i1; ++i) {
                        const T* dyrow = dyc + i * ow;
                        const T* xrow = xc + (i * d.stride - d.pad + u) * d.in_w - d.pad + v;
                        for (int64_t j = j0; j < j1; ++j) s += dyrow[j] * xrow[j * d.stride];
                    }
                    dwc[u * d.kernel_w + v] += s;
                }
            }
        }
    });
}

}  // namespace

template <class T>
void gemm_serial(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
                 const T* a, const T* b, T* c, bool acc) {
    gemm_impl(ta, tb, m, n, k, a, b, c, acc, false);
}

template <class T>
void gemm_omp(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
              const T* a, const T* b, T* c, bool acc) {
    gemm_impl(ta, tb, m, n, k, a, b, c, acc, true);
}

template <class T>
void gemm(bool ta, bool tb, int64_t m, int64_t n, int64_t k,
          const T* a, const T* b, T* c, bool acc) {
    gemm_impl(ta, tb, m, n, k, a, b, c, acc, want_parallel(2 * m * n * k));
}

template <class T>
void conv2d_serial(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y) {
    conv2d_impl(d, x, w, bias, y, false);
}

template <class T>
void conv2d_omp(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y) {
    conv2d_impl(d, x, w, bias, y, true);
}

template <class T>
void conv2d(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y) {
    const int64_t flops =
        2 * d.out_channels * d.out_h() * d.out_w() * d.in_channels * d.kernel_h * d.kernel_w;
    conv2d_impl(d, x, w, bias, y, want_parallel(flops));
}

template <class T>
void conv2d_grad_input_serial(const Conv2DDims& d, const T* dy, const T* w, T* dx) {
    conv2d_grad_input_impl(d, dy, w, dx, false);
}

template <class T>
void conv2d_grad_input_omp(const Conv2DDims& d, const T* dy, const T* w, T* dx) {
    conv2d_grad_input_impl(d, dy, w, dx, true);
}

template <class T>
void conv2d_grad_input(const Conv2DDims& d, const T* dy, const T* w, T* dx) {
    const int64_t flops =
        2 * d.out_channels * d.out_h() * d.out_w() * d.in_channels * d.kernel_h * d.kernel_w;
    conv2d_grad_input_impl(d, dy, w, dx, want_parallel(flops));
}

template <class T>
void conv2d_grad_weights_serial(const Conv2DDims& d, const T* x, const T* dy, T* dw, T* dbias) {
    conv2d_grad_weights_impl(d, x, dy, dw, dbias, false);
}

template <class T>
void conv2d_grad_weights_omp(const Conv2DDims& d, const T* x, const T* dy, T* dw, T* dbias) {
    conv2d_grad_weights_impl(d, x, dy, dw, dbias, true);
}

template <class T>
void conv2d_grad_weights(const Conv2DDims& d, const T* x, const T* dy, T* dw, T* dbias) {
    const int64_t flops =
        2 * d.out_channels * d.out_h() * d.out_w() * d.in_channels * d.kernel_h * d.kernel_w;
    conv2d_grad_weights_impl(d, x, dy, dw, dbias, want_parallel(flops));
}

#define FFKIT_INSTANTIATE(T)                                                                      \
    template void gemm_serial<T>(bool, bool, int64_t, int64_t, int64_t, const T*, const T*, T*,   \
                                 bool);                                                           \
    template void gemm_omp<T>(bool, bool, int64_t, int64_t, int64_t, const T*, const T*, T*,      \
                              bool);                                                              \
    template void gemm<T>(bool, bool, int64_t, int64_t, int64_t, const T*, const T*, T*, bool);   \
    template void conv2d_serial<T>(const Conv2DDims&, const T*, const T*, const T*, T*);          \
    template void conv2d_omp<T>(const Conv2DDims&, const T*, const T*, const T*, T*);             \
    template void conv2d<T>(const Conv2DDims&, const T*, const T*, const T*, T*);                 \
    template void conv2d_grad_input_serial<T>(const Conv2DDims&, const T*, const T*, T*);         \
    template void conv2d_grad_input_omp<T>(const Conv2DDims&, const T*, const T*, T*);            \
    template void conv2d_grad_input<T>(const Conv2DDims&, const T*, const T*, T*);                \
    template void conv2d_grad_weights_serial<T>(const Conv2DDims&, const T*, const T*, T*, T*);   \
    template void conv2d_grad_weights_omp<T>(const Conv2DDims&, const T*, const T*, T*, T*);      \
    template void conv2d_grad_weights<T>(const Conv2DDims&, const T*, const T*, T*, T*);

FFKIT_INSTANTIATE(float)
FFKIT_INSTANTIATE(double)

#undef FFKIT_INSTANTIATE

}  // namespace ffkit::kernels
