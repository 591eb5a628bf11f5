#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "common/testers.hpp"
#include "ffkit/kernels.hpp"

using namespace ffkit;
using namespace ffkit::kernels;

namespace {

// textbook reference with the same per-element (l ascending) term order
template <class T>
void gemm_naive(bool ta, bool tb, int64_t m, int64_t n, int64_t k, const T* a, const T* b, T* c,
                bool acc) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T s = acc ? c[i * n + j] : T(0);
            for (int64_t l = 0; l < k; ++l) {
                const T av = ta ? a[l * m + i] : a[i * k + l];
                const T bv = tb ? b[j * k + l] : b[l * n + j];
                s += av * bv;
            }
            c[i * n + j] = s;
        }
    }
}

// per-element direct convolution with (ic, u, v) term order
template <class T>
void conv_naive(const Conv2DDims& d, const T* x, const T* w, const T* bias, T* y) {
    const int64_t oh = d.out_h(), ow = d.out_w();
    for (int64_t oc = 0; oc < d.out_channels; ++oc) {
        for (int64_t i = 0; i < oh; ++i) {
            for (int64_t j = 0; j < ow; ++j) {
                T s = bias ? bias[oc] : T(0);
                for (int64_t ic = 0; ic < d.in_channels; ++ic) {
                    for (int64_t u = 0; u < d.kernel_h; ++u) {
                        for (int64_t v = 0; v < d.kernel_w; ++v) {
                            const int64_t yy = i * d.stride - d.pad + u;
                            const int64_t xx = j * d.stride - d.pad + v;
                            if (yy < 0 || yy >= d.in_h || xx < 0 || xx >= d.in_w) continue;
                            s += x[(ic * d.in_h + yy) * d.in_w + xx] *
                                 w[((oc * d.in_channels + ic) * d.kernel_h + u) * d.kernel_w + v];
                        }
                    }
                }
                y[(oc * oh + i) * ow + j] = s;
            }
        }
    }
}

template <class T>
std::vector<T> random_values(std::size_t n, Rng& rng) {
    std::vector<T> v(n);
    for (auto& x : v) x = T(rng.uniform(-2.0, 2.0));
    return v;
}

}  // namespace

TEST_CASE_TEMPLATE("gemm matches the naive reference bit for bit", T, float, double) {
    Rng rng(11);
    for (int t = 0; t < 60; ++t) {
        const int64_t m = 1 + int64_t(rng.uniform_int(24));
        const int64_t n = 1 + int64_t(rng.uniform_int(24));
        const int64_t k = 1 + int64_t(rng.uniform_int(24));
        const bool ta = rng.uniform01() < 0.5, tb = rng.uniform01() < 0.5;
        const bool acc = rng.uniform01() < 0.5;
        auto a = random_values<T>(std::size_t(m * k), rng);
        auto b = random_values<T>(std::size_t(k * n), rng);
        auto c0 = random_values<T>(std::size_t(m * n), rng);
        auto c1 = c0, c2 = c0;
        gemm_naive<T>(ta, tb, m, n, k, a.data(), b.data(), c0.data(), acc);
        gemm_serial<T>(ta, tb, m, n, k, a.data(), b.data(), c1.data(), acc);
        gemm_omp<T>(ta, tb, m, n, k, a.data(), b.data(), c2.data(), acc);
        CHECK(std::memcmp(c0.data(), c1.data(), c0.size() * sizeof(T)) == 0);
        CHECK(std::memcmp(c0.data(), c2.data(), c0.size() * sizeof(T)) == 0);
    }
}

TEST_CASE_TEMPLATE("conv2d forward serial, omp and naive agree bitwise", T, float, double) {
    Rng rng(13);
    for (int t = 0; t < 40; ++t) {
        Conv2DDims d;
        d.in_channels = 1 + int64_t(rng.uniform_int(5));
        d.in_h = 1 + int64_t(rng.uniform_int(14));
        d.in_w = 1 + int64_t(rng.uniform_int(14));
        d.out_channels = 1 + int64_t(rng.uniform_int(6));
        d.kernel_h = 1 + int64_t(rng.uniform_int(3));
        d.kernel_w = 1 + int64_t(rng.uniform_int(3));
        d.stride = 1 + int64_t(rng.uniform_int(2));
        d.pad = int64_t(rng.uniform_int(2));
        if (d.out_h() < 1 || d.out_w() < 1) continue;
        auto x = random_values<T>(std::size_t(d.in_channels * d.in_h * d.in_w), rng);
        auto w = random_values<T>(
            std::size_t(d.out_channels * d.in_channels * d.kernel_h * d.kernel_w), rng);
        auto bias = random_values<T>(std::size_t(d.out_channels), rng);
        const std::size_t out_n = std::size_t(d.out_channels * d.out_h() * d.out_w());
        std::vector<T> y0(out_n), y1(out_n), y2(out_n);
        conv_naive<T>(d, x.data(), w.data(), bias.data(), y0.data());
        conv2d_serial<T>(d, x.data(), w.data(), bias.data(), y1.data());
        conv2d_omp<T>(d, x.data(), w.data(), bias.data(), y2.data());
        CHECK(std::memcmp(y0.data(), y1.data(), out_n * sizeof(T)) == 0);
        CHECK(std::memcmp(y0.data(), y2.data(), out_n * sizeof(T)) == 0);
    }
}

TEST_CASE_TEMPLATE("conv2d gradients: serial and omp agree bitwise", T, float, double) {
    Rng rng(17);
    for (int t = 0; t < 30; ++t) {
        Conv2DDims d;
        d.in_channels = 1 + int64_t(rng.uniform_int(4));
        d.in_h = 2 + int64_t(rng.uniform_int(10));
        d.in_w = 2 + int64_t(rng.uniform_int(10));
        d.out_channels = 1 + int64_t(rng.uniform_int(5));
        d.kernel_h = 1 + int64_t(rng.uniform_int(3));
        d.kernel_w = 1 + int64_t(rng.uniform_int(3));
        d.stride = 1 + int64_t(rng.uniform_int(2));
        d.pad = int64_t(rng.uniform_int(2));
        if (d.out_h() < 1 || d.out_w() < 1) continue;
        const std::size_t xn = std::size_t(d.in_channels * d.in_h * d.in_w);
        const std::size_t wn =
            std::size_t(d.out_channels * d.in_channels * d.kernel_h * d.kernel_w);
        const std::size_t yn = std::size_t(d.out_channels * d.out_h() * d.out_w());
        auto x = random_values<T>(xn, rng);
        auto w = random_values<T>(wn, rng);
        auto dy = random_values<T>(yn, rng);

        std::vector<T> dx1(xn, T(0.5)), dx2(xn, T(0.5));
        conv2d_grad_input_serial<T>(d, dy.data(), w.data(), dx1.data());
        conv2d_grad_input_omp<T>(d, dy.data(), w.data(), dx2.data());
        CHECK(std::memcmp(dx1.data(), dx2.data(), xn * sizeof(T)) == 0);

        std::vector<T> dw1(wn, T(0.25)), dw2(wn, T(0.25));
        std::vector<T> db1(std::size_t(d.out_channels), T(0)), db2 = db1;
        conv2d_grad_weights_serial<T>(d, x.data(), dy.data(), dw1.data(), db1.data());
        conv2d_grad_weights_omp<T>(d, x.data(), dy.data(), dw2.data(), db2.data());
        CHECK(std::memcmp(dw1.data(), dw2.data(), wn * sizeof(T)) == 0);
        CHECK(std::memcmp(db1.data(), db2.data(), db1.size() * sizeof(T)) == 0);
    }
}

TEST_CASE("conv2d gradients satisfy the adjoint identity") {
    // <dy, conv(x)> == <conv_grad_input(dy), x> for linear (bias-free) conv
    Rng rng(19);
    Conv2DDims d;
    d.in_channels = 3;
    d.in_h = 9;
    d.in_w = 7;
    d.out_channels = 4;
    d.kernel_h = 3;
    d.kernel_w = 3;
    d.stride = 2;
    d.pad = 1;
    const std::size_t xn = std::size_t(d.in_channels * d.in_h * d.in_w);
    const std::size_t yn = std::size_t(d.out_channels * d.out_h() * d.out_w());
    const std::size_t wn = std::size_t(d.out_channels * d.in_channels * 9);
    auto x = random_values<double>(xn, rng);
    auto w = random_values<double>(wn, rng);
    auto dy = random_values<double>(yn, rng);
    std::vector<double> y(yn), dx(xn, 0.0);
    conv2d_serial<double>(d, x.data(), w.data(), nullptr, y.data());
    conv2d_grad_input_serial<double>(d, dy.data(), w.data(), dx.data());
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < yn; ++i) lhs += dy[i] * y[i];
    for (std::size_t i = 0; i < xn; ++i) rhs += dx[i] * x[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}
