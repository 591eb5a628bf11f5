#include "ffkit/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ffkit/kernels.hpp"

namespace ffkit::ad {

namespace {

template <class F>
void dispatch(Dtype dt, F&& f) {
    if (dt == Dtype::f64)
        f(double{});
    else
        f(float{});
}

void check_same_dtype(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw ShapeMismatch(std::string(op) + ": mixed dtypes");
}

void check_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeMismatch(std::string(op) + ": expected rank-2 tensor, got " +
                                           shape_str(t.shape()));
}

}  // namespace

Tensor& Node::ensure_grad() {
    if (!grad.defined()) grad = Tensor::zeros(value.shape(), value.dtype());
    return grad;
}

Var Graph::leaf(Tensor value, bool requires_grad, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->name = std::move(name);
    tape_.push_back(n);
    return n;
}

Var Graph::record(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> bw,
                  const char* op) {
    if (!value.all_finite()) throw NumericError(std::string(op) + ": non-finite output");
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& in : inputs) n->requires_grad = n->requires_grad || in->requires_grad;
    n->inputs = std::move(inputs);
    if (n->requires_grad) n->backward_fn = std::move(bw);
    tape_.push_back(n);
    return n;
}

Var Graph::matmul(Var a, Var b) {
    check_rank2(a->value, "matmul");
    check_rank2(b->value, "matmul");
    check_same_dtype(a->value, b->value, "matmul");
    const int64_t m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    if (b->value.dim(0) != k)
        throw ShapeMismatch("matmul: " + shape_str(a->value.shape()) + " x " +
                            shape_str(b->value.shape()));
    Tensor out = Tensor::uninit({m, n}, a->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::gemm<T>(false, false, m, n, k, a->value.data<T>(), b->value.data<T>(),
                         out.data<T>(), false);
    });
    return record(std::move(out), {a, b},
                  [m, k, n](Node& node) {
                      Var a = node.inputs[0], b = node.inputs[1];
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          if (a->requires_grad)
                              kernels::gemm<T>(false, true, m, k, n, dy, b->value.data<T>(),
                                               a->ensure_grad().data<T>(), true);
                          if (b->requires_grad)
                              kernels::gemm<T>(true, false, k, n, m, a->value.data<T>(), dy,
                                               b->ensure_grad().data<T>(), true);
                      });
                  },
                  "matmul");
}

Var Graph::add(Var a, Var b) {
    if (!a->value.same_shape(b->value))
        throw ShapeMismatch("add: " + shape_str(a->value.shape()) + " vs " +
                            shape_str(b->value.shape()));
    check_same_dtype(a->value, b->value, "add");
    Tensor out = Tensor::uninit(a->value.shape(), a->value.dtype());
    const int64_t n = out.numel();
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = a->value.data<T>();
        const T* pb = b->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
    });
    return record(std::move(out), {a, b},
                  [n](Node& node) {
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          for (int s = 0; s < 2; ++s) {
                              Var in = node.inputs[s];
                              if (!in->requires_grad) continue;
                              T* g = in->ensure_grad().data<T>();
                              for (int64_t i = 0; i < n; ++i) g[i] += dy[i];
                          }
                      });
                  },
                  "add");
}

Var Graph::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Graph::mul(Var a, Var b) {
    if (!a->value.same_shape(b->value))
        throw ShapeMismatch("mul: " + shape_str(a->value.shape()) + " vs " +
                            shape_str(b->value.shape()));
    check_same_dtype(a->value, b->value, "mul");
    Tensor out = Tensor::uninit(a->value.shape(), a->value.dtype());
    const int64_t n = out.numel();
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = a->value.data<T>();
        const T* pb = b->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
    });
    return record(std::move(out), {a, b},
                  [n](Node& node) {
                      Var a = node.inputs[0], b = node.inputs[1];
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          if (a->requires_grad) {
                              T* g = a->ensure_grad().data<T>();
                              const T* pb = b->value.data<T>();
                              for (int64_t i = 0; i < n; ++i) g[i] += dy[i] * pb[i];
                          }
                          if (b->requires_grad) {
                              T* g = b->ensure_grad().data<T>();
                              const T* pa = a->value.data<T>();
                              for (int64_t i = 0; i < n; ++i) g[i] += dy[i] * pa[i];
                          }
                      });
                  },
                  "mul");
}

Var Graph::scale(Var a, double s) {
    Tensor out = Tensor::uninit(a->value.shape(), a->value.dtype());
    const int64_t n = out.numel();
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = a->value.data<T>();
        T* po = out.data<T>();
        const T ts = T(s);
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * ts;
    });
    return record(std::move(out), {a},
                  [n, s](Node& node) {
                      Var a = node.inputs[0];
                      if (!a->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = a->ensure_grad().data<T>();
                          const T ts = T(s);
                          for (int64_t i = 0; i < n; ++i) g[i] += dy[i] * ts;
                      });
                  },
                  "scale");
}

Var Graph::add_scalar(Var a, double s) {
    Tensor out = Tensor::uninit(a->value.shape(), a->value.dtype());
    const int64_t n = out.numel();
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = a->value.data<T>();
        T* po = out.data<T>();
        const T ts = T(s);
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + ts;
    });
    return record(std::move(out), {a},
                  [n](Node& node) {
                      Var a = node.inputs[0];
                      if (!a->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = a->ensure_grad().data<T>();
                          for (int64_t i = 0; i < n; ++i) g[i] += dy[i];
                      });
                  },
                  "add_scalar");
}

Var Graph::relu(Var a) {
    Tensor out = Tensor::uninit(a->value.shape(), a->value.dtype());
    const int64_t n = out.numel();
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = a->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
    });
    // subgradient at 0 is 0
    return record(std::move(out), {a},
                  [n](Node& node) {
                      Var a = node.inputs[0];
                      if (!a->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          const T* pa = a->value.data<T>();
                          T* g = a->ensure_grad().data<T>();
                          for (int64_t i = 0; i < n; ++i)
                              if (pa[i] > T(0)) g[i] += dy[i];
                      });
                  },
                  "relu");
}

Var Graph::elementwise(EwKind kind, Var a) {
    if (kind != EwKind::relu) throw ShapeMismatch("elementwise: kind needs two operands");
    return relu(a);
}

Var Graph::elementwise(EwKind kind, Var a, Var b) {
    switch (kind) {
        case EwKind::add: return add(a, b);
        case EwKind::mul: return mul(a, b);
        default: throw ShapeMismatch("elementwise: kind does not take two tensors");
    }
}

Var Graph::elementwise(EwKind kind, Var a, double s) {
    switch (kind) {
        case EwKind::scale: return scale(a, s);
        case EwKind::add: return add_scalar(a, s);
        default: throw ShapeMismatch("elementwise: kind does not take a scalar");
    }
}

Var Graph::add_rowvec(Var x, Var b) {
    check_rank2(x->value, "add_rowvec");
    check_rank2(b->value, "add_rowvec");
    check_same_dtype(x->value, b->value, "add_rowvec");
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    if (b->value.dim(0) != 1 || b->value.dim(1) != c)
        throw ShapeMismatch("add_rowvec: bias " + shape_str(b->value.shape()) + " for " +
                            shape_str(x->value.shape()));
    Tensor out = Tensor::uninit({r, c}, x->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        const T* pb = b->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) po[i * c + j] = px[i * c + j] + pb[j];
    });
    return record(std::move(out), {x, b},
                  [r, c](Node& node) {
                      Var x = node.inputs[0], b = node.inputs[1];
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          if (x->requires_grad) {
                              T* g = x->ensure_grad().data<T>();
                              for (int64_t i = 0; i < r * c; ++i) g[i] += dy[i];
                          }
                          if (b->requires_grad) {
                              T* g = b->ensure_grad().data<T>();
                              for (int64_t i = 0; i < r; ++i)
                                  for (int64_t j = 0; j < c; ++j) g[j] += dy[i * c + j];
                          }
                      });
                  },
                  "add_rowvec");
}

Var Graph::reduce_max_rows(Var x) {
    check_rank2(x->value, "reduce_max_rows");
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    if (r < 1) throw ShapeMismatch("reduce_max_rows: empty input");
    Tensor out = Tensor::uninit({1, c}, x->value.dtype());
    auto argmax = std::make_shared<std::vector<int64_t>>(std::size_t(c), 0);
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        T* po = out.data<T>();
        for (int64_t j = 0; j < c; ++j) {
            T best = px[j];
            int64_t bi = 0;
            for (int64_t i = 1; i < r; ++i) {
                if (px[i * c + j] > best) {  // ties keep the first row
                    best = px[i * c + j];
                    bi = i;
                }
            }
            po[j] = best;
            (*argmax)[std::size_t(j)] = bi;
        }
    });
    return record(std::move(out), {x},
                  [c, argmax](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = x->ensure_grad().data<T>();
                          for (int64_t j = 0; j < c; ++j)
                              g[(*argmax)[std::size_t(j)] * c + j] += dy[j];
                      });
                  },
                  "reduce_max_rows");
}

Var Graph::softmax_rows(Var x) {
    check_rank2(x->value, "softmax_rows");
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    Tensor out = Tensor::uninit({r, c}, x->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < r; ++i) {
            T mx = px[i * c];
            for (int64_t j = 1; j < c; ++j) mx = std::max(mx, px[i * c + j]);
            T sum = 0;
            for (int64_t j = 0; j < c; ++j) {
                po[i * c + j] = std::exp(px[i * c + j] - mx);
                sum += po[i * c + j];
            }
            for (int64_t j = 0; j < c; ++j) po[i * c + j] /= sum;
        }
    });
    return record(std::move(out), {x},
                  [r, c](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          const T* y = node.value.data<T>();
                          T* g = x->ensure_grad().data<T>();
                          for (int64_t i = 0; i < r; ++i) {
                              T dot = 0;
                              for (int64_t j = 0; j < c; ++j) dot += dy[i * c + j] * y[i * c + j];
                              for (int64_t j = 0; j < c; ++j)
                                  g[i * c + j] += y[i * c + j] * (dy[i * c + j] - dot);
                          }
                      });
                  },
                  "softmax_rows");
}

Var Graph::mean_rows(Var x) {
    check_rank2(x->value, "mean_rows");
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    if (r < 1) throw ShapeMismatch("mean_rows: empty input");
    Tensor out = Tensor::uninit({1, c}, x->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        T* po = out.data<T>();
        for (int64_t j = 0; j < c; ++j) {
            T s = 0;
            for (int64_t i = 0; i < r; ++i) s += px[i * c + j];
            po[j] = s / T(r);
        }
    });
    return record(std::move(out), {x},
                  [r, c](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = x->ensure_grad().data<T>();
                          for (int64_t i = 0; i < r; ++i)
                              for (int64_t j = 0; j < c; ++j) g[i * c + j] += dy[j] / T(r);
                      });
                  },
                  "mean_rows");
}

Var Graph::broadcast_rows(Var x, int64_t rows) {
    check_rank2(x->value, "broadcast_rows");
    if (x->value.dim(0) != 1) throw ShapeMismatch("broadcast_rows: input must be 1 x c");
    const int64_t c = x->value.dim(1);
    Tensor out = Tensor::uninit({rows, c}, x->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < rows; ++i) std::memcpy(po + i * c, px, sizeof(T) * c);
    });
    return record(std::move(out), {x},
                  [rows, c](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = x->ensure_grad().data<T>();
                          for (int64_t i = 0; i < rows; ++i)
                              for (int64_t j = 0; j < c; ++j) g[j] += dy[i * c + j];
                      });
                  },
                  "broadcast_rows");
}

Var Graph::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeMismatch("concat_cols: no inputs");
    const int64_t r = xs[0]->value.dim(0);
    int64_t total = 0;
    for (const auto& x : xs) {
        check_rank2(x->value, "concat_cols");
        check_same_dtype(x->value, xs[0]->value, "concat_cols");
        if (x->value.dim(0) != r) throw ShapeMismatch("concat_cols: row mismatch");
        total += x->value.dim(1);
    }
    Tensor out = Tensor::uninit({r, total}, xs[0]->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T* po = out.data<T>();
        int64_t off = 0;
        for (const auto& x : xs) {
            const int64_t c = x->value.dim(1);
            const T* px = x->value.data<T>();
            for (int64_t i = 0; i < r; ++i)
                std::memcpy(po + i * total + off, px + i * c, sizeof(T) * c);
            off += c;
        }
    });
    return record(std::move(out), xs,
                  [r, total](Node& node) {
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          int64_t off = 0;
                          for (auto& in : node.inputs) {
                              const int64_t c = in->value.dim(1);
                              if (in->requires_grad) {
                                  T* g = in->ensure_grad().data<T>();
                                  for (int64_t i = 0; i < r; ++i)
                                      for (int64_t j = 0; j < c; ++j)
                                          g[i * c + j] += dy[i * total + off + j];
                              }
                              off += c;
                          }
                      });
                  },
                  "concat_cols");
}

Var Graph::slice_cols(Var x, int64_t from, int64_t to) {
    check_rank2(x->value, "slice_cols");
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    if (from < 0 || to > c || from >= to) throw ShapeMismatch("slice_cols: bad range");
    const int64_t w = to - from;
    Tensor out = Tensor::uninit({r, w}, x->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < r; ++i) std::memcpy(po + i * w, px + i * c + from, sizeof(T) * w);
    });
    return record(std::move(out), {x},
                  [r, c, from, w](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = x->ensure_grad().data<T>();
                          for (int64_t i = 0; i < r; ++i)
                              for (int64_t j = 0; j < w; ++j) g[i * c + from + j] += dy[i * w + j];
                      });
                  },
                  "slice_cols");
}

Var Graph::transpose(Var x) {
    check_rank2(x->value, "transpose");
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    Tensor out = Tensor::uninit({c, r}, x->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        T* po = out.data<T>();
        for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j) po[j * r + i] = px[i * c + j];
    });
    return record(std::move(out), {x},
                  [r, c](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = x->ensure_grad().data<T>();
                          for (int64_t i = 0; i < r; ++i)
                              for (int64_t j = 0; j < c; ++j) g[i * c + j] += dy[j * r + i];
                      });
                  },
                  "transpose");
}

Var Graph::reshape(Var x, std::vector<int64_t> shape) {
    Tensor out = x->value.reshaped(shape);
    return record(std::move(out), {x},
                  [](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          T* g = x->ensure_grad().data<T>();
                          const int64_t n = node.value.numel();
                          for (int64_t i = 0; i < n; ++i) g[i] += dy[i];
                      });
                  },
                  "reshape");
}

Var Graph::conv2d(Var x, Var w, Var bias, int64_t stride, int64_t pad) {
    if (x->value.rank() != 3) throw ShapeMismatch("conv2d: input must be c x h x w");
    if (w->value.rank() != 4) throw ShapeMismatch("conv2d: kernel must be oc x ic x kh x kw");
    check_same_dtype(x->value, w->value, "conv2d");
    kernels::Conv2DDims d;
    d.in_channels = x->value.dim(0);
    d.in_h = x->value.dim(1);
    d.in_w = x->value.dim(2);
    d.out_channels = w->value.dim(0);
    d.kernel_h = w->value.dim(2);
    d.kernel_w = w->value.dim(3);
    d.stride = stride;
    d.pad = pad;
    if (w->value.dim(1) != d.in_channels)
        throw ShapeMismatch("conv2d: kernel channels " + shape_str(w->value.shape()) +
                            " for input " + shape_str(x->value.shape()));
    if (bias && (bias->value.rank() != 1 || bias->value.dim(0) != d.out_channels))
        throw ShapeMismatch("conv2d: bad bias shape");
    if (d.out_h() < 1 || d.out_w() < 1) throw ShapeMismatch("conv2d: empty output");

    Tensor out = Tensor::uninit({d.out_channels, d.out_h(), d.out_w()}, x->value.dtype());
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        kernels::conv2d<T>(d, x->value.data<T>(), w->value.data<T>(),
                           bias ? bias->value.data<T>() : nullptr, out.data<T>());
    });
    std::vector<Var> inputs{x, w};
    if (bias) inputs.push_back(bias);
    return record(std::move(out), std::move(inputs),
                  [d](Node& node) {
                      Var x = node.inputs[0], w = node.inputs[1];
                      Var bias = node.inputs.size() > 2 ? node.inputs[2] : nullptr;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          if (x->requires_grad)
                              kernels::conv2d_grad_input<T>(d, dy, w->value.data<T>(),
                                                            x->ensure_grad().data<T>());
                          T* dw = w->requires_grad ? w->ensure_grad().data<T>() : nullptr;
                          T* db = (bias && bias->requires_grad) ? bias->ensure_grad().data<T>()
                                                                : nullptr;
                          if (dw || db)
                              kernels::conv2d_grad_weights<T>(d, x->value.data<T>(), dy, dw, db);
                      });
                  },
                  "conv2d");
}

Var Graph::layer_norm(Var x, Var gamma, Var beta, double eps) {
    check_rank2(x->value, "layer_norm");
    const int64_t r = x->value.dim(0), c = x->value.dim(1);
    if (gamma->value.dim(1) != c || beta->value.dim(1) != c)
        throw ShapeMismatch("layer_norm: affine shape mismatch");
    check_same_dtype(x->value, gamma->value, "layer_norm");
    Tensor out = Tensor::uninit({r, c}, x->value.dtype());
    // cache normalized activations and per-row inverse stddev for backward
    auto xhat = std::make_shared<Tensor>(Tensor::uninit({r, c}, x->value.dtype()));
    auto inv_std = std::make_shared<std::vector<double>>(std::size_t(r), 0.0);
    dispatch(out.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x->value.data<T>();
        const T* pg = gamma->value.data<T>();
        const T* pb = beta->value.data<T>();
        T* po = out.data<T>();
        T* ph = xhat->data<T>();
        for (int64_t i = 0; i < r; ++i) {
            T mean = 0;
            for (int64_t j = 0; j < c; ++j) mean += px[i * c + j];
            mean /= T(c);
            T var = 0;
            for (int64_t j = 0; j < c; ++j) {
                T d = px[i * c + j] - mean;
                var += d * d;
            }
            var /= T(c);
            const T is = T(1) / std::sqrt(var + T(eps));
            (*inv_std)[std::size_t(i)] = double(is);
            for (int64_t j = 0; j < c; ++j) {
                ph[i * c + j] = (px[i * c + j] - mean) * is;
                po[i * c + j] = pg[j] * ph[i * c + j] + pb[j];
            }
        }
    });
    return record(std::move(out), {x, gamma, beta},
                  [r, c, xhat, inv_std](Node& node) {
                      Var x = node.inputs[0], gamma = node.inputs[1], beta = node.inputs[2];
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T* dy = node.grad.data<T>();
                          const T* ph = xhat->data<T>();
                          const T* pg = gamma->value.data<T>();
                          if (gamma->requires_grad) {
                              T* g = gamma->ensure_grad().data<T>();
                              for (int64_t i = 0; i < r; ++i)
                                  for (int64_t j = 0; j < c; ++j)
                                      g[j] += dy[i * c + j] * ph[i * c + j];
                          }
                          if (beta->requires_grad) {
                              T* g = beta->ensure_grad().data<T>();
                              for (int64_t i = 0; i < r; ++i)
                                  for (int64_t j = 0; j < c; ++j) g[j] += dy[i * c + j];
                          }
                          if (x->requires_grad) {
                              T* g = x->ensure_grad().data<T>();
                              for (int64_t i = 0; i < r; ++i) {
                                  T mean_dh = 0, mean_dh_h = 0;
                                  for (int64_t j = 0; j < c; ++j) {
                                      const T dh = dy[i * c + j] * pg[j];
                                      mean_dh += dh;
                                      mean_dh_h += dh * ph[i * c + j];
                                  }
                                  mean_dh /= T(c);
                                  mean_dh_h /= T(c);
                                  const T is = T((*inv_std)[std::size_t(i)]);
                                  for (int64_t j = 0; j < c; ++j) {
                                      const T dh = dy[i * c + j] * pg[j];
                                      g[i * c + j] +=
                                          is * (dh - mean_dh - ph[i * c + j] * mean_dh_h);
                                  }
                              }
                          }
                      });
                  },
                  "layer_norm");
}

Var Graph::gather_col(Var x, int64_t col) {
    check_rank2(x->value, "gather_col");
    if (x->value.dim(0) != 1 || col < 0 || col >= x->value.dim(1))
        throw ShapeMismatch("gather_col: bad index");
    Tensor out({1, 1}, x->value.dtype());
    out.set(0, x->value.at(col));
    return record(std::move(out), {x},
                  [col](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      Tensor& g = x->ensure_grad();
                      g.set(col, g.at(col) + node.grad.at(0));
                  },
                  "gather_col");
}

Var Graph::softmax_cross_entropy(Var logits, std::vector<int64_t> targets) {
    check_rank2(logits->value, "softmax_cross_entropy");
    const int64_t r = logits->value.dim(0), c = logits->value.dim(1);
    if ((int64_t)targets.size() != r)
        throw ShapeMismatch("softmax_cross_entropy: target count mismatch");
    for (int64_t t : targets)
        if (t < 0 || t >= c) throw ShapeMismatch("softmax_cross_entropy: target out of range");
    auto probs = std::make_shared<Tensor>(Tensor::uninit({r, c}, logits->value.dtype()));
    double loss = 0.0;
    dispatch(logits->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = logits->value.data<T>();
        T* pp = probs->data<T>();
        for (int64_t i = 0; i < r; ++i) {
            T mx = px[i * c];
            for (int64_t j = 1; j < c; ++j) mx = std::max(mx, px[i * c + j]);
            T sum = 0;
            for (int64_t j = 0; j < c; ++j) {
                pp[i * c + j] = std::exp(px[i * c + j] - mx);
                sum += pp[i * c + j];
            }
            for (int64_t j = 0; j < c; ++j) pp[i * c + j] /= sum;
            loss += -std::log(double(pp[i * c + targets[std::size_t(i)]]) + 1e-300);
        }
    });
    Tensor out = Tensor::scalar(loss / double(r), logits->value.dtype());
    auto tgt = std::make_shared<std::vector<int64_t>>(std::move(targets));
    return record(std::move(out), {logits},
                  [r, c, probs, tgt](Node& node) {
                      Var x = node.inputs[0];
                      if (!x->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T dy = node.grad.data<T>()[0];
                          const T* pp = probs->data<T>();
                          T* g = x->ensure_grad().data<T>();
                          for (int64_t i = 0; i < r; ++i) {
                              for (int64_t j = 0; j < c; ++j) {
                                  T p = pp[i * c + j];
                                  if (j == (*tgt)[std::size_t(i)]) p -= T(1);
                                  g[i * c + j] += dy * p / T(r);
                              }
                          }
                      });
                  },
                  "softmax_cross_entropy");
}

Var Graph::smooth_l1_sum(Var pred, const Tensor& target) {
    if (!pred->value.same_shape(target))
        throw ShapeMismatch("smooth_l1_sum: " + shape_str(pred->value.shape()) + " vs " +
                            shape_str(target.shape()));
    const int64_t n = pred->value.numel();
    auto tgt = std::make_shared<Tensor>(target.astype(pred->value.dtype()));
    double loss = 0.0;
    dispatch(pred->value.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pp = pred->value.data<T>();
        const T* pt = tgt->data<T>();
        for (int64_t i = 0; i < n; ++i) {
            const double e = double(pp[i]) - double(pt[i]);
            loss += std::abs(e) < 1.0 ? 0.5 * e * e : std::abs(e) - 0.5;
        }
    });
    Tensor out = Tensor::scalar(loss, pred->value.dtype());
    return record(std::move(out), {pred},
                  [n, tgt](Node& node) {
                      Var pred = node.inputs[0];
                      if (!pred->requires_grad) return;
                      dispatch(node.value.dtype(), [&](auto tag) {
                          using T = decltype(tag);
                          const T dy = node.grad.data<T>()[0];
                          const T* pp = pred->value.data<T>();
                          const T* pt = tgt->data<T>();
                          T* g = pred->ensure_grad().data<T>();
                          for (int64_t i = 0; i < n; ++i) {
                              const T e = pp[i] - pt[i];
                              T d = e;
                              if (e > T(1)) d = T(1);
                              if (e < T(-1)) d = T(-1);
                              g[i] += dy * d;
                          }
                      });
                  },
                  "smooth_l1_sum");
}

void Graph::backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeMismatch("backward: root must be scalar");
    backward(root, Tensor::full(root->value.shape(), 1.0, root->value.dtype()));
}

void Graph::backward(const Var& root, const Tensor& seed) {
    if (!seed.same_shape(root->value)) throw ShapeMismatch("backward: seed shape mismatch");
    Tensor& g = root->ensure_grad();
    Tensor s = seed.astype(root->value.dtype());
    for (int64_t i = 0; i < g.numel(); ++i) g.set(i, g.at(i) + s.at(i));
    for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
        Node& n = **it;
        if (n.requires_grad && n.grad.defined() && n.backward_fn) n.backward_fn(n);
    }
}

Var multihead_self_attention(Graph& g, Var x, int64_t heads, const AttentionParams& p) {
    const int64_t d = x->value.dim(1);
    if (heads < 1 || d % heads != 0)
        throw ShapeMismatch("multihead_self_attention: model dim " + std::to_string(d) +
                            " not divisible by " + std::to_string(heads) + " heads");
    const int64_t dh = d / heads;
    Var q = g.add_rowvec(g.matmul(x, p.wq), p.bq);
    Var k = g.add_rowvec(g.matmul(x, p.wk), p.bk);
    Var v = g.add_rowvec(g.matmul(x, p.wv), p.bv);
    std::vector<Var> outs;
    outs.reserve(std::size_t(heads));
    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    for (int64_t h = 0; h < heads; ++h) {
        Var qh = g.slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = g.slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = g.slice_cols(v, h * dh, (h + 1) * dh);
        Var scores = g.scale(g.matmul(qh, g.transpose(kh)), inv_sqrt);
        Var attn = g.softmax_rows(scores);
        outs.push_back(g.matmul(attn, vh));
    }
    Var cat = heads == 1 ? outs[0] : g.concat_cols(outs);
    return g.add_rowvec(g.matmul(cat, p.wo), p.bo);
}

}  // namespace ffkit::ad
