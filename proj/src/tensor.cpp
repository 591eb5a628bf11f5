#include "ffkit/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace ffkit {

Tensor::Tensor(std::vector<int64_t> shape, Dtype dtype, Uninit)
    : shape_(std::move(shape)), dtype_(dtype) {
    numel_ = 1;
    for (int64_t d : shape_) {
        if (d < 0) throw ShapeMismatch("negative tensor extent");
        numel_ *= d;
    }
    bytes_ = std::size_t(numel_) * dtype_size(dtype_);
    buf_ = std::make_unique_for_overwrite<std::byte[]>(bytes_);
}

Tensor::Tensor(std::vector<int64_t> shape, Dtype dtype)
    : Tensor(std::move(shape), dtype, Uninit{}) {
    std::memset(buf_.get(), 0, bytes_);
}

Tensor::Tensor(const Tensor& o)
    : shape_(o.shape_), numel_(o.numel_), dtype_(o.dtype_), bytes_(o.bytes_) {
    if (o.buf_) {
        buf_ = std::make_unique_for_overwrite<std::byte[]>(bytes_);
        std::memcpy(buf_.get(), o.buf_.get(), bytes_);
    }
}

Tensor& Tensor::operator=(const Tensor& o) {
    if (this == &o) return *this;
    shape_ = o.shape_;
    numel_ = o.numel_;
    dtype_ = o.dtype_;
    bytes_ = o.bytes_;
    if (o.buf_) {
        buf_ = std::make_unique_for_overwrite<std::byte[]>(bytes_);
        std::memcpy(buf_.get(), o.buf_.get(), bytes_);
    } else {
        buf_.reset();
    }
    return *this;
}

Tensor Tensor::zeros(std::vector<int64_t> shape, Dtype dtype) {
    return Tensor(std::move(shape), dtype);
}

Tensor Tensor::uninit(std::vector<int64_t> shape, Dtype dtype) {
    return Tensor(std::move(shape), dtype, Uninit{});
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, Dtype dtype) {
    Tensor t(std::move(shape), dtype);
    t.fill(value);
    return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, const std::vector<double>& values, Dtype dtype) {
    Tensor t(std::move(shape), dtype);
    if ((int64_t)values.size() != t.numel_)
        throw ShapeMismatch("Tensor::from: value count does not match shape");
    for (int64_t i = 0; i < t.numel_; ++i) t.set(i, values[std::size_t(i)]);
    return t;
}

Tensor Tensor::scalar(double value, Dtype dtype) { return full({1, 1}, value, dtype); }

double Tensor::at(int64_t i) const {
    return dtype_ == Dtype::f64 ? data<double>()[i] : double(data<float>()[i]);
}

void Tensor::set(int64_t i, double v) {
    if (dtype_ == Dtype::f64)
        data<double>()[i] = v;
    else
        data<float>()[i] = float(v);
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<std::size_t>(numel_));
    for (int64_t i = 0; i < numel_; ++i) out[std::size_t(i)] = at(i);
    return out;
}

Tensor Tensor::astype(Dtype t) const {
    if (t == dtype_) return *this;
    Tensor out(shape_, t);
    for (int64_t i = 0; i < numel_; ++i) out.set(i, at(i));
    return out;
}

Tensor Tensor::reshaped(std::vector<int64_t> shape) const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    if (n != numel_) throw ShapeMismatch("reshape changes element count");
    Tensor out = *this;
    out.shape_ = std::move(shape);
    return out;
}

bool Tensor::all_finite() const {
    // v - v is 0 for finite values and NaN for NaN/Inf, so the accumulated
    // sum is NaN exactly when a non-finite value is present; this form
    // vectorizes where a per-element isfinite branch would not
    if (dtype_ == Dtype::f64) {
        const double* p = data<double>();
        double acc = 0.0;
        for (int64_t i = 0; i < numel_; ++i) acc += p[i] - p[i];
        return acc == 0.0;
    }
    const float* p = data<float>();
    float acc = 0.0f;
    for (int64_t i = 0; i < numel_; ++i) acc += p[i] - p[i];
    return acc == 0.0f;
}

void Tensor::fill(double v) {
    for (int64_t i = 0; i < numel_; ++i) set(i, v);
}

void Tensor::add_inplace(const Tensor& other) {
    if (!same_shape(other) || dtype_ != other.dtype_)
        throw ShapeMismatch("add_inplace: tensor mismatch");
    if (dtype_ == Dtype::f64) {
        double* a = data<double>();
        const double* b = other.data<double>();
        for (int64_t i = 0; i < numel_; ++i) a[i] += b[i];
    } else {
        float* a = data<float>();
        const float* b = other.data<float>();
        for (int64_t i = 0; i < numel_; ++i) a[i] += b[i];
    }
}

void Tensor::scale_inplace(double s) {
    if (dtype_ == Dtype::f64) {
        double* a = data<double>();
        for (int64_t i = 0; i < numel_; ++i) a[i] *= s;
    } else {
        float* a = data<float>();
        const float fs = float(s);
        for (int64_t i = 0; i < numel_; ++i) a[i] *= fs;
    }
}

std::string shape_str(const std::vector<int64_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

}  // namespace ffkit
