#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ffkit/errors.hpp"

namespace ffkit {

enum class Dtype : uint8_t { f64 = 0, f32 = 1 };

inline std::size_t dtype_size(Dtype t) { return t == Dtype::f64 ? 8 : 4; }
inline const char* dtype_name(Dtype t) { return t == Dtype::f64 ? "f64" : "f32"; }

// Dense row-major tensor. 64-bit is the default precision; 32-bit is
// selectable for speed and recorded in checkpoints.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape, Dtype dtype = Dtype::f64);
    Tensor(const Tensor& o);
    Tensor& operator=(const Tensor& o);
    Tensor(Tensor&&) = default;
    Tensor& operator=(Tensor&&) = default;

    static Tensor zeros(std::vector<int64_t> shape, Dtype dtype = Dtype::f64);
    // uninitialized storage for outputs that are fully overwritten
    static Tensor uninit(std::vector<int64_t> shape, Dtype dtype = Dtype::f64);
    static Tensor full(std::vector<int64_t> shape, double value, Dtype dtype = Dtype::f64);
    static Tensor from(std::vector<int64_t> shape, const std::vector<double>& values,
                       Dtype dtype = Dtype::f64);
    static Tensor scalar(double value, Dtype dtype = Dtype::f64);

    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    int64_t numel() const { return numel_; }
    Dtype dtype() const { return dtype_; }
    bool defined() const { return !shape_.empty(); }

    template <class T>
    T* data() {
        return reinterpret_cast<T*>(buf_.get());
    }
    template <class T>
    const T* data() const {
        return reinterpret_cast<const T*>(buf_.get());
    }

    // dtype-erased element access; convenient but slow, for tests and glue
    double at(int64_t i) const;
    void set(int64_t i, double v);
    double at2(int64_t r, int64_t c) const { return at(r * shape_.at(1) + c); }
    void set2(int64_t r, int64_t c, double v) { set(r * shape_.at(1) + c, v); }

    std::vector<double> to_vector() const;
    Tensor astype(Dtype t) const;
    Tensor reshaped(std::vector<int64_t> shape) const;
    bool all_finite() const;
    void fill(double v);
    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    // typed fast paths for gradient accumulation
    void add_inplace(const Tensor& other);
    void scale_inplace(double s);

    const std::byte* raw() const { return buf_.get(); }
    std::byte* raw() { return buf_.get(); }
    std::size_t raw_size() const { return bytes_; }

private:
    struct Uninit {};
    Tensor(std::vector<int64_t> shape, Dtype dtype, Uninit);

    std::vector<int64_t> shape_;
    int64_t numel_ = 0;
    Dtype dtype_ = Dtype::f64;
    std::size_t bytes_ = 0;
    std::unique_ptr<std::byte[]> buf_;
};

std::string shape_str(const std::vector<int64_t>& s);

}  // namespace ffkit
