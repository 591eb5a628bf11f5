#pragma once

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ffkit/autodiff.hpp"
#include "ffkit/geometry.hpp"
#include "ffkit/rng.hpp"
#include "ffkit/tensor.hpp"

namespace ffkit::testing {

// Temporary directory removed on scope exit.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = (std::filesystem::temp_directory_path() /
                 ("ffkit_" + tag + "_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter_++)))
                    .string();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::string& path() const { return path_; }
    std::string sub(const std::string& name) const { return path_ + "/" + name; }

private:
    static inline int counter_ = 0;
    std::string path_;
};

inline Tensor random_tensor(std::vector<int64_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0, Dtype dt = Dtype::f64) {
    Tensor t(std::move(shape), dt);
    for (int64_t i = 0; i < t.numel(); ++i) t.set(i, rng.uniform(lo, hi));
    return t;
}

inline Box3D random_box3d(Rng& rng, double center_span = 4.0) {
    Box3D b;
    b.center = {rng.uniform(-center_span, center_span), rng.uniform(-center_span, center_span),
                rng.uniform(-center_span, center_span)};
    b.length = rng.uniform(0.5, 5.0);
    b.width = rng.uniform(0.5, 5.0);
    b.height = rng.uniform(0.5, 3.0);
    b.yaw = rng.uniform(-kPi, kPi);
    b.class_label = "Cars";
    return b;
}

// Central finite-difference gradient check. The builder receives leaves that
// mirror `inputs` (requires_grad set) and returns a scalar root. Relative
// error uses a small absolute floor so exact-zero gradients compare cleanly
// against finite-difference noise.
struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
};

inline GradCheckResult gradient_check(
    const std::function<ad::Var(ad::Graph&, std::vector<ad::Var>&)>& builder,
    std::vector<Tensor> inputs, double step = 1e-5, double floor = 1e-6) {
    auto eval = [&](const std::vector<Tensor>& values) {
        ad::Graph g;
        std::vector<ad::Var> leaves;
        for (const auto& t : values) leaves.push_back(g.leaf(t, true));
        return builder(g, leaves)->value.at(0);
    };

    ad::Graph g;
    std::vector<ad::Var> leaves;
    for (const auto& t : inputs) leaves.push_back(g.leaf(t, true));
    ad::Var root = builder(g, leaves);
    g.backward(root);

    GradCheckResult res;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Tensor& grad = leaves[k]->grad;
        for (int64_t i = 0; i < inputs[k].numel(); ++i) {
            std::vector<Tensor> plus = inputs, minus = inputs;
            plus[k].set(i, inputs[k].at(i) + step);
            minus[k].set(i, inputs[k].at(i) - step);
            const double numeric = (eval(plus) - eval(minus)) / (2.0 * step);
            const double analytic = grad.defined() ? grad.at(i) : 0.0;
            const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
            res.max_rel_err = std::max(res.max_rel_err, std::abs(analytic - numeric) / denom);
            ++res.checked;
        }
    }
    return res;
}

}  // namespace ffkit::testing
