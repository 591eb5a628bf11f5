#include "ffkit/optim.hpp"

#include <cmath>

namespace ffkit {

void Adam::step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads) {
    if (params.size() != grads.size()) throw ShapeMismatch("Adam::step: param/grad count mismatch");
    if (m_.empty()) {
        for (const Tensor* p : params) {
            m_.push_back(Tensor::zeros(p->shape(), p->dtype()));
            v_.push_back(Tensor::zeros(p->shape(), p->dtype()));
        }
    }
    if (m_.size() != params.size()) throw ShapeMismatch("Adam::step: state size changed");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = grads[i];
        if (!p.same_shape(g)) throw ShapeMismatch("Adam::step: grad shape mismatch");
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        const int64_t n = p.numel();
        auto update = [&](auto* pp, const auto* pg, auto* pm, auto* pv) {
            using T = std::remove_reference_t<decltype(*pp)>;
            for (int64_t j = 0; j < n; ++j) {
                const double gj = double(pg[j]);
                const double mj = cfg_.beta1 * double(pm[j]) + (1.0 - cfg_.beta1) * gj;
                const double vj = cfg_.beta2 * double(pv[j]) + (1.0 - cfg_.beta2) * gj * gj;
                pm[j] = T(mj);
                pv[j] = T(vj);
                pp[j] = T(double(pp[j]) -
                          cfg_.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg_.eps));
            }
        };
        if (p.dtype() == Dtype::f64)
            update(p.data<double>(), g.data<double>(), m.data<double>(), v.data<double>());
        else
            update(p.data<float>(), g.data<float>(), m.data<float>(), v.data<float>());
    }
}

}  // namespace ffkit
