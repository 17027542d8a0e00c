#include "cdmamba/optim.hpp"

#include <cmath>

#include "cdmamba/error.hpp"

namespace cdmamba {

void AdamConfig::validate() const {
    if (!(lr >= 0)) throw ConfigError("lr must be non-negative");
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("beta1 must lie in [0,1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("beta2 must lie in [0,1)");
    if (!(eps > 0)) throw ConfigError("adam eps must be positive");
}

Adam::Adam(ParamList params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    for (const auto& p : params_) {
        m_.emplace_back(p.tensor.numel(), 0.0);
        v_.emplace_back(p.tensor.numel(), 0.0);
    }
}

void Adam::step() {
    for (const auto& p : params_) {
        if (!p.tensor.has_grad()) continue;
        for (double g : p.tensor.grad()) {
            if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in parameter '" + p.name + "'");
        }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor t = params_[i].tensor;
        if (!t.has_grad()) continue;
        auto g = t.grad();
        auto w = t.mutable_data();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = cfg_.beta1 * m[k] + (1 - cfg_.beta1) * g[k];
            v[k] = cfg_.beta2 * v[k] + (1 - cfg_.beta2) * g[k] * g[k];
            const double mhat = m[k] / bc1, vhat = v[k] / bc2;
            w[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace cdmamba
