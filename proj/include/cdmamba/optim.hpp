#pragma once

#include <cstdint>
#include <vector>

#include "cdmamba/module.hpp"

namespace cdmamba {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void validate() const;
};

/// Bias-corrected Adam over a fixed parameter list. Parameters without a
/// gradient buffer are treated as having zero gradient.
class Adam {
public:
    Adam(ParamList params, AdamConfig cfg = {});

    /// One update from the gradients currently stored on the parameters.
    /// Throws NonFiniteError naming the parameter if any gradient is NaN/inf.
    void step();
    void zero_grad();

    std::uint64_t steps() const noexcept { return step_; }
    const AdamConfig& config() const noexcept { return cfg_; }
    const std::vector<double>& first_moment(std::size_t i) const { return m_.at(i); }
    const std::vector<double>& second_moment(std::size_t i) const { return v_.at(i); }

private:
    ParamList params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    std::uint64_t step_ = 0;
};

}  // namespace cdmamba
