#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "cdmamba/tensor.hpp"

namespace cdmamba {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_input = 0;  // index into the checked inputs
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, 1e-8).
double relative_error(double analytic, double numeric);

/// Central-difference check of d f(x) / dx for a scalar-valued f.
/// Returns the maximum relative error over all coordinates of x.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// Checks every coordinate of each tensor in `inputs` (in place: values are
/// perturbed and restored). `f` must read the inputs it is checked against.
/// With max_coords_per_input > 0 an evenly strided subset is checked.
GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, double eps = 1e-5,
                           std::size_t max_coords_per_input = 0);

}  // namespace cdmamba
