#include "cdmamba/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "cdmamba/error.hpp"

namespace cdmamba {

namespace {

double eval_scalar(const std::function<Tensor()>& f) {
    Tensor y = f();
    if (y.numel() != 1) throw UsageError("grad_check: function output has shape " + to_string(y.shape()) + "; reduce it to a scalar");
    return y.item();
}

}  // namespace

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
    Tensor leaf = x.detach();
    return grad_check([&] { return f(leaf); }, {leaf}, eps).max_rel_error;
}

GradCheckReport grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& inputs, double eps,
                           std::size_t max_coords_per_input) {
    std::vector<bool> saved_flags;
    std::vector<Tensor> leaves = inputs;
    for (auto& t : leaves) {
        saved_flags.push_back(t.requires_grad());
        t.set_requires_grad(true);
        t.impl().grad.clear();
    }

    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Tensor y = f();
        if (y.numel() != 1) throw UsageError("grad_check: function output has shape " + to_string(y.shape()) + "; reduce it to a scalar");
        tape.backward(y);
    }
    for (auto& t : leaves) {
        analytic.emplace_back(t.numel(), 0.0);
        if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.back().begin());
    }

    GradCheckReport report;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        auto values = leaves[i].mutable_data();
        const std::size_t n = values.size();
        const std::size_t stride =
            (max_coords_per_input == 0 || n <= max_coords_per_input) ? 1 : (n + max_coords_per_input - 1) / max_coords_per_input;
        for (std::size_t j = 0; j < n; j += stride) {
            const double orig = values[j];
            values[j] = orig + eps;
            const double up = eval_scalar(f);
            values[j] = orig - eps;
            const double down = eval_scalar(f);
            values[j] = orig;
            const double numeric = (up - down) / (2.0 * eps);
            const double err = relative_error(analytic[i][j], numeric);
            ++report.coords_checked;
            if (err > report.max_rel_error || report.coords_checked == 1) {
                report.max_rel_error = std::max(err, report.max_rel_error);
                if (err >= report.max_rel_error) {
                    report.worst_input = i;
                    report.worst_coord = j;
                    report.worst_analytic = analytic[i][j];
                    report.worst_numeric = numeric;
                }
            }
        }
    }

    for (std::size_t i = 0; i < leaves.size(); ++i) {
        leaves[i].set_requires_grad(saved_flags[i]);
        leaves[i].impl().grad.clear();
    }
    return report;
}

}  // namespace cdmamba
