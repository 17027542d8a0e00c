#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cdmamba {

enum class GradScope { Primitives, Ssm, Blocks, Model };

const char* to_string(GradScope s);
GradScope parse_grad_scope(const std::string& name);
/// 1e-6 primitives, 1e-4 ssm and blocks, 1e-3 model.
double scope_tolerance(GradScope s);

struct GradCheckItem {
    std::string component;
    double max_rel_error = 0;
    double tolerance = 0;
    std::size_t coords = 0;
    std::size_t worst_input = 0;  // position in the checked input list
    std::size_t worst_coord = 0;
    double worst_analytic = 0;
    double worst_numeric = 0;
    bool passed() const { return max_rel_error <= tolerance; }
};

/// Finite-difference checks of every differentiable component in the scope,
/// in double precision with fixed random inputs.
std::vector<GradCheckItem> run_gradcheck(GradScope scope, std::uint64_t seed = 0);

}  // namespace cdmamba
