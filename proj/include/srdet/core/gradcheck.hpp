#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "srdet/core/param_store.hpp"

namespace srdet {

struct GradCheckOptions {
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    /// Relative error denominator floor; elements whose analytic and numeric
    /// gradients are both below it are compared near-absolutely.
    double denom_floor = 1e-3;
    /// Check at most this many elements per parameter (deterministic stride
    /// sampling); 0 means all.
    int max_elements_per_param = 0;
};

struct GradCheckParamResult {
    std::string name;
    double max_rel_error = 0.0;
    int checked = 0;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_error = 0.0;
    double epsilon = 0.0;
    std::string worst_param;
    std::vector<GradCheckParamResult> params;
    std::vector<std::string> failures; // non-finite gradients etc.
};

/// Central finite differences against analytic gradients, in double
/// precision. `loss` evaluates the scalar under test; when with_grad is
/// true it must also accumulate analytic gradients into the store slots.
inline GradCheckReport grad_check(
    ParameterStore<double>& store,
    const std::function<double(ParameterStore<double>&, bool with_grad)>& loss,
    const GradCheckOptions& opt = {}) {
    GradCheckReport report;
    report.epsilon = opt.epsilon;

    store.zero_grads();
    (void)loss(store, /*with_grad=*/true);

    for (const std::string& name : store.names()) {
        GradCheckParamResult pr;
        pr.name = name;
        Tensor<double>& value = store.value(name);
        const Tensor<double>& analytic = store.grad(name);
        const std::size_t n = value.size();
        std::size_t stride = 1;
        if (opt.max_elements_per_param > 0 && n > static_cast<std::size_t>(opt.max_elements_per_param))
            stride = n / opt.max_elements_per_param;

        for (std::size_t i = 0; i < n; i += stride) {
            const double saved = value[i];
            if (!std::isfinite(analytic[i])) {
                report.failures.push_back(name + "[" + std::to_string(i) + "]: non-finite gradient");
                value[i] = saved;
                break;
            }
            value[i] = saved + opt.epsilon;
            const double up = loss(store, false);
            value[i] = saved - opt.epsilon;
            const double down = loss(store, false);
            value[i] = saved;
            const double numeric = (up - down) / (2.0 * opt.epsilon);
            if (!std::isfinite(numeric)) {
                report.failures.push_back(name + "[" + std::to_string(i) +
                                          "]: non-finite finite difference");
                break;
            }
            const double denom =
                std::max({opt.denom_floor, std::fabs(analytic[i]), std::fabs(numeric)});
            const double rel = std::fabs(analytic[i] - numeric) / denom;
            if (rel > pr.max_rel_error) pr.max_rel_error = rel;
            ++pr.checked;
        }
        if (pr.max_rel_error > report.max_rel_error) {
            report.max_rel_error = pr.max_rel_error;
            report.worst_param = name;
        }
        report.params.push_back(std::move(pr));
    }
    report.pass = report.failures.empty() && report.max_rel_error < opt.tolerance;
    return report;
}

} // namespace srdet
