#pragma once

// Central finite-difference oracle shared by the unit and acceptance suites.

#include "l3dg/numcore/autodiff.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace l3dg::testing {

    struct GradCheckResult {
        std::int64_t coordinates = 0;
        std::int64_t passed = 0;
        double max_rel_error = 0.0;

        double pass_fraction() const { return coordinates ? static_cast<double>(passed) / coordinates : 1.0; }
        bool all_passed() const { return passed == coordinates; }
    };

    /// Compares autodiff gradients of `loss(params)` against central differences.
    /// rel = |ad - fd| / (|fd| + 1e-8).
    inline GradCheckResult grad_check(std::vector<nc::Var<double>>& params,
                                      const std::function<nc::Var<double>()>& loss, double step = 1e-6,
                                      double tol = 1e-4) {
        for (auto& p : params)
            p.zero_grad();
        auto root = loss();
        nc::backward(root);
        std::vector<nc::Tensor<double>> analytic;
        for (auto& p : params)
            analytic.push_back(p.grad());

        GradCheckResult r;
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            auto& value = params[pi].value_mut();
            for (std::int64_t i = 0; i < value.numel(); ++i) {
                const double saved = value[i];
                value[i] = saved + step;
                const double up = loss().value().item();
                value[i] = saved - step;
                const double down = loss().value().item();
                value[i] = saved;
                const double fd = (up - down) / (2 * step);
                const double rel = std::abs(analytic[pi][i] - fd) / (std::abs(fd) + 1e-8);
                r.max_rel_error = std::max(r.max_rel_error, rel);
                ++r.coordinates;
                if (rel < tol)
                    ++r.passed;
            }
        }
        return r;
    }

    /// grad_check over `samples` coordinates drawn uniformly across all parameters.
    /// A coordinate also passes when |ad - fd| < abs_tol, for gradients that vanish exactly.
    template <typename Draw>
    GradCheckResult grad_check_sampled(std::vector<nc::Var<double>>& params,
                                       const std::function<nc::Var<double>()>& loss, std::int64_t samples, Draw&& draw,
                                       double step = 1e-6, double tol = 1e-4, double abs_tol = 0.0) {
        for (auto& p : params)
            p.zero_grad();
        auto root = loss();
        nc::backward(root);
        std::vector<nc::Tensor<double>> analytic;
        for (auto& p : params)
            analytic.push_back(p.grad());
        std::vector<std::pair<std::size_t, std::int64_t>> index;
        for (std::size_t pi = 0; pi < params.size(); ++pi)
            for (std::int64_t i = 0; i < params[pi].numel(); ++i)
                index.emplace_back(pi, i);
        GradCheckResult r;
        for (std::int64_t s = 0; s < samples; ++s) {
            const auto [pi, i] = index[draw(static_cast<std::int64_t>(index.size()))];
            auto& value = params[pi].value_mut();
            const double saved = value[i];
            value[i] = saved + step;
            const double up = loss().value().item();
            value[i] = saved - step;
            const double down = loss().value().item();
            value[i] = saved;
            const double fd = (up - down) / (2 * step);
            const double rel = std::abs(analytic[pi][i] - fd) / (std::abs(fd) + 1e-8);
            r.max_rel_error = std::max(r.max_rel_error, rel);
            ++r.coordinates;
            if (rel < tol || std::abs(analytic[pi][i] - fd) < abs_tol)
                ++r.passed;
        }
        return r;
    }

} // namespace l3dg::testing
