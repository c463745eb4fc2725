#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "colorshift/autograd.hpp"

// Central-difference gradient verification, always in double. Ops are checked
// against d/dx of a scalar-valued graph; an element passes when
// |analytic - fd| <= 1e-3 * max(|analytic|, |fd|) + 1e-6.
namespace gradtest {

using colorshift::Tensor;
using colorshift::Var;

struct Report {
    int checked = 0;
    bool ok = true;
    double worst_abs_err = 0;
    std::string where;
};

inline bool grads_close(double a, double fd) {
    return std::fabs(a - fd) <= 1e-3 * std::max(std::fabs(a), std::fabs(fd)) + 1e-6;
}

inline Report grad_check(
    const std::function<Var<double>(std::vector<Var<double>>&)>& build,
    std::vector<Tensor<double>> inputs, int max_per_input = 64) {
    std::vector<Var<double>> leaves;
    leaves.reserve(inputs.size());
    for (auto& t : inputs) leaves.push_back(Var<double>::leaf(t, true));
    Var<double> y = build(leaves);
    if (y.value().numel() != 1) throw std::logic_error("grad_check: graph must be scalar");
    y.backward();
    std::vector<Tensor<double>> agrads;
    for (auto& l : leaves) agrads.push_back(l.grad());

    auto eval = [&]() {
        std::vector<Var<double>> ls;
        ls.reserve(inputs.size());
        for (auto& t : inputs) ls.push_back(Var<double>::leaf(t, false));
        return build(ls).value().v[0];
    };

    Report rep;
    for (size_t i = 0; i < inputs.size(); ++i) {
        size_t n = inputs[i].v.size();
        size_t stride = std::max<size_t>(1, n / static_cast<size_t>(max_per_input));
        for (size_t j = 0; j < n; j += stride) {
            double orig = inputs[i].v[j];
            double h = 1e-5 * std::max(1.0, std::fabs(orig));
            inputs[i].v[j] = orig + h;
            double fp = eval();
            inputs[i].v[j] = orig - h;
            double fm = eval();
            inputs[i].v[j] = orig;
            double fd = (fp - fm) / (2 * h);
            double a = agrads[i].v[j];
            ++rep.checked;
            if (!grads_close(a, fd)) {
                rep.ok = false;
                double err = std::fabs(a - fd);
                if (err > rep.worst_abs_err) {
                    rep.worst_abs_err = err;
                    rep.where = "input " + std::to_string(i) + " elem " + std::to_string(j) +
                                ": analytic=" + std::to_string(a) + " fd=" + std::to_string(fd);
                }
            }
        }
    }
    return rep;
}

}  // namespace gradtest
