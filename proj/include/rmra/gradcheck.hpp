#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "rmra/tensor.hpp"

namespace rmra {

/// max_i |analytic_i - fd_i| / max(1, |fd_i|) for a scalar function of one
/// tensor, with fd the central difference of step eps.
template <typename Scalar>
Scalar grad_check(const std::function<Tensor<Scalar>(const Tensor<Scalar>&)>& f, const Tensor<Scalar>& x,
                  Scalar eps) {
    Tensor<Scalar> probe = Tensor<Scalar>::parameter(x.shape(), x.values());
    backward(f(probe));
    const Array<Scalar> analytic = probe.has_grad() ? probe.grad() : Array<Scalar>::Zero(x.size());

    NoGradGuard no_grad;
    Scalar worst = 0;
    Array<Scalar> shifted = x.values();
    for (Index i = 0; i < x.size(); ++i) {
        const Scalar original = shifted[i];
        shifted[i] = original + eps;
        const Scalar up = f(Tensor<Scalar>(x.shape(), shifted)).item();
        shifted[i] = original - eps;
        const Scalar down = f(Tensor<Scalar>(x.shape(), shifted)).item();
        shifted[i] = original;
        const Scalar numeric = (up - down) / (Scalar(2) * eps);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(Scalar(1), std::abs(numeric)));
    }
    return worst;
}

/// Same error measure for a leaf held inside a closure: `loss` rebuilds the
/// graph from the current leaf values, which are perturbed in place and
/// restored. `coords` limits the check to a subset (all when empty).
template <typename Scalar>
Scalar grad_check_leaf(const std::function<Tensor<Scalar>()>& loss, Tensor<Scalar> leaf, Scalar eps,
                       const std::vector<Index>& coords = {}) {
    leaf.zero_grad();
    backward(loss());
    const Array<Scalar> analytic = leaf.has_grad() ? leaf.grad() : Array<Scalar>::Zero(leaf.size());

    std::vector<Index> indices = coords;
    if (indices.empty()) {
        indices.resize(static_cast<std::size_t>(leaf.size()));
        for (Index i = 0; i < leaf.size(); ++i) indices[static_cast<std::size_t>(i)] = i;
    }
    NoGradGuard no_grad;
    Scalar worst = 0;
    auto& values = leaf.mutable_values();
    for (Index i : indices) {
        const Scalar original = values[i];
        values[i] = original + eps;
        const Scalar up = loss().item();
        values[i] = original - eps;
        const Scalar down = loss().item();
        values[i] = original;
        const Scalar numeric = (up - down) / (Scalar(2) * eps);
        worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(Scalar(1), std::abs(numeric)));
    }
    return worst;
}

}  // namespace rmra
