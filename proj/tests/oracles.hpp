#pragma once

// Plain-loop reference implementations. They share nothing with the Eigen
// code paths they check.

#include <cmath>
#include <vector>

#include "rmra/random.hpp"
#include "rmra/tensor.hpp"

namespace oracle {

using rmra::Index;
using Vec = std::vector<double>;

inline rmra::Tensor<double> random_tensor(rmra::Shape shape, rmra::CounterRng& rng, double lo = -1.0, double hi = 1.0) {
    rmra::Array<double> v(rmra::shape_size(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
    return rmra::Tensor<double>(std::move(shape), std::move(v));
}

inline Vec to_vec(const rmra::Tensor<double>& t) { return Vec(t.values().data(), t.values().data() + t.size()); }

inline Vec matmul(const Vec& a, const Vec& b, Index m, Index k, Index n) {
    Vec c(static_cast<std::size_t>(m * n), 0.0);
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
            double acc = 0.0;
            for (Index p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    return c;
}

/// x [C_in,T], w [C_out,C_in,k], b [C_out] -> [C_out,T_out]
inline Vec conv1d(const Vec& x, const Vec& w, const Vec& b, Index c_in, Index len, Index c_out, Index k, Index stride,
                  Index pad) {
    const Index t_out = (len + 2 * pad - k) / stride + 1;
    Vec y(static_cast<std::size_t>(c_out * t_out), 0.0);
    for (Index o = 0; o < c_out; ++o)
        for (Index t = 0; t < t_out; ++t) {
            double acc = b[o];
            for (Index c = 0; c < c_in; ++c)
                for (Index j = 0; j < k; ++j) {
                    const Index pos = t * stride + j - pad;
                    if (pos >= 0 && pos < len) acc += w[(o * c_in + c) * k + j] * x[c * len + pos];
                }
            y[o * t_out + t] = acc;
        }
    return y;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One LSTM step with gate order (i, f, g, o); returns {h, c}.
inline std::pair<Vec, Vec> lstm_step(const Vec& wi, const Vec& wh, const Vec& bias, const Vec& x, const Vec& h,
                                     const Vec& c, Index in, Index hidden) {
    Vec pre(static_cast<std::size_t>(4 * hidden));
    for (Index r = 0; r < 4 * hidden; ++r) {
        double acc = bias[r];
        for (Index j = 0; j < in; ++j) acc += wi[r * in + j] * x[j];
        for (Index j = 0; j < hidden; ++j) acc += wh[r * hidden + j] * h[j];
        pre[r] = acc;
    }
    Vec h_new(static_cast<std::size_t>(hidden)), c_new(static_cast<std::size_t>(hidden));
    for (Index j = 0; j < hidden; ++j) {
        const double i = sigmoid(pre[j]), f = sigmoid(pre[hidden + j]);
        const double g = std::tanh(pre[2 * hidden + j]), o = sigmoid(pre[3 * hidden + j]);
        c_new[j] = f * c[j] + i * g;
        h_new[j] = o * std::tanh(c_new[j]);
    }
    return {h_new, c_new};
}

inline double max_abs_diff(const Vec& a, const Vec& b) {
    double worst = a.size() == b.size() ? 0.0 : INFINITY;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

}  // namespace oracle
