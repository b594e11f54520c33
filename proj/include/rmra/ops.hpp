#pragma once

// Differentiable tensor operations. Ranks above 2 are treated as a stack of
// rows over the last axis unless an op documents otherwise.

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "rmra/tensor.hpp"

namespace rmra {

enum class Activation { relu, sigmoid, tanh };

namespace detail {

template <typename Scalar>
Array<Scalar>* grad_target(const typename Node<Scalar>::Ptr& node) {
    return node->requires_grad ? &node->grad_buffer() : nullptr;
}

template <typename Scalar>
Index last_dim(const Tensor<Scalar>& t) {
    return t.rank() == 0 ? 1 : t.dim(-1);
}

template <typename Scalar>
Index leading_rows(const Tensor<Scalar>& t) {
    return t.size() / last_dim(t);
}

inline void require(bool ok, const std::string& what) {
    if (!ok) throw ShapeError(what);
}

}  // namespace detail

template <typename Scalar>
Tensor<Scalar> add(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require(a.shape() == b.shape(),
                    "add: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
    return make_op_result<Scalar>("add", a.shape(), a.values() + b.values(), {a, b},
                                  [](const Array<Scalar>& g, auto inputs) {
                                      for (const auto& in : inputs) {
                                          if (auto* t = detail::grad_target<Scalar>(in)) *t += g;
                                      }
                                  });
}

template <typename Scalar>
Tensor<Scalar> operator+(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    return add(a, b);
}

/// Elementwise product.
template <typename Scalar>
Tensor<Scalar> mul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require(a.shape() == b.shape(),
                    "mul: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
    Array<Scalar> av = a.values(), bv = b.values();
    Array<Scalar> product = av * bv;
    return make_op_result<Scalar>("mul", a.shape(), std::move(product), {a, b},
                                  [av = std::move(av), bv = std::move(bv)](const Array<Scalar>& g, auto inputs) {
                                      if (auto* t = detail::grad_target<Scalar>(inputs[0])) *t += g * bv;
                                      if (auto* t = detail::grad_target<Scalar>(inputs[1])) *t += g * av;
                                  });
}

template <typename Scalar>
Tensor<Scalar> scale(const Tensor<Scalar>& a, Scalar factor) {
    return make_op_result<Scalar>("scale", a.shape(), a.values() * factor, {a},
                                  [factor](const Array<Scalar>& g, auto inputs) {
                                      if (auto* t = detail::grad_target<Scalar>(inputs[0])) *t += g * factor;
                                  });
}

/// Sum of all entries as a rank-0 tensor.
template <typename Scalar>
Tensor<Scalar> sum(const Tensor<Scalar>& a) {
    return make_op_result<Scalar>("sum", Shape{}, Array<Scalar>::Constant(1, a.values().sum()), {a},
                                  [](const Array<Scalar>& g, auto inputs) {
                                      if (auto* t = detail::grad_target<Scalar>(inputs[0])) *t += g[0];
                                  });
}

template <typename Scalar>
Tensor<Scalar> reshape(const Tensor<Scalar>& a, Shape shape) {
    detail::require(shape_size(shape) == a.size(),
                    "reshape: " + shape_string(a.shape()) + " cannot become " + shape_string(shape));
    return make_op_result<Scalar>("reshape", std::move(shape), a.values(), {a},
                                  [](const Array<Scalar>& g, auto inputs) {
                                      if (auto* t = detail::grad_target<Scalar>(inputs[0])) *t += g;
                                  });
}

/// Matrix product of [m,k] and [k,n].
template <typename Scalar>
Tensor<Scalar> matmul(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0),
                    "matmul: cannot multiply " + shape_string(a.shape()) + " by " + shape_string(b.shape()));
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Array<Scalar> out(m * n);
    MatrixMap<Scalar>(out.data(), m, n).noalias() = a.matrix(m, k) * b.matrix(k, n);
    return make_op_result<Scalar>(
        "matmul", Shape{m, n}, std::move(out), {a, b}, [m, k, n](const Array<Scalar>& g, auto inputs) {
            ConstMatrixMap<Scalar> G(g.data(), m, n);
            ConstMatrixMap<Scalar> A(inputs[0]->data.data(), m, k);
            ConstMatrixMap<Scalar> B(inputs[1]->data.data(), k, n);
            if (auto* t = detail::grad_target<Scalar>(inputs[0]))
                MatrixMap<Scalar>(t->data(), m, k).noalias() += G * B.transpose();
            if (auto* t = detail::grad_target<Scalar>(inputs[1]))
                MatrixMap<Scalar>(t->data(), k, n).noalias() += A.transpose() * G;
        });
}

/// x·Wᵀ + b over the last axis of x. `bias` may be undefined.
template <typename Scalar>
Tensor<Scalar> linear(const Tensor<Scalar>& x, const Tensor<Scalar>& weight, const Tensor<Scalar>& bias) {
    detail::require(weight.rank() == 2 && x.rank() >= 1 && x.dim(-1) == weight.dim(1),
                    "linear: input " + shape_string(x.shape()) + " does not match weight " +
                        shape_string(weight.shape()));
    const bool has_bias = bias.defined();
    detail::require(!has_bias || (bias.rank() == 1 && bias.dim(0) == weight.dim(0)),
                    "linear: bias does not match weight rows");
    const Index rows = detail::leading_rows(x), in = weight.dim(1), out = weight.dim(0);
    Array<Scalar> y(rows * out);
    MatrixMap<Scalar> Y(y.data(), rows, out);
    Y.noalias() = x.matrix(rows, in) * weight.matrix(out, in).transpose();
    if (has_bias) Y.rowwise() += bias.matrix(1, out).row(0);
    Shape shape = x.shape();
    shape.back() = out;
    auto backward = [rows, in, out, has_bias](const Array<Scalar>& g, auto inputs) {
        ConstMatrixMap<Scalar> G(g.data(), rows, out);
        if (auto* t = detail::grad_target<Scalar>(inputs[0]))
            MatrixMap<Scalar>(t->data(), rows, in).noalias() +=
                G * ConstMatrixMap<Scalar>(inputs[1]->data.data(), out, in);
        if (auto* t = detail::grad_target<Scalar>(inputs[1]))
            MatrixMap<Scalar>(t->data(), out, in).noalias() +=
                G.transpose() * ConstMatrixMap<Scalar>(inputs[0]->data.data(), rows, in);
        if (has_bias) {
            if (auto* t = detail::grad_target<Scalar>(inputs[2]))
                MatrixMap<Scalar>(t->data(), 1, out) += G.colwise().sum();
        }
    };
    if (has_bias) return make_op_result<Scalar>("linear", std::move(shape), std::move(y), {x, weight, bias}, backward);
    return make_op_result<Scalar>("linear", std::move(shape), std::move(y), {x, weight}, backward);
}

template <typename Scalar>
Tensor<Scalar> apply_activation(const Tensor<Scalar>& x, Activation kind) {
    Array<Scalar> y;
    switch (kind) {
        case Activation::relu: y = x.values().max(Scalar(0)); break;
        case Activation::sigmoid: y = Scalar(1) / (Scalar(1) + (-x.values()).exp()); break;
        case Activation::tanh: y = x.values().tanh(); break;
    }
    static constexpr const char* names[] = {"relu", "sigmoid", "tanh"};
    Array<Scalar> saved = y;
    return make_op_result<Scalar>(
        names[static_cast<int>(kind)], x.shape(), std::move(y), {x},
        [kind, saved = std::move(saved)](const Array<Scalar>& g, auto inputs) {
            auto* t = detail::grad_target<Scalar>(inputs[0]);
            if (!t) return;
            switch (kind) {
                // Subgradient at 0 is 0: y > 0 exactly when x > 0.
                case Activation::relu: *t += (saved > Scalar(0)).select(g, Scalar(0)); break;
                case Activation::sigmoid: *t += g * saved * (Scalar(1) - saved); break;
                case Activation::tanh: *t += g * (Scalar(1) - saved.square()); break;
            }
        });
}

template <typename Scalar>
Tensor<Scalar> relu(const Tensor<Scalar>& x) {
    return apply_activation(x, Activation::relu);
}
template <typename Scalar>
Tensor<Scalar> sigmoid(const Tensor<Scalar>& x) {
    return apply_activation(x, Activation::sigmoid);
}
template <typename Scalar>
Tensor<Scalar> tanh(const Tensor<Scalar>& x) {
    return apply_activation(x, Activation::tanh);
}

namespace detail {

template <typename Scalar, typename In, typename Out>
void softmax_rows(const In& x, Out&& y) {
    for (Index r = 0; r < x.rows(); ++r) {
        const Scalar peak = x.row(r).maxCoeff();
        y.row(r) = (x.row(r).array() - peak).exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
}

}  // namespace detail

/// Softmax over the last axis, max-subtracted.
template <typename Scalar>
Tensor<Scalar> softmax(const Tensor<Scalar>& x) {
    const Index rows = detail::leading_rows(x), cols = detail::last_dim(x);
    Array<Scalar> y(x.size());
    detail::softmax_rows<Scalar>(x.matrix(rows, cols), MatrixMap<Scalar>(y.data(), rows, cols));
    Array<Scalar> saved = y;
    return make_op_result<Scalar>(
        "softmax", x.shape(), std::move(y), {x},
        [rows, cols, saved = std::move(saved)](const Array<Scalar>& g, auto inputs) {
            auto* t = detail::grad_target<Scalar>(inputs[0]);
            if (!t) return;
            ConstMatrixMap<Scalar> Y(saved.data(), rows, cols), G(g.data(), rows, cols);
            MatrixMap<Scalar> T(t->data(), rows, cols);
            for (Index r = 0; r < rows; ++r) {
                const Scalar dot = G.row(r).dot(Y.row(r));
                T.row(r).array() += Y.row(r).array() * (G.row(r).array() - dot);
            }
        });
}

/// Mean softmax cross-entropy of logits [K] or [B,K] against class labels,
/// fused as logsumexp(x) - x[label].
template <typename Scalar>
Tensor<Scalar> cross_entropy(const Tensor<Scalar>& logits, std::span<const std::size_t> labels) {
    detail::require(logits.rank() == 1 || logits.rank() == 2, "cross_entropy: logits must be [K] or [B,K]");
    const Index rows = detail::leading_rows(logits), classes = detail::last_dim(logits);
    if (static_cast<Index>(labels.size()) != rows)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(rows) +
                         " rows");
    for (std::size_t label : labels) {
        if (static_cast<Index>(label) >= classes)
            throw ContractError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                                std::to_string(classes) + ")");
    }
    auto X = logits.matrix(rows, classes);
    RowMatrix<Scalar> probs(rows, classes);
    Scalar total = 0;
    for (Index r = 0; r < rows; ++r) {
        const Scalar peak = X.row(r).maxCoeff();
        const auto shifted = (X.row(r).array() - peak).eval();
        const Scalar log_norm = std::log(shifted.exp().sum());
        total += log_norm - shifted(static_cast<Index>(labels[r]));
        probs.row(r) = (shifted - log_norm).exp().matrix();
    }
    std::vector<std::size_t> saved_labels(labels.begin(), labels.end());
    return make_op_result<Scalar>(
        "cross_entropy", Shape{}, Array<Scalar>::Constant(1, total / Scalar(rows)), {logits},
        [rows, classes, probs = std::move(probs), saved_labels = std::move(saved_labels)](const Array<Scalar>& g,
                                                                                           auto inputs) {
            auto* t = detail::grad_target<Scalar>(inputs[0]);
            if (!t) return;
            MatrixMap<Scalar> T(t->data(), rows, classes);
            const Scalar w = g[0] / Scalar(rows);
            T += w * probs;
            for (Index r = 0; r < rows; ++r) T(r, static_cast<Index>(saved_labels[r])) -= w;
        });
}

/// 1-D cross-correlation along time. input [C_in,T] or [B,C_in,T],
/// kernels [C_out,C_in,k], bias [C_out]. Output keeps the input's rank.
template <typename Scalar>
Tensor<Scalar> conv1d(const Tensor<Scalar>& input, const Tensor<Scalar>& kernels, const Tensor<Scalar>& bias,
                      Index stride, Index padding) {
    detail::require(input.rank() == 2 || input.rank() == 3, "conv1d: input must be [C,T] or [B,C,T]");
    detail::require(kernels.rank() == 3, "conv1d: kernels must be [C_out,C_in,k]");
    const bool batched = input.rank() == 3;
    const Index batch = batched ? input.dim(0) : 1;
    const Index c_in = input.dim(-2), len = input.dim(-1);
    const Index c_out = kernels.dim(0), k = kernels.dim(2);
    detail::require(kernels.dim(1) == c_in, "conv1d: kernel expects " + std::to_string(kernels.dim(1)) +
                                                " input channels, input has " + std::to_string(c_in));
    detail::require(bias.rank() == 1 && bias.dim(0) == c_out, "conv1d: bias must be [C_out]");
    if (stride < 1 || padding < 0) throw ShapeError("conv1d: stride must be >= 1 and padding >= 0");
    if (k > len + 2 * padding)
        throw ShapeError("conv1d: kernel length " + std::to_string(k) + " exceeds padded input length " +
                         std::to_string(len + 2 * padding));
    const Index t_out = (len + 2 * padding - k) / stride + 1;
    const Index patch = c_in * k, columns = batch * t_out;

    // im2col: column (b, t) holds the receptive field of output step t.
    RowMatrix<Scalar> cols = RowMatrix<Scalar>::Zero(patch, columns);
    const Scalar* x = input.values().data();
    for (Index b = 0; b < batch; ++b)
        for (Index c = 0; c < c_in; ++c)
            for (Index j = 0; j < k; ++j) {
                Scalar* row = cols.data() + (c * k + j) * columns + b * t_out;
                const Scalar* src = x + (b * c_in + c) * len;
                for (Index t = 0; t < t_out; ++t) {
                    const Index pos = t * stride + j - padding;
                    if (pos >= 0 && pos < len) row[t] = src[pos];
                }
            }

    RowMatrix<Scalar> y = kernels.matrix(c_out, patch) * cols;
    y.colwise() += bias.matrix(c_out, 1).col(0);
    Array<Scalar> out(batch * c_out * t_out);
    for (Index b = 0; b < batch; ++b)
        MatrixMap<Scalar>(out.data() + b * c_out * t_out, c_out, t_out) = y.middleCols(b * t_out, t_out);

    Shape shape = batched ? Shape{batch, c_out, t_out} : Shape{c_out, t_out};
    return make_op_result<Scalar>(
        "conv1d", std::move(shape), std::move(out), {input, kernels, bias},
        [=, cols = std::move(cols)](const Array<Scalar>& g, auto inputs) {
            RowMatrix<Scalar> dy(c_out, columns);
            for (Index b = 0; b < batch; ++b)
                dy.middleCols(b * t_out, t_out) = ConstMatrixMap<Scalar>(g.data() + b * c_out * t_out, c_out, t_out);
            if (auto* t = detail::grad_target<Scalar>(inputs[1]))
                MatrixMap<Scalar>(t->data(), c_out, patch).noalias() += dy * cols.transpose();
            if (auto* t = detail::grad_target<Scalar>(inputs[2]))
                MatrixMap<Scalar>(t->data(), c_out, 1) += dy.rowwise().sum();
            if (auto* t = detail::grad_target<Scalar>(inputs[0])) {
                RowMatrix<Scalar> dcols = ConstMatrixMap<Scalar>(inputs[1]->data.data(), c_out, patch).transpose() * dy;
                Scalar* dx = t->data();
                for (Index b = 0; b < batch; ++b)
                    for (Index c = 0; c < c_in; ++c)
                        for (Index j = 0; j < k; ++j) {
                            const Scalar* row = dcols.data() + (c * k + j) * columns + b * t_out;
                            Scalar* dst = dx + (b * c_in + c) * len;
                            for (Index tt = 0; tt < t_out; ++tt) {
                                const Index pos = tt * stride + j - padding;
                                if (pos >= 0 && pos < len) dst[pos] += row[tt];
                            }
                        }
            }
        });
}

/// Swaps the last two axes: [.., A, B] -> [.., B, A].
template <typename Scalar>
Tensor<Scalar> transpose_last2(const Tensor<Scalar>& x) {
    detail::require(x.rank() >= 2, "transpose_last2: rank must be >= 2");
    const Index a = x.dim(-2), b = x.dim(-1), planes = x.size() / (a * b);
    Array<Scalar> out(x.size());
    for (Index p = 0; p < planes; ++p)
        MatrixMap<Scalar>(out.data() + p * a * b, b, a) =
            ConstMatrixMap<Scalar>(x.values().data() + p * a * b, a, b).transpose();
    Shape shape = x.shape();
    std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
    return make_op_result<Scalar>("transpose", std::move(shape), std::move(out), {x},
                                  [a, b, planes](const Array<Scalar>& g, auto inputs) {
                                      auto* t = detail::grad_target<Scalar>(inputs[0]);
                                      if (!t) return;
                                      for (Index p = 0; p < planes; ++p)
                                          MatrixMap<Scalar>(t->data() + p * a * b, a, b) +=
                                              ConstMatrixMap<Scalar>(g.data() + p * a * b, b, a).transpose();
                                  });
}

/// Columns [start, start+len) of the last axis.
template <typename Scalar>
Tensor<Scalar> slice_last(const Tensor<Scalar>& x, Index start, Index len) {
    const Index rows = detail::leading_rows(x), cols = detail::last_dim(x);
    detail::require(x.rank() >= 1 && start >= 0 && len >= 1 && start + len <= cols, "slice_last: range out of bounds");
    Array<Scalar> out(rows * len);
    MatrixMap<Scalar>(out.data(), rows, len) = x.matrix(rows, cols).middleCols(start, len);
    Shape shape = x.shape();
    shape.back() = len;
    return make_op_result<Scalar>("slice", std::move(shape), std::move(out), {x},
                                  [rows, cols, start, len](const Array<Scalar>& g, auto inputs) {
                                      if (auto* t = detail::grad_target<Scalar>(inputs[0]))
                                          MatrixMap<Scalar>(t->data(), rows, cols).middleCols(start, len) +=
                                              ConstMatrixMap<Scalar>(g.data(), rows, len);
                                  });
}

/// Concatenation along the last axis; leading axes must agree.
template <typename Scalar>
Tensor<Scalar> concat_last(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
    detail::require(a.rank() >= 1 && a.rank() == b.rank() &&
                        std::equal(a.shape().begin(), a.shape().end() - 1, b.shape().begin()),
                    "concat_last: leading axes of " + shape_string(a.shape()) + " and " + shape_string(b.shape()) +
                        " differ");
    const Index rows = detail::leading_rows(a), ca = a.dim(-1), cb = b.dim(-1);
    Array<Scalar> out(rows * (ca + cb));
    MatrixMap<Scalar> O(out.data(), rows, ca + cb);
    O.leftCols(ca) = a.matrix(rows, ca);
    O.rightCols(cb) = b.matrix(rows, cb);
    Shape shape = a.shape();
    shape.back() = ca + cb;
    return make_op_result<Scalar>("concat", std::move(shape), std::move(out), {a, b},
                                  [rows, ca, cb](const Array<Scalar>& g, auto inputs) {
                                      ConstMatrixMap<Scalar> G(g.data(), rows, ca + cb);
                                      if (auto* t = detail::grad_target<Scalar>(inputs[0]))
                                          MatrixMap<Scalar>(t->data(), rows, ca) += G.leftCols(ca);
                                      if (auto* t = detail::grad_target<Scalar>(inputs[1]))
                                          MatrixMap<Scalar>(t->data(), rows, cb) += G.rightCols(cb);
                                  });
}

/// Time step t of a sequence: [B,T,D] -> [B,D], or [T,D] -> [D].
template <typename Scalar>
Tensor<Scalar> select_step(const Tensor<Scalar>& x, Index step) {
    detail::require(x.rank() == 2 || x.rank() == 3, "select_step: expects [T,D] or [B,T,D]");
    const Index batch = x.rank() == 3 ? x.dim(0) : 1, steps = x.dim(-2), width = x.dim(-1);
    detail::require(step >= 0 && step < steps, "select_step: step out of range");
    Array<Scalar> out(batch * width);
    for (Index b = 0; b < batch; ++b)
        out.segment(b * width, width) = x.values().segment((b * steps + step) * width, width);
    Shape shape = x.rank() == 3 ? Shape{batch, width} : Shape{width};
    return make_op_result<Scalar>("select_step", std::move(shape), std::move(out), {x},
                                  [batch, steps, width, step](const Array<Scalar>& g, auto inputs) {
                                      auto* t = detail::grad_target<Scalar>(inputs[0]);
                                      if (!t) return;
                                      for (Index b = 0; b < batch; ++b)
                                          t->segment((b * steps + step) * width, width) += g.segment(b * width, width);
                                  });
}

/// Inverse of select_step over all steps: T tensors [B,D] (or [D]) -> [B,T,D] (or [T,D]).
template <typename Scalar>
Tensor<Scalar> stack_steps(const std::vector<Tensor<Scalar>>& steps) {
    detail::require(!steps.empty(), "stack_steps: empty sequence");
    const Shape& first = steps.front().shape();
    detail::require(first.size() == 1 || first.size() == 2, "stack_steps: steps must be [D] or [B,D]");
    for (const auto& s : steps) detail::require(s.shape() == first, "stack_steps: step shapes differ");
    const Index count = static_cast<Index>(steps.size());
    const Index batch = first.size() == 2 ? first[0] : 1, width = first.back();
    Array<Scalar> out(batch * count * width);
    for (Index t = 0; t < count; ++t)
        for (Index b = 0; b < batch; ++b)
            out.segment((b * count + t) * width, width) = steps[t].values().segment(b * width, width);
    Shape shape = first.size() == 2 ? Shape{batch, count, width} : Shape{count, width};
    return make_op_result<Scalar>("stack_steps", std::move(shape), std::move(out), steps,
                                  [batch, count, width](const Array<Scalar>& g, auto inputs) {
                                      for (Index t = 0; t < count; ++t) {
                                          auto* dst = detail::grad_target<Scalar>(inputs[t]);
                                          if (!dst) continue;
                                          for (Index b = 0; b < batch; ++b)
                                              dst->segment(b * width, width) +=
                                                  g.segment((b * count + t) * width, width);
                                      }
                                  });
}

/// Scores s[b,t] = <hiddens[b,t,:], query[b,:]>.
template <typename Scalar>
Tensor<Scalar> batched_dot(const Tensor<Scalar>& hiddens, const Tensor<Scalar>& query) {
    detail::require(hiddens.rank() == 3 && query.rank() == 2 && hiddens.dim(0) == query.dim(0) &&
                        hiddens.dim(2) == query.dim(1),
                    "batched_dot: expects hiddens [B,T,E] and query [B,E]");
    const Index batch = hiddens.dim(0), steps = hiddens.dim(1), width = hiddens.dim(2);
    Array<Scalar> out(batch * steps);
    for (Index b = 0; b < batch; ++b)
        MatrixMap<Scalar>(out.data() + b * steps, steps, 1).noalias() =
            ConstMatrixMap<Scalar>(hiddens.values().data() + b * steps * width, steps, width) *
            ConstMatrixMap<Scalar>(query.values().data() + b * width, width, 1);
    return make_op_result<Scalar>(
        "batched_dot", Shape{batch, steps}, std::move(out), {hiddens, query},
        [batch, steps, width](const Array<Scalar>& g, auto inputs) {
            auto* dh = detail::grad_target<Scalar>(inputs[0]);
            auto* dq = detail::grad_target<Scalar>(inputs[1]);
            for (Index b = 0; b < batch; ++b) {
                ConstMatrixMap<Scalar> G(g.data() + b * steps, 1, steps);
                if (dh)
                    MatrixMap<Scalar>(dh->data() + b * steps * width, steps, width).noalias() +=
                        G.transpose() * ConstMatrixMap<Scalar>(inputs[1]->data.data() + b * width, 1, width);
                if (dq)
                    MatrixMap<Scalar>(dq->data() + b * width, 1, width).noalias() +=
                        G * ConstMatrixMap<Scalar>(inputs[0]->data.data() + b * steps * width, steps, width);
            }
        });
}

/// Convex combination c[b,:] = Σ_t w[b,t] · hiddens[b,t,:].
template <typename Scalar>
Tensor<Scalar> weighted_sum(const Tensor<Scalar>& weights, const Tensor<Scalar>& hiddens) {
    detail::require(hiddens.rank() == 3 && weights.rank() == 2 && hiddens.dim(0) == weights.dim(0) &&
                        hiddens.dim(1) == weights.dim(1),
                    "weighted_sum: expects weights [B,T] and hiddens [B,T,E]");
    const Index batch = hiddens.dim(0), steps = hiddens.dim(1), width = hiddens.dim(2);
    Array<Scalar> out(batch * width);
    for (Index b = 0; b < batch; ++b)
        MatrixMap<Scalar>(out.data() + b * width, 1, width).noalias() =
            ConstMatrixMap<Scalar>(weights.values().data() + b * steps, 1, steps) *
            ConstMatrixMap<Scalar>(hiddens.values().data() + b * steps * width, steps, width);
    return make_op_result<Scalar>(
        "weighted_sum", Shape{batch, width}, std::move(out), {weights, hiddens},
        [batch, steps, width](const Array<Scalar>& g, auto inputs) {
            auto* dw = detail::grad_target<Scalar>(inputs[0]);
            auto* dh = detail::grad_target<Scalar>(inputs[1]);
            for (Index b = 0; b < batch; ++b) {
                ConstMatrixMap<Scalar> G(g.data() + b * width, 1, width);
                if (dw)
                    MatrixMap<Scalar>(dw->data() + b * steps, 1, steps).noalias() +=
                        G * ConstMatrixMap<Scalar>(inputs[1]->data.data() + b * steps * width, steps, width)
                                .transpose();
                if (dh)
                    MatrixMap<Scalar>(dh->data() + b * steps * width, steps, width).noalias() +=
                        ConstMatrixMap<Scalar>(inputs[0]->data.data() + b * steps, 1, steps).transpose() * G;
            }
        });
}

}  // namespace rmra
