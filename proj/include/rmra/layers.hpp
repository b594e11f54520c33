#pragma once

// Parameterized building blocks: dense, residual conv block, LSTM (single
// step and fused sequence), stacked BiLSTM, and dot-product attention pooling.
// Every forward accepts an unbatched input or one with a leading batch axis.

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "rmra/ops.hpp"
#include "rmra/random.hpp"

namespace rmra {

template <typename Scalar>
struct DenseParams {
    Tensor<Scalar> weight;  // [out, in]
    Tensor<Scalar> bias;    // [out]

    Index in_features() const { return weight.dim(1); }
    Index out_features() const { return weight.dim(0); }
};

template <typename Scalar>
struct ConvParams {
    Tensor<Scalar> weight;  // [C_out, C_in, k]
    Tensor<Scalar> bias;    // [C_out]
    Index stride = 1;
    Index padding = 0;
};

/// layer1 and layer2 keep the time length; projection is the 1x1 skip
/// convolution, present iff the block changes the channel count.
template <typename Scalar>
struct ResidualBlockParams {
    ConvParams<Scalar> layer1;
    ConvParams<Scalar> layer2;
    std::optional<ConvParams<Scalar>> projection;
};

/// Gate blocks are stacked in the order (i, f, g, o).
template <typename Scalar>
struct LstmParams {
    Tensor<Scalar> input_weights;      // [4H, D]
    Tensor<Scalar> recurrent_weights;  // [4H, H]
    Tensor<Scalar> bias;               // [4H]

    Index hidden_size() const { return recurrent_weights.dim(1); }
    Index input_size() const { return input_weights.dim(1); }
};

template <typename Scalar>
struct BiLstmLayerParams {
    LstmParams<Scalar> forward;
    LstmParams<Scalar> backward;
};

template <typename Scalar>
struct AttentionParams {
    DenseParams<Scalar> query;  // square [2H, 2H]
    bool scaled = false;        // divide scores by sqrt(2H)
};

// ---------------------------------------------------------------------------
// Initialization (uniform Glorot from a counter-based stream)

template <typename Scalar>
Tensor<Scalar> glorot_uniform(Shape shape, Index fan_in, Index fan_out, CounterRng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Array<Scalar> values(shape_size(shape));
    for (Index i = 0; i < values.size(); ++i) values[i] = static_cast<Scalar>(rng.uniform(-limit, limit));
    return Tensor<Scalar>::parameter(std::move(shape), std::move(values));
}

template <typename Scalar>
DenseParams<Scalar> init_dense(Index in, Index out, CounterRng& rng) {
    return {glorot_uniform<Scalar>({out, in}, in, out, rng),
            Tensor<Scalar>::parameter({out}, Array<Scalar>::Zero(out))};
}

template <typename Scalar>
ConvParams<Scalar> init_conv(Index c_in, Index c_out, Index kernel, Index stride, Index padding, CounterRng& rng) {
    return {glorot_uniform<Scalar>({c_out, c_in, kernel}, c_in * kernel, c_out * kernel, rng),
            Tensor<Scalar>::parameter({c_out}, Array<Scalar>::Zero(c_out)), stride, padding};
}

template <typename Scalar>
ResidualBlockParams<Scalar> init_residual_block(Index c_in, Index c_out, Index kernel, CounterRng& rng) {
    ResidualBlockParams<Scalar> p;
    const Index pad = (kernel - 1) / 2;
    p.layer1 = init_conv<Scalar>(c_in, c_out, kernel, 1, pad, rng);
    p.layer2 = init_conv<Scalar>(c_out, c_out, kernel, 1, pad, rng);
    if (c_in != c_out) p.projection = init_conv<Scalar>(c_in, c_out, 1, 1, 0, rng);
    return p;
}

/// Forget-gate bias starts at 1, all other biases at 0.
template <typename Scalar>
LstmParams<Scalar> init_lstm(Index input_size, Index hidden, CounterRng& rng) {
    Array<Scalar> bias = Array<Scalar>::Zero(4 * hidden);
    bias.segment(hidden, hidden).setConstant(Scalar(1));
    return {glorot_uniform<Scalar>({4 * hidden, input_size}, input_size, 4 * hidden, rng),
            glorot_uniform<Scalar>({4 * hidden, hidden}, hidden, 4 * hidden, rng),
            Tensor<Scalar>::parameter({4 * hidden}, std::move(bias))};
}

template <typename Scalar>
std::vector<BiLstmLayerParams<Scalar>> init_bilstm(Index input_size, Index hidden, Index layers, CounterRng& rng) {
    std::vector<BiLstmLayerParams<Scalar>> stack;
    for (Index l = 0; l < layers; ++l) {
        const Index in = l == 0 ? input_size : 2 * hidden;
        BiLstmLayerParams<Scalar> layer;
        layer.forward = init_lstm<Scalar>(in, hidden, rng);
        layer.backward = init_lstm<Scalar>(in, hidden, rng);
        stack.push_back(std::move(layer));
    }
    return stack;
}

// ---------------------------------------------------------------------------
// Forward passes

template <typename Scalar>
Tensor<Scalar> dense_forward(const DenseParams<Scalar>& p, const Tensor<Scalar>& x) {
    return linear(x, p.weight, p.bias);
}

template <typename Scalar>
Tensor<Scalar> conv_forward(const ConvParams<Scalar>& p, const Tensor<Scalar>& x) {
    return conv1d(x, p.weight, p.bias, p.stride, p.padding);
}

/// relu(layer2(relu(layer1(x))) + skip(x)).
template <typename Scalar>
Tensor<Scalar> residual_block_forward(const ResidualBlockParams<Scalar>& p, const Tensor<Scalar>& x) {
    const Tensor<Scalar> inner = conv_forward(p.layer2, relu(conv_forward(p.layer1, x)));
    const Tensor<Scalar> skip = p.projection ? conv_forward(*p.projection, x) : x;
    if (inner.shape() != skip.shape())
        throw ShapeError("residual block: branch " + shape_string(inner.shape()) + " vs skip " +
                         shape_string(skip.shape()));
    return relu(inner + skip);
}

/// One LSTM step built from primitive ops. x [D] or [B,D]; h, c [H] or [B,H].
template <typename Scalar>
std::pair<Tensor<Scalar>, Tensor<Scalar>> lstm_cell_step(const LstmParams<Scalar>& p, const Tensor<Scalar>& x,
                                                         const Tensor<Scalar>& h_prev, const Tensor<Scalar>& c_prev) {
    const Index hidden = p.hidden_size();
    if (h_prev.shape() != c_prev.shape() || h_prev.dim(-1) != hidden)
        throw ShapeError("lstm_cell_step: state shapes " + shape_string(h_prev.shape()) + ", " +
                         shape_string(c_prev.shape()) + " do not match hidden size " + std::to_string(hidden));
    const Tensor<Scalar> pre = linear(x, p.input_weights, p.bias) + linear(h_prev, p.recurrent_weights, Tensor<Scalar>{});
    const Tensor<Scalar> i = sigmoid(slice_last(pre, 0, hidden));
    const Tensor<Scalar> f = sigmoid(slice_last(pre, hidden, hidden));
    const Tensor<Scalar> g = tanh(slice_last(pre, 2 * hidden, hidden));
    const Tensor<Scalar> o = sigmoid(slice_last(pre, 3 * hidden, hidden));
    Tensor<Scalar> c = mul(f, c_prev) + mul(i, g);
    Tensor<Scalar> h = mul(o, tanh(c));
    return {std::move(h), std::move(c)};
}

/// Whole-sequence LSTM from zero state as one tape node with a hand-written
/// backpropagation-through-time. x [B,T,D] or [T,D]; `reverse` runs t = T-1..0.
/// Output holds h_t at position t.
template <typename Scalar>
Tensor<Scalar> lstm_sequence(const Tensor<Scalar>& x, const LstmParams<Scalar>& p, bool reverse) {
    if (x.rank() == 2) {
        const Index steps = x.dim(0);
        return reshape(lstm_sequence(reshape(x, {1, steps, x.dim(1)}), p, reverse), {steps, p.hidden_size()});
    }
    if (x.rank() != 3) throw ShapeError("lstm_sequence: input must be [T,D] or [B,T,D]");
    const Index batch = x.dim(0), steps = x.dim(1), width = x.dim(2), hidden = p.hidden_size();
    if (width != p.input_size())
        throw ShapeError("lstm_sequence: input width " + std::to_string(width) + ", weights expect " +
                         std::to_string(p.input_size()));
    const Index gates = 4 * hidden, rows = batch * steps;
    using Mat = RowMatrix<Scalar>;

    // Time-major layout: rows [t*B, (t+1)*B) belong to step t.
    auto to_time_major = [batch, steps](const auto& src, Index cols) {
        Mat dst(batch * steps, cols);
        for (Index b = 0; b < batch; ++b)
            for (Index t = 0; t < steps; ++t) dst.row(t * batch + b) = src.row(b * steps + t);
        return dst;
    };
    Mat xs = to_time_major(x.matrix(rows, width), width);

    const auto w_rec = p.recurrent_weights.matrix(gates, hidden);
    Mat act = xs * p.input_weights.matrix(gates, width).transpose();  // activated in place below
    act.rowwise() += p.bias.matrix(1, gates).row(0);

    Mat tanh_cells(rows, hidden), h_prev(rows, hidden), c_prev(rows, hidden), hs(rows, hidden);
    Mat h = Mat::Zero(batch, hidden), c = Mat::Zero(batch, hidden);
    for (Index s = 0; s < steps; ++s) {
        const Index t = reverse ? steps - 1 - s : s;
        auto a = act.middleRows(t * batch, batch);
        a.noalias() += h * w_rec.transpose();
        a.leftCols(2 * hidden) = (Scalar(1) / (Scalar(1) + (-a.leftCols(2 * hidden).array()).exp())).matrix();
        a.middleCols(2 * hidden, hidden) = a.middleCols(2 * hidden, hidden).array().tanh().matrix();
        a.rightCols(hidden) = (Scalar(1) / (Scalar(1) + (-a.rightCols(hidden).array()).exp())).matrix();
        h_prev.middleRows(t * batch, batch) = h;
        c_prev.middleRows(t * batch, batch) = c;
        c = (a.middleCols(hidden, hidden).array() * c.array() +
             a.leftCols(hidden).array() * a.middleCols(2 * hidden, hidden).array())
                .matrix();
        auto tc = tanh_cells.middleRows(t * batch, batch);
        tc = c.array().tanh().matrix();
        h = (a.rightCols(hidden).array() * tc.array()).matrix();
        hs.middleRows(t * batch, batch) = h;
    }

    Array<Scalar> out(rows * hidden);
    MatrixMap<Scalar> out_map(out.data(), rows, hidden);
    for (Index b = 0; b < batch; ++b)
        for (Index t = 0; t < steps; ++t) out_map.row(b * steps + t) = hs.row(t * batch + b);

    return make_op_result<Scalar>(
        "lstm_sequence", Shape{batch, steps, hidden}, std::move(out),
        {x, p.input_weights, p.recurrent_weights, p.bias},
        [=, xs = std::move(xs), act = std::move(act), tanh_cells = std::move(tanh_cells),
         h_prev = std::move(h_prev), c_prev = std::move(c_prev)](const Array<Scalar>& g, auto inputs) {
            const Mat grad_h = to_time_major(ConstMatrixMap<Scalar>(g.data(), rows, hidden), hidden);
            const auto w_rec = ConstMatrixMap<Scalar>(inputs[2]->data.data(), gates, hidden);
            Mat d_act(rows, gates);
            Mat dh_next = Mat::Zero(batch, hidden), dc_next = Mat::Zero(batch, hidden);
            for (Index s = steps - 1; s >= 0; --s) {
                const Index t = reverse ? steps - 1 - s : s;
                const auto a = act.middleRows(t * batch, batch).array();
                const auto i = a.leftCols(hidden), f = a.middleCols(hidden, hidden);
                const auto gg = a.middleCols(2 * hidden, hidden), o = a.rightCols(hidden);
                const auto tc = tanh_cells.middleRows(t * batch, batch).array();
                const Mat dh = grad_h.middleRows(t * batch, batch) + dh_next;
                const Mat dc = (dh.array() * o * (Scalar(1) - tc.square()) + dc_next.array()).matrix();
                auto da = d_act.middleRows(t * batch, batch).array();
                da.leftCols(hidden) = dc.array() * gg * i * (Scalar(1) - i);
                da.middleCols(hidden, hidden) =
                    dc.array() * c_prev.middleRows(t * batch, batch).array() * f * (Scalar(1) - f);
                da.middleCols(2 * hidden, hidden) = dc.array() * i * (Scalar(1) - gg.square());
                da.rightCols(hidden) = dh.array() * tc * o * (Scalar(1) - o);
                dc_next = (dc.array() * f).matrix();
                dh_next.noalias() = d_act.middleRows(t * batch, batch) * w_rec;
            }
            if (auto* dx = detail::grad_target<Scalar>(inputs[0])) {
                const Mat dxs = d_act * ConstMatrixMap<Scalar>(inputs[1]->data.data(), gates, width);
                MatrixMap<Scalar> dst(dx->data(), rows, width);
                for (Index b = 0; b < batch; ++b)
                    for (Index t = 0; t < steps; ++t) dst.row(b * steps + t) += dxs.row(t * batch + b);
            }
            if (auto* dw = detail::grad_target<Scalar>(inputs[1]))
                MatrixMap<Scalar>(dw->data(), gates, width).noalias() += d_act.transpose() * xs;
            if (auto* dw = detail::grad_target<Scalar>(inputs[2]))
                MatrixMap<Scalar>(dw->data(), gates, hidden).noalias() += d_act.transpose() * h_prev;
            if (auto* db = detail::grad_target<Scalar>(inputs[3]))
                MatrixMap<Scalar>(db->data(), 1, gates) += d_act.colwise().sum();
        });
}

/// Stacked bidirectional LSTM: [T,D] -> [T,2H] or [B,T,D] -> [B,T,2H].
/// Each layer concatenates its forward and backward hidden sequences.
template <typename Scalar>
Tensor<Scalar> bilstm_forward(const std::vector<BiLstmLayerParams<Scalar>>& layers, const Tensor<Scalar>& x) {
    if (x.rank() < 2 || x.dim(-2) < 1) throw ShapeError("bilstm_forward: empty sequence");
    Tensor<Scalar> seq = x;
    for (const auto& layer : layers)
        seq = concat_last(lstm_sequence(seq, layer.forward, false), lstm_sequence(seq, layer.backward, true));
    return seq;
}

template <typename Scalar>
struct AttentionOutput {
    Tensor<Scalar> context;  // [2H] or [B,2H]
    Tensor<Scalar> weights;  // [T] or [B,T]
};

/// Query = dense(last hidden state); weights = softmax of query/state dot
/// products; context = weighted sum of the hidden states.
template <typename Scalar>
AttentionOutput<Scalar> attention_pool(const AttentionParams<Scalar>& p, const Tensor<Scalar>& hiddens) {
    if (hiddens.rank() == 2) {
        const Index steps = hiddens.dim(0), width = hiddens.dim(1);
        auto batched = attention_pool(p, reshape(hiddens, {1, steps, width}));
        return {reshape(batched.context, {width}), reshape(batched.weights, {steps})};
    }
    if (hiddens.rank() != 3) throw ShapeError("attention_pool: hiddens must be [T,E] or [B,T,E]");
    const Index steps = hiddens.dim(1), width = hiddens.dim(2);
    const Tensor<Scalar> query = dense_forward(p.query, select_step(hiddens, steps - 1));
    Tensor<Scalar> scores = batched_dot(hiddens, query);
    if (p.scaled) scores = scale(scores, Scalar(1) / std::sqrt(Scalar(width)));
    Tensor<Scalar> weights = softmax(scores);
    Tensor<Scalar> context = weighted_sum(weights, hiddens);
    return {std::move(context), std::move(weights)};
}

}  // namespace rmra
