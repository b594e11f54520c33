#pragma once

// The full classifier: residual blocks -> strided conv -> stacked BiLSTM ->
// attention pooling -> dense stack -> softmax.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rmra/frame.hpp"
#include "rmra/layers.hpp"

namespace rmra {

struct ModelConfig {
    Index frame_length = 128;
    Index in_channels = 2;
    Index residual_channels = 32;
    Index residual_blocks = 2;
    Index residual_kernel = 3;
    Index reduce_kernel = 3;
    Index reduce_stride = 2;
    Index lstm_hidden = 64;
    Index lstm_layers = 2;
    std::vector<Index> dense_sizes{128, 64};
    Index num_classes = 11;
    std::uint64_t seed = 0;
    bool scaled_attention = false;
    /// Optional display names, one per class when non-empty.
    std::vector<std::string> class_names;

    /// Throws ConfigError naming the first offending field.
    void validate() const;
    Index reduce_padding() const { return (reduce_kernel - 1) / 2; }
    /// Sequence length seen by the LSTM.
    Index sequence_length() const {
        return (frame_length + 2 * reduce_padding() - reduce_kernel) / reduce_stride + 1;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename Scalar>
struct ModelParams {
    std::vector<ResidualBlockParams<Scalar>> residual;
    ConvParams<Scalar> reduce;
    std::vector<BiLstmLayerParams<Scalar>> lstm;
    AttentionParams<Scalar> attention;
    std::vector<DenseParams<Scalar>> dense;

    /// Every trainable tensor in build order. Handles share storage with the model.
    std::vector<Tensor<Scalar>> tensors() const {
        std::vector<Tensor<Scalar>> out;
        auto conv = [&out](const ConvParams<Scalar>& c) {
            out.push_back(c.weight);
            out.push_back(c.bias);
        };
        auto cell = [&out](const LstmParams<Scalar>& l) {
            out.push_back(l.input_weights);
            out.push_back(l.recurrent_weights);
            out.push_back(l.bias);
        };
        for (const auto& block : residual) {
            conv(block.layer1);
            conv(block.layer2);
            if (block.projection) conv(*block.projection);
        }
        conv(reduce);
        for (const auto& layer : lstm) {
            cell(layer.forward);
            cell(layer.backward);
        }
        out.push_back(attention.query.weight);
        out.push_back(attention.query.bias);
        for (const auto& d : dense) {
            out.push_back(d.weight);
            out.push_back(d.bias);
        }
        return out;
    }

    Index parameter_count() const {
        Index n = 0;
        for (const auto& t : tensors()) n += t.size();
        return n;
    }

    void zero_grad() const {
        for (auto t : tensors()) t.zero_grad();
    }
};

inline void ModelConfig::validate() const {
    auto positive = [](Index v, const char* field) {
        if (v < 1) throw ConfigError(field, "must be >= 1, got " + std::to_string(v));
    };
    positive(frame_length, "frame_length");
    positive(in_channels, "in_channels");
    positive(residual_channels, "residual_channels");
    positive(residual_blocks, "residual_blocks");
    positive(residual_kernel, "residual_kernel");
    positive(reduce_kernel, "reduce_kernel");
    positive(reduce_stride, "reduce_stride");
    positive(lstm_hidden, "lstm_hidden");
    positive(lstm_layers, "lstm_layers");
    if (residual_kernel % 2 == 0) throw ConfigError("residual_kernel", "must be odd to preserve frame length");
    for (Index d : dense_sizes) positive(d, "dense_sizes");
    if (num_classes < 2) throw ConfigError("num_classes", "must be >= 2, got " + std::to_string(num_classes));
    if (frame_length + 2 * reduce_padding() < reduce_kernel)
        throw ConfigError("frame_length", "too short for reduce_kernel " + std::to_string(reduce_kernel));
    if (!class_names.empty() && static_cast<Index>(class_names.size()) != num_classes)
        throw ConfigError("class_names", "has " + std::to_string(class_names.size()) + " entries for " +
                                             std::to_string(num_classes) + " classes");
}

/// Deterministic initialization: identical config and seed give
/// bitwise-identical parameters.
template <typename Scalar>
ModelParams<Scalar> build_model(const ModelConfig& cfg) {
    cfg.validate();
    CounterRng rng(cfg.seed);
    ModelParams<Scalar> p;
    Index channels = cfg.in_channels;
    for (Index b = 0; b < cfg.residual_blocks; ++b) {
        p.residual.push_back(init_residual_block<Scalar>(channels, cfg.residual_channels, cfg.residual_kernel, rng));
        channels = cfg.residual_channels;
    }
    p.reduce = init_conv<Scalar>(channels, channels, cfg.reduce_kernel, cfg.reduce_stride, cfg.reduce_padding(), rng);
    p.lstm = init_bilstm<Scalar>(channels, cfg.lstm_hidden, cfg.lstm_layers, rng);
    const Index width = 2 * cfg.lstm_hidden;
    p.attention.query = init_dense<Scalar>(width, width, rng);
    p.attention.scaled = cfg.scaled_attention;
    Index in = width;
    for (Index size : cfg.dense_sizes) {
        p.dense.push_back(init_dense<Scalar>(in, size, rng));
        in = size;
    }
    p.dense.push_back(init_dense<Scalar>(in, cfg.num_classes, rng));
    return p;
}

/// Copies parameter values into a model of another scalar type.
template <typename To, typename From>
ModelParams<To> cast_params(const ModelParams<From>& src, const ModelConfig& cfg) {
    ModelParams<To> dst = build_model<To>(cfg);
    const auto from = src.tensors();
    auto to = dst.tensors();
    if (from.size() != to.size()) throw ShapeError("cast_params: parameter lists differ");
    for (std::size_t k = 0; k < to.size(); ++k) {
        if (from[k].shape() != to[k].shape()) throw ShapeError("cast_params: tensor shapes differ");
        to[k].mutable_values() = from[k].values().template cast<To>();
    }
    return dst;
}

/// Frames to a [B, 2, L] batch (I row then Q row per frame).
template <typename Scalar>
Tensor<Scalar> frames_to_tensor(std::span<const IQFrame* const> frames, const ModelConfig& cfg) {
    if (frames.empty()) throw ShapeError("frames_to_tensor: empty batch");
    if (cfg.in_channels != 2) throw ShapeError("frames_to_tensor: model expects " + std::to_string(cfg.in_channels) +
                                               " channels, IQ frames have 2");
    const Index len = cfg.frame_length, batch = static_cast<Index>(frames.size());
    Array<Scalar> data(batch * 2 * len);
    for (Index b = 0; b < batch; ++b) {
        const IQFrame& f = *frames[static_cast<std::size_t>(b)];
        if (static_cast<Index>(f.i.size()) != len || static_cast<Index>(f.q.size()) != len)
            throw ShapeError("frame length " + std::to_string(f.i.size()) + "/" + std::to_string(f.q.size()) +
                             " does not match model frame_length " + std::to_string(len));
        for (Index t = 0; t < len; ++t) {
            data[(b * 2) * len + t] = static_cast<Scalar>(f.i[static_cast<std::size_t>(t)]);
            data[(b * 2 + 1) * len + t] = static_cast<Scalar>(f.q[static_cast<std::size_t>(t)]);
        }
    }
    return Tensor<Scalar>({batch, 2, len}, std::move(data));
}

template <typename Scalar>
struct ModelOutput {
    Tensor<Scalar> logits;     // [B, K]
    Tensor<Scalar> attention;  // [B, T]
};

/// Batched forward to logits. x is [B, C, L].
template <typename Scalar>
ModelOutput<Scalar> forward_logits(const ModelParams<Scalar>& p, const ModelConfig& cfg, const Tensor<Scalar>& x) {
    if (x.rank() != 3 || x.dim(1) != cfg.in_channels || x.dim(2) != cfg.frame_length)
        throw ShapeError("model input " + shape_string(x.shape()) + " does not match [B," +
                         std::to_string(cfg.in_channels) + "," + std::to_string(cfg.frame_length) + "]");
    Tensor<Scalar> h = x;
    for (const auto& block : p.residual) h = residual_block_forward(block, h);
    h = relu(conv_forward(p.reduce, h));
    h = transpose_last2(h);  // [B, T, C]: time steps of channel vectors
    h = bilstm_forward(p.lstm, h);
    AttentionOutput<Scalar> pooled = attention_pool(p.attention, h);
    Tensor<Scalar> z = pooled.context;
    for (std::size_t k = 0; k + 1 < p.dense.size(); ++k) z = relu(dense_forward(p.dense[k], z));
    return {dense_forward(p.dense.back(), z), pooled.weights};
}

/// Class probabilities [K] for one frame.
template <typename Scalar>
Tensor<Scalar> forward(const ModelParams<Scalar>& p, const ModelConfig& cfg, const IQFrame& frame) {
    const IQFrame* one[] = {&frame};
    const auto out = forward_logits(p, cfg, frames_to_tensor<Scalar>(one, cfg));
    return reshape(softmax(out.logits), {cfg.num_classes});
}

/// Index of the largest entry; ties go to the lowest index.
template <typename Derived>
std::size_t argmax(const Eigen::DenseBase<Derived>& values) {
    Index best = 0;
    for (Index k = 1; k < values.size(); ++k) {
        if (values(k) > values(best)) best = k;
    }
    return static_cast<std::size_t>(best);
}

template <typename Scalar>
std::size_t predict(const ModelParams<Scalar>& p, const ModelConfig& cfg, const IQFrame& frame) {
    NoGradGuard no_grad;
    return argmax(forward(p, cfg, frame).values());
}

/// Predicted class per frame, evaluated in batches without recording a tape.
template <typename Scalar>
std::vector<std::size_t> predict_batch(const ModelParams<Scalar>& p, const ModelConfig& cfg,
                                       std::span<const IQFrame> frames, std::size_t batch_size = 256) {
    NoGradGuard no_grad;
    std::vector<std::size_t> out;
    out.reserve(frames.size());
    std::vector<const IQFrame*> chunk;
    for (std::size_t start = 0; start < frames.size(); start += batch_size) {
        chunk.clear();
        for (std::size_t k = start; k < std::min(frames.size(), start + batch_size); ++k) chunk.push_back(&frames[k]);
        const auto logits = forward_logits(p, cfg, frames_to_tensor<Scalar>(chunk, cfg)).logits;
        const auto m = logits.matrix(static_cast<Index>(chunk.size()), cfg.num_classes);
        for (Index r = 0; r < m.rows(); ++r) out.push_back(argmax(m.row(r)));
    }
    return out;
}

// Parameter files (64-bit values, config echo). Defined in model_io.cpp.

struct LoadedModel {
    ModelConfig config;
    ModelParams<double> params;
};

inline constexpr std::uint32_t kParamFormatVersion = 1;

void save_params(const ModelParams<double>& params, const ModelConfig& cfg, const std::filesystem::path& path);
LoadedModel load_params(const std::filesystem::path& path);
/// Loads and checks every tensor shape against build_model(expected).
ModelParams<double> load_params(const std::filesystem::path& path, const ModelConfig& expected);

}  // namespace rmra
