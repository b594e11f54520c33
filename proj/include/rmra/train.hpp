#pragma once

// Adam training loop, per-SNR confusion evaluation, and report files.

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmra/model.hpp"

namespace rmra {

enum class Precision { f32, f64 };

struct TrainConfig {
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t batch_size = 64;
    std::size_t epochs = 10;
    std::uint64_t seed = 0;
    /// Global gradient-norm ceiling; <= 0 disables clipping.
    double clip_norm = 5.0;
    /// Arithmetic used for forward/backward. Saved parameters are always 64-bit.
    Precision precision = Precision::f64;
    /// Stop once held-out accuracy reaches this value. Off when unset.
    std::optional<double> target_accuracy;

    void validate() const;
};

template <typename Scalar>
struct AdamState {
    std::vector<Array<Scalar>> m;
    std::vector<Array<Scalar>> v;
};

/// One bias-corrected Adam update at step t >= 1. Gradients must be finite.
template <typename Scalar>
void adam_step(std::span<Tensor<Scalar>> params, std::span<const Array<Scalar>> grads, AdamState<Scalar>& state,
               const TrainConfig& cfg, std::size_t t) {
    if (t < 1) throw ContractError("adam_step: step index starts at 1");
    if (params.size() != grads.size()) throw ShapeError("adam_step: parameter/gradient counts differ");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Array<Scalar>::Zero(p.size()));
            state.v.push_back(Array<Scalar>::Zero(p.size()));
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameters");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (grads[k].size() != params[k].size() || state.m[k].size() != params[k].size())
            throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(k));
        if (!grads[k].allFinite()) throw NumericError("adam_step: non-finite gradient in parameter " + std::to_string(k));
    }
    const Scalar b1 = static_cast<Scalar>(cfg.adam_beta1), b2 = static_cast<Scalar>(cfg.adam_beta2);
    const Scalar correction1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.adam_beta1, static_cast<double>(t)));
    const Scalar correction2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg.adam_beta2, static_cast<double>(t)));
    const Scalar lr = static_cast<Scalar>(cfg.learning_rate), eps = static_cast<Scalar>(cfg.adam_eps);
    for (std::size_t k = 0; k < params.size(); ++k) {
        state.m[k] = b1 * state.m[k] + (Scalar(1) - b1) * grads[k];
        state.v[k] = b2 * state.v[k] + (Scalar(1) - b2) * grads[k].square();
        params[k].mutable_values() -= lr * (state.m[k] / correction1) / ((state.v[k] / correction2).sqrt() + eps);
    }
}

struct EpochStats {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_accuracy = 0.0;
    std::size_t clipped_batches = 0;
};

using TrainHistory = std::vector<EpochStats>;

struct TrainResult {
    ModelParams<double> params;
    TrainHistory history;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Minibatch Adam on mean cross-entropy. Deterministic for fixed seeds.
/// Throws NumericError (with epoch/batch context) on a non-finite loss.
TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, std::span<const IQFrame> train_set,
                  std::span<const IQFrame> val_set, const EpochCallback& on_epoch = {});

/// Same, continuing from given parameters instead of a fresh build.
TrainResult train_from(const ModelParams<double>& initial, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                       std::span<const IQFrame> train_set, std::span<const IQFrame> val_set,
                       const EpochCallback& on_epoch = {});

using ConfusionMatrix = Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic>;

/// snr_db -> K x K counts, row = true class, column = predicted class.
struct SnrConfusion {
    std::size_t num_classes = 0;
    std::map<int, ConfusionMatrix> by_snr;
};

struct Evaluation {
    SnrConfusion confusion;
    std::map<int, double> accuracy_by_snr;
    double overall_accuracy = 0.0;
};

/// Tallies predictions against frame labels. Throws ContractError for a
/// label or prediction outside [0, num_classes).
Evaluation evaluate_predictions(std::span<const IQFrame> frames, std::span<const std::size_t> predictions,
                                std::size_t num_classes);

template <typename Scalar>
Evaluation evaluate(const ModelParams<Scalar>& params, const ModelConfig& cfg, std::span<const IQFrame> test_set) {
    if (test_set.empty()) throw ContractError("evaluate: empty test set");
    const auto predictions = predict_batch(params, cfg, test_set);
    return evaluate_predictions(test_set, predictions, static_cast<std::size_t>(cfg.num_classes));
}

/// Writes confusion_<snr>.csv per SNR, accuracy_vs_snr.csv and
/// accuracy_vs_snr.svg into out_dir (created if missing).
void emit_report(const SnrConfusion& confusion, const std::map<int, double>& accuracy_by_snr,
                 const std::vector<std::string>& class_names, const std::filesystem::path& out_dir);

/// epoch,train_loss,train_acc,val_acc
void write_history(const TrainHistory& history, const std::filesystem::path& path);

/// Parses a confusion CSV written by emit_report.
ConfusionMatrix read_confusion_csv(const std::filesystem::path& path);

}  // namespace rmra
