#include "rmra/train.hpp"

#include <cmath>

#include "rmra/dataset.hpp"
#include "rmra/random.hpp"

namespace rmra {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate", "must be > 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw ConfigError("adam_beta1", "must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw ConfigError("adam_beta2", "must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps", "must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (target_accuracy && !(*target_accuracy > 0.0 && *target_accuracy <= 1.0))
        throw ConfigError("target_accuracy", "must lie in (0, 1]");
}

namespace {

void check_labels(std::span<const IQFrame> frames, const ModelConfig& cfg, const char* which) {
    for (const IQFrame& f : frames) {
        if (static_cast<Index>(f.class_index) >= cfg.num_classes)
            throw ContractError(std::string(which) + " set has class " + std::to_string(f.class_index) +
                                " but the model has " + std::to_string(cfg.num_classes) + " classes");
    }
}

template <typename Scalar>
TrainResult run_training(ModelParams<Scalar> params, const ModelConfig& model_cfg, const TrainConfig& cfg,
                         std::span<const IQFrame> train_set, std::span<const IQFrame> val_set,
                         const EpochCallback& on_epoch) {
    auto tensors = params.tensors();
    AdamState<Scalar> state;
    std::vector<Array<Scalar>> grads(tensors.size());
    TrainHistory history;
    std::size_t step = 0;
    std::vector<const IQFrame*> chunk;
    std::vector<std::size_t> labels;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto batches = make_batches(train_set.size(), cfg.batch_size, hash_seed({cfg.seed, epoch}));
        EpochStats stats;
        stats.epoch = epoch;
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            chunk.clear();
            labels.clear();
            for (std::size_t k : batches[b]) {
                chunk.push_back(&train_set[k]);
                labels.push_back(train_set[k].class_index);
            }
            const auto out = forward_logits(params, model_cfg, frames_to_tensor<Scalar>(chunk, model_cfg));
            const auto loss = cross_entropy(out.logits, std::span<const std::size_t>(labels));
            const double loss_value = static_cast<double>(loss.item());
            if (!std::isfinite(loss_value))
                throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1));
            loss_sum += loss_value * static_cast<double>(labels.size());
            const auto logits = out.logits.matrix(static_cast<Index>(labels.size()), model_cfg.num_classes);
            for (Index r = 0; r < logits.rows(); ++r)
                correct += argmax(logits.row(r)) == labels[static_cast<std::size_t>(r)] ? 1 : 0;

            params.zero_grad();
            backward(loss);
            double norm_sq = 0.0;
            for (std::size_t k = 0; k < tensors.size(); ++k) {
                grads[k] = tensors[k].has_grad() ? tensors[k].grad() : Array<Scalar>::Zero(tensors[k].size());
                norm_sq += static_cast<double>(grads[k].square().sum());
            }
            const double norm = std::sqrt(norm_sq);
            if (!std::isfinite(norm))
                throw NumericError("non-finite gradient at epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b + 1));
            if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) {
                const auto factor = static_cast<Scalar>(cfg.clip_norm / norm);
                for (auto& g : grads) g *= factor;
                ++stats.clipped_batches;
            }
            adam_step(std::span<Tensor<Scalar>>(tensors), std::span<const Array<Scalar>>(grads), state, cfg, ++step);
        }
        stats.train_loss = train_set.empty() ? 0.0 : loss_sum / static_cast<double>(train_set.size());
        stats.train_accuracy = train_set.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(train_set.size());
        stats.val_accuracy = val_set.empty() ? 0.0 : evaluate(params, model_cfg, val_set).overall_accuracy;
        history.push_back(stats);
        if (on_epoch) on_epoch(stats);
        if (cfg.target_accuracy && !val_set.empty() && stats.val_accuracy >= *cfg.target_accuracy) break;
    }
    for (auto& t : tensors) t.clear_grad();
    if constexpr (std::is_same_v<Scalar, double>) {
        return {std::move(params), std::move(history)};
    } else {
        return {cast_params<double>(params, model_cfg), std::move(history)};
    }
}

}  // namespace

TrainResult train_from(const ModelParams<double>& initial, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                       std::span<const IQFrame> train_set, std::span<const IQFrame> val_set,
                       const EpochCallback& on_epoch) {
    model_cfg.validate();
    train_cfg.validate();
    if (train_set.empty()) throw ContractError("train: empty training set");
    check_labels(train_set, model_cfg, "training");
    check_labels(val_set, model_cfg, "validation");
    if (train_cfg.precision == Precision::f32)
        return run_training(cast_params<float>(initial, model_cfg), model_cfg, train_cfg, train_set, val_set, on_epoch);
    return run_training(cast_params<double>(initial, model_cfg), model_cfg, train_cfg, train_set, val_set, on_epoch);
}

TrainResult train(const ModelConfig& model_cfg, const TrainConfig& train_cfg, std::span<const IQFrame> train_set,
                  std::span<const IQFrame> val_set, const EpochCallback& on_epoch) {
    return train_from(build_model<double>(model_cfg), model_cfg, train_cfg, train_set, val_set, on_epoch);
}

Evaluation evaluate_predictions(std::span<const IQFrame> frames, std::span<const std::size_t> predictions,
                                std::size_t num_classes) {
    if (frames.size() != predictions.size()) throw ShapeError("evaluate: prediction count differs from frame count");
    Evaluation ev;
    ev.confusion.num_classes = num_classes;
    const auto k = static_cast<Index>(num_classes);
    for (std::size_t n = 0; n < frames.size(); ++n) {
        const std::size_t truth = frames[n].class_index, guess = predictions[n];
        if (truth >= num_classes || guess >= num_classes)
            throw ContractError("evaluate: class index " + std::to_string(std::max(truth, guess)) + " outside [0, " +
                                std::to_string(num_classes) + ")");
        auto [it, inserted] = ev.confusion.by_snr.try_emplace(frames[n].snr_db, ConfusionMatrix::Zero(k, k));
        ++it->second(static_cast<Index>(truth), static_cast<Index>(guess));
    }
    std::int64_t hits = 0, total = 0;
    for (const auto& [snr, m] : ev.confusion.by_snr) {
        ev.accuracy_by_snr[snr] = static_cast<double>(m.trace()) / static_cast<double>(m.sum());
        hits += m.trace();
        total += m.sum();
    }
    ev.overall_accuracy = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
    return ev;
}

}  // namespace rmra
