#include "rmra/cli.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "rmra/config_io.hpp"
#include "rmra/dataset.hpp"
#include "rmra/signal.hpp"
#include "rmra/train.hpp"

namespace rmra::cli {

namespace {

using nlohmann::json;

struct GenerateOptions {
    std::string spec;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> frames;
};

struct TrainOptions {
    std::string data;
    std::string model_out;
    std::string config;
    std::string history;
    std::optional<std::size_t> epochs;
    std::optional<std::uint64_t> seed;
    std::optional<double> lr;
    std::optional<std::size_t> batch_size;
    std::optional<std::string> precision;
    std::optional<double> split;
    std::optional<std::uint64_t> split_seed;
    std::optional<double> target_accuracy;
};

struct EvalOptions {
    std::string data;
    std::string model;
    std::string report;
    std::optional<double> split;
    std::uint64_t split_seed = 0;
};

struct InferOptions {
    std::string model;
    std::string frame;
    std::size_t index = 0;
};

std::string format_prob(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", p);
    return buf;
}

std::vector<std::string> class_names_for(const ModelConfig& cfg) {
    if (!cfg.class_names.empty()) return cfg.class_names;
    std::vector<std::string> names;
    for (Index c = 0; c < cfg.num_classes; ++c) names.push_back("class" + std::to_string(c));
    return names;
}

int do_generate(const GenerateOptions& o, unsigned threads, std::ostream& out) {
    DatasetSpec spec = dataset_spec_from_json(read_json_file(o.spec));
    if (o.seed) spec.master_seed = *o.seed;
    if (o.frames) spec.frames_per_class_per_snr = *o.frames;
    spec.validate();
    const DatasetHeader h = generate_dataset(spec, o.out, threads);
    out << "wrote " << h.total_frames << " frames (" << h.classes.size() << " classes x " << h.snr_grid_db.size()
        << " SNRs) to " << o.out << '\n';
    return kOk;
}

int do_train(const TrainOptions& o, bool quiet, std::ostream& out, std::ostream& err) {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    SplitSpec split_spec;
    if (!o.config.empty()) {
        const json j = read_json_file(o.config);
        if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
        for (const auto& [key, value] : j.items())
            if (key != "model" && key != "train" && key != "split") throw ConfigError(key, "unknown key in train config");
        if (j.contains("model")) model_cfg = model_config_from_json(j.at("model"), model_cfg);
        if (j.contains("train")) train_cfg = train_config_from_json(j.at("train"), train_cfg);
        if (j.contains("split")) {
            const auto& s = j.at("split");
            for (const auto& [key, value] : s.items())
                if (key != "train_fraction" && key != "seed") throw ConfigError(key, "unknown key in split config");
            if (s.contains("train_fraction")) split_spec.train_fraction = s.at("train_fraction").get<double>();
            if (s.contains("seed")) split_spec.seed = s.at("seed").get<std::uint64_t>();
        }
    }
    if (o.epochs) train_cfg.epochs = *o.epochs;
    if (o.seed) {
        train_cfg.seed = *o.seed;
        model_cfg.seed = *o.seed;
    }
    if (o.lr) train_cfg.learning_rate = *o.lr;
    if (o.batch_size) train_cfg.batch_size = *o.batch_size;
    if (o.precision) train_cfg = train_config_from_json(json{{"precision", *o.precision}}, train_cfg);
    if (o.split) split_spec.train_fraction = *o.split;
    if (o.split_seed) split_spec.seed = *o.split_seed;
    if (o.target_accuracy) train_cfg.target_accuracy = *o.target_accuracy;

    Dataset ds = read_dataset(o.data);
    model_cfg.num_classes = static_cast<Index>(ds.header.classes.size());
    model_cfg.frame_length = static_cast<Index>(ds.header.frame_length);
    model_cfg.class_names = ds.header.classes;
    model_cfg.validate();
    train_cfg.validate();

    const auto [train_set, val_set] = split(ds.frames, split_spec);
    if (!quiet)
        err << "training on " << train_set.size() << " frames, validating on " << val_set.size() << " ("
            << model_cfg.num_classes << " classes)\n";
    const TrainResult result =
        train(model_cfg, train_cfg, train_set, val_set, [&](const EpochStats& e) {
            if (quiet) return;
            err << "epoch " << e.epoch << ": loss " << format_prob(e.train_loss) << ", train acc "
                << format_prob(e.train_accuracy) << ", val acc " << format_prob(e.val_accuracy);
            if (e.clipped_batches) err << " (" << e.clipped_batches << " batches clipped)";
            err << '\n';
        });
    save_params(result.params, model_cfg, o.model_out);
    const std::filesystem::path history =
        o.history.empty() ? std::filesystem::path(o.model_out).parent_path() / "history.csv" : std::filesystem::path(o.history);
    write_history(result.history, history);
    out << "saved model to " << o.model_out << " after " << result.history.size() << " epochs";
    if (!result.history.empty()) out << " (val acc " << format_prob(result.history.back().val_accuracy) << ")";
    out << '\n';
    return kOk;
}

int do_eval(const EvalOptions& o, std::ostream& out) {
    const LoadedModel model = load_params(o.model);
    const Dataset ds = read_dataset(o.data);
    if (static_cast<Index>(ds.header.classes.size()) != model.config.num_classes)
        throw FormatError("dataset has " + std::to_string(ds.header.classes.size()) + " classes, model expects " +
                          std::to_string(model.config.num_classes));
    std::vector<IQFrame> frames;
    if (o.split) {
        frames = split(ds.frames, SplitSpec{*o.split, o.split_seed}).second;
    } else {
        frames = ds.frames;
    }
    const Evaluation ev = evaluate(model.params, model.config, frames);
    emit_report(ev.confusion, ev.accuracy_by_snr, ds.header.classes, o.report);

    json echo = {{"data", o.data}, {"model", o.model}, {"model_config", to_json(model.config)},
                 {"frames_evaluated", frames.size()}};
    echo["split"] = o.split ? json{{"train_fraction", *o.split}, {"seed", o.split_seed}} : json(nullptr);
    std::ofstream(std::filesystem::path(o.report) / "config.json") << echo.dump(2) << '\n';

    out << "overall accuracy " << format_prob(ev.overall_accuracy) << " on " << frames.size() << " frames\n";
    for (const auto& [snr, acc] : ev.accuracy_by_snr) out << "  snr " << snr << " dB: " << format_prob(acc) << '\n';
    return kOk;
}

IQFrame read_frame_file(const std::string& path, std::size_t index) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw IoError("cannot open " + path);
    char magic[4] = {};
    probe.read(magic, 4);
    if (probe.gcount() == 4 && std::string(magic, 4) == "IQDS") {
        Dataset ds = read_dataset(path);
        if (index >= ds.frames.size())
            throw FormatError("frame index " + std::to_string(index) + " outside dataset of " +
                              std::to_string(ds.frames.size()));
        return ds.frames[index];
    }
    const json j = read_json_file(path);
    IQFrame f;
    try {
        f.i = j.at("i").get<std::vector<float>>();
        f.q = j.at("q").get<std::vector<float>>();
    } catch (const json::exception& e) {
        throw FormatError(path + ": frame JSON needs numeric arrays \"i\" and \"q\": " + e.what());
    }
    return f;
}

int do_infer(const InferOptions& o, std::ostream& out) {
    const LoadedModel model = load_params(o.model);
    const IQFrame frame = read_frame_file(o.frame, o.index);
    NoGradGuard no_grad;
    const auto probs = forward(model.params, model.config, frame);
    const auto names = class_names_for(model.config);
    out << names[argmax(probs.values())] << '\n';
    for (Index c = 0; c < probs.size(); ++c)
        out << names[static_cast<std::size_t>(c)] << ' ' << format_prob(probs[c]) << '\n';
    return kOk;
}

int do_info(const std::string& data, std::ostream& out) {
    const Dataset ds = read_dataset(data);
    const DatasetHeader& h = ds.header;
    out << "format version: " << h.version << '\n'
        << "frame length: " << h.frame_length << '\n'
        << "total frames: " << h.total_frames << '\n'
        << "classes:";
    for (const auto& c : h.classes) out << ' ' << c;
    out << "\nsnr grid (dB):";
    for (int s : h.snr_grid_db) out << ' ' << s;
    out << "\ncounts (class x snr):\n";
    for (std::size_t c = 0; c < h.classes.size(); ++c) {
        out << "  " << h.classes[c] << ':';
        for (auto n : h.counts[c]) out << ' ' << n;
        out << '\n';
    }
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Modulation recognition lab: synthesize IQ datasets, train and evaluate the classifier", "rmra"};
    app.require_subcommand(1, 1);
    unsigned threads = 1;
    bool quiet = false;
    app.add_option("--threads", threads, "Worker cap for frame generation; 1 gives bit-reproducible runs")
        ->check(CLI::PositiveNumber);
    app.add_flag("-q,--quiet", quiet, "Suppress progress output");

    GenerateOptions gen;
    auto* generate = app.add_subcommand("generate", "Synthesize a labeled dataset file from a JSON dataset spec");
    generate->add_option("--spec", gen.spec, "Dataset spec (JSON)")->required();
    generate->add_option("--out", gen.out, "Output dataset file")->required();
    generate->add_option("--seed", gen.seed, "Override master_seed");
    generate->add_option("--frames", gen.frames, "Override frames_per_class_per_snr");

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset file");
    train_cmd->add_option("--data", tr.data, "Dataset file")->required();
    train_cmd->add_option("--model-out", tr.model_out, "Output parameter file")->required();
    train_cmd->add_option("--config", tr.config, "JSON with optional \"model\", \"train\", \"split\" sections");
    train_cmd->add_option("--history", tr.history, "History CSV path (default: history.csv next to the model)");
    train_cmd->add_option("--epochs", tr.epochs, "Override train.epochs");
    train_cmd->add_option("--seed", tr.seed, "Override model and train seeds");
    train_cmd->add_option("--lr", tr.lr, "Override train.learning_rate");
    train_cmd->add_option("--batch-size", tr.batch_size, "Override train.batch_size");
    train_cmd->add_option("--precision", tr.precision, "f32 or f64 arithmetic")->check(CLI::IsMember({"f32", "f64"}));
    train_cmd->add_option("--split", tr.split, "Training fraction of each (class, snr) stratum");
    train_cmd->add_option("--split-seed", tr.split_seed, "Seed of the stratified split");
    train_cmd->add_option("--target-accuracy", tr.target_accuracy, "Stop once validation accuracy reaches this");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model and write per-SNR reports");
    eval_cmd->add_option("--data", ev.data, "Dataset file")->required();
    eval_cmd->add_option("--model", ev.model, "Parameter file")->required();
    eval_cmd->add_option("--report", ev.report, "Report directory")->required();
    eval_cmd->add_option("--split", ev.split, "Evaluate only the held-out part of this stratified split");
    eval_cmd->add_option("--split-seed", ev.split_seed, "Seed of the stratified split");

    InferOptions inf;
    auto* infer_cmd = app.add_subcommand("infer", "Classify one frame and print class probabilities");
    infer_cmd->add_option("--model", inf.model, "Parameter file")->required();
    infer_cmd->add_option("--frame", inf.frame, "Frame as JSON {\"i\": [...], \"q\": [...]} or a dataset file")
        ->required();
    infer_cmd->add_option("--index", inf.index, "Record index when --frame is a dataset file");

    std::string info_data;
    auto* info_cmd = app.add_subcommand("info", "Print a dataset file's header");
    info_cmd->add_option("--data", info_data, "Dataset file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << app.help();
        return kUsage;
    }

    try {
        if (*generate) return do_generate(gen, threads, out);
        if (*train_cmd) return do_train(tr, quiet, out, err);
        if (*eval_cmd) return do_eval(ev, out);
        if (*infer_cmd) return do_infer(inf, out);
        if (*info_cmd) return do_info(info_data, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kNumericError;
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    err << app.help();
    return kUsage;
}

}  // namespace rmra::cli
