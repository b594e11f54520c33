#include "rmra/config_io.hpp"

#include <fstream>
#include <set>

namespace rmra {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where, "expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw ConfigError(key, "unknown key in " + where);
    }
}

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(key, e.what());
    }
}

}  // namespace

json to_json(const ModelConfig& c) {
    json j = {{"frame_length", c.frame_length},       {"in_channels", c.in_channels},
              {"residual_channels", c.residual_channels}, {"residual_blocks", c.residual_blocks},
              {"residual_kernel", c.residual_kernel}, {"reduce_kernel", c.reduce_kernel},
              {"reduce_stride", c.reduce_stride},     {"lstm_hidden", c.lstm_hidden},
              {"lstm_layers", c.lstm_layers},         {"dense_sizes", c.dense_sizes},
              {"num_classes", c.num_classes},         {"seed", c.seed},
              {"scaled_attention", c.scaled_attention}, {"class_names", c.class_names}};
    return j;
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
    reject_unknown(j,
                   {"frame_length", "in_channels", "residual_channels", "residual_blocks", "residual_kernel",
                    "reduce_kernel", "reduce_stride", "lstm_hidden", "lstm_layers", "dense_sizes", "num_classes",
                    "seed", "scaled_attention", "class_names"},
                   "model config");
    read_field(j, "frame_length", c.frame_length);
    read_field(j, "in_channels", c.in_channels);
    read_field(j, "residual_channels", c.residual_channels);
    read_field(j, "residual_blocks", c.residual_blocks);
    read_field(j, "residual_kernel", c.residual_kernel);
    read_field(j, "reduce_kernel", c.reduce_kernel);
    read_field(j, "reduce_stride", c.reduce_stride);
    read_field(j, "lstm_hidden", c.lstm_hidden);
    read_field(j, "lstm_layers", c.lstm_layers);
    read_field(j, "dense_sizes", c.dense_sizes);
    read_field(j, "num_classes", c.num_classes);
    read_field(j, "seed", c.seed);
    read_field(j, "scaled_attention", c.scaled_attention);
    read_field(j, "class_names", c.class_names);
    return c;
}

json to_json(const TrainConfig& c) {
    json j = {{"learning_rate", c.learning_rate}, {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},       {"adam_eps", c.adam_eps},
              {"batch_size", c.batch_size},       {"epochs", c.epochs},
              {"seed", c.seed},                   {"clip_norm", c.clip_norm},
              {"precision", c.precision == Precision::f32 ? "f32" : "f64"}};
    j["target_accuracy"] = c.target_accuracy ? json(*c.target_accuracy) : json(nullptr);
    return j;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
    reject_unknown(j,
                   {"learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "batch_size", "epochs", "seed",
                    "clip_norm", "precision", "target_accuracy"},
                   "train config");
    read_field(j, "learning_rate", c.learning_rate);
    read_field(j, "adam_beta1", c.adam_beta1);
    read_field(j, "adam_beta2", c.adam_beta2);
    read_field(j, "adam_eps", c.adam_eps);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "epochs", c.epochs);
    read_field(j, "seed", c.seed);
    read_field(j, "clip_norm", c.clip_norm);
    if (j.contains("precision")) {
        const auto p = j.at("precision");
        if (p == "f32") c.precision = Precision::f32;
        else if (p == "f64") c.precision = Precision::f64;
        else throw ConfigError("precision", "must be \"f32\" or \"f64\"");
    }
    if (j.contains("target_accuracy")) {
        if (j.at("target_accuracy").is_null()) c.target_accuracy.reset();
        else {
            double t = 0;
            read_field(j, "target_accuracy", t);
            c.target_accuracy = t;
        }
    }
    return c;
}

json to_json(const SchemeSpec& s) {
    return {{"name", s.name()},
            {"samples_per_symbol", s.samples_per_symbol},
            {"shaping", s.shaping == Shaping::rrc ? "rrc" : "none"},
            {"rrc_rolloff", s.rrc_rolloff},
            {"rrc_span", s.rrc_span},
            {"cpfsk_index", s.cpfsk_index},
            {"am_depth", s.am_depth},
            {"fm_deviation", s.fm_deviation},
            {"message_bandwidth", s.message_bandwidth}};
}

SchemeSpec scheme_spec_from_json(const json& j) {
    SchemeSpec s;
    if (j.is_string()) {
        s.scheme = parse_scheme(j.get<std::string>());
        return s;
    }
    reject_unknown(j,
                   {"name", "samples_per_symbol", "shaping", "rrc_rolloff", "rrc_span", "cpfsk_index", "am_depth",
                    "fm_deviation", "message_bandwidth"},
                   "scheme");
    if (!j.contains("name")) throw ConfigError("name", "scheme entry needs a name");
    std::string name;
    read_field(j, "name", name);
    s.scheme = parse_scheme(name);
    read_field(j, "samples_per_symbol", s.samples_per_symbol);
    if (j.contains("shaping")) {
        const auto shaping = j.at("shaping");
        if (shaping == "rrc") s.shaping = Shaping::rrc;
        else if (shaping == "none") s.shaping = Shaping::none;
        else throw ConfigError("shaping", "must be \"rrc\" or \"none\"");
    }
    read_field(j, "rrc_rolloff", s.rrc_rolloff);
    read_field(j, "rrc_span", s.rrc_span);
    read_field(j, "cpfsk_index", s.cpfsk_index);
    read_field(j, "am_depth", s.am_depth);
    read_field(j, "fm_deviation", s.fm_deviation);
    read_field(j, "message_bandwidth", s.message_bandwidth);
    return s;
}

json to_json(const DatasetSpec& d) {
    json schemes = json::array();
    for (const auto& s : d.schemes) schemes.push_back(to_json(s));
    return {{"schemes", schemes},
            {"snr_grid_db", d.snr_grid_db},
            {"frames_per_class_per_snr", d.frames_per_class_per_snr},
            {"master_seed", d.master_seed},
            {"frame_length", d.frame_length}};
}

DatasetSpec dataset_spec_from_json(const json& j) {
    reject_unknown(j, {"schemes", "snr_grid_db", "frames_per_class_per_snr", "master_seed", "frame_length"},
                   "dataset spec");
    DatasetSpec d;
    if (!j.contains("schemes") || !j.at("schemes").is_array()) throw ConfigError("schemes", "must be a list");
    for (const auto& s : j.at("schemes")) d.schemes.push_back(scheme_spec_from_json(s));
    read_field(j, "snr_grid_db", d.snr_grid_db);
    read_field(j, "frames_per_class_per_snr", d.frames_per_class_per_snr);
    read_field(j, "master_seed", d.master_seed);
    read_field(j, "frame_length", d.frame_length);
    d.validate();
    return d;
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": invalid JSON: " + e.what());
    }
}

}  // namespace rmra
