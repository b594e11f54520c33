#include "rmra/model.hpp"

#include "binary_io.hpp"
#include "rmra/config_io.hpp"

namespace rmra {

namespace {

constexpr std::string_view kMagic = "RMRA";

struct RawTensor {
    Shape shape;
    std::vector<double> values;
};

struct ParamFile {
    ModelConfig config;
    std::vector<RawTensor> tensors;
};

ParamFile read_param_file(const std::filesystem::path& path) {
    io::ByteReader r(io::read_file(path));
    if (r.remaining() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic)
        throw FormatError(path.string() + ": not a parameter file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kParamFormatVersion)
        throw VersionError(path.string() + ": parameter format version " + std::to_string(version) + ", expected " +
                           std::to_string(kParamFormatVersion));
    ParamFile file;
    const auto text = r.get_bytes(r.get<std::uint32_t>());
    try {
        file.config = model_config_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": config echo is not valid JSON: " + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t k = 0; k < count; ++k) {
        RawTensor t;
        const auto rank = r.get<std::uint32_t>();
        for (std::uint32_t a = 0; a < rank; ++a) t.shape.push_back(static_cast<Index>(r.get<std::uint32_t>()));
        const auto n = static_cast<std::size_t>(shape_size(t.shape));
        if (n * 8 > r.remaining()) throw IntegrityError(path.string() + ": file truncated inside tensor " + std::to_string(k));
        t.values.resize(n);
        for (double& v : t.values) v = r.get<double>();
        file.tensors.push_back(std::move(t));
    }
    if (r.remaining() != 0)
        throw IntegrityError(path.string() + ": " + std::to_string(r.remaining()) + " trailing bytes");
    return file;
}

ModelParams<double> assemble(const std::vector<RawTensor>& raw, const ModelConfig& cfg, const std::string& where) {
    ModelParams<double> params = build_model<double>(cfg);
    auto tensors = params.tensors();
    if (tensors.size() != raw.size())
        throw ShapeError(where + ": file has " + std::to_string(raw.size()) + " tensors, config expects " +
                         std::to_string(tensors.size()));
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        if (tensors[k].shape() != raw[k].shape)
            throw ShapeError(where + ": tensor " + std::to_string(k) + " has shape " + shape_string(raw[k].shape) +
                             ", config expects " + shape_string(tensors[k].shape()));
        tensors[k].mutable_values() =
            Eigen::Map<const Array<double>>(raw[k].values.data(), static_cast<Index>(raw[k].values.size()));
    }
    return params;
}

}  // namespace

void save_params(const ModelParams<double>& params, const ModelConfig& cfg, const std::filesystem::path& path) {
    io::ByteWriter w;
    w.put_bytes(kMagic);
    w.put<std::uint32_t>(kParamFormatVersion);
    const std::string text = to_json(cfg).dump();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    w.put_bytes(text);
    const auto tensors = params.tensors();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (Index e : t.shape()) w.put<std::uint32_t>(static_cast<std::uint32_t>(e));
        for (Index i = 0; i < t.size(); ++i) w.put<double>(t.values()[i]);
    }
    io::write_file(path, w.bytes());
}

LoadedModel load_params(const std::filesystem::path& path) {
    ParamFile file = read_param_file(path);
    try {
        file.config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(path.string() + ": config echo is invalid: " + e.what());
    }
    return {file.config, assemble(file.tensors, file.config, path.string())};
}

ModelParams<double> load_params(const std::filesystem::path& path, const ModelConfig& expected) {
    const ParamFile file = read_param_file(path);
    return assemble(file.tensors, expected, path.string());
}

}  // namespace rmra
