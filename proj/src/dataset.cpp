#include "rmra/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "binary_io.hpp"
#include "json.hpp"
#include "rmra/error.hpp"
#include "rmra/random.hpp"

namespace rmra {

namespace {

constexpr std::string_view kMagic = "IQDS";

std::size_t snr_position(const std::vector<int>& grid, int snr_db) {
    const auto it = std::find(grid.begin(), grid.end(), snr_db);
    return it == grid.end() ? grid.size() : static_cast<std::size_t>(it - grid.begin());
}

nlohmann::json header_json(const DatasetHeader& h) {
    return {{"classes", h.classes},
            {"snr_grid_db", h.snr_grid_db},
            {"frame_length", h.frame_length},
            {"total_frames", h.total_frames},
            {"counts", h.counts}};
}

DatasetHeader parse_header(std::string_view text, std::uint32_t version) {
    DatasetHeader h;
    h.version = version;
    try {
        const auto j = nlohmann::json::parse(text);
        h.classes = j.at("classes").get<std::vector<std::string>>();
        h.snr_grid_db = j.at("snr_grid_db").get<std::vector<int>>();
        h.frame_length = j.at("frame_length").get<std::size_t>();
        h.total_frames = j.at("total_frames").get<std::uint64_t>();
        h.counts = j.at("counts").get<std::vector<std::vector<std::uint64_t>>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("dataset header is not valid: ") + e.what());
    }
    return h;
}

struct ParsedPrefix {
    DatasetHeader header;
    io::ByteReader reader;
};

ParsedPrefix read_prefix(const std::filesystem::path& path) {
    io::ByteReader reader(io::read_file(path));
    if (reader.remaining() < kMagic.size() || reader.get_bytes(kMagic.size()) != kMagic)
        throw FormatError(path.string() + ": not a dataset file (bad magic)");
    const auto version = reader.get<std::uint32_t>();
    if (version != kDatasetFormatVersion)
        throw VersionError(path.string() + ": dataset format version " + std::to_string(version) + ", expected " +
                           std::to_string(kDatasetFormatVersion));
    const auto length = reader.get<std::uint32_t>();
    DatasetHeader header = parse_header(reader.get_bytes(length), version);
    try {
        header.validate();
    } catch (const CountError&) {
        throw;
    } catch (const Error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return {std::move(header), std::move(reader)};
}

}  // namespace

std::uint64_t DatasetHeader::count(std::size_t class_index, int snr_db) const {
    const std::size_t s = snr_position(snr_grid_db, snr_db);
    if (class_index >= counts.size() || s >= snr_grid_db.size()) return 0;
    return counts[class_index][s];
}

void DatasetHeader::validate() const {
    if (frame_length < 1) throw FormatError("frame_length must be >= 1");
    const std::set<std::string> unique(classes.begin(), classes.end());
    if (unique.size() != classes.size()) throw FormatError("class names are not unique");
    if (counts.size() != classes.size()) throw FormatError("counts table does not match class list");
    std::uint64_t sum = 0;
    for (const auto& row : counts) {
        if (row.size() != snr_grid_db.size()) throw FormatError("counts table does not match SNR grid");
        sum = std::accumulate(row.begin(), row.end(), sum);
    }
    if (sum != total_frames)
        throw CountError("header total_frames " + std::to_string(total_frames) + " != count sum " + std::to_string(sum));
}

DatasetHeader make_header(std::vector<std::string> classes, std::vector<int> snr_grid_db, std::size_t frame_length,
                          std::span<const IQFrame> frames) {
    DatasetHeader h;
    h.classes = std::move(classes);
    h.snr_grid_db = std::move(snr_grid_db);
    h.frame_length = frame_length;
    h.counts.assign(h.classes.size(), std::vector<std::uint64_t>(h.snr_grid_db.size(), 0));
    for (const IQFrame& f : frames) {
        const std::size_t s = snr_position(h.snr_grid_db, f.snr_db);
        if (f.class_index >= h.classes.size() || s >= h.snr_grid_db.size())
            throw CountError("frame (class " + std::to_string(f.class_index) + ", snr " + std::to_string(f.snr_db) +
                             ") is outside the header's class list or SNR grid");
        ++h.counts[f.class_index][s];
    }
    h.total_frames = frames.size();
    return h;
}

void write_dataset(const DatasetHeader& header, std::span<const IQFrame> frames, const std::filesystem::path& path) {
    header.validate();
    if (header.total_frames != frames.size())
        throw CountError("header claims " + std::to_string(header.total_frames) + " frames, got " +
                         std::to_string(frames.size()));
    if (make_header(header.classes, header.snr_grid_db, header.frame_length, frames).counts != header.counts)
        throw CountError("header per-(class, snr) counts do not match the frames");

    io::ByteWriter w;
    w.put_bytes(kMagic);
    w.put<std::uint32_t>(kDatasetFormatVersion);
    const std::string text = header_json(header).dump();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(text.size()));
    w.put_bytes(text);
    for (const IQFrame& f : frames) {
        if (f.i.size() != header.frame_length || f.q.size() != header.frame_length)
            throw ShapeError("frame length " + std::to_string(f.i.size()) + " != header frame_length " +
                             std::to_string(header.frame_length));
        w.put<std::uint16_t>(static_cast<std::uint16_t>(f.class_index));
        w.put<std::int16_t>(static_cast<std::int16_t>(f.snr_db));
        for (float v : f.i) w.put<float>(v);
        for (float v : f.q) w.put<float>(v);
    }
    io::write_file(path, w.bytes());
}

DatasetHeader read_dataset_header(const std::filesystem::path& path) { return read_prefix(path).header; }

Dataset read_dataset(const std::filesystem::path& path) {
    auto [header, reader] = read_prefix(path);
    const std::size_t record = 4 + 8 * header.frame_length;
    const std::size_t bytes = reader.remaining();
    if (bytes % record != 0)
        throw IntegrityError(path.string() + ": " + std::to_string(bytes) + " record bytes is not a whole number of " +
                             std::to_string(record) + "-byte records (truncated?)");
    if (bytes / record != header.total_frames)
        throw CountError(path.string() + ": header claims " + std::to_string(header.total_frames) +
                         " frames, file holds " + std::to_string(bytes / record));

    Dataset ds;
    ds.frames.resize(header.total_frames);
    for (IQFrame& f : ds.frames) {
        f.class_index = reader.get<std::uint16_t>();
        f.snr_db = reader.get<std::int16_t>();
        f.i.resize(header.frame_length);
        f.q.resize(header.frame_length);
        for (float& v : f.i) v = reader.get<float>();
        for (float& v : f.q) v = reader.get<float>();
    }
    DatasetHeader tally;
    try {
        tally = make_header(header.classes, header.snr_grid_db, header.frame_length, ds.frames);
    } catch (const CountError& e) {
        throw CountError(path.string() + ": " + e.what());
    }
    if (tally.counts != header.counts)
        throw CountError(path.string() + ": per-(class, snr) record counts disagree with the header");
    ds.header = std::move(header);
    return ds;
}

SplitIndices split_indices(std::span<const IQFrame> frames, const SplitSpec& spec) {
    if (frames.empty()) throw ContractError("split: empty input");
    if (!(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
        throw ConfigError("train_fraction", "must lie in (0, 1)");
    std::map<std::pair<std::uint32_t, int>, std::vector<std::size_t>> strata;
    for (std::size_t k = 0; k < frames.size(); ++k) strata[{frames[k].class_index, frames[k].snr_db}].push_back(k);

    std::vector<char> in_train(frames.size(), 0);
    for (auto& [key, members] : strata) {
        const std::size_t n = members.size();
        auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.train_fraction));
        if (n >= 2) n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
        CounterRng rng(hash_seed({spec.seed, key.first, static_cast<std::uint64_t>(static_cast<std::int64_t>(key.second))}));
        for (std::size_t k = n; k > 1; --k) std::swap(members[k - 1], members[rng.below(k)]);
        for (std::size_t k = 0; k < n_train; ++k) in_train[members[k]] = 1;
    }
    SplitIndices out;
    for (std::size_t k = 0; k < frames.size(); ++k) (in_train[k] ? out.train : out.test).push_back(k);
    return out;
}

std::pair<std::vector<IQFrame>, std::vector<IQFrame>> split(std::span<const IQFrame> frames, const SplitSpec& spec) {
    const auto idx = split_indices(frames, spec);
    std::pair<std::vector<IQFrame>, std::vector<IQFrame>> out;
    for (std::size_t k : idx.train) out.first.push_back(frames[k]);
    for (std::size_t k : idx.test) out.second.push_back(frames[k]);
    return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size, std::uint64_t epoch_seed) {
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    std::vector<std::size_t> order(count);
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng rng(epoch_seed);
    for (std::size_t k = count; k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < count; start += batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(count, start + batch_size)));
    return batches;
}

}  // namespace rmra
