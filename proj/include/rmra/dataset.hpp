#pragma once

// Portable frame container ("IQDS") plus stratified splitting and seeded
// batching.
//
// Layout (little-endian): "IQDS" | u32 version | u32 header length | UTF-8
// JSON header | records. Record: u16 class | i16 snr_db | L x f32 I | L x f32 Q.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rmra/frame.hpp"

namespace rmra {

inline constexpr std::uint32_t kDatasetFormatVersion = 1;

struct DatasetHeader {
    std::uint32_t version = kDatasetFormatVersion;
    std::size_t frame_length = 128;
    std::vector<std::string> classes;
    std::vector<int> snr_grid_db;
    std::uint64_t total_frames = 0;
    /// counts[class][snr position in snr_grid_db]
    std::vector<std::vector<std::uint64_t>> counts;

    std::uint64_t count(std::size_t class_index, int snr_db) const;
    /// Total equals the count sum, class names are unique, tables are sized.
    void validate() const;

    friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

/// Header with counts tallied from `frames`; throws CountError when a frame's
/// class or SNR is outside the given lists.
DatasetHeader make_header(std::vector<std::string> classes, std::vector<int> snr_grid_db, std::size_t frame_length,
                          std::span<const IQFrame> frames);

struct Dataset {
    DatasetHeader header;
    std::vector<IQFrame> frames;
};

void write_dataset(const DatasetHeader& header, std::span<const IQFrame> frames, const std::filesystem::path& path);
/// Throws FormatError (magic/JSON), VersionError, CountError, or IntegrityError.
Dataset read_dataset(const std::filesystem::path& path);
/// Header only; the records are not checked.
DatasetHeader read_dataset_header(const std::filesystem::path& path);

struct SplitSpec {
    double train_fraction = 0.8;
    std::uint64_t seed = 0;
};

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified by (class, snr): each stratum of n frames sends round(n * f)
/// to train, clamped to [1, n-1] when n >= 2. Indices keep input order.
SplitIndices split_indices(std::span<const IQFrame> frames, const SplitSpec& spec);
std::pair<std::vector<IQFrame>, std::vector<IQFrame>> split(std::span<const IQFrame> frames, const SplitSpec& spec);

/// Seeded permutation of [0, count) cut into batches; the last may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   std::uint64_t epoch_seed);

}  // namespace rmra
