#pragma once

// Little-endian byte encoding shared by the dataset and parameter files.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "rmra/error.hpp"

namespace rmra::io {

class ByteWriter {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_arithmetic_v<T>);
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        auto bits = std::bit_cast<U>(value);
        for (std::size_t k = 0; k < sizeof(T); ++k) bytes_.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
    }
    void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }
    const std::vector<char>& bytes() const { return bytes_; }

private:
    std::vector<char> bytes_;
};

class ByteReader {
public:
    explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

    std::size_t remaining() const { return bytes_.size() - pos_; }

    template <typename T>
    T get() {
        static_assert(std::is_arithmetic_v<T>);
        using U = std::conditional_t<sizeof(T) == 8, std::uint64_t,
                                     std::conditional_t<sizeof(T) == 4, std::uint32_t,
                                                        std::conditional_t<sizeof(T) == 2, std::uint16_t, std::uint8_t>>>;
        need(sizeof(T));
        U bits = 0;
        for (std::size_t k = 0; k < sizeof(T); ++k)
            bits |= static_cast<U>(static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + k])) << (8 * k));
        pos_ += sizeof(T);
        return std::bit_cast<T>(bits);
    }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string out(bytes_.data() + pos_, n);
        pos_ += n;
        return out;
    }

private:
    void need(std::size_t n) const {
        if (remaining() < n) throw IntegrityError("file truncated: needed " + std::to_string(n) + " more bytes");
    }

    std::vector<char> bytes_;
    std::size_t pos_ = 0;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return bytes;
}

inline void ensure_parent_dir(const std::filesystem::path& path) {
    if (!path.has_parent_path()) return;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
}

inline void write_file(const std::filesystem::path& path, const std::vector<char>& bytes) {
    ensure_parent_dir(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace rmra::io
