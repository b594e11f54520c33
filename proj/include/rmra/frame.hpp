#pragma once

#include <cstdint>
#include <limits>
#include <vector>

namespace rmra {

/// SNR label for frames synthesized without noise.
inline constexpr int kNoiselessSnrDb = std::numeric_limits<std::int16_t>::max();

/// One labeled window of complex baseband: I row, Q row.
struct IQFrame {
    std::vector<float> i;
    std::vector<float> q;
    std::uint32_t class_index = 0;
    int snr_db = 0;

    std::size_t length() const { return i.size(); }
    friend bool operator==(const IQFrame&, const IQFrame&) = default;
};

}  // namespace rmra
