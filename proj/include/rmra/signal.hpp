#pragma once

// Synthetic labeled IQ frames: Gray-mapped linear constellations with
// optional root-raised-cosine shaping, phase-continuous CPFSK, and AM/FM
// driven by seeded band-limited noise, all through a calibrated AWGN channel.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rmra/frame.hpp"

namespace rmra {

using Complex = std::complex<double>;

enum class Scheme { bpsk, qpsk, psk8, qam16, pam4, cpfsk, am, fm };
enum class Shaping { rrc, none };

std::string_view scheme_name(Scheme scheme);
/// Accepts the canonical upper-case names (BPSK, QPSK, PSK8, QAM16, PAM4,
/// CPFSK, AM, FM); throws ConfigError otherwise.
Scheme parse_scheme(std::string_view name);

/// Bits consumed per symbol. AM and FM report 1: one message slot of
/// samples_per_symbol samples per input bit.
int bits_per_symbol(Scheme scheme);
/// Schemes that map bits through a fixed constellation (and can be shaped).
bool is_linear(Scheme scheme);

struct SchemeSpec {
    Scheme scheme = Scheme::bpsk;
    int samples_per_symbol = 8;
    Shaping shaping = Shaping::rrc;
    double rrc_rolloff = 0.35;
    int rrc_span = 6;
    double cpfsk_index = 0.5;       // modulation index h
    double am_depth = 0.5;          // 1 + depth * m(t)
    double fm_deviation = 0.05;     // peak frequency deviation, cycles/sample
    double message_bandwidth = 0.05;  // analog message cutoff, cycles/sample

    std::string name() const { return std::string(scheme_name(scheme)); }
    void validate() const;
    /// Samples trimmed from each end of a shaped burst.
    int transient() const;

    friend bool operator==(const SchemeSpec&, const SchemeSpec&) = default;
};

/// Points indexed by the MSB-first bit value of a symbol, normalized to unit
/// mean power. Empty for non-linear schemes.
std::vector<Complex> constellation(Scheme scheme);

/// Complex baseband for `bits`. Linear schemes with RRC shaping return the
/// full convolution (symbols * sps + span * sps samples); all other cases
/// return symbols * sps samples. `seed` drives the analog message only.
std::vector<Complex> modulate(const SchemeSpec& spec, std::span<const std::uint8_t> bits, std::uint64_t seed);

/// Root-raised-cosine taps, span*sps+1 long, symmetric, unit energy.
std::vector<double> rrc_filter(double rolloff, int span, int sps);

/// Adds circular Gaussian noise of total variance P / 10^(snr/10) where P is
/// the measured signal power. snr_db = +inf returns the input unchanged.
std::vector<Complex> awgn(std::span<const Complex> signal, double snr_db, std::uint64_t seed);

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

/// One frame: random bits -> modulate -> trim transients -> AWGN -> random
/// window of frame_length samples. snr_db = kNoiseless skips the channel and
/// labels the frame with kNoiselessSnrDb.
IQFrame generate_frame(const SchemeSpec& spec, double snr_db, std::uint32_t class_index, std::uint64_t seed,
                       std::size_t frame_length = 128);

struct DatasetSpec {
    std::vector<SchemeSpec> schemes;
    std::vector<int> snr_grid_db = default_snr_grid();
    std::size_t frames_per_class_per_snr = 100;
    std::uint64_t master_seed = 0;
    std::size_t frame_length = 128;

    static std::vector<int> default_snr_grid() {
        std::vector<int> grid;
        for (int s = -20; s <= 18; s += 2) grid.push_back(s);
        return grid;
    }
    void validate() const;
    std::vector<std::string> class_names() const;
};

/// Seed of frame (class, snr, index) under a master seed.
std::uint64_t frame_seed(std::uint64_t master_seed, std::uint32_t class_index, int snr_db, std::size_t index);

/// All frames ordered by (class, snr, index). Workers split the index space;
/// the result does not depend on `threads`.
std::vector<IQFrame> generate_frames(const DatasetSpec& spec, unsigned threads = 1);

struct DatasetHeader;
/// Generates and writes the dataset file, returning its header.
DatasetHeader generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out, unsigned threads = 1);

}  // namespace rmra
