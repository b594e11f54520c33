#include "rmra/signal.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <thread>

#include "rmra/dataset.hpp"
#include "rmra/error.hpp"
#include "rmra/random.hpp"

namespace rmra {

namespace {

constexpr double kPi = std::numbers::pi;

// Gray code position -> bit label, so adjacent positions differ by one bit.
constexpr unsigned gray(unsigned k) { return k ^ (k >> 1); }

/// Gray-labelled amplitude levels {-(M-1), ..., M-1} indexed by bit label.
std::vector<double> gray_pam_levels(unsigned levels) {
    std::vector<double> out(levels);
    for (unsigned k = 0; k < levels; ++k) out[gray(k)] = 2.0 * k - (levels - 1.0);
    return out;
}

std::vector<double> lowpass_taps(double cutoff, int half_width) {
    // Hamming-windowed sinc, unit DC gain.
    std::vector<double> taps(static_cast<std::size_t>(2 * half_width + 1));
    double total = 0.0;
    for (int n = -half_width; n <= half_width; ++n) {
        const double x = 2.0 * cutoff * n;
        const double sinc = n == 0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
        const double window = 0.54 + 0.46 * std::cos(kPi * n / half_width);
        taps[static_cast<std::size_t>(n + half_width)] = 2.0 * cutoff * sinc * window;
        total += taps[static_cast<std::size_t>(n + half_width)];
    }
    for (double& t : taps) t /= total;
    return taps;
}

/// Band-limited random message with peak magnitude 1.
std::vector<double> analog_message(std::size_t length, double bandwidth, std::uint64_t seed) {
    const int half = 32;
    const auto taps = lowpass_taps(bandwidth, half);
    CounterRng rng(seed);
    std::vector<double> white(length + taps.size() - 1);
    for (double& w : white) w = rng.gaussian();
    std::vector<double> msg(length, 0.0);
    double peak = 0.0;
    for (std::size_t n = 0; n < length; ++n) {
        double acc = 0.0;
        for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * white[n + k];
        msg[n] = acc;
        peak = std::max(peak, std::abs(acc));
    }
    if (peak > 0.0)
        for (double& m : msg) m /= peak;
    return msg;
}

std::vector<Complex> shape_symbols(const std::vector<Complex>& symbols, const SchemeSpec& spec) {
    const auto sps = static_cast<std::size_t>(spec.samples_per_symbol);
    if (spec.shaping == Shaping::none) {
        std::vector<Complex> out;
        out.reserve(symbols.size() * sps);
        for (const Complex& s : symbols) out.insert(out.end(), sps, s);
        return out;
    }
    const auto taps = rrc_filter(spec.rrc_rolloff, spec.rrc_span, spec.samples_per_symbol);
    // Zero-stuffed symbols through unit-energy taps carry power 1/sps.
    const double gain = std::sqrt(static_cast<double>(sps));
    std::vector<Complex> out(symbols.size() * sps + taps.size() - 1, Complex{});
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const Complex s = symbols[k] * gain;
        for (std::size_t j = 0; j < taps.size(); ++j) out[k * sps + j] += s * taps[j];
    }
    return out;
}

}  // namespace

std::string_view scheme_name(Scheme scheme) {
    switch (scheme) {
        case Scheme::bpsk: return "BPSK";
        case Scheme::qpsk: return "QPSK";
        case Scheme::psk8: return "PSK8";
        case Scheme::qam16: return "QAM16";
        case Scheme::pam4: return "PAM4";
        case Scheme::cpfsk: return "CPFSK";
        case Scheme::am: return "AM";
        case Scheme::fm: return "FM";
    }
    return "?";
}

Scheme parse_scheme(std::string_view name) {
    for (Scheme s : {Scheme::bpsk, Scheme::qpsk, Scheme::psk8, Scheme::qam16, Scheme::pam4, Scheme::cpfsk, Scheme::am,
                     Scheme::fm}) {
        if (scheme_name(s) == name) return s;
    }
    throw ConfigError("name", "unknown modulation scheme '" + std::string(name) + "'");
}

int bits_per_symbol(Scheme scheme) {
    switch (scheme) {
        case Scheme::qpsk: return 2;
        case Scheme::psk8: return 3;
        case Scheme::qam16: return 4;
        case Scheme::pam4: return 2;
        default: return 1;
    }
}

bool is_linear(Scheme scheme) {
    return scheme != Scheme::cpfsk && scheme != Scheme::am && scheme != Scheme::fm;
}

void SchemeSpec::validate() const {
    if (samples_per_symbol < 1) throw ConfigError("samples_per_symbol", "must be >= 1");
    if (shaping == Shaping::rrc && is_linear(scheme)) {
        if (!(rrc_rolloff > 0.0 && rrc_rolloff <= 1.0)) throw ConfigError("rrc_rolloff", "must lie in (0, 1]");
        if (rrc_span < 2) throw ConfigError("rrc_span", "must be >= 2");
        if (samples_per_symbol < 2) throw ConfigError("samples_per_symbol", "RRC shaping needs >= 2");
    }
    if (!(cpfsk_index > 0.0)) throw ConfigError("cpfsk_index", "must be > 0");
    if (!(am_depth > 0.0 && am_depth <= 1.0)) throw ConfigError("am_depth", "must lie in (0, 1]");
    if (!(fm_deviation > 0.0 && fm_deviation < 0.5)) throw ConfigError("fm_deviation", "must lie in (0, 0.5)");
    if (!(message_bandwidth > 0.0 && message_bandwidth < 0.5))
        throw ConfigError("message_bandwidth", "must lie in (0, 0.5)");
}

int SchemeSpec::transient() const {
    return (shaping == Shaping::rrc && is_linear(scheme)) ? rrc_span * samples_per_symbol / 2 : 0;
}

std::vector<Complex> constellation(Scheme scheme) {
    std::vector<Complex> points;
    switch (scheme) {
        case Scheme::bpsk: points = {Complex{1, 0}, Complex{-1, 0}}; break;
        case Scheme::qpsk:
            // bit0 -> I sign, bit1 -> Q sign (0 -> +).
            for (unsigned v = 0; v < 4; ++v)
                points.emplace_back((v & 2) ? -1.0 : 1.0, (v & 1) ? -1.0 : 1.0);
            break;
        case Scheme::psk8:
            points.resize(8);
            for (unsigned k = 0; k < 8; ++k) points[gray(k)] = std::polar(1.0, 2.0 * kPi * k / 8.0);
            break;
        case Scheme::qam16: {
            const auto levels = gray_pam_levels(4);
            for (unsigned v = 0; v < 16; ++v) points.emplace_back(levels[v >> 2], levels[v & 3]);
            break;
        }
        case Scheme::pam4:
            for (double l : gray_pam_levels(4)) points.emplace_back(l, 0.0);
            break;
        default: return {};
    }
    double power = 0.0;
    for (const Complex& p : points) power += std::norm(p);
    power /= static_cast<double>(points.size());
    const double norm = 1.0 / std::sqrt(power);
    for (Complex& p : points) p *= norm;
    return points;
}

std::vector<double> rrc_filter(double rolloff, int span, int sps) {
    if (!(rolloff > 0.0 && rolloff <= 1.0)) throw ConfigError("rrc_rolloff", "must lie in (0, 1]");
    if (span < 2) throw ConfigError("rrc_span", "must be >= 2");
    if (sps < 2) throw ConfigError("samples_per_symbol", "must be >= 2");
    const int length = span * sps + 1;
    std::vector<double> taps(static_cast<std::size_t>(length));
    const double beta = rolloff;
    const double singular = 1.0 / (4.0 * beta);
    for (int n = 0; n < length; ++n) {
        const double t = (n - 0.5 * span * sps) / sps;  // in symbol periods
        double h;
        if (std::abs(t) < 1e-12) {
            h = 1.0 - beta + 4.0 * beta / kPi;
        } else if (std::abs(std::abs(t) - singular) < 1e-9) {
            h = beta / std::sqrt(2.0) *
                ((1.0 + 2.0 / kPi) * std::sin(kPi / (4.0 * beta)) + (1.0 - 2.0 / kPi) * std::cos(kPi / (4.0 * beta)));
        } else {
            const double x = 4.0 * beta * t;
            h = (std::sin(kPi * t * (1.0 - beta)) + x * std::cos(kPi * t * (1.0 + beta))) / (kPi * t * (1.0 - x * x));
        }
        taps[static_cast<std::size_t>(n)] = h;
    }
    double energy = 0.0;
    for (double h : taps) energy += h * h;
    const double norm = 1.0 / std::sqrt(energy);
    for (double& h : taps) h *= norm;
    // Exact symmetry regardless of rounding in t.
    for (int n = 0; n < length / 2; ++n) taps[static_cast<std::size_t>(length - 1 - n)] = taps[static_cast<std::size_t>(n)];
    return taps;
}

std::vector<Complex> modulate(const SchemeSpec& spec, std::span<const std::uint8_t> bits, std::uint64_t seed) {
    spec.validate();
    const int bps = bits_per_symbol(spec.scheme);
    if (bits.size() % static_cast<std::size_t>(bps) != 0)
        throw ContractError(std::to_string(bits.size()) + " bits do not divide into " + std::to_string(bps) +
                            "-bit symbols for " + spec.name());
    const std::size_t symbols = bits.size() / static_cast<std::size_t>(bps);
    const auto sps = static_cast<std::size_t>(spec.samples_per_symbol);

    if (is_linear(spec.scheme)) {
        const auto points = constellation(spec.scheme);
        std::vector<Complex> syms(symbols);
        for (std::size_t k = 0; k < symbols; ++k) {
            unsigned v = 0;
            for (int b = 0; b < bps; ++b) v = (v << 1) | (bits[k * bps + b] & 1u);
            syms[k] = points[v];
        }
        return shape_symbols(syms, spec);
    }

    std::vector<Complex> out(symbols * sps);
    if (spec.scheme == Scheme::cpfsk) {
        const double step = kPi * spec.cpfsk_index / static_cast<double>(sps);
        double phase = 0.0;
        for (std::size_t k = 0; k < symbols; ++k) {
            const double direction = (bits[k] & 1u) ? -1.0 : 1.0;
            for (std::size_t j = 0; j < sps; ++j) {
                out[k * sps + j] = std::polar(1.0, phase);
                phase = std::remainder(phase + direction * step, 2.0 * kPi);
            }
        }
        return out;
    }

    const auto message = analog_message(out.size(), spec.message_bandwidth, seed);
    if (spec.scheme == Scheme::am) {
        double power = 0.0;
        for (std::size_t n = 0; n < out.size(); ++n) {
            out[n] = Complex{1.0 + spec.am_depth * message[n], 0.0};
            power += std::norm(out[n]);
        }
        if (!out.empty()) {
            const double norm = 1.0 / std::sqrt(power / static_cast<double>(out.size()));
            for (Complex& s : out) s *= norm;
        }
        return out;
    }
    // FM: phase increments bounded by 2*pi*fm_deviation since |m| <= 1.
    double phase = 0.0;
    for (std::size_t n = 0; n < out.size(); ++n) {
        out[n] = std::polar(1.0, phase);
        phase = std::remainder(phase + 2.0 * kPi * spec.fm_deviation * message[n], 2.0 * kPi);
    }
    return out;
}

std::vector<Complex> awgn(std::span<const Complex> signal, double snr_db, std::uint64_t seed) {
    if (std::isinf(snr_db) && snr_db > 0) return {signal.begin(), signal.end()};
    if (signal.empty()) throw ContractError("awgn: empty signal");
    double power = 0.0;
    for (const Complex& s : signal) power += std::norm(s);
    power /= static_cast<double>(signal.size());
    if (!(power > 0.0)) throw ContractError("awgn: signal has zero power");
    const double sigma = std::sqrt(power / std::pow(10.0, snr_db / 10.0) / 2.0);
    CounterRng rng(seed);
    std::vector<Complex> out(signal.begin(), signal.end());
    for (Complex& s : out) {
        const double ni = rng.gaussian();
        const double nq = rng.gaussian();
        s += Complex{sigma * ni, sigma * nq};
    }
    return out;
}

IQFrame generate_frame(const SchemeSpec& spec, double snr_db, std::uint32_t class_index, std::uint64_t seed,
                       std::size_t frame_length) {
    spec.validate();
    if (frame_length < 1) throw ConfigError("frame_length", "must be >= 1");
    const auto sps = static_cast<std::size_t>(spec.samples_per_symbol);
    const std::size_t slack_symbols = 8;
    const std::size_t symbols = (frame_length + sps - 1) / sps + slack_symbols;
    const std::size_t bps = static_cast<std::size_t>(bits_per_symbol(spec.scheme));

    CounterRng bit_rng(hash_seed({seed, 1}));
    std::vector<std::uint8_t> bits(symbols * bps);
    for (auto& b : bits) b = bit_rng.bit() ? 1 : 0;

    auto burst = modulate(spec, bits, hash_seed({seed, 2}));
    const auto trim = static_cast<std::size_t>(spec.transient());
    std::vector<Complex> clean(burst.begin() + static_cast<std::ptrdiff_t>(trim),
                               burst.end() - static_cast<std::ptrdiff_t>(trim));
    const auto noisy = awgn(clean, snr_db, hash_seed({seed, 3}));

    CounterRng window_rng(hash_seed({seed, 4}));
    const std::size_t offset = static_cast<std::size_t>(window_rng.below(noisy.size() - frame_length + 1));

    IQFrame frame;
    frame.class_index = class_index;
    frame.snr_db = (std::isinf(snr_db) && snr_db > 0) ? kNoiselessSnrDb : static_cast<int>(std::lround(snr_db));
    frame.i.resize(frame_length);
    frame.q.resize(frame_length);
    for (std::size_t n = 0; n < frame_length; ++n) {
        frame.i[n] = static_cast<float>(noisy[offset + n].real());
        frame.q[n] = static_cast<float>(noisy[offset + n].imag());
    }
    return frame;
}

void DatasetSpec::validate() const {
    if (schemes.empty()) throw ConfigError("schemes", "must not be empty");
    for (const auto& s : schemes) s.validate();
    const auto names = class_names();
    for (std::size_t a = 0; a < names.size(); ++a)
        for (std::size_t b = a + 1; b < names.size(); ++b)
            if (names[a] == names[b]) throw ConfigError("schemes", "duplicate scheme " + names[a]);
    if (snr_grid_db.empty()) throw ConfigError("snr_grid_db", "must not be empty");
    for (std::size_t k = 1; k < snr_grid_db.size(); ++k)
        if (snr_grid_db[k] <= snr_grid_db[k - 1]) throw ConfigError("snr_grid_db", "must be strictly increasing");
    for (int s : snr_grid_db)
        if (s < std::numeric_limits<std::int16_t>::min() || s > std::numeric_limits<std::int16_t>::max())
            throw ConfigError("snr_grid_db", "values must fit in 16 bits");
    if (frames_per_class_per_snr < 1) throw ConfigError("frames_per_class_per_snr", "must be >= 1");
    if (frame_length < 1) throw ConfigError("frame_length", "must be >= 1");
    if (schemes.size() > std::numeric_limits<std::uint16_t>::max()) throw ConfigError("schemes", "too many classes");
}

std::vector<std::string> DatasetSpec::class_names() const {
    std::vector<std::string> names;
    for (const auto& s : schemes) names.push_back(s.name());
    return names;
}

std::uint64_t frame_seed(std::uint64_t master_seed, std::uint32_t class_index, int snr_db, std::size_t index) {
    return hash_seed({master_seed, class_index, static_cast<std::uint64_t>(static_cast<std::int64_t>(snr_db)), index});
}

std::vector<IQFrame> generate_frames(const DatasetSpec& spec, unsigned threads) {
    spec.validate();
    const std::size_t per = spec.frames_per_class_per_snr;
    const std::size_t n_snr = spec.snr_grid_db.size();
    const std::size_t total = spec.schemes.size() * n_snr * per;
    std::vector<IQFrame> frames(total);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = begin; k < end; ++k) {
            const auto cls = static_cast<std::uint32_t>(k / (n_snr * per));
            const int snr = spec.snr_grid_db[(k / per) % n_snr];
            const std::size_t index = k % per;
            frames[k] = generate_frame(spec.schemes[cls], snr, cls, frame_seed(spec.master_seed, cls, snr, index),
                                       spec.frame_length);
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(total, 1));
    if (workers == 1) {
        work(0, total);
    } else {
        std::vector<std::exception_ptr> failures(workers);
        {
            std::vector<std::jthread> pool;
            const std::size_t chunk = (total + workers - 1) / workers;
            for (std::size_t w = 0; w < workers; ++w)
                pool.emplace_back([&, w] {
                    try {
                        work(std::min(total, w * chunk), std::min(total, (w + 1) * chunk));
                    } catch (...) {
                        failures[w] = std::current_exception();
                    }
                });
        }
        for (auto& f : failures)
            if (f) std::rethrow_exception(f);
    }
    return frames;
}

DatasetHeader generate_dataset(const DatasetSpec& spec, const std::filesystem::path& out, unsigned threads) {
    const auto frames = generate_frames(spec, threads);
    DatasetHeader header = make_header(spec.class_names(), spec.snr_grid_db, spec.frame_length, frames);
    write_dataset(header, frames, out);
    return header;
}

}  // namespace rmra
