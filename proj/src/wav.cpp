#include "gastkit/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gastkit/common.hpp"

namespace gastkit {

namespace {

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u16(std::vector<std::uint8_t>& b, std::uint16_t v) {
    b.push_back(static_cast<std::uint8_t>(v));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
           static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

void require_16bit(int bit_depth) {
    if (bit_depth != 16) {
        throw FormatError("unsupported WAV bit depth " + std::to_string(bit_depth) + " (only 16)");
    }
}

}  // namespace

std::vector<std::uint8_t> encode_wav(std::span<const double> samples, std::uint32_t sample_rate,
                                     int bit_depth) {
    require_16bit(bit_depth);
    if (sample_rate == 0) throw InvalidArgument("WAV sample rate must be positive");
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::vector<std::uint8_t> b;
    b.reserve(44 + data_bytes);
    const char* riff = "RIFF";
    b.insert(b.end(), riff, riff + 4);
    put_u32(b, 36 + data_bytes);
    const char* wave_fmt = "WAVEfmt ";
    b.insert(b.end(), wave_fmt, wave_fmt + 8);
    put_u32(b, 16);
    put_u16(b, 1);  // PCM
    put_u16(b, 1);  // mono
    put_u32(b, sample_rate);
    put_u32(b, sample_rate * 2);
    put_u16(b, 2);
    put_u16(b, 16);
    const char* data = "data";
    b.insert(b.end(), data, data + 4);
    put_u32(b, data_bytes);
    for (double x : samples) {
        const double scaled = std::nearbyint(std::clamp(x, -1.0, 1.0) * 32768.0);
        const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
        put_u16(b, static_cast<std::uint16_t>(q));
    }
    return b;
}

WavData decode_wav(std::span<const std::uint8_t> b) {
    if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("malformed WAV header: missing RIFF/WAVE signature");
    }
    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::size_t pos = 12;
    while (pos + 8 <= b.size()) {
        const std::uint32_t size = get_u32(b, pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > b.size()) {
            throw FormatError("malformed WAV header: chunk extends past end of file");
        }
        if (std::memcmp(b.data() + pos, "fmt ", 4) == 0) {
            if (size < 16) throw FormatError("malformed WAV header: short fmt chunk");
            format = get_u16(b, body);
            channels = get_u16(b, body + 2);
            rate = get_u32(b, body + 4);
            bits = get_u16(b, body + 14);
            have_fmt = true;
        } else if (std::memcmp(b.data() + pos, "data", 4) == 0) {
            if (!have_fmt) throw FormatError("malformed WAV header: data chunk before fmt");
            if (format != 1) throw FormatError("unsupported WAV format tag " + std::to_string(format));
            if (channels != 1) throw FormatError("unsupported WAV channel count " + std::to_string(channels));
            require_16bit(bits);
            if (rate == 0) throw FormatError("malformed WAV header: zero sample rate");
            WavData out;
            out.sample_rate = rate;
            out.samples.resize(size / 2);
            for (std::size_t i = 0; i < out.samples.size(); ++i) {
                const auto q = static_cast<std::int16_t>(get_u16(b, body + 2 * i));
                out.samples[i] = q / 32768.0;
            }
            return out;
        }
        pos = body + size + (size & 1u);
    }
    throw FormatError("malformed WAV header: no data chunk");
}

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               std::uint32_t sample_rate, int bit_depth) {
    const auto bytes = encode_wav(samples, sample_rate, bit_depth);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

WavData read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace gastkit
