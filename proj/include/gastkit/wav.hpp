#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gastkit {

struct WavData {
    std::vector<double> samples;  // [-1, 1)
    std::uint32_t sample_rate = 0;
};

/// Canonical 44-byte-header PCM WAV, mono. Only 16-bit depth is supported;
/// samples are clamped to [-1, 1] and quantized with scale 32768.
std::vector<std::uint8_t> encode_wav(std::span<const double> samples, std::uint32_t sample_rate,
                                     int bit_depth = 16);
WavData decode_wav(std::span<const std::uint8_t> bytes);

void write_wav(const std::filesystem::path& path, std::span<const double> samples,
               std::uint32_t sample_rate, int bit_depth = 16);
WavData read_wav(const std::filesystem::path& path);

}  // namespace gastkit
