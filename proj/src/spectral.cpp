#include "gastkit/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gastkit/binary_io.hpp"
#include "gastkit/text_io.hpp"

namespace gastkit {

std::vector<Complex> dft_spectrum(std::span<const double> recording) {
    if (recording.size() < 2) {
        throw InvalidArgument("dft_spectrum needs at least 2 samples, got " + std::to_string(recording.size()));
    }
    auto f = fft_real(recording);
    const double inv = 1.0 / static_cast<double>(recording.size());
    for (auto& v : f) v *= inv;
    return f;
}

PowerSpectrumMatrix power_spectrum(const std::vector<std::vector<double>>& day_recordings, double sample_rate,
                                   SpectrumRange range) {
    if (day_recordings.empty()) throw InvalidArgument("power_spectrum: no recordings");
    const std::size_t m = day_recordings.front().size();
    for (std::size_t k = 1; k < day_recordings.size(); ++k) {
        if (day_recordings[k].size() != m) {
            throw InvalidArgument("power_spectrum: recording " + std::to_string(k) + " has length " +
                                  std::to_string(day_recordings[k].size()) + ", expected " + std::to_string(m));
        }
    }
    if (m < 2) throw InvalidArgument("power_spectrum: recordings need at least 2 samples");
    const std::size_t rows = range == SpectrumRange::half ? m / 2 : m - 1;
    PowerSpectrumMatrix w{Matrix(rows, day_recordings.size()), sample_rate, m};
    std::vector<std::vector<Complex>> spectra(day_recordings.size());
    parallel_for(day_recordings.size(), [&](std::size_t k) { spectra[k] = dft_spectrum(day_recordings[k]); });
    for (std::size_t k = 0; k < spectra.size(); ++k) {
        for (std::size_t u = 1; u <= rows; ++u) w.values(u - 1, k) = std::abs(spectra[k][u]);
    }
    return w;
}

Matrix bin_average(const Matrix& w, std::size_t n_bins, BinAveraging mode) {
    if (n_bins == 0) throw InvalidArgument("bin_average: n_bins must be positive");
    if (w.rows() < n_bins) {
        throw InvalidArgument("bin_average: " + std::to_string(w.rows()) + " rows cannot fill " +
                              std::to_string(n_bins) + " bins");
    }
    const std::size_t b = w.rows() / n_bins;
    Matrix out(n_bins, w.cols());
    for (std::size_t i = 0; i < n_bins; ++i) {
        const std::size_t begin = i * b;
        const std::size_t end = i + 1 == n_bins ? w.rows() : begin + b;
        const double inv = 1.0 / static_cast<double>(end - begin);
        for (std::size_t j = 0; j < w.cols(); ++j) {
            double sum = 0.0;
            for (std::size_t k = begin; k < end; ++k) {
                const double v = w(k, j);
                sum += mode == BinAveraging::energy ? v * v : v;
            }
            out(i, j) = sum * inv;
        }
    }
    return out;
}

BinnedSpectrogram log_transform(const Matrix& binned, double eps, double bin_width_hz,
                                std::vector<TimeCode> recordings) {
    if (!(eps > 0.0)) throw InvalidArgument("log_transform: eps must be positive");
    BinnedSpectrogram s{binned, bin_width_hz, std::move(recordings)};
    for (double& v : s.values.data()) v = std::log(v + eps);
    return s;
}

BinnedSpectrogram binned_spectrogram(std::vector<std::pair<TimeCode, std::vector<double>>> day,
                                     double sample_rate, const SpectralConfig& config) {
    std::stable_sort(day.begin(), day.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::vector<double>> recs;
    std::vector<TimeCode> times;
    for (auto& [t, samples] : day) {
        times.push_back(t);
        recs.push_back(std::move(samples));
    }
    const auto w = power_spectrum(recs, sample_rate, config.range);
    const double span_hz =
        static_cast<double>(w.values.rows()) * sample_rate / static_cast<double>(w.transform_length);
    const double width = span_hz / static_cast<double>(config.n_bins);
    return log_transform(bin_average(w.values, config.n_bins, config.averaging), config.eps, width,
                         std::move(times));
}

void write_spectrogram(const std::filesystem::path& path, const BinnedSpectrogram& s) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    binio::put_bytes(out, "GASTW");
    binio::put(out, static_cast<std::uint32_t>(s.values.rows()));
    binio::put(out, static_cast<std::uint32_t>(s.values.cols()));
    binio::put(out, s.bin_width_hz);
    for (double v : s.values.data()) binio::put(out, v);
    if (!out) throw IoError("write failed: " + path.string());
}

BinnedSpectrogram read_spectrogram(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    binio::expect_magic(in, "GASTW");
    const auto rows = binio::get<std::uint32_t>(in, "rows");
    const auto cols = binio::get<std::uint32_t>(in, "cols");
    BinnedSpectrogram s;
    s.bin_width_hz = binio::get<double>(in, "bin width");
    s.values = Matrix(rows, cols);
    for (double& v : s.values.data()) v = binio::get<double>(in, "values");
    return s;
}

void write_spectrogram_csv(const std::filesystem::path& path, const BinnedSpectrogram& s) {
    write_text_file(path, matrix_to_csv(s.values));
}

}  // namespace gastkit
