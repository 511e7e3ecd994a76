#pragma once

// Day recordings -> magnitude spectra -> uniform frequency bins -> log scale.

#include <filesystem>
#include <span>
#include <vector>

#include "gastkit/common.hpp"
#include "gastkit/fft.hpp"
#include "gastkit/gast_model.hpp"

namespace gastkit {

/// F(u) = (1/M) sum_j x(j) exp(-2 pi i j u / M) for u = 0..M-1.
/// Throws InvalidArgument when M < 2.
std::vector<Complex> dft_spectrum(std::span<const double> recording);

/// Which spectrum rows enter the binning.
enum class SpectrumRange {
    half,  // u = 1..floor(M/2), 0 to Nyquist
    full,  // u = 1..M-1, including the mirrored half
};

/// W: rows are frequencies (DC excluded), columns are recordings.
struct PowerSpectrumMatrix {
    Matrix values;
    double sample_rate = 0.0;
    std::size_t transform_length = 0;  // M
};

/// w_{u,k} = |F_k(u)|. Throws InvalidArgument on empty input or when the
/// recordings differ in length.
PowerSpectrumMatrix power_spectrum(const std::vector<std::vector<double>>& day_recordings, double sample_rate,
                                   SpectrumRange range = SpectrumRange::half);

enum class BinAveraging {
    magnitude,  // mean of |F|
    energy,     // mean of |F|^2
};

/// Averages groups of b = floor(rows / n_bins) consecutive rows; rows left
/// over after n_bins * b are folded into the last bin (which then averages
/// b + remainder rows). Throws InvalidArgument when rows < n_bins.
Matrix bin_average(const Matrix& w, std::size_t n_bins, BinAveraging mode = BinAveraging::magnitude);

/// W-bar: log-scaled bins x recordings, columns ordered by time code.
struct BinnedSpectrogram {
    Matrix values;
    double bin_width_hz = 0.0;
    std::vector<TimeCode> recordings;

    std::size_t n_bins() const { return values.rows(); }
};

/// x -> ln(x + eps) elementwise. Throws InvalidArgument when eps <= 0.
BinnedSpectrogram log_transform(const Matrix& binned, double eps = 1e-12, double bin_width_hz = 0.0,
                                std::vector<TimeCode> recordings = {});

struct SpectralConfig {
    std::size_t n_bins = 1024;
    double eps = 1e-12;
    SpectrumRange range = SpectrumRange::half;
    BinAveraging averaging = BinAveraging::magnitude;
};

/// Full chain for one day. Recordings are reordered by time code.
BinnedSpectrogram binned_spectrogram(std::vector<std::pair<TimeCode, std::vector<double>>> day,
                                     double sample_rate, const SpectralConfig& config);

/// Binary "GASTW" file: magic, u32 rows, u32 cols, f64 bin width, then
/// row-major f64 values. Time codes are not stored.
void write_spectrogram(const std::filesystem::path& path, const BinnedSpectrogram& s);
BinnedSpectrogram read_spectrogram(const std::filesystem::path& path);
void write_spectrogram_csv(const std::filesystem::path& path, const BinnedSpectrogram& s);

}  // namespace gastkit
