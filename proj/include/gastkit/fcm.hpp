#pragma once

// Frequency correlation matrices: PCA denoising of the binned day
// spectrogram followed by Pearson correlation between all bin time series.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gastkit/common.hpp"
#include "gastkit/gast_model.hpp"
#include "gastkit/spectral.hpp"

namespace gastkit {

struct SymmetricEigen {
    std::vector<double> values;  // descending
    Matrix vectors;              // column i belongs to values[i]
    int sweeps = 0;
};

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops to
/// tol times the matrix norm. Deterministic for a given input.
SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol = 1e-10, int max_sweeps = 100);

struct PcaModel {
    std::vector<double> mean;        // n_features
    Matrix components;               // rows are orthonormal directions
    std::vector<double> eigenvalues; // descending, >= 0, one per component row
    double total_variance = 0.0;     // trace of the covariance
    std::size_t retained_count = 0;

    std::size_t n_features() const { return mean.size(); }
    std::vector<double> explained_variance_ratio() const;
    /// Smallest k whose cumulative explained variance reaches threshold.
    std::size_t components_for(double threshold) const;

    std::vector<double> transform(std::span<const double> sample, std::size_t k) const;
    std::vector<double> inverse_transform(std::span<const double> scores) const;
    /// Projects every row of data onto the first k components and maps back.
    Matrix reconstruct(const Matrix& data, std::size_t k) const;
};

/// Fits on rows = samples, columns = features. Solves the smaller of the
/// covariance and Gram matrices. Throws InvalidArgument for fewer than two
/// samples and DegenerateInput when all rows are identical.
PcaModel pca_fit(const Matrix& data);

/// Treats each recording (column of W-bar) as a sample over the bin
/// features, keeps the leading components reaching variance_threshold and
/// maps back. Shape and metadata are preserved.
BinnedSpectrogram pca_denoise(const BinnedSpectrogram& spectrogram, double variance_threshold = 0.95,
                              PcaModel* fitted = nullptr);

/// Pearson coefficient; nullopt when either input has zero variance.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);

struct Fcm {
    Matrix values;  // r, or r^2 when squared
    std::string device_id;
    TimeCode date;
    bool squared = false;
    std::vector<bool> degenerate;  // per bin: zero variance

    std::size_t size() const { return values.rows(); }
    /// r^2 form (identity when already squared).
    Matrix r_squared() const;

    friend bool operator==(const Fcm&, const Fcm&) = default;
};

/// Correlation matrix over the rows of a bins x recordings matrix. Undefined
/// coefficients become 0 off the diagonal; the diagonal is always 1.
Fcm correlation_matrix(const Matrix& bins_by_recordings);

struct FcmConfig {
    SpectralConfig spectral;
    double variance_threshold = 0.95;
    bool denoise = true;
    bool squared = false;
};

/// Spectral chain, PCA denoising and pairwise Pearson correlation for one
/// (device, date). Throws InvalidArgument with fewer than two recordings.
Fcm fcm_for_day(std::vector<std::pair<TimeCode, std::vector<double>>> day, double sample_rate,
                const FcmConfig& config, std::string device_id = {});

/// Block-mean pooling to target x target. Throws InvalidArgument unless
/// target divides the current size.
Fcm resize_fcm(const Fcm& f, std::size_t target);

/// 8-bit grayscale image of r^2: pixel = round(255 * clamp(value, 0, 1)).
std::vector<std::uint8_t> fcm_pixels(const Fcm& f);
void export_fcm_pgm(const Fcm& f, const std::filesystem::path& path);
void export_fcm_png(const Fcm& f, const std::filesystem::path& path);
/// Writes PGM, or PNG when the path ends in ".png".
void export_fcm_image(const Fcm& f, const std::filesystem::path& path);

/// Binary "GASTF" file: magic, u32 n, u8 squared, u32 id length, id bytes,
/// i32 year, i32 month, i32 day, then row-major f64 values.
void write_fcm(const std::filesystem::path& path, const Fcm& f);
Fcm read_fcm(const std::filesystem::path& path);
void write_fcm_csv(const std::filesystem::path& path, const Fcm& f);

}  // namespace gastkit
