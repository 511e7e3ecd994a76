#include "gastkit/fcm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <zlib.h>

#include "gastkit/binary_io.hpp"
#include "gastkit/text_io.hpp"

namespace gastkit {

SymmetricEigen jacobi_eigen(const Matrix& symmetric, double tol, int max_sweeps) {
    const std::size_t n = symmetric.rows();
    if (symmetric.cols() != n) throw ShapeError("jacobi_eigen: matrix is not square");
    Matrix a = symmetric;
    Matrix v(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    double norm = 0.0;
    for (double x : a.data()) norm += x * x;
    norm = std::sqrt(norm);

    auto off_norm = [&] {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) s += 2.0 * a(p, q) * a(p, q);
        return std::sqrt(s);
    };

    int sweep = 0;
    while (sweep < max_sweeps && off_norm() > tol * norm) {
        ++sweep;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    if (off_norm() > tol * norm) {
        throw InvariantViolation("jacobi_eigen did not converge in " + std::to_string(max_sweeps) + " sweeps");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });
    SymmetricEigen out{std::vector<double>(n), Matrix(n, n), sweep};
    for (std::size_t c = 0; c < n; ++c) {
        out.values[c] = a(order[c], order[c]);
        for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = v(r, order[c]);
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> PcaModel::explained_variance_ratio() const {
    std::vector<double> r(eigenvalues.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = total_variance > 0 ? eigenvalues[i] / total_variance : 0.0;
    return r;
}

std::size_t PcaModel::components_for(double threshold) const {
    if (threshold >= 1.0) return eigenvalues.size();
    // Relative slack absorbs rounding in the cumulative sum.
    const double target = threshold * total_variance * (1.0 - 1e-12);
    double cum = 0.0;
    for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
        cum += eigenvalues[k];
        if (cum >= target) return k + 1;
    }
    return eigenvalues.size();
}

std::vector<double> PcaModel::transform(std::span<const double> sample, std::size_t k) const {
    if (sample.size() != n_features()) throw ShapeError("pca transform: feature count mismatch");
    k = std::min(k, components.rows());
    std::vector<double> scores(k, 0.0);
    for (std::size_t c = 0; c < k; ++c) {
        const auto comp = components.row(c);
        double s = 0.0;
        for (std::size_t j = 0; j < sample.size(); ++j) s += (sample[j] - mean[j]) * comp[j];
        scores[c] = s;
    }
    return scores;
}

std::vector<double> PcaModel::inverse_transform(std::span<const double> scores) const {
    if (scores.size() > components.rows()) throw ShapeError("pca inverse_transform: too many scores");
    std::vector<double> x = mean;
    for (std::size_t c = 0; c < scores.size(); ++c) {
        const auto comp = components.row(c);
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += scores[c] * comp[j];
    }
    return x;
}

Matrix PcaModel::reconstruct(const Matrix& data, std::size_t k) const {
    if (data.cols() != n_features()) throw ShapeError("pca reconstruct: feature count mismatch");
    Matrix out(data.rows(), data.cols());
    for (std::size_t r = 0; r < data.rows(); ++r) {
        const auto x = inverse_transform(transform(data.row(r), k));
        std::copy(x.begin(), x.end(), out.row(r).begin());
    }
    return out;
}

PcaModel pca_fit(const Matrix& data) {
    const std::size_t n = data.rows();
    const std::size_t p = data.cols();
    if (n < 2) throw InvalidArgument("pca_fit needs at least 2 samples, got " + std::to_string(n));
    if (p == 0) throw InvalidArgument("pca_fit needs at least one feature");

    PcaModel model;
    model.mean.assign(p, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < p; ++j) model.mean[j] += data(r, j);
    for (double& m : model.mean) m /= static_cast<double>(n);

    Matrix x(n, p);
    bool all_identical = true;
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < p; ++j) {
            x(r, j) = data(r, j) - model.mean[j];
            if (data(r, j) != data(0, j)) all_identical = false;
        }
    }
    if (all_identical) throw DegenerateInput("pca_fit: all samples are identical");

    const double denom = static_cast<double>(n - 1);
    if (p <= n) {
        Matrix cov(p, p);
        for (std::size_t a = 0; a < p; ++a) {
            for (std::size_t b = a; b < p; ++b) {
                double s = 0.0;
                for (std::size_t r = 0; r < n; ++r) s += x(r, a) * x(r, b);
                cov(a, b) = cov(b, a) = s / denom;
            }
        }
        for (std::size_t j = 0; j < p; ++j) model.total_variance += cov(j, j);
        const auto eig = jacobi_eigen(cov);
        model.components = Matrix(p, p);
        model.eigenvalues.resize(p);
        for (std::size_t c = 0; c < p; ++c) {
            model.eigenvalues[c] = std::max(0.0, eig.values[c]);
            for (std::size_t j = 0; j < p; ++j) model.components(c, j) = eig.vectors(j, c);
        }
    } else {
        // Gram route: eigenvectors u of X X^T / (n-1) map to v = X^T u / sqrt((n-1) lambda).
        Matrix gram(n, n);
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = a; b < n; ++b) {
                double s = 0.0;
                const auto ra = x.row(a), rb = x.row(b);
                for (std::size_t j = 0; j < p; ++j) s += ra[j] * rb[j];
                gram(a, b) = gram(b, a) = s / denom;
            }
        }
        for (std::size_t a = 0; a < n; ++a) model.total_variance += gram(a, a);
        const auto eig = jacobi_eigen(gram);
        const double floor = 1e-12 * std::max(eig.values.front(), 0.0);
        std::vector<std::size_t> keep;
        for (std::size_t c = 0; c < n; ++c)
            if (eig.values[c] > floor) keep.push_back(c);
        model.components = Matrix(keep.size(), p);
        model.eigenvalues.resize(keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            const std::size_t c = keep[i];
            const double lambda = eig.values[c];
            model.eigenvalues[i] = lambda;
            auto comp = model.components.row(i);
            for (std::size_t r = 0; r < n; ++r) {
                const double u = eig.vectors(r, c);
                const auto xr = x.row(r);
                for (std::size_t j = 0; j < p; ++j) comp[j] += u * xr[j];
            }
            // Renormalize explicitly; sqrt((n-1) lambda) is the analytic norm.
            double norm = 0.0;
            for (double v : comp) norm += v * v;
            norm = std::sqrt(norm);
            for (double& v : comp) v /= norm;
        }
    }
    model.retained_count = model.eigenvalues.size();
    return model;
}

BinnedSpectrogram pca_denoise(const BinnedSpectrogram& s, double variance_threshold, PcaModel* fitted) {
    if (s.values.cols() < 2) throw InvalidArgument("pca_denoise needs at least 2 recordings");
    if (!(variance_threshold > 0.0)) throw InvalidArgument("pca_denoise: variance threshold must be positive");
    const Matrix samples = s.values.transposed();  // recordings x bins
    PcaModel model = pca_fit(samples);
    model.retained_count = model.components_for(variance_threshold);
    BinnedSpectrogram out = s;
    out.values = model.reconstruct(samples, model.retained_count).transposed();
    if (fitted) *fitted = std::move(model);
    return out;
}

// ---------------------------------------------------------------------------

namespace {

// Centered and scaled to unit norm; nullopt for zero variance.
std::optional<std::vector<double>> standardized(std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    double mean = 0.0, sq = 0.0;
    for (double v : x) {
        mean += v;
        sq += v * v;
    }
    mean /= n;
    std::vector<double> z(x.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        z[i] = x[i] - mean;
        ss += z[i] * z[i];
    }
    if (ss <= 1e-24 * std::max(1.0, sq)) return std::nullopt;
    const double inv = 1.0 / std::sqrt(ss);
    for (double& v : z) v *= inv;
    return z;
}

}  // namespace

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw InvalidArgument("pearson: length mismatch (" + std::to_string(x.size()) + " vs " +
                              std::to_string(y.size()) + ")");
    }
    if (x.size() < 2) throw InvalidArgument("pearson needs at least 2 observations");
    const auto zx = standardized(x);
    const auto zy = standardized(y);
    if (!zx || !zy) return std::nullopt;
    double r = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) r += (*zx)[i] * (*zy)[i];
    return std::clamp(r, -1.0, 1.0);
}

Matrix Fcm::r_squared() const {
    Matrix m = values;
    if (!squared) {
        for (double& v : m.data()) v *= v;
    }
    return m;
}

Fcm correlation_matrix(const Matrix& rows) {
    const std::size_t n = rows.rows();
    const std::size_t len = rows.cols();
    if (len < 2) throw InvalidArgument("correlation_matrix needs at least 2 observations per row");
    Matrix z(n, len);
    Fcm f;
    f.values = Matrix(n, n);
    f.degenerate.assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (auto s = standardized(rows.row(i))) {
            std::copy(s->begin(), s->end(), z.row(i).begin());
        } else {
            f.degenerate[i] = true;
        }
    }
    parallel_for(n, [&](std::size_t i) {
        f.values(i, i) = 1.0;
        if (f.degenerate[i]) return;
        const auto zi = z.row(i);
        for (std::size_t j = i + 1; j < n; ++j) {
            if (f.degenerate[j]) continue;
            const auto zj = z.row(j);
            double r = 0.0;
            for (std::size_t k = 0; k < len; ++k) r += zi[k] * zj[k];
            f.values(i, j) = std::clamp(r, -1.0, 1.0);
        }
    });
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) f.values(j, i) = f.values(i, j);
    return f;
}

Fcm fcm_for_day(std::vector<std::pair<TimeCode, std::vector<double>>> day, double sample_rate,
                const FcmConfig& config, std::string device_id) {
    if (day.size() < 2) {
        throw InvalidArgument("fcm_for_day: insufficient recordings (" + std::to_string(day.size()) +
                              "), need at least 2");
    }
    BinnedSpectrogram w = binned_spectrogram(std::move(day), sample_rate, config.spectral);
    if (config.denoise) {
        try {
            w = pca_denoise(w, config.variance_threshold);
        } catch (const DegenerateInput&) {
            // Identical recordings: nothing to denoise.
        }
    }
    Fcm f = correlation_matrix(w.values);
    f.device_id = std::move(device_id);
    f.date = w.recordings.front().date();
    if (config.squared) {
        for (double& v : f.values.data()) v *= v;
        f.squared = true;
    }
    return f;
}

Fcm resize_fcm(const Fcm& f, std::size_t target) {
    const std::size_t n = f.size();
    if (target == 0 || target > n || n % target != 0) {
        throw InvalidArgument("resize_fcm: target " + std::to_string(target) + " must divide size " +
                              std::to_string(n));
    }
    if (target == n) return f;
    const std::size_t b = n / target;
    Fcm out;
    out.device_id = f.device_id;
    out.date = f.date;
    out.squared = f.squared;
    out.values = Matrix(target, target);
    out.degenerate.assign(target, false);
    const double inv = 1.0 / static_cast<double>(b * b);
    for (std::size_t i = 0; i < target; ++i) {
        for (std::size_t j = 0; j < target; ++j) {
            double s = 0.0;
            for (std::size_t a = i * b; a < (i + 1) * b; ++a)
                for (std::size_t c = j * b; c < (j + 1) * b; ++c) s += f.values(a, c);
            out.values(i, j) = s * inv;
        }
        if (!f.degenerate.empty()) {
            bool all = true;
            for (std::size_t a = i * b; a < (i + 1) * b; ++a) all = all && f.degenerate[a];
            out.degenerate[i] = all;
        }
    }
    // Pooling commutes with transposition; mirror to make it exact.
    for (std::size_t i = 0; i < target; ++i)
        for (std::size_t j = i + 1; j < target; ++j) out.values(j, i) = out.values(i, j);
    return out;
}

// ---------------------------------------------------------------------------

std::vector<std::uint8_t> fcm_pixels(const Fcm& f) {
    const Matrix r2 = f.r_squared();
    std::vector<std::uint8_t> px(r2.data().size());
    for (std::size_t i = 0; i < px.size(); ++i) {
        px[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(r2.data()[i], 0.0, 1.0)));
    }
    return px;
}

void export_fcm_pgm(const Fcm& f, const std::filesystem::path& path) {
    const auto px = fcm_pixels(f);
    const std::string header = "P5\n" + std::to_string(f.size()) + " " + std::to_string(f.size()) + "\n255\n";
    std::string bytes = header;
    bytes.append(px.begin(), px.end());
    write_text_file(path, bytes);
}

namespace {

void png_chunk(std::string& out, const char* type, const std::string& data) {
    auto be32 = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
    };
    be32(static_cast<std::uint32_t>(data.size()));
    std::string body = std::string(type, 4) + data;
    out += body;
    be32(static_cast<std::uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
}

}  // namespace

void export_fcm_png(const Fcm& f, const std::filesystem::path& path) {
    const auto px = fcm_pixels(f);
    const std::size_t n = f.size();
    std::string raw;
    raw.reserve(n * (n + 1));
    for (std::size_t r = 0; r < n; ++r) {
        raw.push_back('\0');  // filter: none
        raw.append(reinterpret_cast<const char*>(px.data() + r * n), n);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::string z(zlen, '\0');
    if (compress2(reinterpret_cast<Bytef*>(z.data()), &zlen, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 9) != Z_OK) {
        throw IoError("png compression failed for " + path.string());
    }
    z.resize(zlen);
    std::string ihdr;
    auto be32 = [&](std::uint32_t v) {
        for (int s = 24; s >= 0; s -= 8) ihdr.push_back(static_cast<char>((v >> s) & 0xff));
    };
    be32(static_cast<std::uint32_t>(n));
    be32(static_cast<std::uint32_t>(n));
    ihdr += std::string("\x08\x00\x00\x00\x00", 5);  // 8-bit grayscale
    std::string png = "\x89PNG\r\n\x1a\n";
    png_chunk(png, "IHDR", ihdr);
    png_chunk(png, "IDAT", z);
    png_chunk(png, "IEND", "");
    write_text_file(path, png);
}

void export_fcm_image(const Fcm& f, const std::filesystem::path& path) {
    if (path.extension() == ".png") {
        export_fcm_png(f, path);
    } else {
        export_fcm_pgm(f, path);
    }
}

void write_fcm(const std::filesystem::path& path, const Fcm& f) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    binio::put_bytes(out, "GASTF");
    binio::put(out, static_cast<std::uint32_t>(f.size()));
    binio::put(out, static_cast<std::uint8_t>(f.squared ? 1 : 0));
    binio::put(out, static_cast<std::uint32_t>(f.device_id.size()));
    binio::put_bytes(out, f.device_id);
    binio::put(out, static_cast<std::int32_t>(f.date.year));
    binio::put(out, static_cast<std::int32_t>(f.date.month));
    binio::put(out, static_cast<std::int32_t>(f.date.day));
    for (double v : f.values.data()) binio::put(out, v);
    if (!out) throw IoError("write failed: " + path.string());
}

Fcm read_fcm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    binio::expect_magic(in, "GASTF");
    Fcm f;
    const auto n = binio::get<std::uint32_t>(in, "size");
    f.squared = binio::get<std::uint8_t>(in, "squared flag") != 0;
    const auto id_len = binio::get<std::uint32_t>(in, "device id length");
    f.device_id = binio::get_bytes(in, id_len, "device id");
    const int y = binio::get<std::int32_t>(in, "year");
    const int m = binio::get<std::int32_t>(in, "month");
    const int d = binio::get<std::int32_t>(in, "day");
    f.date = TimeCode::make(y, m, d);
    f.values = Matrix(n, n);
    for (double& v : f.values.data()) v = binio::get<double>(in, "values");
    // Degenerate bins are stored as unit diagonal with an all-zero row.
    f.degenerate.assign(n, false);
    for (std::size_t i = 0; i < n && n > 1; ++i) {
        bool zero = true;
        for (std::size_t j = 0; j < n && zero; ++j) zero = (i == j) || f.values(i, j) == 0.0;
        f.degenerate[i] = zero;
    }
    return f;
}

void write_fcm_csv(const std::filesystem::path& path, const Fcm& f) { write_text_file(path, matrix_to_csv(f.values)); }

}  // namespace gastkit
