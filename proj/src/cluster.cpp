#include "gastkit/cluster.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "gastkit/fcm.hpp"
#include "gastkit/text_io.hpp"

namespace gastkit {

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

Matrix kmeanspp_seeds(const Matrix& x, std::size_t k, std::mt19937_64& rng) {
    const std::size_t n = x.rows();
    Matrix centers(k, x.cols());
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::size_t first = pick(rng);
    std::copy(x.row(first).begin(), x.row(first).end(), centers.row(0).begin());
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(x.row(i), centers.row(0));
    for (std::size_t c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t chosen = 0;
        if (total > 0.0) {
            const double target = unit(rng) * total;
            double acc = 0.0;
            chosen = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > target && d2[i] > 0.0) {
                    chosen = i;
                    break;
                }
            }
        } else {
            chosen = pick(rng);
        }
        std::copy(x.row(chosen).begin(), x.row(chosen).end(), centers.row(c).begin());
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(x.row(i), centers.row(c)));
    }
    return centers;
}

// Assigns every point to its nearest center (lowest index on ties) and
// returns the inertia.
double assign(const Matrix& x, const Matrix& centers, std::vector<std::size_t>& labels) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < centers.rows(); ++c) {
            const double d = sq_dist(x.row(i), centers.row(c));
            if (d < best) {
                best = d;
                labels[i] = c;
            }
        }
        inertia += best;
    }
    return inertia;
}

ClusteringResult lloyd(const Matrix& x, std::size_t k, std::mt19937_64& rng, const KMeansOptions& opt) {
    const std::size_t n = x.rows(), d = x.cols();
    ClusteringResult r;
    r.k = k;
    r.centers = kmeanspp_seeds(x, k, rng);
    r.assignments.assign(n, 0);
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
        r.inertia = assign(x, r.centers, r.assignments);
        r.inertia_trace.push_back(r.inertia);
        r.iterations = it + 1;

        Matrix next(k, d);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t c = r.assignments[i];
            ++count[c];
            for (std::size_t j = 0; j < d; ++j) next(c, j) += x(i, j);
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (count[c] == 0) {
                // Farthest point from its own center takes over the empty cluster.
                std::size_t far = 0;
                double worst = -1.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (count[r.assignments[i]] <= 1) continue;
                    const double dist = sq_dist(x.row(i), r.centers.row(r.assignments[i]));
                    if (dist > worst) {
                        worst = dist;
                        far = i;
                    }
                }
                const std::size_t old = r.assignments[far];
                --count[old];
                for (std::size_t j = 0; j < d; ++j) next(old, j) -= x(far, j);
                r.assignments[far] = c;
                count[c] = 1;
                for (std::size_t j = 0; j < d; ++j) next(c, j) = x(far, j);
            }
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            for (std::size_t j = 0; j < d; ++j) next(c, j) /= static_cast<double>(count[c]);
            shift = std::max(shift, std::sqrt(sq_dist(next.row(c), r.centers.row(c))));
        }
        r.centers = std::move(next);
        if (shift <= opt.tol) break;
    }
    r.inertia = assign(x, r.centers, r.assignments);
    return r;
}

}  // namespace

ClusteringResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options) {
    if (k == 0) throw InvalidArgument("kmeans: k must be at least 1");
    if (points.rows() < k) {
        throw InvalidArgument("kmeans: " + std::to_string(points.rows()) + " points cannot form " +
                              std::to_string(k) + " clusters");
    }
    ClusteringResult best;
    for (std::size_t run = 0; run < std::max<std::size_t>(options.restarts, 1); ++run) {
        std::mt19937_64 rng(derive_seed(seed, 0x6b6d'6561, run));
        auto r = lloyd(points, k, rng, options);
        if (run == 0 || r.inertia < best.inertia) best = std::move(r);
    }
    std::vector<bool> used(k, false);
    for (std::size_t a : best.assignments) used[a] = true;
    const bool all_used = std::all_of(used.begin(), used.end(), [](bool b) { return b; });
    best.silhouette = (k >= 2 && all_used) ? silhouette_score(points, best.assignments) : 0.0;
    return best;
}

double silhouette_score(const Matrix& points, const std::vector<std::size_t>& assignments) {
    const std::size_t n = points.rows();
    if (assignments.size() != n) throw ShapeError("silhouette: one assignment per point required");
    std::size_t k = 0;
    for (std::size_t a : assignments) k = std::max(k, a + 1);
    std::vector<std::size_t> size(k, 0);
    for (std::size_t a : assignments) ++size[a];
    const auto clusters = std::count_if(size.begin(), size.end(), [](std::size_t s) { return s > 0; });
    if (clusters < 2) throw InvalidArgument("silhouette needs at least two non-empty clusters");

    std::vector<double> score(n, 0.0);
    parallel_for(n, [&](std::size_t i) {
        const std::size_t own = assignments[i];
        if (size[own] == 1) return;
        std::vector<double> sum(k, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) sum[assignments[j]] += std::sqrt(sq_dist(points.row(i), points.row(j)));
        }
        const double a = sum[own] / static_cast<double>(size[own] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < k; ++c)
            if (c != own && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
        const double m = std::max(a, b);
        score[i] = m > 0.0 ? (b - a) / m : 0.0;
    });
    double total = 0.0;
    for (double s : score) total += s;
    return total / static_cast<double>(n);
}

namespace {

void check_range(const Matrix& points, KRange range) {
    if (range.min == 0 || range.max < range.min + 2) {
        throw InvalidArgument("k range [" + std::to_string(range.min) + ", " + std::to_string(range.max) +
                              "] needs at least three values starting from 1");
    }
    if (range.max > points.rows()) {
        throw InvalidArgument("k range maximum " + std::to_string(range.max) + " exceeds the " +
                              std::to_string(points.rows()) + " points");
    }
}

}  // namespace

std::size_t elbow_from_curve(const std::vector<std::size_t>& ks, const std::vector<double>& inertia) {
    if (ks.size() < 3 || inertia.size() != ks.size()) {
        throw InvalidArgument("elbow needs at least three (k, inertia) points");
    }
    const double x0 = static_cast<double>(ks.front()), x1 = static_cast<double>(ks.back());
    const double y0 = inertia.front(), y1 = inertia.back();
    const double ys = std::abs(y0 - y1) > 0.0 ? std::abs(y0 - y1) : 1.0;
    // Normalized coordinates; the chord runs from (0, 1) to (1, 0) for a
    // decreasing curve.
    std::size_t best = ks[1];
    double best_d = -1.0;
    for (std::size_t i = 1; i + 1 < ks.size(); ++i) {
        const double x = (static_cast<double>(ks[i]) - x0) / (x1 - x0);
        const double y = (inertia[i] - y1) / ys;
        const double d = std::abs(x + y - 1.0) / std::sqrt(2.0);
        if (d > best_d + 1e-12) {
            best_d = d;
            best = ks[i];
        }
    }
    return best;
}

std::size_t elbow_select(const Matrix& points, KRange range, std::uint64_t seed) {
    check_range(points, range);
    std::vector<std::size_t> ks;
    std::vector<double> inertia;
    for (std::size_t k = range.min; k <= range.max; ++k) {
        ks.push_back(k);
        inertia.push_back(kmeans(points, k, seed).inertia);
    }
    return elbow_from_curve(ks, inertia);
}

KSelection select_k(const Matrix& points, KRange range, std::uint64_t seed, double min_silhouette) {
    check_range(points, range);
    KSelection sel;
    double best = -2.0;
    for (std::size_t k = range.min; k <= range.max; ++k) {
        const auto r = kmeans(points, k, seed);
        sel.ks.push_back(k);
        sel.inertias.push_back(r.inertia);
        sel.silhouettes.push_back(r.silhouette);
        if (k >= 2 && r.silhouette > best + 1e-12) {
            best = r.silhouette;
            sel.silhouette_k = k;
        }
    }
    sel.elbow_k = elbow_from_curve(sel.ks, sel.inertias);
    sel.k = sel.silhouette_k;
    if (best < min_silhouette) {
        sel.k = range.min;
        std::ostringstream os;
        os << "best silhouette " << best << " (k = " << sel.silhouette_k << ") is below " << min_silhouette
           << "; no cluster structure, using k = " << range.min;
        sel.warnings.push_back(os.str());
    } else if (sel.elbow_k != sel.silhouette_k) {
        sel.warnings.push_back("elbow suggests k = " + std::to_string(sel.elbow_k) + ", silhouette suggests k = " +
                               std::to_string(sel.silhouette_k) + "; using the silhouette choice");
    }
    return sel;
}

Matrix embedding_matrix(const std::vector<LatentEmbedding>& embeddings) {
    if (embeddings.empty()) return {};
    Matrix m(embeddings.size(), embeddings.front().mu.size());
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].mu.size() != m.cols()) throw ShapeError("embeddings differ in dimension");
        std::copy(embeddings[i].mu.begin(), embeddings[i].mu.end(), m.row(i).begin());
    }
    return m;
}

void write_cluster_json(const std::filesystem::path& path, const ClusteringResult& result,
                        const KSelection* selection) {
    nlohmann::ordered_json j;
    j["k"] = result.k;
    j["assignments"] = result.assignments;
    j["inertia"] = result.inertia;
    j["silhouette"] = result.silhouette;
    nlohmann::ordered_json centers = nlohmann::ordered_json::array();
    for (std::size_t c = 0; c < result.centers.rows(); ++c) {
        centers.push_back(std::vector<double>(result.centers.row(c).begin(), result.centers.row(c).end()));
    }
    j["centers"] = centers;
    if (selection) {
        j["selection"] = {{"k_values", selection->ks},
                          {"inertia", selection->inertias},
                          {"silhouette", selection->silhouettes},
                          {"elbow_k", selection->elbow_k},
                          {"silhouette_k", selection->silhouette_k},
                          {"warnings", selection->warnings}};
    }
    write_text_file(path, j.dump(2) + "\n");
}

void write_embedding_svg(const std::filesystem::path& path, const Matrix& points,
                         const std::vector<std::size_t>& assignments) {
    if (points.rows() != assignments.size()) throw ShapeError("svg: one assignment per point required");
    std::vector<std::array<double, 2>> xy(points.rows(), {0.0, 0.0});
    if (points.rows() >= 2) {
        try {
            const PcaModel pca = pca_fit(points);
            for (std::size_t i = 0; i < points.rows(); ++i) {
                const auto t = pca.transform(points.row(i), std::min<std::size_t>(2, pca.components.rows()));
                for (std::size_t j = 0; j < t.size(); ++j) xy[i][j] = t[j];
            }
        } catch (const DegenerateInput&) {
        }
    }
    double lo[2] = {0, 0}, hi[2] = {0, 0};
    for (std::size_t a = 0; a < 2; ++a) {
        for (std::size_t i = 0; i < xy.size(); ++i) {
            lo[a] = i ? std::min(lo[a], xy[i][a]) : xy[i][a];
            hi[a] = i ? std::max(hi[a], xy[i][a]) : xy[i][a];
        }
        if (hi[a] - lo[a] <= 0.0) {
            lo[a] -= 1.0;
            hi[a] += 1.0;
        }
    }
    static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
    const double size = 480, margin = 30;
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << size / 2 << "\" y=\"" << size - 6 << "\" text-anchor=\"middle\" font-size=\"12\">PC 1</text>\n";
    os << "<text x=\"12\" y=\"" << size / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 " << size / 2
       << ")\" text-anchor=\"middle\">PC 2</text>\n";
    char buf[64];
    for (std::size_t i = 0; i < xy.size(); ++i) {
        const double px = margin + (xy[i][0] - lo[0]) / (hi[0] - lo[0]) * (size - 2 * margin);
        const double py = size - margin - (xy[i][1] - lo[1]) / (hi[1] - lo[1]) * (size - 2 * margin);
        std::snprintf(buf, sizeof buf, "%.2f\" cy=\"%.2f", px, py);
        os << "<circle cx=\"" << buf << "\" r=\"3\" fill=\"" << palette[assignments[i] % 10] << "\"/>\n";
    }
    os << "</svg>\n";
    write_text_file(path, os.str());
}

}  // namespace gastkit
