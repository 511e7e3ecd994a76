#pragma once

// k-means over latent embeddings and the elbow / silhouette choice of k.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gastkit/common.hpp"
#include "gastkit/vae.hpp"

namespace gastkit {

struct ClusteringResult {
    std::size_t k = 0;
    std::vector<std::size_t> assignments;
    Matrix centers;  // k x dims
    double inertia = 0.0;
    double silhouette = 0.0;  // 0 when k == 1
    std::size_t iterations = 0;
    std::vector<double> inertia_trace;  // after each assignment step of the kept run
};

struct KMeansOptions {
    std::size_t max_iter = 300;
    double tol = 1e-6;       // stop when no center moves further than this
    std::size_t restarts = 10;  // independent k-means++ starts; lowest inertia wins
};

/// Lloyd iterations from k-means++ seeds, points as rows. A cluster that
/// empties is re-seeded with the point farthest from its current center.
/// Throws InvalidArgument when k == 0 or k exceeds the number of points.
ClusteringResult kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, const KMeansOptions& options = {});

/// Mean over points of (b - a) / max(a, b); points in singleton clusters
/// score 0. Throws InvalidArgument with fewer than two distinct clusters.
double silhouette_score(const Matrix& points, const std::vector<std::size_t>& assignments);

struct KRange {
    std::size_t min = 1;
    std::size_t max = 8;
};

/// Knee of the inertia curve over k_range: the interior k farthest from the
/// chord joining the normalized end points, smaller k on ties. Throws
/// InvalidArgument when the range has no interior point or exceeds the
/// point count.
std::size_t elbow_select(const Matrix& points, KRange range, std::uint64_t seed);
/// The same knee rule on a precomputed curve (at least three points).
std::size_t elbow_from_curve(const std::vector<std::size_t>& ks, const std::vector<double>& inertia);

struct KSelection {
    std::size_t k = 0;
    std::size_t elbow_k = 0;
    std::size_t silhouette_k = 0;
    std::vector<std::size_t> ks;
    std::vector<double> inertias;
    std::vector<double> silhouettes;  // 0 for k == 1
    std::vector<std::string> warnings;
};

/// Silhouette-maximizing k over k_range (k >= 2). When even the best
/// silhouette is below `min_silhouette` there is no real cluster structure
/// and the range minimum is returned with a warning. Disagreement with the
/// elbow is reported as a warning.
KSelection select_k(const Matrix& points, KRange range, std::uint64_t seed, double min_silhouette = 0.25);

Matrix embedding_matrix(const std::vector<LatentEmbedding>& embeddings);

void write_cluster_json(const std::filesystem::path& path, const ClusteringResult& result,
                        const KSelection* selection = nullptr);
/// Scatter of the first two principal components, coloured by cluster.
void write_embedding_svg(const std::filesystem::path& path, const Matrix& points,
                         const std::vector<std::size_t>& assignments);

}  // namespace gastkit
