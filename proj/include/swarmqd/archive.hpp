#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "swarmqd/environment.hpp"
#include "swarmqd/genome.hpp"

namespace swarmqd {

struct ArchiveCell {
    Genome genome;
    double performance = 0.0; // mean over the evaluation's trials
    std::vector<double> descriptor;
    EnvironmentSpec environment;
    std::vector<std::uint64_t> trial_seeds;
};

/// Fixed-capacity elite map: at most one cell per key in [0, capacity).
class Archive {
public:
    explicit Archive(std::size_t capacity);

    std::size_t capacity() const { return cells_.size(); }
    std::size_t coverage() const { return occupied_.size(); }
    bool empty() const { return occupied_.empty(); }

    const ArchiveCell* find(std::uint32_t key) const;
    const ArchiveCell& at(std::uint32_t key) const;

    /// Stores the candidate if the cell is empty or it strictly beats the
    /// incumbent. Throws std::out_of_range for keys beyond capacity.
    bool try_insert(std::uint32_t key, ArchiveCell candidate);

    /// Occupied keys in first-insertion order (the selection pool).
    const std::vector<std::uint32_t>& occupied() const { return occupied_; }
    /// Occupied keys ascending.
    std::vector<std::uint32_t> keys() const;

    double best_performance() const;
    double mean_performance() const;

private:
    std::vector<std::optional<ArchiveCell>> cells_;
    std::vector<std::uint32_t> occupied_;
};

/// Regular grid over [0,1]^dims with `bins` bins per dimension; values are
/// binned as floor(v * bins) clamped to the last bin.
class GridBinning {
public:
    GridBinning(int dims, int bins);
    std::size_t capacity() const { return capacity_; }
    int dims() const { return dims_; }
    int bins() const { return bins_; }
    std::uint32_t key(std::span<const double> descriptor) const;

private:
    int dims_;
    int bins_;
    std::size_t capacity_;
};

/// k centroids of dimension dim, row-major.
struct Centroids {
    int dim = 0;
    std::vector<double> data;

    std::size_t size() const { return dim == 0 ? 0 : data.size() / static_cast<std::size_t>(dim); }
    std::span<const double> row(std::size_t i) const
    {
        return std::span<const double>(data).subspan(i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim));
    }
};

/// Index of the Euclidean-nearest centroid; ties go to the lowest index.
std::uint32_t nearest_centroid(std::span<const double> descriptor, const Centroids& centroids);

struct CvtOptions {
    std::size_t k = 4096;
    int dim = 10;
    std::size_t seed_points = 100000;
    std::uint64_t seed = 1;
    /// When positive, seed points are drawn uniformly on the probability
    /// simplex block by block (SPIRIT); otherwise uniformly in [0,1]^dim.
    int simplex_block = 0;
    int max_iterations = 100;
    double tolerance = 1e-6;
};

/// Seed cloud as used by generate_cvt_centroids.
std::vector<double> cvt_seed_points(const CvtOptions& options);

/// k-means++ initialisation followed by Lloyd iterations until the largest
/// centroid shift drops below the tolerance. Throws std::invalid_argument if
/// k exceeds the number of seed points.
Centroids generate_cvt_centroids(const CvtOptions& options);
Centroids kmeans(std::span<const double> points, int dim, const CvtOptions& options);

} // namespace swarmqd
