#include "swarmqd/archive.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "swarmqd/rng.hpp"

namespace swarmqd {

Archive::Archive(std::size_t capacity) : cells_(capacity) {}

const ArchiveCell* Archive::find(std::uint32_t key) const
{
    if (key >= cells_.size() || !cells_[key])
        return nullptr;
    return &*cells_[key];
}

const ArchiveCell& Archive::at(std::uint32_t key) const
{
    const ArchiveCell* cell = find(key);
    if (!cell)
        throw std::out_of_range("archive cell " + std::to_string(key) + " is empty");
    return *cell;
}

bool Archive::try_insert(std::uint32_t key, ArchiveCell candidate)
{
    if (key >= cells_.size())
        throw std::out_of_range("archive key " + std::to_string(key) + " beyond capacity " +
                                std::to_string(cells_.size()));
    auto& slot = cells_[key];
    if (!slot) {
        slot = std::move(candidate);
        occupied_.push_back(key);
        return true;
    }
    if (candidate.performance > slot->performance) {
        slot = std::move(candidate);
        return true;
    }
    return false;
}

std::vector<std::uint32_t> Archive::keys() const
{
    std::vector<std::uint32_t> k = occupied_;
    std::sort(k.begin(), k.end());
    return k;
}

double Archive::best_performance() const
{
    double best = -std::numeric_limits<double>::infinity();
    for (std::uint32_t k : occupied_)
        best = std::max(best, cells_[k]->performance);
    return occupied_.empty() ? 0.0 : best;
}

double Archive::mean_performance() const
{
    if (occupied_.empty())
        return 0.0;
    double sum = 0.0;
    for (std::uint32_t k : keys())
        sum += cells_[k]->performance;
    return sum / static_cast<double>(occupied_.size());
}

// ---------------------------------------------------------------------------

GridBinning::GridBinning(int dims, int bins) : dims_(dims), bins_(bins), capacity_(1)
{
    if (dims < 1 || bins < 1)
        throw std::invalid_argument("grid needs at least one dimension and one bin");
    for (int d = 0; d < dims; ++d)
        capacity_ *= static_cast<std::size_t>(bins);
}

std::uint32_t GridBinning::key(std::span<const double> descriptor) const
{
    if (static_cast<int>(descriptor.size()) != dims_)
        throw std::invalid_argument("grid descriptor has wrong dimension");
    std::uint32_t key = 0;
    for (int d = dims_ - 1; d >= 0; --d) {
        const int b = std::clamp(static_cast<int>(std::floor(descriptor[d] * bins_)), 0, bins_ - 1);
        key = key * static_cast<std::uint32_t>(bins_) + static_cast<std::uint32_t>(b);
    }
    return key;
}

// ---------------------------------------------------------------------------

std::uint32_t nearest_centroid(std::span<const double> descriptor, const Centroids& centroids)
{
    if (static_cast<int>(descriptor.size()) != centroids.dim)
        throw std::invalid_argument("descriptor dimension " + std::to_string(descriptor.size()) +
                                    " does not match centroid dimension " + std::to_string(centroids.dim));
    if (centroids.size() == 0)
        throw std::invalid_argument("no centroids");
    std::uint32_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < centroids.size(); ++i) {
        const double* c = centroids.data.data() + i * centroids.dim;
        double d = 0.0;
        for (int k = 0; k < centroids.dim && d < best_d; ++k) {
            const double diff = descriptor[k] - c[k];
            d += diff * diff;
        }
        if (d < best_d) {
            best_d = d;
            best = static_cast<std::uint32_t>(i);
        }
    }
    return best;
}

std::vector<double> cvt_seed_points(const CvtOptions& o)
{
    if (o.dim < 1)
        throw std::invalid_argument("CVT dimension must be positive");
    if (o.simplex_block > 0 && o.dim % o.simplex_block != 0)
        throw std::invalid_argument("CVT dimension must be a multiple of the simplex block");
    Rng rng(derive_seed(o.seed, "cvt-seeds", 0));
    std::vector<double> pts(o.seed_points * static_cast<std::size_t>(o.dim));
    if (o.simplex_block <= 0) {
        for (double& v : pts)
            v = rng.uniform();
        return pts;
    }
    // Normalised unit exponentials are uniform on the simplex.
    for (std::size_t start = 0; start < pts.size(); start += static_cast<std::size_t>(o.simplex_block)) {
        double sum = 0.0;
        for (int a = 0; a < o.simplex_block; ++a) {
            const double e = -std::log1p(-rng.uniform());
            pts[start + a] = e;
            sum += e;
        }
        for (int a = 0; a < o.simplex_block; ++a)
            pts[start + a] /= sum;
    }
    return pts;
}

Centroids generate_cvt_centroids(const CvtOptions& options)
{
    if (options.k > options.seed_points)
        throw std::invalid_argument("CVT needs at least as many seed points (" + std::to_string(options.seed_points) +
                                    ") as centroids (" + std::to_string(options.k) + ")");
    const std::vector<double> pts = cvt_seed_points(options);
    return kmeans(pts, options.dim, options);
}

Centroids kmeans(std::span<const double> points, int dim, const CvtOptions& options)
{
    using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic>;
    using ConstMap = Eigen::Map<const Matrix>;
    const std::size_t n = points.size() / static_cast<std::size_t>(dim);
    const std::size_t k = options.k;
    if (k == 0 || k > n)
        throw std::invalid_argument("k-means: need 1 <= k <= number of points");
    const Eigen::Index ei_n = static_cast<Eigen::Index>(n);
    const Eigen::Index ei_k = static_cast<Eigen::Index>(k);
    ConstMap x(points.data(), dim, ei_n); // one point per column

    // k-means++ seeding
    Rng rng(derive_seed(options.seed, "kmeans++", 0));
    Matrix c(dim, ei_k);
    const Eigen::VectorXd x_norm = x.colwise().squaredNorm().transpose();
    // squared distances from every point to column j of c
    auto distances_to = [&](Eigen::Index j) -> Eigen::VectorXd {
        Eigen::VectorXd d = x.transpose() * c.col(j);
        d = (x_norm.array() - 2.0 * d.array() + c.col(j).squaredNorm()).max(0.0).matrix();
        return d;
    };
    Eigen::VectorXd closest(ei_n);
    {
        const Eigen::Index first = static_cast<Eigen::Index>(rng.below(n));
        c.col(0) = x.col(first);
        closest = distances_to(0);
        for (Eigen::Index j = 1; j < ei_k; ++j) {
            const double total = closest.sum();
            Eigen::Index pick = ei_n - 1;
            if (total > 0.0) {
                const double target = rng.uniform() * total;
                double acc = 0.0;
                for (Eigen::Index i = 0; i < ei_n; ++i) {
                    acc += closest[i];
                    if (acc > target) {
                        pick = i;
                        break;
                    }
                }
            } else {
                pick = static_cast<Eigen::Index>(rng.below(n));
            }
            c.col(j) = x.col(pick);
            closest = closest.cwiseMin(distances_to(j));
        }
    }

    // Lloyd iterations, assignment in blocks to bound memory
    constexpr Eigen::Index kBlock = 2048;
    std::vector<Eigen::Index> label(n, 0);
    for (int it = 0; it < options.max_iterations; ++it) {
        const Eigen::VectorXd c_norm = c.colwise().squaredNorm().transpose();
        for (Eigen::Index start = 0; start < ei_n; start += kBlock) {
            const Eigen::Index len = std::min(kBlock, ei_n - start);
            Matrix scores = c.transpose() * x.middleCols(start, len); // k x len
            for (Eigen::Index p = 0; p < len; ++p) {
                Eigen::Index best = 0;
                double best_d = std::numeric_limits<double>::infinity();
                for (Eigen::Index q = 0; q < ei_k; ++q) {
                    const double d = c_norm[q] - 2.0 * scores(q, p);
                    if (d < best_d) {
                        best_d = d;
                        best = q;
                    }
                }
                label[static_cast<std::size_t>(start + p)] = best;
            }
        }
        Matrix sums = Matrix::Zero(dim, ei_k);
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(ei_k);
        for (Eigen::Index i = 0; i < ei_n; ++i) {
            sums.col(label[static_cast<std::size_t>(i)]) += x.col(i);
            counts[label[static_cast<std::size_t>(i)]] += 1.0;
        }
        double shift = 0.0;
        for (Eigen::Index q = 0; q < ei_k; ++q) {
            if (counts[q] == 0.0)
                continue; // empty cluster keeps its centroid
            const Eigen::VectorXd updated = sums.col(q) / counts[q];
            shift = std::max(shift, (updated - c.col(q)).norm());
            c.col(q) = updated;
        }
        if (shift < options.tolerance)
            break;
    }

    Centroids out;
    out.dim = dim;
    out.data.assign(c.data(), c.data() + c.size());
    return out;
}

} // namespace swarmqd
