#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace swarmqd {

/// Two-sided Wilcoxon rank-sum p-value with midranks for ties. Exact
/// permutation distribution when |x| + |y| <= 12, otherwise the normal
/// approximation with continuity and tie correction. Returns 1 when every
/// value is tied. Throws std::invalid_argument on an empty sample.
double wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y);

inline constexpr std::size_t kExactWilcoxonLimit = 12;

enum class EffectMagnitude { Negligible, Small, Medium, Large };
std::string_view magnitude_name(EffectMagnitude m);
/// |d| < 0.11 negligible, < 0.28 small, < 0.43 medium, otherwise large.
EffectMagnitude effect_magnitude(double delta);

/// (#{x > y} - #{x < y}) / (|x| |y|) over all pairs.
double cliffs_delta(std::span<const double> x, std::span<const double> y);

struct StatResult {
    double p_value = 1.0;
    double delta = 0.0;
    EffectMagnitude magnitude = EffectMagnitude::Negligible;
};

StatResult compare_samples(std::span<const double> x, std::span<const double> y);

double median(std::vector<double> values);
double sample_sd(std::span<const double> values);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double correlation = 0.0;
};

/// Ordinary least squares of y on x. Constant y gives slope 0 and
/// correlation 0. Throws std::domain_error when x has no variance or fewer
/// than two points are given.
LinearFit fit_line(std::span<const double> x, std::span<const double> y);

/// Gaussian product-kernel density on a regular grid. Bandwidth per axis is
/// sd * n^(-1/6); the grid spans [min - 4h, max + 4h] and values are taken
/// at cell centres.
struct KdeGrid {
    int nx = 0;
    int ny = 0;
    double x_lo = 0.0, x_hi = 0.0;
    double y_lo = 0.0, y_hi = 0.0;
    double hx = 0.0, hy = 0.0;
    std::vector<double> density; // row-major, y outer

    double x_at(int i) const { return x_lo + (i + 0.5) * (x_hi - x_lo) / nx; }
    double y_at(int j) const { return y_lo + (j + 0.5) * (y_hi - y_lo) / ny; }
    double at(int i, int j) const { return density[static_cast<std::size_t>(j) * nx + i]; }
    /// Midpoint-rule integral over the grid.
    double integral() const;
};

/// Empty when either axis has zero spread or fewer than two points.
std::optional<KdeGrid> kde_2d(std::span<const double> x, std::span<const double> y, int nx = 100, int ny = 100);

struct Signature {
    std::size_t used = 0;
    std::optional<LinearFit> fit; // empty when x has no variance
    std::optional<KdeGrid> kde;
};

Signature signature(std::span<const double> x, std::span<const double> y);

} // namespace swarmqd
