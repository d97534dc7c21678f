#include "swarmqd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace swarmqd {

namespace {

// Midranks doubled so that they stay integral.
std::vector<std::int64_t> doubled_ranks(std::span<const double> values)
{
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::int64_t> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]])
            ++j;
        // ranks i+1 .. j+1, doubled mean = i + j + 2
        for (std::size_t k = i; k <= j; ++k)
            ranks[order[k]] = static_cast<std::int64_t>(i + j + 2);
        i = j + 1;
    }
    return ranks;
}

double exact_rank_sum_p(const std::vector<std::int64_t>& ranks, std::size_t n, std::int64_t observed)
{
    const std::size_t total = ranks.size();
    const std::int64_t max_sum = std::accumulate(ranks.begin(), ranks.end(), std::int64_t{0});
    // ways[k][s]: subsets of size k with doubled rank sum s
    std::vector<std::vector<std::uint64_t>> ways(n + 1, std::vector<std::uint64_t>(max_sum + 1, 0));
    ways[0][0] = 1;
    for (std::size_t i = 0; i < total; ++i)
        for (std::size_t k = std::min(n, i + 1); k >= 1; --k)
            for (std::int64_t s = max_sum; s >= ranks[i]; --s)
                ways[k][s] += ways[k - 1][s - ranks[i]];
    // doubled expectation: n (N + 1)
    const std::int64_t centre = static_cast<std::int64_t>(n * (total + 1));
    const std::int64_t extremity = std::abs(observed - centre);
    std::uint64_t hits = 0;
    std::uint64_t all = 0;
    for (std::int64_t s = 0; s <= max_sum; ++s) {
        all += ways[n][s];
        if (std::abs(s - centre) >= extremity)
            hits += ways[n][s];
    }
    return static_cast<double>(hits) / static_cast<double>(all);
}

// Exact test: the mean of identical values picks up rounding error.
bool is_constant(std::span<const double> v)
{
    return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
}

} // namespace

double wilcoxon_rank_sum(std::span<const double> x, std::span<const double> y)
{
    if (x.empty() || y.empty())
        throw std::invalid_argument("rank-sum test needs two non-empty samples");
    std::vector<double> pooled(x.begin(), x.end());
    pooled.insert(pooled.end(), y.begin(), y.end());
    const std::vector<std::int64_t> ranks = doubled_ranks(pooled);
    const std::size_t n = x.size();
    const std::size_t m = y.size();
    const std::size_t total = n + m;
    std::int64_t w = 0;
    for (std::size_t i = 0; i < n; ++i)
        w += ranks[i];

    if (std::all_of(pooled.begin(), pooled.end(), [&](double v) { return v == pooled.front(); }))
        return 1.0;
    if (total <= kExactWilcoxonLimit)
        return exact_rank_sum_p(ranks, n, w);

    std::vector<double> sorted = pooled;
    std::sort(sorted.begin(), sorted.end());
    double tie_term = 0.0;
    for (std::size_t i = 0; i < total;) {
        std::size_t j = i;
        while (j < total && sorted[j] == sorted[i])
            ++j;
        const double t = static_cast<double>(j - i);
        tie_term += t * t * t - t;
        i = j;
    }
    const double dn = static_cast<double>(n);
    const double dm = static_cast<double>(m);
    const double dN = static_cast<double>(total);
    const double variance = dn * dm / 12.0 * ((dN + 1.0) - tie_term / (dN * (dN - 1.0)));
    if (!(variance > 0.0))
        return 1.0;
    const double observed = 0.5 * static_cast<double>(w);
    const double expected = dn * (dN + 1.0) / 2.0;
    const double z = std::max(0.0, std::abs(observed - expected) - 0.5) / std::sqrt(variance);
    return std::min(1.0, std::erfc(z / std::numbers::sqrt2));
}

std::string_view magnitude_name(EffectMagnitude m)
{
    switch (m) {
    case EffectMagnitude::Negligible:
        return "negligible";
    case EffectMagnitude::Small:
        return "small";
    case EffectMagnitude::Medium:
        return "medium";
    case EffectMagnitude::Large:
        return "large";
    }
    return "?";
}

EffectMagnitude effect_magnitude(double delta)
{
    const double a = std::abs(delta);
    if (a >= 0.43)
        return EffectMagnitude::Large;
    if (a >= 0.28)
        return EffectMagnitude::Medium;
    if (a >= 0.11)
        return EffectMagnitude::Small;
    return EffectMagnitude::Negligible;
}

double cliffs_delta(std::span<const double> x, std::span<const double> y)
{
    if (x.empty() || y.empty())
        throw std::invalid_argument("Cliff's delta needs two non-empty samples");
    std::vector<double> sorted(y.begin(), y.end());
    std::sort(sorted.begin(), sorted.end());
    std::int64_t balance = 0;
    for (double v : x) {
        const auto below = std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
        const auto above = sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), v);
        balance += below - above;
    }
    return static_cast<double>(balance) / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}

StatResult compare_samples(std::span<const double> x, std::span<const double> y)
{
    StatResult r;
    r.p_value = wilcoxon_rank_sum(x, y);
    r.delta = cliffs_delta(x, y);
    r.magnitude = effect_magnitude(r.delta);
    return r;
}

double median(std::vector<double> values)
{
    if (values.empty())
        throw std::invalid_argument("median of an empty sample");
    std::sort(values.begin(), values.end());
    const std::size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double sample_sd(std::span<const double> values)
{
    const std::size_t n = values.size();
    if (n < 2)
        return 0.0;
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
    double ss = 0.0;
    for (double v : values)
        ss += (v - mean) * (v - mean);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

LinearFit fit_line(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size())
        throw std::invalid_argument("fit_line: samples differ in length");
    const std::size_t n = x.size();
    if (n < 2)
        throw std::domain_error("fit_line: need at least two points");
    const double dn = static_cast<double>(n);
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / dn;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / dn;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if (is_constant(x))
        throw std::domain_error("fit_line: x has no variance, slope undefined");
    LinearFit f;
    if (!is_constant(y) && syy > 0.0) {
        f.slope = sxy / sxx;
        f.correlation = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    }
    f.intercept = my - f.slope * mx;
    return f;
}

double KdeGrid::integral() const
{
    const double cell = (x_hi - x_lo) / nx * (y_hi - y_lo) / ny;
    return std::accumulate(density.begin(), density.end(), 0.0) * cell;
}

std::optional<KdeGrid> kde_2d(std::span<const double> x, std::span<const double> y, int nx, int ny)
{
    if (x.size() != y.size())
        throw std::invalid_argument("kde_2d: samples differ in length");
    if (nx < 1 || ny < 1)
        throw std::invalid_argument("kde_2d: grid needs at least one cell per axis");
    const std::size_t n = x.size();
    if (n < 2)
        return std::nullopt;
    const double factor = std::pow(static_cast<double>(n), -1.0 / 6.0);
    KdeGrid g;
    g.hx = sample_sd(x) * factor;
    g.hy = sample_sd(y) * factor;
    if (is_constant(x) || is_constant(y) || !(g.hx > 0.0) || !(g.hy > 0.0))
        return std::nullopt;
    const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
    const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    g.nx = nx;
    g.ny = ny;
    g.x_lo = *xmin - 4.0 * g.hx;
    g.x_hi = *xmax + 4.0 * g.hx;
    g.y_lo = *ymin - 4.0 * g.hy;
    g.y_hi = *ymax + 4.0 * g.hy;

    // separable kernel: tabulate each axis once
    std::vector<double> kx(n * static_cast<std::size_t>(nx));
    std::vector<double> ky(n * static_cast<std::size_t>(ny));
    const double norm_x = 1.0 / (g.hx * std::sqrt(2.0 * std::numbers::pi));
    const double norm_y = 1.0 / (g.hy * std::sqrt(2.0 * std::numbers::pi));
    for (std::size_t k = 0; k < n; ++k) {
        for (int i = 0; i < nx; ++i) {
            const double u = (g.x_at(i) - x[k]) / g.hx;
            kx[k * nx + i] = norm_x * std::exp(-0.5 * u * u);
        }
        for (int j = 0; j < ny; ++j) {
            const double u = (g.y_at(j) - y[k]) / g.hy;
            ky[k * ny + j] = norm_y * std::exp(-0.5 * u * u);
        }
    }
    g.density.assign(static_cast<std::size_t>(nx) * ny, 0.0);
    for (std::size_t k = 0; k < n; ++k)
        for (int j = 0; j < ny; ++j) {
            const double wy = ky[k * ny + j];
            double* row = g.density.data() + static_cast<std::size_t>(j) * nx;
            for (int i = 0; i < nx; ++i)
                row[i] += wy * kx[k * nx + i];
        }
    for (double& d : g.density)
        d /= static_cast<double>(n);
    return g;
}

Signature signature(std::span<const double> x, std::span<const double> y)
{
    Signature s;
    s.used = x.size();
    try {
        s.fit = fit_line(x, y);
    } catch (const std::domain_error&) {
        s.fit.reset();
    }
    s.kde = kde_2d(x, y);
    return s;
}

} // namespace swarmqd
