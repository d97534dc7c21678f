#include <doctest.h>

#include <cmath>
#include <set>
#include <stdexcept>

#include "swarmqd/archive.hpp"

using namespace swarmqd;

namespace {

ArchiveCell cell(double performance)
{
    ArchiveCell c;
    c.performance = performance;
    return c;
}

} // namespace

TEST_CASE("archive insertion keeps the strictly better elite")
{
    Archive a(10);
    CHECK(a.empty());
    CHECK(a.try_insert(3, cell(0.5)));
    CHECK_FALSE(a.try_insert(3, cell(0.4)));
    CHECK_FALSE(a.try_insert(3, cell(0.5)));
    CHECK(a.at(3).performance == 0.5);
    CHECK(a.try_insert(3, cell(0.6)));
    CHECK(a.at(3).performance == 0.6);
    CHECK(a.try_insert(1, cell(0.2)));
    CHECK(a.coverage() == 2);
    CHECK(a.occupied() == std::vector<std::uint32_t>{3, 1});
    CHECK(a.keys() == std::vector<std::uint32_t>{1, 3});
    CHECK(a.best_performance() == 0.6);
    CHECK(a.mean_performance() == doctest::Approx(0.4));
    CHECK(a.find(2) == nullptr);
    CHECK_THROWS_AS(a.try_insert(10, cell(1.0)), std::out_of_range);
    CHECK_THROWS(a.at(2));
}

TEST_CASE("grid binning covers every cell once")
{
    const GridBinning g(3, 16);
    CHECK(g.capacity() == 4096);
    std::set<std::uint32_t> keys;
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 16; ++j)
            for (int k = 0; k < 16; ++k) {
                const double v[] = {(i + 0.5) / 16, (j + 0.5) / 16, (k + 0.5) / 16};
                const auto key = g.key(v);
                REQUIRE(key < 4096);
                keys.insert(key);
            }
    CHECK(keys.size() == 4096);
    const double lo[] = {0.0, 0.0, 0.0};
    const double hi[] = {1.0, 1.0, 1.0};
    const double edge[] = {1.0 / 16, 0.0, 0.0};
    const double below[] = {1.0 / 16 - 1e-12, 0.0, 0.0};
    CHECK(g.key(lo) == 0);
    CHECK(g.key(hi) == 4095);
    CHECK(g.key(edge) != g.key(below));
    const double two[] = {0.5, 0.5};
    CHECK_THROWS(g.key(two));
}

TEST_CASE("nearest centroid breaks ties towards the lowest index")
{
    Centroids c{2, {0.0, 0.0, 1.0, 0.0, 0.0, 1.0}};
    const double mid[] = {0.5, 0.5};
    CHECK(nearest_centroid(mid, c) == 0);
    const double near1[] = {0.9, 0.1};
    CHECK(nearest_centroid(near1, c) == 1);
    const double between[] = {0.5, 0.0};
    CHECK(nearest_centroid(between, c) == 0);
}

TEST_CASE("one cluster converges to the mean")
{
    const std::vector<double> pts{0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0, 0.5, 0.2};
    CvtOptions o;
    o.k = 1;
    o.dim = 2;
    const Centroids c = kmeans(pts, 2, o);
    REQUIRE(c.size() == 1);
    CHECK(c.row(0)[0] == doctest::Approx(0.5));
    CHECK(c.row(0)[1] == doctest::Approx(0.44));
}

TEST_CASE("k-means finds well separated blobs")
{
    Rng rng(3);
    const double centres[4][2] = {{0.1, 0.1}, {0.9, 0.1}, {0.1, 0.9}, {0.9, 0.9}};
    std::vector<double> pts;
    for (int i = 0; i < 2000; ++i) {
        const auto& c = centres[i % 4];
        pts.push_back(c[0] + rng.uniform(-0.05, 0.05));
        pts.push_back(c[1] + rng.uniform(-0.05, 0.05));
    }
    CvtOptions o;
    o.k = 4;
    o.dim = 2;
    const Centroids c = kmeans(pts, 2, o);
    for (const auto& expect : centres) {
        double best = INFINITY;
        for (std::size_t j = 0; j < c.size(); ++j)
            best = std::min(best, std::hypot(c.row(j)[0] - expect[0], c.row(j)[1] - expect[1]));
        CHECK(best < 0.01);
    }
}

TEST_CASE("CVT generation is seeded and validated")
{
    CvtOptions o;
    o.k = 16;
    o.dim = 3;
    o.seed_points = 2000;
    o.max_iterations = 20;
    o.seed = 9;
    const Centroids a = generate_cvt_centroids(o);
    const Centroids b = generate_cvt_centroids(o);
    CHECK(a.data == b.data);
    CHECK(a.size() == 16);
    for (double v : a.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    o.seed = 10;
    CHECK(generate_cvt_centroids(o).data != a.data);
    o.k = 3000;
    CHECK_THROWS_AS(generate_cvt_centroids(o), std::invalid_argument);
}

TEST_CASE("simplex seed points and centroids are probability blocks")
{
    CvtOptions o;
    o.k = 8;
    o.dim = 32;
    o.simplex_block = 16;
    o.seed_points = 500;
    o.max_iterations = 3;
    const auto pts = cvt_seed_points(o);
    REQUIRE(pts.size() == 500 * 32);
    for (std::size_t p = 0; p < 500; ++p)
        for (int b = 0; b < 2; ++b) {
            double s = 0.0;
            for (int a = 0; a < 16; ++a) {
                REQUIRE(pts[p * 32 + b * 16 + a] >= 0.0);
                s += pts[p * 32 + b * 16 + a];
            }
            REQUIRE(std::abs(s - 1.0) < 1e-12);
        }
    // means of simplex points stay on the simplex
    const Centroids c = generate_cvt_centroids(o);
    for (std::size_t j = 0; j < c.size(); ++j)
        for (int b = 0; b < 2; ++b) {
            double s = 0.0;
            for (int a = 0; a < 16; ++a)
                s += c.row(j)[b * 16 + a];
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
}

TEST_CASE("uniform simplex: each coordinate has mean 1/16")
{
    CvtOptions o;
    o.dim = 16;
    o.simplex_block = 16;
    o.seed_points = 20000;
    const auto pts = cvt_seed_points(o);
    double s = 0.0;
    for (std::size_t p = 0; p < o.seed_points; ++p)
        s += pts[p * 16];
    // Dirichlet(1,...,1) marginal is Beta(1,15): sd 0.0605, sd of mean 4.3e-4
    CHECK(std::abs(s / o.seed_points - 1.0 / 16) < 2e-3);
}
