#include "loopshift/cycle.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <vector>

using namespace loopshift;

namespace {

Matrix indexed(std::size_t N, std::size_t D) {
    Matrix m(static_cast<long>(N), static_cast<long>(D));
    for (long r = 0; r < m.rows(); ++r) {
        for (long c = 0; c < m.cols(); ++c) {
            m(r, c) = static_cast<double>(100 * r + c);
        }
    }
    return m;
}

std::vector<std::size_t> window_rows(const Matrix& window) {
    std::vector<std::size_t> rows;
    for (long r = 0; r < window.rows(); ++r) {
        rows.push_back(static_cast<std::size_t>(window(r, 0)) / 100);
    }
    return rows;
}

} // namespace

TEST(InitCycle, DeterministicBySeed) {
    const LatentCycle a = init_cycle(16, 8, 3);
    const LatentCycle b = init_cycle(16, 8, 3);
    const LatentCycle c = init_cycle(16, 8, 4);
    EXPECT_EQ(a.latents(), b.latents());
    EXPECT_NE(a.latents(), c.latents());
    EXPECT_TRUE(a.uniform_noise_level());
    EXPECT_THROW(init_cycle(0, 8, 1), ConfigError);
}

TEST(InitCycle, UnitVariance) {
    // 10^5 scalars: the sample variance has standard error ~0.0045, so
    // [0.97, 1.03] is a bound of roughly 6.7 sigma.
    const LatentCycle c = init_cycle(12500, 8, 99);
    const double n = static_cast<double>(c.latents().size());
    const double mean = c.latents().sum() / n;
    const double var = (c.latents().array() - mean).square().sum() / (n - 1.0);
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_GE(var, 0.97);
    EXPECT_LE(var, 1.03);
}

TEST(WindowStart, Examples) {
    EXPECT_EQ(window_start(0, 6, 16), 0u);
    EXPECT_EQ(window_start(5, 6, 16), 14u);
    for (std::size_t k = 0; k < 50; ++k) {
        EXPECT_EQ(window_start(k, 0, 16), 0u);
        EXPECT_LT(window_start(k, 7, 16), 16u);
    }
}

TEST(WindowStart, VisitedStartsAreMultiplesOfGcd) {
    const std::size_t steps = 50;
    for (std::size_t N : {8u, 16u, 24u}) {
        for (std::size_t s = 0; s <= 2 * N; ++s) {
            std::set<std::size_t> visited;
            for (std::size_t k = 0; k < steps; ++k) {
                visited.insert(window_start(k, s, N));
            }
            const std::size_t g = std::gcd(s, N);
            std::set<std::size_t> expected;
            for (std::size_t m = 0; m < N; m += g) {
                expected.insert(m);
            }
            EXPECT_EQ(visited, expected) << "N=" << N << " s=" << s;
        }
    }
}

TEST(Window, ExtractWraps) {
    const LatentCycle four(indexed(4, 2), 0);
    EXPECT_EQ(window_rows(four.extract_window(3, 4)), (std::vector<std::size_t>{3, 0, 1, 2}));
    const LatentCycle sixteen(indexed(16, 2), 0);
    EXPECT_EQ(window_rows(sixteen.extract_window(0, 8)), (std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7}));
    EXPECT_EQ(window_rows(sixteen.extract_window(12, 8)), (std::vector<std::size_t>{12, 13, 14, 15, 0, 1, 2, 3}));
    EXPECT_THROW(four.extract_window(0, 5), ConfigError);
    EXPECT_THROW(four.extract_window(4, 1), ConfigError);
}

TEST(Window, ScatterRoundTripAndWrap) {
    LatentCycle c = init_cycle(16, 3, 7, 5);
    const Matrix before = c.latents();
    for (std::size_t j = 0; j < 16; ++j) {
        c.scatter_window(j, c.extract_window(j, 8), 5);
    }
    EXPECT_EQ(c.latents(), before);

    LatentCycle w(Matrix::Zero(4, 1), 2);
    Matrix window(4, 1);
    window << 10, 11, 12, 13;
    w.scatter_window(3, window, 1);
    EXPECT_EQ(w.latents()(3, 0), 10);
    EXPECT_EQ(w.latents()(0, 0), 11);
    EXPECT_EQ(w.latents()(1, 0), 12);
    EXPECT_EQ(w.latents()(2, 0), 13);
    EXPECT_EQ(w.noise_level(), 1);

    LatentCycle partial(Matrix::Zero(4, 1), 2);
    partial.scatter_window(1, Matrix::Ones(2, 1), 1);
    EXPECT_EQ(partial.latents()(0, 0), 0);
    EXPECT_EQ(partial.latents()(3, 0), 0);
    EXPECT_FALSE(partial.uniform_noise_level());
    EXPECT_THROW(partial.noise_level(), std::logic_error);
    EXPECT_THROW(partial.scatter_window(0, Matrix::Ones(2, 2), 1), ConfigError);
}

TEST(Window, DisjointScatterOrderIrrelevant) {
    const LatentCycle source = init_cycle(16, 4, 11);
    LatentCycle a(Matrix::Zero(16, 4), 0);
    LatentCycle b(Matrix::Zero(16, 4), 0);
    const std::vector<std::size_t> starts = tile_window_starts(6, 8, 16);
    for (std::size_t s : starts) {
        a.scatter_window(s, source.extract_window(s, 8), 1);
    }
    for (auto it = starts.rbegin(); it != starts.rend(); ++it) {
        b.scatter_window(*it, source.extract_window(*it, 8), 1);
    }
    EXPECT_EQ(a.latents(), b.latents());
    EXPECT_EQ(a.latents(), source.latents());
}

TEST(Tiling, Examples) {
    EXPECT_EQ(tile_window_starts(0, 8, 16), (std::vector<std::size_t>{0, 8}));
    EXPECT_EQ(tile_window_starts(6, 8, 16), (std::vector<std::size_t>{6, 14}));
    EXPECT_EQ(tile_window_starts(0, 16, 16), (std::vector<std::size_t>{0}));
    EXPECT_THROW(tile_window_starts(0, 6, 16), ConfigError);
}

TEST(Tiling, PartitionExhaustive) {
    for (std::size_t N : {1u, 2u, 4u, 6u, 8u, 12u, 16u}) {
        for (std::size_t f = 1; f <= N; ++f) {
            if (N % f != 0) {
                continue;
            }
            for (std::size_t j = 0; j < N; ++j) {
                std::vector<int> hits(N, 0);
                for (std::size_t s : tile_window_starts(j, f, N)) {
                    for (std::size_t i = 0; i < f; ++i) {
                        ++hits[(s + i) % N];
                    }
                }
                for (int h : hits) {
                    EXPECT_EQ(h, 1) << "N=" << N << " f=" << f << " j=" << j;
                }
            }
        }
    }
}

TEST(Tiling, ClampedCoversSequence) {
    EXPECT_EQ(clamped_window_starts(0, 8, 16), (std::vector<std::size_t>{0, 8}));
    EXPECT_EQ(clamped_window_starts(6, 8, 16), (std::vector<std::size_t>{0, 6, 8}));
    EXPECT_EQ(clamped_window_starts(0, 8, 8), (std::vector<std::size_t>{0}));
    for (std::size_t N : {8u, 12u, 16u, 21u}) {
        for (std::size_t f : {3u, 4u, 8u}) {
            if (f > N) {
                continue;
            }
            for (std::size_t j = 0; j <= N - f; ++j) {
                const std::vector<std::size_t> starts = clamped_window_starts(j, f, N);
                EXPECT_EQ(starts.front(), 0u);
                EXPECT_EQ(starts.back(), N - f);
                EXPECT_TRUE(std::is_sorted(starts.begin(), starts.end()));
                std::vector<int> hits(N, 0);
                for (std::size_t s : starts) {
                    for (std::size_t i = 0; i < f; ++i) {
                        ++hits[s + i];
                    }
                }
                for (int h : hits) {
                    EXPECT_GE(h, 1);
                }
            }
        }
    }
    EXPECT_THROW(clamped_window_starts(9, 8, 16), ConfigError);
}
