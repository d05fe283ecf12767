#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "cgcd/matrix.hpp"
#include "cgcd/rng.hpp"

using namespace cgcd;

TEST(Matrix, ShapeAndAccess) {
    Matrix m(2, 3, 1.5);
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m.cols(), 3u);
    m(1, 2) = 4.0;
    EXPECT_EQ(m.row(1)[2], 4.0);
    EXPECT_EQ(m.data()[5], 4.0);
}

TEST(Matrix, PayloadSizeMismatchThrows) { EXPECT_THROW(Matrix(2, 2, std::vector<double>{1, 2, 3}), DataError); }

TEST(Matrix, AppendRowSetsWidthAndChecksIt) {
    Matrix m;
    m.append_row(std::vector<double>{1, 2});
    m.append_row(std::vector<double>{3, 4});
    EXPECT_EQ(m.rows(), 2u);
    EXPECT_EQ(m(1, 0), 3.0);
    EXPECT_THROW(m.append_row(std::vector<double>{1, 2, 3}), DataError);
}

TEST(Matrix, FiniteCheck) {
    Matrix m(1, 2);
    EXPECT_TRUE(m.all_finite());
    m(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_FALSE(m.all_finite());
}

TEST(Matrix, DotNormGather) {
    const std::vector<double> a{1, 2, 2};
    EXPECT_DOUBLE_EQ(dot(a, a), 9.0);
    EXPECT_DOUBLE_EQ(norm2(a), 3.0);
    Matrix m(3, 1, std::vector<double>{10, 20, 30});
    const std::vector<std::size_t> idx{2, 0};
    const Matrix g = gather_rows(m, idx);
    EXPECT_EQ(g.rows(), 2u);
    EXPECT_EQ(g(0, 0), 30.0);
    EXPECT_EQ(g(1, 0), 10.0);
}

TEST(Matrix, RoundToFloat32IsIdempotent) {
    Matrix m(1, 2, std::vector<double>{0.1, 1.0 / 3.0});
    round_to_float32(m);
    EXPECT_EQ(m(0, 0), static_cast<double>(0.1f));
    const Matrix once = m;
    round_to_float32(m);
    EXPECT_EQ(m, once);
}

TEST(Rng, StreamsAreDeterministicAndDistinct) {
    EXPECT_EQ(stream_seed(7, "train", 1), stream_seed(7, "train", 1));
    std::set<std::uint64_t> seeds{stream_seed(7, "train", 0), stream_seed(7, "train", 1), stream_seed(7, "split", 0),
                                  stream_seed(8, "train", 0)};
    EXPECT_EQ(seeds.size(), 4u);
    auto a = make_rng(3, "x");
    auto b = make_rng(3, "x");
    EXPECT_EQ(a(), b());
}

TEST(Rng, Fnv1aKnownValue) {
    // FNV-1a 64-bit of "a"
    EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
}
