#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "itolab/rng.hpp"

using namespace itolab;

TEST(Philox, KnownAnswerZero) {
    Philox4x32 g(0);
    const auto b = g(0, 0);
    EXPECT_EQ(b[0], 0x6627e8d5u);
    EXPECT_EQ(b[1], 0xe169c58du);
    EXPECT_EQ(b[2], 0xbc57ac4cu);
    EXPECT_EQ(b[3], 0x9b00dbd8u);
}

TEST(Philox, KnownAnswerAllOnes) {
    Philox4x32 g(~0ull);
    const auto b = g(~0ull, ~0ull);
    EXPECT_EQ(b[0], 0x408f276du);
    EXPECT_EQ(b[1], 0x41c83b0eu);
    EXPECT_EQ(b[2], 0xa20bc7c6u);
    EXPECT_EQ(b[3], 0x6d5451fdu);
}

TEST(RandomStream, SameKeySameSequence) {
    auto a = make_rng_stream(7, 0), b = make_rng_stream(7, 0);
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.normal(), b.normal());
}

TEST(RandomStream, SeedsSeparate) {
    auto a = make_rng_stream(7, 0), b = make_rng_stream(8, 0);
    int same = 0;
    for (int i = 0; i < 100; ++i) same += a.normal() == b.normal();
    EXPECT_EQ(same, 0);
}

TEST(RandomStream, IndependentPathsUncorrelated) {
    auto a = make_rng_stream(7, 0), b = make_rng_stream(7, 1);
    const int n = 10000;
    double sab = 0, saa = 0, sbb = 0, ma = 0, mb = 0;
    std::vector<double> xa(n), xb(n);
    for (int i = 0; i < n; ++i) {
        xa[i] = a.normal();
        xb[i] = b.normal();
        ma += xa[i];
        mb += xb[i];
    }
    ma /= n;
    mb /= n;
    for (int i = 0; i < n; ++i) {
        sab += (xa[i] - ma) * (xb[i] - mb);
        saa += (xa[i] - ma) * (xa[i] - ma);
        sbb += (xb[i] - mb) * (xb[i] - mb);
    }
    EXPECT_LT(std::abs(sab / std::sqrt(saa * sbb)), 0.02);
}

TEST(RandomStream, NormalMoments) {
    auto s = make_rng_stream(3, 11);
    const int n = 200000;
    double m = 0, m2 = 0, m4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = s.normal();
        m += z;
        m2 += z * z;
        m4 += z * z * z * z;
    }
    EXPECT_NEAR(m / n, 0.0, 0.01);
    EXPECT_NEAR(m2 / n, 1.0, 0.01);
    EXPECT_NEAR(m4 / n, 3.0, 0.06);
}

TEST(RandomStream, UniformOpenInterval) {
    auto s = make_rng_stream(1, 2);
    double mean = 0;
    for (int i = 0; i < 100000; ++i) {
        const double u = s.uniform();
        ASSERT_GT(u, 0.0);
        ASSERT_LT(u, 1.0);
        mean += u;
    }
    EXPECT_NEAR(mean / 100000, 0.5, 0.005);
}

TEST(DeriveSeed, TagsDiffer) {
    EXPECT_NE(derive_seed(1, 0), derive_seed(1, 1));
    EXPECT_NE(derive_seed(1, 0), derive_seed(2, 0));
    EXPECT_EQ(derive_seed(5, 9), derive_seed(5, 9));
}
