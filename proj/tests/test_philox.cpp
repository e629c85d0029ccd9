#include <cmath>
#include <cstdint>

#include <gtest/gtest.h>

#include "svemp/philox.hpp"

using svemp::rng::Block;
using svemp::rng::Key;

// Known-answer vectors published with the Random123 reference implementation.
TEST(Philox, KnownAnswerZero) {
    const Block out = svemp::rng::philox4x32_10({0, 0, 0, 0}, {0, 0});
    EXPECT_EQ(out, (Block{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
}

TEST(Philox, KnownAnswerOnes) {
    const Block out = svemp::rng::philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
                                                {0xffffffffu, 0xffffffffu});
    EXPECT_EQ(out, (Block{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
}

TEST(Philox, KnownAnswerPi) {
    const Block out = svemp::rng::philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
                                                {0xa4093822u, 0x299f31d0u});
    EXPECT_EQ(out, (Block{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(Philox, OpenUnitInterval) {
    EXPECT_GT(svemp::rng::to_open_unit(0, 0), 0.0);
    EXPECT_LT(svemp::rng::to_open_unit(0xffffffffu, 0xffffffffu), 1.0);
}

TEST(Philox, NormalDrawsAreReproducibleAndIndexed) {
    EXPECT_EQ(svemp::rng::normal(42, 3, 17), svemp::rng::normal(42, 3, 17));
    EXPECT_NE(svemp::rng::normal(42, 3, 17), svemp::rng::normal(42, 4, 17));
    EXPECT_NE(svemp::rng::normal(42, 3, 17), svemp::rng::normal(42, 3, 18));
    EXPECT_NE(svemp::rng::normal(42, 3, 17), svemp::rng::normal(43, 3, 17));
}

TEST(Philox, NormalMoments) {
    const int n = 1000000;
    double s1 = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = svemp::rng::normal(7, static_cast<std::uint64_t>(i % 1000),
                                            static_cast<std::uint64_t>(i / 1000));
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    // Standard errors: 1/sqrt(n), sqrt(2/n), sqrt(96/n).
    EXPECT_NEAR(s1 / n, 0.0, 5.0 / std::sqrt(n));
    EXPECT_NEAR(s2 / n, 1.0, 5.0 * std::sqrt(2.0 / n));
    EXPECT_NEAR(s4 / n, 3.0, 5.0 * std::sqrt(96.0 / n));
}
