#include "msfem/field.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace msfem;

TEST(CoefficientField, ConstantAndAccessors) {
    CoefficientField f = CoefficientField::constant(4, 3, 2.5);
    EXPECT_EQ(f.kappa.size(), 12u);
    EXPECT_DOUBLE_EQ(f.kappa_at(3, 2), 2.5);
    EXPECT_TRUE(f.is_active(0, 0));
    EXPECT_EQ(f.active_count(), 12);
}

TEST(ChannelField, DeterministicAndTwoValued) {
    CoefficientField a = generate_channel_field(64, 64, 7, 1e4);
    CoefficientField b = generate_channel_field(64, 64, 7, 1e4);
    EXPECT_EQ(a.kappa, b.kappa);
    CoefficientField c = generate_channel_field(64, 64, 8, 1e4);
    EXPECT_NE(a.kappa, c.kappa);

    std::set<double> values(a.kappa.begin(), a.kappa.end());
    EXPECT_EQ(values.size(), 2u);
    EXPECT_TRUE(values.count(1.0));
    EXPECT_TRUE(values.count(1e4));

    // At least one full-width channel row.
    bool full_row = false;
    for (int iy = 0; iy < 64 && !full_row; ++iy) {
        bool all = true;
        for (int ix = 0; ix < 64; ++ix) all = all && a.kappa_at(ix, iy) == 1e4;
        full_row = all;
    }
    EXPECT_TRUE(full_row);
    EXPECT_THROW(generate_channel_field(0, 4, 1), config_error);
}

TEST(Perforations, IntegerInCircleTest) {
    CoefficientField f = CoefficientField::constant(4, 4);
    apply_perforations(f, {{2, 2, 2}});
    // Doubled coordinates: cell centers at odd points, strict inequality.
    // Only the four corner cells (center distance^2 = 18 >= 16) stay active.
    int active = 0;
    for (int iy = 0; iy < 4; ++iy)
        for (int ix = 0; ix < 4; ++ix) active += f.is_active(ix, iy) ? 1 : 0;
    EXPECT_EQ(active, 4);
    EXPECT_TRUE(f.is_active(0, 0));
    EXPECT_TRUE(f.is_active(3, 3));
    EXPECT_FALSE(f.is_active(1, 1));
    EXPECT_FALSE(f.is_active(0, 1));
}

TEST(Perforations, BoundaryCircleClipsCleanly) {
    CoefficientField f = CoefficientField::constant(10, 10);
    apply_perforations(f, {{0, 0, 3}});
    EXPECT_FALSE(f.is_active(0, 0));
    EXPECT_TRUE(f.is_active(3, 3));
    EXPECT_TRUE(f.is_active(9, 9));
}

TEST(RandomCircles, DisjointInsideAndReproducible) {
    std::vector<Circle> cs = random_circles(200, 160, 40, 3, 6, 42);
    ASSERT_EQ(cs.size(), 40u);
    std::vector<Circle> cs2 = random_circles(200, 160, 40, 3, 6, 42);
    for (size_t i = 0; i < cs.size(); ++i) {
        EXPECT_EQ(cs[i].cx, cs2[i].cx);
        EXPECT_EQ(cs[i].cy, cs2[i].cy);
        EXPECT_EQ(cs[i].r, cs2[i].r);
        EXPECT_GE(cs[i].cx - cs[i].r, 1);
        EXPECT_LE(cs[i].cx + cs[i].r, 199);
        EXPECT_GE(cs[i].cy - cs[i].r, 1);
        EXPECT_LE(cs[i].cy + cs[i].r, 159);
        EXPECT_GE(cs[i].r, 3);
        EXPECT_LE(cs[i].r, 6);
    }
    for (size_t i = 0; i < cs.size(); ++i)
        for (size_t j = i + 1; j < cs.size(); ++j) {
            int64_t dx = cs[i].cx - cs[j].cx, dy = cs[i].cy - cs[j].cy;
            int64_t rr = cs[i].r + cs[j].r;
            EXPECT_GT(dx * dx + dy * dy, rr * rr);
        }
    EXPECT_THROW(random_circles(10, 10, 100, 3, 3, 1), numeric_error);
    EXPECT_THROW(random_circles(10, 10, 1, 0, 3, 1), config_error);
}
