#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stereopatch/injector.hpp"
#include "stereopatch/matchers.hpp"

using namespace stereopatch;

namespace {

StereoSample textured_sample(int w, int h, int shift, uint64_t seed, int ch = 3) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StereoSample s;
    s.left = Image(w, h, ch);
    for (double& v : s.left.data) v = u(rng);
    s.right = Image(w, h, ch);
    for (double& v : s.right.data) v = u(rng);
    for (int r = 0; r < h; ++r)
        for (int c = shift; c < w; ++c)
            for (int k = 0; k < ch; ++k) s.right.at(r, c - shift, k) = s.left.at(r, c, k);
    s.gt = DisparityMap(w, h, shift, true);
    return s;
}

Patch solid_patch(int w, int h, double value = 0.5) {
    Patch p;
    p.width = w;
    p.height = h;
    p.pixels = Image(w, h, 3, value);
    p.visibility_mask.assign(static_cast<size_t>(w) * h, 1);
    return p;
}

Patch noisy_patch(int w, int h, uint64_t seed) {
    Patch p = solid_patch(w, h);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (double& v : p.pixels.data) v = u(rng);
    return p;
}

}  // namespace

TEST_CASE("integer disparity injection is stereo-consistent bit-exactly") {
    StereoSample s = textured_sample(128, 64, 6, 1);
    Patch p = noisy_patch(30, 20, 2);
    p.visibility_mask[5 * 30 + 7] = 0;  // one hollow pixel
    Placement pl;
    pl.anchor_row = 20;
    pl.anchor_col = 50;
    const int d = 17;
    InjectedPair pair = inject(s, p, pl, PatchDisparity::constant_d(d));

    for (int h = 0; h < 64; ++h)
        for (int w = 0; w < 128; ++w) {
            if (pair.region_left.contains(h, w)) {
                for (int k = 0; k < 3; ++k)
                    REQUIRE(pair.left.at(h, w, k) == pair.right.at(h, w - d, k));
            } else {
                // untouched pixels are bit-identical to the original left view
                for (int k = 0; k < 3; ++k) REQUIRE(pair.left.at(h, w, k) == s.left.at(h, w, k));
            }
        }
    // the hollow pixel keeps the scene in both views
    CHECK(!pair.region_left.contains(25, 57));
    CHECK(pair.left.at(25, 57, 0) == s.left.at(25, 57, 0));

    // pseudo ground truth is valid exactly on the left region
    for (int h = 0; h < 64; ++h)
        for (int w = 0; w < 128; ++w) {
            REQUIRE(pair.pseudo_gt.is_valid(h, w) == pair.region_left.contains(h, w));
            if (pair.pseudo_gt.is_valid(h, w)) REQUIRE(pair.pseudo_gt.at(h, w) == d);
        }
}

TEST_CASE("right region is the left region translated by the disparity") {
    StereoSample s = textured_sample(160, 40, 4, 3);
    Patch p = solid_patch(100, 20, 0.7);
    Placement pl;
    pl.anchor_row = 10;
    pl.anchor_col = 40;
    InjectedPair pair = inject(s, p, pl, PatchDisparity::constant_d(20.0));
    for (int h = 0; h < 40; ++h)
        for (int w = 0; w < 160; ++w)
            CHECK(pair.region_left.contains(h, w) ==
                  (w >= 20 && pair.region_right.contains(h, w - 20)));
}

TEST_CASE("patch disparity can follow the scene ground truth") {
    StereoSample s = textured_sample(96, 32, 9, 4);
    Patch p = noisy_patch(24, 12, 5);
    Placement pl;
    pl.anchor_row = 8;
    pl.anchor_col = 40;
    InjectedPair pair = inject(s, p, pl, PatchDisparity::from_gt());
    for (int h = 8; h < 20; ++h)
        for (int w = 40; w < 64; ++w) REQUIRE(pair.pseudo_gt.at(h, w) == 9.0);
}

TEST_CASE("injection bounds and data errors") {
    StereoSample s = textured_sample(64, 32, 5, 6);
    Patch p = solid_patch(16, 16);
    Placement pl;
    pl.anchor_row = 20;
    pl.anchor_col = 56;  // spills past the right edge
    CHECK_THROWS_AS(inject(s, p, pl, PatchDisparity::constant_d(5.0)), InjectError);
    pl.anchor_col = 2;  // right-view column would go negative
    CHECK_THROWS_AS(inject(s, p, pl, PatchDisparity::constant_d(10.0)), InjectError);
    pl.anchor_row = 10;  // 16-px patch fits rows 10..26 of the 32-row frame
    pl.anchor_col = 20;
    CHECK_THROWS_AS(inject(s, p, pl, PatchDisparity::constant_d(-3.0)), InjectError);
    CHECK_NOTHROW(inject(s, p, pl, PatchDisparity::constant_d(10.0)));
}

TEST_CASE("a solid well-textured placement does not break matching by itself") {
    StereoSample s = textured_sample(128, 48, 8, 7, 1);
    Patch p = noisy_patch(40, 24, 8);
    Placement pl;
    pl.anchor_row = 12;
    pl.anchor_col = 44;
    InjectedPair pair = inject(s, p, pl, PatchDisparity::constant_d(8.0));
    MatcherConfig m;
    m.kind = MatcherKind::Sgm;
    m.d_max = 16;
    StageTrace t = forward(m, pair.left, pair.right);
    CHECK(d1_all(t.disparity, pair.pseudo_gt, pair.region_left) < 0.1);
}

TEST_CASE("view transform identity and occlusion fraction") {
    StereoSample s = textured_sample(128, 64, 6, 9);
    Patch p = noisy_patch(40, 30, 10);
    Placement pl;
    pl.anchor_row = 16;
    pl.anchor_col = 50;
    const PatchDisparity pd = PatchDisparity::constant_d(12.0);

    InjectedPair plain = inject(s, p, pl, pd);
    InjectedPair same = apply_view_transform(s, p, pl, pd, 0.0, 0.0, 1.0, 1);
    CHECK(plain.left.data == same.left.data);
    CHECK(plain.right.data == same.right.data);
    CHECK(plain.region_left.mask == same.region_left.mask);

    Placement occl = pl;
    occl.occlusion_seed = 77;
    InjectedPair occluded = apply_view_transform(s, p, occl, pd, 0.0, 0.3, 1.0, 1);
    const double ratio = static_cast<double>(occluded.region_left.count()) /
                         static_cast<double>(plain.region_left.count());
    CHECK(ratio > 0.68);
    CHECK(ratio < 0.72);
}

TEST_CASE("view transform validates its ranges") {
    StereoSample s = textured_sample(64, 48, 5, 11);
    Patch p = solid_patch(16, 16);
    Placement pl;
    pl.anchor_row = 16;
    pl.anchor_col = 24;
    const PatchDisparity pd = PatchDisparity::constant_d(8.0);
    CHECK_THROWS_AS(apply_view_transform(s, p, pl, pd, 60.0, 0.0, 1.0, 1), InjectError);
    CHECK_THROWS_AS(apply_view_transform(s, p, pl, pd, 0.0, 1.5, 1.0, 1), InjectError);
    CHECK_THROWS_AS(apply_view_transform(s, p, pl, pd, 0.0, 0.0, 9.0, 1), InjectError);
    CHECK_THROWS_AS(apply_view_transform(s, p, pl, pd, 0.0, 0.0, 1.0, 4), InjectError);
    CHECK_NOTHROW(apply_view_transform(s, p, pl, pd, 30.0, 0.2, 1.2, 5));
}

TEST_CASE("rotation keeps the region in bounds and photometrics stay local") {
    StereoSample s = textured_sample(128, 64, 6, 12);
    Patch p = noisy_patch(30, 30, 13);
    Placement pl;
    pl.anchor_row = 17;
    pl.anchor_col = 49;
    const PatchDisparity pd = PatchDisparity::constant_d(10.0);
    InjectedPair rotated = apply_view_transform(s, p, pl, pd, 45.0, 0.0, 1.0, 1);
    CHECK(rotated.region_left.count() > 0);
    // pixels outside the region are untouched by brightness changes
    InjectedPair bright = apply_view_transform(s, p, pl, pd, 0.0, 0.0, 2.0, 1);
    for (int h = 0; h < 64; ++h)
        for (int w = 0; w < 128; ++w)
            if (!bright.region_left.contains(h, w))
                REQUIRE(bright.left.at(h, w, 0) == s.left.at(h, w, 0));
}

TEST_CASE("distance sweep follows the pinhole model") {
    StereoSample s = textured_sample(384, 160, 5, 14);
    Patch p = noisy_patch(16, 16, 15);
    Placement base;
    base.anchor_row = 70;
    base.anchor_col = 300;
    CameraRig rig{721.0, 0.54};
    auto pts = distance_sweep(s, p, base, {2.0, 4.0, 6.0, 8.0, 10.0}, rig, 10.0);
    REQUIRE(pts.size() == 5);
    CHECK(pts[0].disparity_px == doctest::Approx(721.0 * 0.54 / 2.0).epsilon(1e-12));
    CHECK(pts[4].disparity_px == doctest::Approx(721.0 * 0.54 / 10.0).epsilon(1e-12));
    auto width_of = [](const Region& r) {
        int lo = r.width, hi = -1;
        for (int h = 0; h < r.height; ++h)
            for (int w = 0; w < r.width; ++w)
                if (r.contains(h, w)) {
                    lo = std::min(lo, w);
                    hi = std::max(hi, w);
                }
        return hi - lo + 1;
    };
    // doubling the distance halves the patch extent (within rounding)
    REQUIRE(pts[1].pair.has_value());
    REQUIRE(pts[3].pair.has_value());
    const int w4 = width_of(pts[1].pair->region_left);
    const int w8 = width_of(pts[3].pair->region_left);
    CHECK(std::abs(w4 - 2 * w8) <= 2);
}

TEST_CASE("distance sweep skips depths where the patch vanishes") {
    StereoSample s = textured_sample(128, 64, 5, 16);
    Patch p = noisy_patch(16, 16, 17);
    Placement base;
    base.anchor_row = 24;
    base.anchor_col = 64;
    CameraRig rig{721.0, 0.54};
    auto pts = distance_sweep(s, p, base, {10.0, 1000.0}, rig, 10.0);
    REQUIRE(pts.size() == 2);
    CHECK(pts[0].pair.has_value());
    CHECK(!pts[1].pair.has_value());  // sub-8-px patch
}
