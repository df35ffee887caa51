#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stereopatch/core.hpp"

using namespace stereopatch;

namespace {

DisparityMap constant_map(int w, int h, double v) { return DisparityMap(w, h, v, true); }

// scalar-loop oracle, deliberately independent of the library implementation
double d1_oracle(const DisparityMap& pred, const DisparityMap& gt, const Region& reg) {
    int n = 0, bad = 0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c) {
            if (!reg.contains(r, c) || !gt.is_valid(r, c)) continue;
            ++n;
            const double e = std::fabs(pred.at(r, c) - gt.at(r, c));
            const double thr = 3.0 > 0.05 * gt.at(r, c) ? 3.0 : 0.05 * gt.at(r, c);
            if (e > thr) ++bad;
        }
    return static_cast<double>(bad) / n;
}

double epe_oracle(const DisparityMap& pred, const DisparityMap& gt, const Region& reg) {
    int n = 0;
    double s = 0.0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c) {
            if (!reg.contains(r, c) || !gt.is_valid(r, c)) continue;
            ++n;
            s += std::fabs(pred.at(r, c) - gt.at(r, c));
        }
    return s / n;
}

}  // namespace

TEST_CASE("disparity to depth") {
    CameraRig rig{721.0, 0.54};
    DisparityMap d = constant_map(4, 2, 54.0);
    DepthMap z = disparity_to_depth(d, rig);
    CHECK(z.valid[0] == 1);
    CHECK(z.meters[0] == doctest::Approx(7.21).epsilon(1e-9));

    d.at(0, 0) = 0.0;          // zero disparity -> invalid, never a division fault
    d.set_valid(0, 1, false);  // invalid input stays invalid
    z = disparity_to_depth(d, rig);
    CHECK(z.valid[0] == 0);
    CHECK(z.valid[1] == 0);
    CHECK(z.valid[2] == 1);

    CHECK_THROWS_AS(disparity_to_depth(d, CameraRig{0.0, 0.54}), MetricError);
}

TEST_CASE("d1_all threshold branches") {
    Region all(8, 4, true);
    // error 4 > max(3, 0.5) -> every pixel is an error
    CHECK(d1_all(constant_map(8, 4, 14.0), constant_map(8, 4, 10.0), all) == 1.0);
    // error 4 <= max(3, 5) -> no errors (5% branch)
    CHECK(d1_all(constant_map(8, 4, 104.0), constant_map(8, 4, 100.0), all) == 0.0);
    // exact tie with the 3 px threshold is not an error
    CHECK(d1_all(constant_map(8, 4, 13.0), constant_map(8, 4, 10.0), all) == 0.0);
    // exact tie with the 5% threshold is not an error
    CHECK(d1_all(constant_map(8, 4, 105.0), constant_map(8, 4, 100.0), all) == 0.0);
}

TEST_CASE("d1_all excludes invalid ground truth and empty regions throw") {
    Region all(4, 4, true);
    DisparityMap gt = constant_map(4, 4, 10.0);
    DisparityMap pred = constant_map(4, 4, 20.0);
    for (int c = 0; c < 4; ++c) gt.set_valid(0, c, false);
    CHECK(d1_all(pred, gt, all) == 1.0);  // the invalid row does not dilute

    Region none(4, 4, false);
    CHECK_THROWS_AS(d1_all(pred, gt, none), MetricError);
    CHECK_THROWS_AS(epe(pred, gt, none), MetricError);

    Region wrong(5, 4, true);
    CHECK_THROWS_AS(d1_all(pred, gt, wrong), MetricError);
}

TEST_CASE("d1_all and epe match scalar oracles on random instances") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0.0, 80.0);
    for (int trial = 0; trial < 300; ++trial) {
        const int w = 2 + static_cast<int>(rng() % 7), h = 2 + static_cast<int>(rng() % 7);
        DisparityMap gt(w, h), pred(w, h);
        Region reg(w, h, false);
        bool any = false;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c) {
                gt.at(r, c) = u(rng);
                pred.at(r, c) = u(rng);
                gt.set_valid(r, c, rng() % 4 != 0);
                const bool in = rng() % 3 != 0;
                reg.set(r, c, in);
                any = any || (in && gt.is_valid(r, c));
            }
        if (!any) {
            reg.set(0, 0, true);
            gt.set_valid(0, 0, true);
        }
        CHECK(d1_all(pred, gt, reg) == doctest::Approx(d1_oracle(pred, gt, reg)).epsilon(1e-12));
        CHECK(epe(pred, gt, reg) == doctest::Approx(epe_oracle(pred, gt, reg)).epsilon(1e-12));
    }
}

TEST_CASE("transfer_stat counts off-diagonal entries") {
    TransferMatrix m;
    m.model_names.assign(9, "m");
    m.d1all.assign(81, 0.05);  // everything under 0.1
    // diagonal values must not matter
    for (int i = 0; i < 9; ++i) m.at(i, i) = 99.0;
    // push 11 off-diagonal entries to 0.5, leaving 61 below 0.1
    int moved = 0;
    for (int s = 0; s < 9 && moved < 11; ++s)
        for (int t = 0; t < 9 && moved < 11; ++t)
            if (s != t) {
                m.at(s, t) = 0.5;
                ++moved;
            }
    CHECK(transfer_stat(m, TransferOp::Less, 0.1) == doctest::Approx(61.0 / 72.0).epsilon(1e-12));
    CHECK(transfer_stat(m, TransferOp::Greater, 0.1) == doctest::Approx(11.0 / 72.0).epsilon(1e-12));

    TransferMatrix tiny;
    tiny.model_names = {"only"};
    tiny.d1all = {0.0};
    CHECK_THROWS_AS(transfer_stat(tiny, TransferOp::Less, 0.1), MetricError);
}

TEST_CASE("region count and image gray conversion") {
    Region r(3, 2, false);
    r.set(0, 0);
    r.set(1, 2);
    CHECK(r.count() == 2);

    Image rgb(2, 1, 3);
    rgb.at(0, 0, 0) = 0.3;
    rgb.at(0, 0, 1) = 0.6;
    rgb.at(0, 0, 2) = 0.9;
    CHECK(rgb.to_gray().at(0, 0) == doctest::Approx(0.6));
}
