#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stereopatch/usc.hpp"

using namespace stereopatch;

namespace {

StereoSample shifted_sample(int w, int h, int shift, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    StereoSample s;
    s.left = Image(w, h, 3);
    for (double& v : s.left.data) v = u(rng) < 0.5 ? 0.1 : 0.9;
    s.right = Image(w, h, 3);
    for (double& v : s.right.data) v = u(rng);
    for (int r = 0; r < h; ++r)
        for (int c = shift; c < w; ++c)
            for (int k = 0; k < 3; ++k) s.right.at(r, c - shift, k) = s.left.at(r, c, k);
    s.gt = DisparityMap(w, h, shift, true);
    return s;
}

int count_local_maxima(const std::vector<double>& v) {
    int peaks = 0;
    for (size_t i = 1; i + 1 < v.size(); ++i)
        if (v[i] > v[i - 1] && v[i] > v[i + 1]) ++peaks;
    return peaks;
}

}  // namespace

TEST_CASE("sine targets normalize and carry the right number of modes") {
    SyntheticDistribution m4 = make_sine_target(4.0 / 192.0, 192);
    SyntheticDistribution m16 = make_sine_target(16.0 / 192.0, 192);
    double s4 = 0.0, s16 = 0.0;
    for (double v : m4.values) {
        CHECK(v >= 0.0);
        s4 += v;
    }
    for (double v : m16.values) s16 += v;
    CHECK(s4 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s16 == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(count_local_maxima(m4.values) == 4);
    CHECK(count_local_maxima(m16.values) == 16);
    CHECK_THROWS_AS(make_sine_target(0.1, 1), UscError);
}

TEST_CASE("jensen-shannon divergence") {
    std::vector<double> p{0.25, 0.25, 0.25, 0.25};
    CHECK(jsd(p, p) == doctest::Approx(0.0));
    CHECK(jsd({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    // scalar KL oracle on random length-8 distributions
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.01, 1.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> a(8), b(8);
        double sa = 0, sb = 0;
        for (int i = 0; i < 8; ++i) {
            a[i] = u(rng);
            b[i] = u(rng);
            sa += a[i];
            sb += b[i];
        }
        for (int i = 0; i < 8; ++i) {
            a[i] /= sa;
            b[i] /= sb;
        }
        double expect = 0.0;
        for (int i = 0; i < 8; ++i) {
            const double m = 0.5 * (a[i] + b[i]);
            expect += 0.5 * a[i] * std::log(a[i] / m) + 0.5 * b[i] * std::log(b[i] / m);
        }
        CHECK(jsd(a, b) == doctest::Approx(expect).epsilon(1e-12));
    }

    CHECK_THROWS_AS(jsd({0.5, 0.5}, {0.5}), UscError);
    CHECK_THROWS_AS(jsd({-0.1, 1.1}, {0.5, 0.5}), UscError);
    CHECK_THROWS_AS(jsd({0.6, 0.6}, {0.5, 0.5}), UscError);
}

TEST_CASE("stage-1 loss is cosine similarity across the views") {
    StereoSample s = shifted_sample(32, 16, 0, 5);
    MatcherConfig m;
    m.kind = MatcherKind::ToyDiff;
    m.d_max = 8;
    StageTrace t = forward(m, s.left, s.left);  // identical pair
    Region all(32, 16, true);
    DisparityMap zero(32, 16, 0.0, true);
    CHECK(loss_stage1(t, all, zero) == doctest::Approx(1.0).epsilon(1e-9));

    Region none(32, 16, false);
    CHECK_THROWS_AS(loss_stage1(t, none, zero), UscError);
}

TEST_CASE("stage-2 loss vanishes when the cost volume already matches the target") {
    const int dm = 8;
    SyntheticDistribution target = make_sine_target(1.0 / dm, dm);
    const double T = 0.05;
    StageTrace t;
    t.cost_volume = CostVolume(4, 6, dm);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c)
            for (int d = 0; d < dm; ++d)
                t.cost_volume.at(r, c, d) = -T * std::log(target.values[d]);
    Region all(6, 4, true);
    CHECK(loss_stage2(t, all, target, T) == doctest::Approx(0.0).epsilon(1e-10));

    // one-hot volumes diverge from the multi-modal target
    for (auto& c : t.cost_volume.costs) c = 5.0;
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 6; ++c) t.cost_volume.at(r, c, 2) = 0.0;
    CHECK(loss_stage2(t, all, target, T) > 0.1);

    t.aggregated_volume = t.cost_volume;
    CHECK(loss_stage3(t, all, target, T) == loss_stage2(t, all, target, T));
}

TEST_CASE("stage-2 gradient agrees with finite differences") {
    const int dm = 6;
    SyntheticDistribution target = make_sine_target(1.0 / dm, dm);
    const double T = 0.1;
    StageTrace t;
    t.cost_volume = CostVolume(2, 3, dm);
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& c : t.cost_volume.costs) c = u(rng);
    Region all(3, 2, true);
    StageGradients g;
    loss_stage2(t, all, target, T, &g);
    const double h = 1e-6;
    for (size_t i = 0; i < t.cost_volume.costs.size(); i += 5) {
        const double saved = t.cost_volume.costs[i];
        t.cost_volume.costs[i] = saved + h;
        const double fp = loss_stage2(t, all, target, T);
        t.cost_volume.costs[i] = saved - h;
        const double fm = loss_stage2(t, all, target, T);
        t.cost_volume.costs[i] = saved;
        const double fd = (fp - fm) / (2 * h);
        CHECK(g.d_cost_volume[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("stage-4 loss is negated mean squared error") {
    DisparityMap gt(5, 4, 10.0, true), pred(5, 4, 10.0, true);
    Region all(5, 4, true);
    CHECK(loss_stage4(pred, gt, all) == doctest::Approx(0.0));
    for (auto& v : pred.values) v = 12.0;
    CHECK(loss_stage4(pred, gt, all) == doctest::Approx(-4.0));

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 20.0);
    for (auto& v : pred.values) v = u(rng);
    for (auto& v : gt.values) v = u(rng);
    double expect = 0.0;
    for (size_t i = 0; i < gt.values.size(); ++i)
        expect -= (pred.values[i] - gt.values[i]) * (pred.values[i] - gt.values[i]);
    expect /= gt.values.size();
    CHECK(loss_stage4(pred, gt, all) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("joint loss is the weighted sum of individual stage losses") {
    StereoSample s = shifted_sample(48, 24, 6, 8);
    MatcherConfig m;
    m.kind = MatcherKind::ToyDiff;
    m.d_max = 12;
    StageTrace t = forward(m, s.left, s.right);
    Region all(48, 24, true);
    DisparityMap d6(48, 24, 6.0, true);
    SyntheticDistribution target = make_sine_target(2.0 / 12.0, 12);
    const double l1 = loss_stage1(t, all, d6);
    const double l2 = loss_stage2(t, all, target, m.softarg_temperature);
    const double l3 = loss_stage3(t, all, target, m.softarg_temperature);
    const double l4 = loss_stage4(t.disparity, d6, all);
    const double joint = 0.25 * (l1 + l2 + l3 + l4);
    CHECK(std::isfinite(joint));
    CHECK(0.25 * l1 + 0.25 * l2 + 0.25 * l3 + 0.25 * l4 == doctest::Approx(joint));
}

TEST_CASE("zero learning rate leaves the patch unchanged") {
    std::vector<StereoSample> samples{shifted_sample(64, 32, 6, 9)};
    MatcherConfig m;
    m.kind = MatcherKind::ToyDiff;
    m.d_max = 12;
    OptimizerState st;
    st.learning_rate = 0.0;
    st.max_iters = 3;
    st.patch_pixels = Image(16, 12, 3, 0.5);
    const std::vector<double> before = st.patch_pixels.data;
    auto place = [](const StereoSample&, int) {
        Placement p;
        p.anchor_row = 10;
        p.anchor_col = 24;
        return p;
    };
    auto result = optimize_patch(m, samples, {StageLossSpec{4, 1.0, {}}}, place,
                                 PatchDisparity::constant_d(6.0), st, 1, 1);
    CHECK(result.history.size() == 3);
    CHECK(result.patch.pixels.data == before);
}

TEST_CASE("optimizer rejects non-differentiable backends and bad specs") {
    std::vector<StereoSample> samples{shifted_sample(64, 32, 6, 10)};
    OptimizerState st;
    st.patch_pixels = Image(16, 12, 3, 0.5);
    st.max_iters = 1;
    auto place = [](const StereoSample&, int) {
        Placement p;
        p.anchor_row = 10;
        p.anchor_col = 24;
        return p;
    };
    MatcherConfig sgm;
    sgm.kind = MatcherKind::Sgm;
    CHECK_THROWS_AS(optimize_patch(sgm, samples, {StageLossSpec{4, 1.0, {}}}, place,
                                   PatchDisparity::constant_d(6.0), st, 1),
                    UscError);
    MatcherConfig toy;
    toy.kind = MatcherKind::ToyDiff;
    toy.d_max = 12;
    CHECK_THROWS_AS(optimize_patch(toy, samples, {StageLossSpec{2, 1.0, {}}}, place,
                                   PatchDisparity::constant_d(6.0), st, 1),
                    UscError);
    CHECK_THROWS_AS(optimize_patch(toy, samples, {}, place, PatchDisparity::constant_d(6.0), st, 1),
                    UscError);
}

TEST_CASE("a short stage-4 run reduces the loss") {
    std::vector<StereoSample> samples{shifted_sample(64, 32, 6, 11),
                                      shifted_sample(64, 32, 6, 12)};
    MatcherConfig m;
    m.kind = MatcherKind::ToyDiff;
    m.d_max = 12;
    OptimizerState st;
    st.learning_rate = 0.01;
    st.max_iters = 40;
    st.patch_pixels = Image(20, 14, 3, 0.5);
    auto place = [](const StereoSample&, int) {
        Placement p;
        p.anchor_row = 9;
        p.anchor_col = 22;
        return p;
    };
    auto result = optimize_patch(m, samples, {StageLossSpec{4, 1.0, {}}}, place,
                                 PatchDisparity::constant_d(6.0), st, 2, 10);
    REQUIRE(result.history.size() == 40);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
        first += result.history[i].loss;
        last += result.history[30 + i].loss;
    }
    // stage-4 loss is -MSE; the attack drives it more negative
    CHECK(last < first);
    for (double v : result.patch.pixels.data) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}
