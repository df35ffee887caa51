#include <chrono>
#include <cstdio>
#include <random>

#include "stereopatch/matchers.hpp"
#include "stereopatch/reference.hpp"

using namespace stereopatch;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <typename F>
double best_of(int reps, F&& f) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = Clock::now();
        f();
        best = std::min(best, ms_since(t0));
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    const int W = argc > 1 ? std::atoi(argv[1]) : 384;
    const int H = argc > 2 ? std::atoi(argv[2]) : 192;
    const int D = argc > 3 ? std::atoi(argv[3]) : 64;
    const int reps = 3;

    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Image left(W, H, 1), right(W, H, 1);
    for (double& v : left.data) v = u(rng);
    for (double& v : right.data) v = u(rng);

    std::printf("kernel benchmark %dx%d d_max=%d (best of %d, ms)\n", W, H, D, reps);
    std::printf("%-16s %10s %10s %8s\n", "kernel", "serial", "parallel", "speedup");

    FeatureMap fl, fr;
    const double ts_census = best_of(reps, [&] { fl = serial::census_features(left, 5); });
    const double tp_census = best_of(reps, [&] { fl = census_features(left, 5); });
    fr = census_features(right, 5);
    std::printf("%-16s %10.2f %10.2f %7.2fx\n", "census", ts_census, tp_census,
                ts_census / tp_census);

    CostVolume v;
    const double ts_vol = best_of(reps, [&] { v = serial::build_cost_volume(fl, fr, D); });
    const double tp_vol = best_of(reps, [&] { v = build_cost_volume(fl, fr, D); });
    std::printf("%-16s %10.2f %10.2f %7.2fx\n", "cost_volume", ts_vol, tp_vol, ts_vol / tp_vol);

    CostVolume agg;
    const double ts_sgm = best_of(reps, [&] { agg = serial::sgm_aggregate(v, 8, 32, 8); });
    const double tp_sgm = best_of(reps, [&] { agg = sgm_aggregate(v, 8, 32, 8); });
    std::printf("%-16s %10.2f %10.2f %7.2fx\n", "sgm", ts_sgm, tp_sgm, ts_sgm / tp_sgm);

    const double ts_box = best_of(reps, [&] { agg = serial::box_aggregate(v, 2); });
    const double tp_box = best_of(reps, [&] { agg = box_aggregate(v, 2); });
    std::printf("%-16s %10.2f %10.2f %7.2fx\n", "box", ts_box, tp_box, ts_box / tp_box);

    DisparityMap d;
    const double ts_wta = best_of(reps, [&] { d = serial::disparity_wta(agg); });
    const double tp_wta = best_of(reps, [&] { d = disparity_wta(agg); });
    std::printf("%-16s %10.2f %10.2f %7.2fx\n", "wta", ts_wta, tp_wta, ts_wta / tp_wta);
    return 0;
}
