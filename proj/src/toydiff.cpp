#include <algorithm>
#include <cmath>
#include <vector>

#include "stereopatch/matchers.hpp"

// Toy differentiable stereo pipeline:
//   stage 1  fixed 3x3 oriented filter bank -> tanh features
//   stage 2  negative feature correlation cost volume
//   stage 3  separable [1 2 1]/4 smoothing per disparity slice (zero padding)
//   stage 4  soft-argmin over disparity
// Every stage is smooth, and the smoothing kernel is symmetric with zero
// padding so its adjoint is itself.

namespace stereopatch {

namespace {

constexpr int kNumFilters = 5;
constexpr double kFilterGain = 4.0;
constexpr double kToyMaxCost = 1.0;  // tanh features keep correlations in [-1,1]

// Zero-mean bank: center-surround plus four oriented edge filters.
constexpr double kFilters[kNumFilters][9] = {
    // center-surround
    {-0.125, -0.125, -0.125, -0.125, 1.0, -0.125, -0.125, -0.125, -0.125},
    // horizontal edge
    {-0.25, -0.5, -0.25, 0.0, 0.0, 0.0, 0.25, 0.5, 0.25},
    // vertical edge
    {-0.25, 0.0, 0.25, -0.5, 0.0, 0.5, -0.25, 0.0, 0.25},
    // diagonals
    {-0.5, -0.25, 0.0, -0.25, 0.0, 0.25, 0.0, 0.25, 0.5},
    {0.0, -0.25, -0.5, 0.25, 0.0, -0.25, 0.5, 0.25, 0.0},
};

double filter_response(const Image& gray, int r, int c, int k) {
    const int h = gray.height, w = gray.width;
    double s = 0.0;
    int idx = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx, ++idx) {
            const int y = r + dy, x = c + dx;
            if (y < 0 || y >= h || x < 0 || x >= w) continue;  // zero padding
            s += kFilters[k][idx] * gray.at(y, x);
        }
    return s;
}

FeatureMap extract_features(const Image& gray) {
    FeatureMap f;
    f.kind = FeatureMap::Kind::Dense;
    f.height = gray.height;
    f.width = gray.width;
    f.channels = kNumFilters;
    f.values.assign(static_cast<size_t>(gray.height) * gray.width * kNumFilters, 0.0);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < gray.height; ++r)
        for (int c = 0; c < gray.width; ++c)
            for (int k = 0; k < kNumFilters; ++k)
                f.at(r, c, k) = std::tanh(kFilterGain * filter_response(gray, r, c, k));
    return f;
}

CostVolume correlation_volume(const FeatureMap& fl, const FeatureMap& fr, int d_max) {
    const int h = fl.height, w = fl.width;
    CostVolume v(h, w, d_max);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < d_max; ++d) {
                const int rc = c - d;
                if (rc < 0) {
                    v.at(r, c, d) = kToyMaxCost;
                    continue;
                }
                double corr = 0.0;
                for (int k = 0; k < kNumFilters; ++k)
                    corr += fl.at(r, c, k) * fr.at(r, rc, k);
                v.at(r, c, d) = -corr / kNumFilters;
            }
    return v;
}

// [1 2 1]/4 along rows then columns for each disparity slice, zero padded.
// Symmetric + zero padding makes this operator self-adjoint, which backward
// relies on.
CostVolume smooth_volume(const CostVolume& v) {
    const int h = v.height, w = v.width, dm = v.d_max;
    CostVolume tmp(h, w, dm), out(h, w, dm);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < dm; ++d) {
                double s = 0.5 * v.at(r, c, d);
                if (c > 0) s += 0.25 * v.at(r, c - 1, d);
                if (c + 1 < w) s += 0.25 * v.at(r, c + 1, d);
                tmp.at(r, c, d) = s;
            }
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < dm; ++d) {
                double s = 0.5 * tmp.at(r, c, d);
                if (r > 0) s += 0.25 * tmp.at(r - 1, c, d);
                if (r + 1 < h) s += 0.25 * tmp.at(r + 1, c, d);
                out.at(r, c, d) = s;
            }
    return out;
}

}  // namespace

StageTrace toy_diff_forward(const MatcherConfig& model, const Image& left, const Image& right) {
    StageTrace t;
    t.features_left = extract_features(left.to_gray());
    t.features_right = extract_features(right.to_gray());
    t.cost_volume = correlation_volume(t.features_left, t.features_right, model.d_max);
    t.aggregated_volume = smooth_volume(t.cost_volume);
    t.disparity = disparity_softargmin(t.aggregated_volume, model.softarg_temperature);
    return t;
}

namespace {

// softmax over the disparity axis of -agg/T at one pixel
void pixel_softmax(const CostVolume& agg, double temp, int r, int c, std::vector<double>& p) {
    const int dm = agg.d_max;
    double zmax = -agg.at(r, c, 0) / temp;
    for (int d = 1; d < dm; ++d) zmax = std::max(zmax, -agg.at(r, c, d) / temp);
    double zsum = 0.0;
    for (int d = 0; d < dm; ++d) {
        p[d] = std::exp(-agg.at(r, c, d) / temp - zmax);
        zsum += p[d];
    }
    for (int d = 0; d < dm; ++d) p[d] /= zsum;
}

}  // namespace

ImageGradPair backward(const MatcherConfig& model, const Image& left, const Image& right,
                       const StageTrace& trace, const StageGradients& grads) {
    if (model.kind != MatcherKind::ToyDiff)
        throw MatcherError("backward: non-differentiable backend");
    const int h = trace.features_left.height, w = trace.features_left.width;
    const int dm = model.d_max;
    const double temp = model.softarg_temperature;
    const size_t npix = static_cast<size_t>(h) * w;
    const size_t nvol = npix * dm;
    const size_t nfeat = npix * kNumFilters;

    auto checked = [](const std::vector<double>& g, size_t want, const char* name) {
        if (!g.empty() && g.size() != want)
            throw MatcherError(std::string("backward: bad gradient shape for ") + name);
    };
    checked(grads.d_disparity, npix, "disparity");
    checked(grads.d_aggregated, nvol, "aggregated_volume");
    checked(grads.d_cost_volume, nvol, "cost_volume");
    checked(grads.d_features_left, nfeat, "features_left");
    checked(grads.d_features_right, nfeat, "features_right");

    // stage 4: soft-argmin -> aggregated volume
    CostVolume g_agg(h, w, dm, 0.0);
    if (!grads.d_aggregated.empty()) g_agg.costs = grads.d_aggregated;
    if (!grads.d_disparity.empty()) {
#pragma omp parallel for schedule(static)
        for (int r = 0; r < h; ++r) {
            std::vector<double> p(dm);
            for (int c = 0; c < w; ++c) {
                const double gd = grads.d_disparity[static_cast<size_t>(r) * w + c];
                if (gd == 0.0) continue;
                pixel_softmax(trace.aggregated_volume, temp, r, c, p);
                const double mean_d = trace.disparity.at(r, c);
                for (int d = 0; d < dm; ++d)
                    g_agg.at(r, c, d) += gd * (-1.0 / temp) * p[d] * (d - mean_d);
            }
        }
    }

    // stage 3: smoothing is self-adjoint
    CostVolume g_cost = smooth_volume(g_agg);
    if (!grads.d_cost_volume.empty())
        for (size_t i = 0; i < nvol; ++i) g_cost.costs[i] += grads.d_cost_volume[i];

    // stage 2: correlation -> features
    std::vector<double> g_fl(nfeat, 0.0), g_fr(nfeat, 0.0);
    if (!grads.d_features_left.empty()) g_fl = grads.d_features_left;
    if (!grads.d_features_right.empty()) g_fr = grads.d_features_right;
    const FeatureMap& fl = trace.features_left;
    const FeatureMap& fr = trace.features_right;
    // serial: g_fr rows receive scattered writes across columns
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < dm; ++d) {
                const int rc = c - d;
                if (rc < 0) continue;
                const double g = g_cost.at(r, c, d);
                if (g == 0.0) continue;
                for (int k = 0; k < kNumFilters; ++k) {
                    const size_t il = (static_cast<size_t>(r) * w + c) * kNumFilters + k;
                    const size_t ir = (static_cast<size_t>(r) * w + rc) * kNumFilters + k;
                    g_fl[il] += g * (-fr.values[ir] / kNumFilters);
                    g_fr[ir] += g * (-fl.values[il] / kNumFilters);
                }
            }

    // stage 1: tanh + filter bank -> gray image, then split over channels
    auto features_to_image = [&](const std::vector<double>& g_f, const FeatureMap& f,
                                 const Image& src) {
        std::vector<double> g_gray(npix, 0.0);
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                for (int k = 0; k < kNumFilters; ++k) {
                    const size_t i = (static_cast<size_t>(r) * w + c) * kNumFilters + k;
                    if (g_f[i] == 0.0) continue;
                    const double fv = f.values[i];
                    const double g_pre = g_f[i] * kFilterGain * (1.0 - fv * fv);
                    int idx = 0;
                    for (int dy = -1; dy <= 1; ++dy)
                        for (int dx = -1; dx <= 1; ++dx, ++idx) {
                            const int y = r + dy, x = c + dx;
                            if (y < 0 || y >= h || x < 0 || x >= w) continue;
                            g_gray[static_cast<size_t>(y) * w + x] += g_pre * kFilters[k][idx];
                        }
                }
        Image out(src.width, src.height, src.channels, 0.0);
        const double scale = 1.0 / src.channels;
        for (int r = 0; r < h; ++r)
            for (int c = 0; c < w; ++c)
                for (int ch = 0; ch < src.channels; ++ch)
                    out.at(r, c, ch) = g_gray[static_cast<size_t>(r) * w + c] * scale;
        return out;
    };

    ImageGradPair out;
    out.d_left = features_to_image(g_fl, fl, left);
    out.d_right = features_to_image(g_fr, fr, right);
    return out;
}

}  // namespace stereopatch
