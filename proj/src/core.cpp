#include "stereopatch/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stereopatch {

Image Image::to_gray() const {
    if (channels == 1) return *this;
    Image g(width, height, 1);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            double s = 0.0;
            for (int ch = 0; ch < channels; ++ch) s += at(r, c, ch);
            g.at(r, c) = s / channels;
        }
    return g;
}

size_t Region::count() const {
    return static_cast<size_t>(std::count(mask.begin(), mask.end(), uint8_t(1)));
}

DepthMap disparity_to_depth(const DisparityMap& d, const CameraRig& rig) {
    if (rig.focal_length_px <= 0.0 || rig.baseline_m <= 0.0)
        throw MetricError("disparity_to_depth: camera rig must have positive focal length and baseline");
    DepthMap out;
    out.width = d.width;
    out.height = d.height;
    out.meters.assign(d.values.size(), 0.0);
    out.valid.assign(d.values.size(), 0);
    const double fb = rig.focal_length_px * rig.baseline_m;
    for (size_t i = 0; i < d.values.size(); ++i) {
        if (d.valid[i] && d.values[i] > 0.0) {
            out.meters[i] = fb / d.values[i];
            out.valid[i] = 1;
        }
    }
    return out;
}

namespace {

void check_shapes(const DisparityMap& pred, const DisparityMap& gt, const Region& region) {
    if (pred.width != gt.width || pred.height != gt.height ||
        region.width != gt.width || region.height != gt.height)
        throw MetricError("metric: shape mismatch between prediction, ground truth, and region");
}

}  // namespace

double d1_all(const DisparityMap& pred, const DisparityMap& gt, const Region& region) {
    check_shapes(pred, gt, region);
    long long n = 0, bad = 0;
    const size_t total = gt.values.size();
#pragma omp parallel for reduction(+ : n, bad) schedule(static)
    for (long long i = 0; i < static_cast<long long>(total); ++i) {
        if (!region.mask[i] || !gt.valid[i]) continue;
        ++n;
        const double err = std::abs(pred.values[i] - gt.values[i]);
        if (err > std::max(3.0, 0.05 * gt.values[i])) ++bad;
    }
    if (n == 0) throw MetricError("d1_all: no valid pixels in region");
    return static_cast<double>(bad) / static_cast<double>(n);
}

double epe(const DisparityMap& pred, const DisparityMap& gt, const Region& region) {
    check_shapes(pred, gt, region);
    long long n = 0;
    double sum = 0.0;
    const size_t total = gt.values.size();
#pragma omp parallel for reduction(+ : n, sum) schedule(static)
    for (long long i = 0; i < static_cast<long long>(total); ++i) {
        if (!region.mask[i] || !gt.valid[i]) continue;
        ++n;
        sum += std::abs(pred.values[i] - gt.values[i]);
    }
    if (n == 0) throw MetricError("epe: no valid pixels in region");
    return sum / static_cast<double>(n);
}

double transfer_stat(const TransferMatrix& m, TransferOp op, double tau) {
    const int n = m.side();
    if (n < 2) throw MetricError("transfer_stat: matrix side must be >= 2");
    long long hit = 0;
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t) {
            if (s == t) continue;
            const double v = m.at(s, t);
            const bool ok = (op == TransferOp::Less) ? (v < tau) : (v > tau);
            if (ok) ++hit;
        }
    return static_cast<double>(hit) / (static_cast<double>(n) * (n - 1));
}

}  // namespace stereopatch
