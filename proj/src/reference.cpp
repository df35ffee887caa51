#include "stereopatch/reference.hpp"

#include <algorithm>
#include <cmath>

namespace stereopatch::serial {

FeatureMap census_features(const Image& img, int window) {
    if (window % 2 == 0 || window < 3 || window > 7)
        throw MatcherError("serial census: window must be odd in [3,7]");
    const Image gray = img.to_gray();
    FeatureMap out;
    out.kind = FeatureMap::Kind::Census;
    out.height = gray.height;
    out.width = gray.width;
    out.census_bits = window * window - 1;
    out.bits.assign(static_cast<size_t>(gray.height) * gray.width, 0);
    const int r = window / 2;
    for (int row = 0; row < gray.height; ++row)
        for (int col = 0; col < gray.width; ++col) {
            uint64_t mask = 0;
            int bit = 0;
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    int y = row + dy, x = col + dx;
                    y = y < 0 ? 0 : (y >= gray.height ? gray.height - 1 : y);
                    x = x < 0 ? 0 : (x >= gray.width ? gray.width - 1 : x);
                    if (gray.at(y, x) > gray.at(row, col)) mask |= uint64_t{1} << bit;
                    ++bit;
                }
            out.bits[static_cast<size_t>(row) * gray.width + col] = mask;
        }
    return out;
}

CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, int d_max) {
    if (d_max < 1) throw MatcherError("serial cost volume: d_max must be >= 1");
    if (left.height != right.height || left.width != right.width || left.kind != right.kind)
        throw MatcherError("serial cost volume: shape mismatch");
    const int h = left.height, w = left.width;
    CostVolume v(h, w, d_max);
    for (int row = 0; row < h; ++row)
        for (int col = 0; col < w; ++col)
            for (int d = 0; d < d_max; ++d) {
                const int rc = col - d;
                double c;
                if (left.kind == FeatureMap::Kind::Census) {
                    if (rc < 0) {
                        c = static_cast<double>(std::max(left.census_bits, 8));
                    } else {
                        uint64_t x = left.bits[static_cast<size_t>(row) * w + col] ^
                                     right.bits[static_cast<size_t>(row) * w + rc];
                        int pop = 0;
                        while (x) {
                            pop += static_cast<int>(x & 1);
                            x >>= 1;
                        }
                        c = pop;
                    }
                } else {
                    if (rc < 0) {
                        c = static_cast<double>(left.channels);
                    } else {
                        c = 0.0;
                        for (int k = 0; k < left.channels; ++k)
                            c += std::abs(left.at(row, col, k) - right.at(row, rc, k));
                    }
                }
                v.at(row, col, d) = c;
            }
    return v;
}

CostVolume sgm_aggregate(const CostVolume& v, double p1, double p2, int paths) {
    if (!(p2 >= p1 && p1 >= 0.0)) throw MatcherError("serial sgm: require P2 >= P1 >= 0");
    if (paths != 1 && paths != 4 && paths != 8)
        throw MatcherError("serial sgm: paths must be 1, 4, or 8");
    static const int dirs[8][2] = {{0, 1},  {0, -1}, {1, 0},  {-1, 0},
                                   {1, 1},  {1, -1}, {-1, 1}, {-1, -1}};
    const int h = v.height, w = v.width, dm = v.d_max;
    CostVolume out(h, w, dm, 0.0);
    std::vector<double> lr;
    for (int p = 0; p < paths; ++p) {
        const int dr = dirs[p][0], dc = dirs[p][1];
        lr.assign(static_cast<size_t>(h) * w * dm, 0.0);
        // traverse so the predecessor along (dr,dc) is always visited first
        const int r_begin = dr >= 0 ? 0 : h - 1, r_end = dr >= 0 ? h : -1, r_step = dr >= 0 ? 1 : -1;
        const int c_begin = dc >= 0 ? 0 : w - 1, c_end = dc >= 0 ? w : -1, c_step = dc >= 0 ? 1 : -1;
        for (int r = r_begin; r != r_end; r += r_step)
            for (int c = c_begin; c != c_end; c += c_step) {
                const int pr = r - dr, pc = c - dc;
                const size_t base = (static_cast<size_t>(r) * w + c) * dm;
                if (pr < 0 || pr >= h || pc < 0 || pc >= w) {
                    for (int d = 0; d < dm; ++d) lr[base + d] = v.at(r, c, d);
                } else {
                    const size_t pbase = (static_cast<size_t>(pr) * w + pc) * dm;
                    double pmin = lr[pbase];
                    for (int d = 1; d < dm; ++d) pmin = std::min(pmin, lr[pbase + d]);
                    for (int d = 0; d < dm; ++d) {
                        double best = lr[pbase + d];
                        if (d > 0) best = std::min(best, lr[pbase + d - 1] + p1);
                        if (d + 1 < dm) best = std::min(best, lr[pbase + d + 1] + p1);
                        best = std::min(best, pmin + p2);
                        lr[base + d] = v.at(r, c, d) + best - pmin;
                    }
                }
                for (int d = 0; d < dm; ++d) out.costs[base + d] += lr[base + d];
            }
    }
    return out;
}

CostVolume box_aggregate(const CostVolume& v, int radius) {
    if (radius < 0) throw MatcherError("serial box: radius must be >= 0");
    const int h = v.height, w = v.width, dm = v.d_max;
    CostVolume out(h, w, dm);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < dm; ++d) {
                double s = 0.0;
                for (int dy = -radius; dy <= radius; ++dy)
                    for (int dx = -radius; dx <= radius; ++dx) {
                        const int y = r + dy, x = c + dx;
                        if (y >= 0 && y < h && x >= 0 && x < w) s += v.at(y, x, d);
                    }
                out.at(r, c, d) = s;
            }
    return out;
}

DisparityMap disparity_wta(const CostVolume& v) {
    DisparityMap d(v.width, v.height);
    for (int r = 0; r < v.height; ++r)
        for (int c = 0; c < v.width; ++c) {
            int best = 0;
            for (int k = 1; k < v.d_max; ++k)
                if (v.at(r, c, k) < v.at(r, c, best)) best = k;
            d.at(r, c) = best;
        }
    return d;
}

double d1_all(const DisparityMap& pred, const DisparityMap& gt, const Region& region) {
    long long n = 0, bad = 0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c) {
            if (!region.contains(r, c) || !gt.is_valid(r, c)) continue;
            ++n;
            const double err = std::abs(pred.at(r, c) - gt.at(r, c));
            if (err > 3.0 && err > 0.05 * std::abs(gt.at(r, c))) ++bad;
        }
    if (n == 0) throw MetricError("serial d1_all: empty evaluable region");
    return static_cast<double>(bad) / static_cast<double>(n);
}

}  // namespace stereopatch::serial
