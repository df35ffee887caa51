#include "stereopatch/matchers.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace stereopatch {

double census_max_cost(int window) {
    return static_cast<double>(window * window - 1);
}

FeatureMap census_features(const Image& img, int window) {
    if (window % 2 == 0) throw MatcherError("census_features: window must be odd");
    if (window < 3 || window > 7)
        throw MatcherError("census_features: window must be in [3,7] (mask fits 64 bits)");
    const Image gray = img.to_gray();
    const int h = gray.height, w = gray.width, r = window / 2;
    FeatureMap out;
    out.kind = FeatureMap::Kind::Census;
    out.height = h;
    out.width = w;
    out.census_bits = window * window - 1;
    out.bits.assign(static_cast<size_t>(h) * w, 0);
#pragma omp parallel for schedule(static)
    for (int row = 0; row < h; ++row) {
        for (int col = 0; col < w; ++col) {
            const double center = gray.at(row, col);
            uint64_t mask = 0;
            int bit = 0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const int y = std::clamp(row + dy, 0, h - 1);
                    const int x = std::clamp(col + dx, 0, w - 1);
                    if (gray.at(y, x) > center) mask |= (uint64_t{1} << bit);
                    ++bit;
                }
            }
            out.bits[static_cast<size_t>(row) * w + col] = mask;
        }
    }
    return out;
}

CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, int d_max) {
    if (d_max < 1) throw MatcherError("build_cost_volume: d_max must be >= 1");
    if (left.height != right.height || left.width != right.width || left.kind != right.kind)
        throw MatcherError("build_cost_volume: feature map shape mismatch");
    const int h = left.height, w = left.width;
    CostVolume v(h, w, d_max);
    if (left.kind == FeatureMap::Kind::Census) {
        const double max_cost = static_cast<double>(std::max(left.census_bits, 8));
#pragma omp parallel for schedule(static)
        for (int row = 0; row < h; ++row) {
            for (int col = 0; col < w; ++col) {
                const uint64_t fl = left.bits[static_cast<size_t>(row) * w + col];
                for (int d = 0; d < d_max; ++d) {
                    const int rc = col - d;
                    double c;
                    if (rc < 0) {
                        c = max_cost;
                    } else {
                        const uint64_t fr = right.bits[static_cast<size_t>(row) * w + rc];
                        c = static_cast<double>(std::popcount(fl ^ fr));
                    }
                    v.at(row, col, d) = c;
                }
            }
        }
    } else {
        if (left.channels != right.channels)
            throw MatcherError("build_cost_volume: channel mismatch");
        const int ch = left.channels;
        const double max_cost = static_cast<double>(ch);  // unit-range features
#pragma omp parallel for schedule(static)
        for (int row = 0; row < h; ++row) {
            for (int col = 0; col < w; ++col) {
                for (int d = 0; d < d_max; ++d) {
                    const int rc = col - d;
                    double c = max_cost;
                    if (rc >= 0) {
                        c = 0.0;
                        for (int k = 0; k < ch; ++k)
                            c += std::abs(left.at(row, col, k) - right.at(row, rc, k));
                    }
                    v.at(row, col, d) = c;
                }
            }
        }
    }
    return v;
}

namespace {

struct Dir {
    int dr, dc;
};

constexpr Dir kDirs8[8] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};

// One DP scanline starting at (r0,c0), walking along dir until leaving the grid.
void sgm_scanline(const CostVolume& v, double p1, double p2, Dir dir, int r0, int c0,
                  std::vector<double>& acc) {
    const int h = v.height, w = v.width, dm = v.d_max;
    std::vector<double> prev(dm), cur(dm);
    bool first = true;
    int r = r0, c = c0;
    while (r >= 0 && r < h && c >= 0 && c < w) {
        const size_t base = (static_cast<size_t>(r) * w + c) * dm;
        if (first) {
            for (int d = 0; d < dm; ++d) cur[d] = v.costs[base + d];
            first = false;
        } else {
            double prev_min = prev[0];
            for (int d = 1; d < dm; ++d) prev_min = std::min(prev_min, prev[d]);
            for (int d = 0; d < dm; ++d) {
                double best = prev[d];
                if (d > 0) best = std::min(best, prev[d - 1] + p1);
                if (d + 1 < dm) best = std::min(best, prev[d + 1] + p1);
                best = std::min(best, prev_min + p2);
                cur[d] = v.costs[base + d] + best - prev_min;
            }
        }
        for (int d = 0; d < dm; ++d) acc[base + d] += cur[d];
        std::swap(prev, cur);
        r += dir.dr;
        c += dir.dc;
    }
}

// Border pixels whose predecessor along dir lies outside the grid.
std::vector<std::pair<int, int>> scanline_starts(int h, int w, Dir dir) {
    std::vector<std::pair<int, int>> starts;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const int pr = r - dir.dr, pc = c - dir.dc;
            if (pr < 0 || pr >= h || pc < 0 || pc >= w) starts.emplace_back(r, c);
        }
    return starts;
}

}  // namespace

CostVolume sgm_aggregate(const CostVolume& v, double p1, double p2, int paths) {
    if (!(p2 >= p1 && p1 >= 0.0))
        throw MatcherError("sgm_aggregate: require P2 >= P1 >= 0");
    if (paths != 1 && paths != 4 && paths != 8)
        throw MatcherError("sgm_aggregate: paths must be 1, 4, or 8");
    CostVolume out(v.height, v.width, v.d_max, 0.0);
    for (int p = 0; p < paths; ++p) {
        const Dir dir = kDirs8[p];
        const auto starts = scanline_starts(v.height, v.width, dir);
        // scanlines of one direction partition the grid, so writes are disjoint
#pragma omp parallel for schedule(dynamic)
        for (long long i = 0; i < static_cast<long long>(starts.size()); ++i)
            sgm_scanline(v, p1, p2, dir, starts[i].first, starts[i].second, out.costs);
    }
    return out;
}

CostVolume box_aggregate(const CostVolume& v, int radius) {
    if (radius < 0) throw MatcherError("box_aggregate: radius must be >= 0");
    if (radius == 0) return v;
    const int h = v.height, w = v.width, dm = v.d_max;
    // separable: rows then columns, truncated at borders
    CostVolume tmp(h, w, dm), out(h, w, dm);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < dm; ++d) {
                double s = 0.0;
                for (int dx = -radius; dx <= radius; ++dx) {
                    const int x = c + dx;
                    if (x >= 0 && x < w) s += v.at(r, x, d);
                }
                tmp.at(r, c, d) = s;
            }
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int d = 0; d < dm; ++d) {
                double s = 0.0;
                for (int dy = -radius; dy <= radius; ++dy) {
                    const int y = r + dy;
                    if (y >= 0 && y < h) s += tmp.at(y, c, d);
                }
                out.at(r, c, d) = s;
            }
    return out;
}

DisparityMap disparity_wta(const CostVolume& v) {
    DisparityMap d(v.width, v.height);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < v.height; ++r)
        for (int c = 0; c < v.width; ++c) {
            int best = 0;
            double bc = v.at(r, c, 0);
            for (int k = 1; k < v.d_max; ++k)
                if (v.at(r, c, k) < bc) {
                    bc = v.at(r, c, k);
                    best = k;
                }
            d.at(r, c) = static_cast<double>(best);
        }
    return d;
}

DisparityMap disparity_softargmin(const CostVolume& v, double temperature) {
    if (!(temperature > 0.0))
        throw MatcherError("disparity_softargmin: temperature must be positive");
    for (double c : v.costs)
        if (!std::isfinite(c)) throw MatcherError("disparity_softargmin: non-finite cost");
    DisparityMap d(v.width, v.height);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < v.height; ++r)
        for (int c = 0; c < v.width; ++c) {
            double zmax = -v.at(r, c, 0) / temperature;
            for (int k = 1; k < v.d_max; ++k)
                zmax = std::max(zmax, -v.at(r, c, k) / temperature);
            double zsum = 0.0, exp_d = 0.0;
            for (int k = 0; k < v.d_max; ++k) {
                const double e = std::exp(-v.at(r, c, k) / temperature - zmax);
                zsum += e;
                exp_d += k * e;
            }
            d.at(r, c) = exp_d / zsum;
        }
    return d;
}

namespace {

void derive_sgm_penalties(const MatcherConfig& m, double& p1, double& p2) {
    // scaled so the default 5x5 census window yields the classic 8/32 pair
    const double area = static_cast<double>(m.census_window * m.census_window);
    p1 = m.sgm_p1 >= 0.0 ? m.sgm_p1 : 8.0 * area / 25.0;
    p2 = m.sgm_p2 >= 0.0 ? m.sgm_p2 : 32.0 * area / 25.0;
}

}  // namespace

StageTrace forward(const MatcherConfig& model, const Image& left, const Image& right) {
    if (!left.same_shape(right)) throw MatcherError("forward: image shape mismatch");
    if (model.kind == MatcherKind::ToyDiff) {
        StageTrace toy_diff_forward(const MatcherConfig&, const Image&, const Image&);
        return toy_diff_forward(model, left, right);
    }
    StageTrace t;
    t.features_left = census_features(left, model.census_window);
    t.features_right = census_features(right, model.census_window);
    t.cost_volume = build_cost_volume(t.features_left, t.features_right, model.d_max);
    if (model.kind == MatcherKind::Sgm) {
        double p1, p2;
        derive_sgm_penalties(model, p1, p2);
        t.aggregated_volume = sgm_aggregate(t.cost_volume, p1, p2, model.sgm_paths);
    } else {
        t.aggregated_volume = box_aggregate(t.cost_volume, model.window_radius);
    }
    t.disparity = disparity_wta(t.aggregated_volume);
    return t;
}

}  // namespace stereopatch
