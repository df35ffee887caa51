#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "stereopatch/core.hpp"

namespace stereopatch {

// H x W x d_max matching costs; lower cost = better match.
struct CostVolume {
    int height = 0;
    int width = 0;
    int d_max = 0;
    std::vector<double> costs;

    CostVolume() = default;
    CostVolume(int h, int w, int d, double fill = 0.0)
        : height(h), width(w), d_max(d),
          costs(static_cast<size_t>(h) * w * d, fill) {}

    double& at(int row, int col, int d) {
        return costs[(static_cast<size_t>(row) * width + col) * d_max + d];
    }
    double at(int row, int col, int d) const {
        return costs[(static_cast<size_t>(row) * width + col) * d_max + d];
    }
};

// Per-pixel features: either census bitmasks or real-valued channels.
struct FeatureMap {
    enum class Kind { Census, Dense };
    Kind kind = Kind::Census;
    int height = 0;
    int width = 0;
    int channels = 1;                 // Dense only
    int census_bits = 0;              // Census: mask width = window^2 - 1
    std::vector<uint64_t> bits;       // Census: one mask per pixel
    std::vector<double> values;       // Dense: row-major H x W x C

    double& at(int row, int col, int ch) {
        return values[(static_cast<size_t>(row) * width + col) * channels + ch];
    }
    double at(int row, int col, int ch) const {
        return values[(static_cast<size_t>(row) * width + col) * channels + ch];
    }
};

// Intermediate outputs of one forward pass through the four-stage pipeline.
struct StageTrace {
    FeatureMap features_left;
    FeatureMap features_right;
    CostVolume cost_volume;        // stage 2, pre-aggregation
    CostVolume aggregated_volume;  // stage 3
    DisparityMap disparity;        // stage 4
};

enum class MatcherKind { BlockMatching, Sgm, ToyDiff };

struct MatcherConfig {
    MatcherKind kind = MatcherKind::Sgm;
    int d_max = 192;
    int window_radius = 2;       // block-matching aggregation window
    double sgm_p1 = -1.0;        // <0: derive from census window area
    double sgm_p2 = -1.0;
    int sgm_paths = 8;           // 4 or 8
    int census_window = 5;       // odd, 3..7
    double softarg_temperature = 0.05;  // toy_diff stage 4
};

struct MatcherError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Stage 1 for classical backends: per-pixel census bitmask over an odd window
// (3..7, so the mask fits 64 bits). Borders replicate the edge pixel.
FeatureMap census_features(const Image& img, int window);

// Stage 2: cost(h,w,d) compares left features at (h,w) with right features at
// (h,w-d). Out-of-image lookups receive max_cost.
CostVolume build_cost_volume(const FeatureMap& left, const FeatureMap& right, int d_max);

// The cost assigned to out-of-bounds right-image lookups for census volumes.
double census_max_cost(int window);

// Stage 3 (SGM): per-path DP accumulation with penalties P1 (|dd|=1) and
// P2 (|dd|>1), summed over 4 or 8 scanline directions.
CostVolume sgm_aggregate(const CostVolume& v, double p1, double p2, int paths);

// Stage 3 (block matching): box sum of costs over a (2r+1)^2 window.
CostVolume box_aggregate(const CostVolume& v, int radius);

// Stage 4, hard readout: per-pixel argmin over d, ties toward smallest d.
DisparityMap disparity_wta(const CostVolume& v);

// Stage 4, soft readout: expectation of d under softmax(-cost/temperature).
DisparityMap disparity_softargmin(const CostVolume& v, double temperature);

// One full forward pass through the configured backend.
StageTrace forward(const MatcherConfig& model, const Image& left, const Image& right);

// Gradients of a toy_diff forward pass. Upstream gradients may enter at any
// subset of the four stage outputs; empty vectors mean no contribution.
struct StageGradients {
    std::vector<double> d_features_left;   // H x W x C
    std::vector<double> d_features_right;
    std::vector<double> d_cost_volume;     // H x W x d_max
    std::vector<double> d_aggregated;
    std::vector<double> d_disparity;       // H x W
};

struct ImageGradPair {
    Image d_left;
    Image d_right;
};

// Reverse-mode pass matching a prior toy_diff forward(). Classical backends
// raise MatcherError("non-differentiable backend").
ImageGradPair backward(const MatcherConfig& model, const Image& left, const Image& right,
                       const StageTrace& trace, const StageGradients& grads);

}  // namespace stereopatch
