#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace stereopatch {

// Row-major raster, values normalized to [0,1]. channels is 1 (gray) or 3 (RGB).
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    double& at(int row, int col, int ch = 0) {
        return data[(static_cast<size_t>(row) * width + col) * channels + ch];
    }
    double at(int row, int col, int ch = 0) const {
        return data[(static_cast<size_t>(row) * width + col) * channels + ch];
    }
    size_t size() const { return data.size(); }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    // Channel mean; identity for single-channel images.
    Image to_gray() const;
};

// Per-pixel disparity in pixels, sub-pixel valued, with a validity mask.
struct DisparityMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;
    std::vector<uint8_t> valid;

    DisparityMap() = default;
    DisparityMap(int w, int h, double fill = 0.0, bool v = true)
        : width(w), height(h),
          values(static_cast<size_t>(w) * h, fill),
          valid(static_cast<size_t>(w) * h, v ? 1 : 0) {}

    double& at(int row, int col) { return values[static_cast<size_t>(row) * width + col]; }
    double at(int row, int col) const { return values[static_cast<size_t>(row) * width + col]; }
    bool is_valid(int row, int col) const { return valid[static_cast<size_t>(row) * width + col] != 0; }
    void set_valid(int row, int col, bool v) { valid[static_cast<size_t>(row) * width + col] = v ? 1 : 0; }
};

// Per-pixel depth in meters.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<double> meters;
    std::vector<uint8_t> valid;
};

// Boolean pixel set over an image grid.
struct Region {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> mask;

    Region() = default;
    Region(int w, int h, bool fill = false)
        : width(w), height(h), mask(static_cast<size_t>(w) * h, fill ? 1 : 0) {}

    bool contains(int row, int col) const { return mask[static_cast<size_t>(row) * width + col] != 0; }
    void set(int row, int col, bool v = true) { mask[static_cast<size_t>(row) * width + col] = v ? 1 : 0; }
    size_t count() const;
};

struct CameraRig {
    double focal_length_px = 0.0;
    double baseline_m = 0.0;
};

// Square matrix of cross-model attack scores; entry (s,t) is the D1-all of
// the patch searched on source s evaluated on target t.
struct TransferMatrix {
    std::vector<std::string> model_names;
    std::vector<double> d1all;  // row-major, side = model_names.size()

    int side() const { return static_cast<int>(model_names.size()); }
    double at(int s, int t) const { return d1all[static_cast<size_t>(s) * model_names.size() + t]; }
    double& at(int s, int t) { return d1all[static_cast<size_t>(s) * model_names.size() + t]; }
};

// Rectified left/right pair with ground-truth disparity for the left view.
struct StereoSample {
    Image left;
    Image right;
    DisparityMap gt;
};

struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// depth = f*b/d on valid pixels with d > 0; everything else is invalid.
DepthMap disparity_to_depth(const DisparityMap& d, const CameraRig& rig);

// Fraction of evaluable region pixels whose error exceeds both 3 px and 5%
// of ground truth (strict inequality; ties are not errors).
double d1_all(const DisparityMap& pred, const DisparityMap& gt, const Region& region);

// Mean absolute disparity error over the evaluable region.
double epe(const DisparityMap& pred, const DisparityMap& gt, const Region& region);

enum class TransferOp { Less, Greater };

// Off-diagonal fraction of entries satisfying (entry op tau).
double transfer_stat(const TransferMatrix& m, TransferOp op, double tau);

}  // namespace stereopatch
