#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "stereopatch/core.hpp"
#include "stereopatch/ppd.hpp"

namespace stereopatch {

// Where and how a patch is placed in the left view. The right-view position
// follows from the patch disparity: rectified convention here is
// right column = left column - d.
struct Placement {
    int anchor_row = 0;  // top-left corner of the (scaled) patch in the left image
    int anchor_col = 0;
    double scale = 1.0;
    double rotation_deg = 0.0;
    double occlusion_fraction = 0.0;
    uint64_t occlusion_seed = 0;
};

// Patch disparity source: either a fronto-parallel constant or the sample's
// own ground truth at the anchor region.
struct PatchDisparity {
    enum class Kind { Constant, FromGroundTruth };
    Kind kind = Kind::Constant;
    double constant = 0.0;

    static PatchDisparity constant_d(double d) { return {Kind::Constant, d}; }
    static PatchDisparity from_gt() { return {Kind::FromGroundTruth, 0.0}; }
};

struct InjectedPair {
    Image left;
    Image right;
    Region region_left;
    Region region_right;
    DisparityMap pseudo_gt;  // valid exactly on region_left
    // bookkeeping for gradient routing back to patch pixels
    std::vector<int> patch_row;  // per left-image pixel in region: source patch row, else -1
    std::vector<int> patch_col;
};

struct InjectError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Placement policy: where to put the patch for a given sample index.
using PlacementPolicy = std::function<Placement(const StereoSample&, int sample_index)>;

// Stereo-consistent placement: left pixels in the patch region are replaced by
// patch pixels, and the same patch pixel lands at (h, w - d) in the right view
// (bilinear splatting for sub-pixel d). Hollow pixels leave the scene visible
// in both views.
InjectedPair inject(const StereoSample& sample, const Patch& patch, const Placement& placement,
                    const PatchDisparity& patch_disparity);

// Rotation/occlusion/photometric sweep transform. Rotation and occlusion are
// applied to the patch raster/mask before injection so both views stay
// consistent; photometric changes hit patched pixels only.
InjectedPair apply_view_transform(const StereoSample& sample, const Patch& patch,
                                  const Placement& placement, const PatchDisparity& patch_disparity,
                                  double rotation_deg, double occlusion_fraction,
                                  double brightness_scale, int blur_kernel);

struct SweepPoint {
    double depth_m = 0.0;
    double disparity_px = 0.0;
    std::optional<InjectedPair> pair;  // empty when the patch got too small
};

// Place the patch at each depth with pinhole scaling relative to the first
// usable depth; disparity follows from the rig.
std::vector<SweepPoint> distance_sweep(const StereoSample& sample, const Patch& patch,
                                       const Placement& base, const std::vector<double>& depths_m,
                                       const CameraRig& rig, double reference_depth_m);

}  // namespace stereopatch
