#include "stereopatch/injector.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace stereopatch {

namespace {

struct RasterPatch {
    Image rgb;  // 3 channels
    std::vector<uint8_t> mask;
    int width = 0, height = 0;
};

RasterPatch to_raster(const Patch& p) {
    RasterPatch r;
    r.rgb = p.pixels;
    r.mask = p.visibility_mask;
    r.width = p.width;
    r.height = p.height;
    return r;
}

// scale + rotate about the center; inverse mapping with bilinear sampling for
// pixels and nearest for the mask. Identity transforms are passed through
// untouched so byte-exactness holds.
RasterPatch transform(const RasterPatch& src, double scale, double rotation_deg) {
    if (scale == 1.0 && rotation_deg == 0.0) return src;
    const double rad = rotation_deg * M_PI / 180.0;
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double sw = src.width * scale, sh = src.height * scale;
    // rotated bounding box
    const double bw = std::abs(sw * cs) + std::abs(sh * sn);
    const double bh = std::abs(sw * sn) + std::abs(sh * cs);
    RasterPatch dst;
    dst.width = std::max(1, static_cast<int>(std::lround(bw)));
    dst.height = std::max(1, static_cast<int>(std::lround(bh)));
    dst.rgb = Image(dst.width, dst.height, 3);
    dst.mask.assign(static_cast<size_t>(dst.width) * dst.height, 0);
    const double dcx = (dst.width - 1) / 2.0, dcy = (dst.height - 1) / 2.0;
    const double scx = (src.width - 1) / 2.0, scy = (src.height - 1) / 2.0;
    for (int y = 0; y < dst.height; ++y)
        for (int x = 0; x < dst.width; ++x) {
            // rotate back, then unscale
            const double rx = (x - dcx) * cs + (y - dcy) * sn;
            const double ry = -(x - dcx) * sn + (y - dcy) * cs;
            const double sx = rx / scale + scx;
            const double sy = ry / scale + scy;
            const int nx = static_cast<int>(std::lround(sx));
            const int ny = static_cast<int>(std::lround(sy));
            if (nx < 0 || nx >= src.width || ny < 0 || ny >= src.height) continue;
            if (!src.mask[static_cast<size_t>(ny) * src.width + nx]) continue;
            dst.mask[static_cast<size_t>(y) * dst.width + x] = 1;
            const int x0 = std::clamp(static_cast<int>(std::floor(sx)), 0, src.width - 1);
            const int y0 = std::clamp(static_cast<int>(std::floor(sy)), 0, src.height - 1);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const int y1 = std::min(y0 + 1, src.height - 1);
            const double tx = std::clamp(sx - x0, 0.0, 1.0), ty = std::clamp(sy - y0, 0.0, 1.0);
            for (int ch = 0; ch < 3; ++ch) {
                const double top = src.rgb.at(y0, x0, ch) * (1 - tx) + src.rgb.at(y0, x1, ch) * tx;
                const double bot = src.rgb.at(y1, x0, ch) * (1 - tx) + src.rgb.at(y1, x1, ch) * tx;
                dst.rgb.at(y, x, ch) = top * (1 - ty) + bot * ty;
            }
        }
    return dst;
}

void occlude(RasterPatch& p, double fraction, uint64_t seed) {
    if (fraction <= 0.0) return;
    std::vector<size_t> visible;
    for (size_t i = 0; i < p.mask.size(); ++i)
        if (p.mask[i]) visible.push_back(i);
    std::mt19937_64 rng(seed);
    std::shuffle(visible.begin(), visible.end(), rng);
    const auto drop = static_cast<size_t>(std::lround(fraction * visible.size()));
    for (size_t i = 0; i < drop && i < visible.size(); ++i) p.mask[visible[i]] = 0;
}

double patch_value_for(const Image& target, const RasterPatch& p, int y, int x) {
    if (target.channels == 3) return 0.0;  // unused in 3-channel path
    return (p.rgb.at(y, x, 0) + p.rgb.at(y, x, 1) + p.rgb.at(y, x, 2)) / 3.0;
}

InjectedPair inject_raster(const StereoSample& sample, const RasterPatch& rp,
                           int anchor_row, int anchor_col, const PatchDisparity& pd) {
    const int H = sample.left.height, W = sample.left.width;
    if (!sample.left.same_shape(sample.right))
        throw InjectError("inject: stereo views differ in shape");
    if (anchor_row < 0 || anchor_col < 0 || anchor_row + rp.height > H || anchor_col + rp.width > W)
        throw InjectError("inject: patch exceeds image bounds after transform");

    InjectedPair out;
    out.left = sample.left;
    out.right = sample.right;
    out.region_left = Region(W, H, false);
    out.region_right = Region(W, H, false);
    out.pseudo_gt = DisparityMap(W, H, 0.0, false);
    out.patch_row.assign(static_cast<size_t>(W) * H, -1);
    out.patch_col.assign(static_cast<size_t>(W) * H, -1);

    const int ch = sample.left.channels;

    // pass 1: resolve disparity per patch pixel and bounds-check the right view
    std::vector<double> disp(static_cast<size_t>(rp.width) * rp.height, 0.0);
    for (int py = 0; py < rp.height; ++py)
        for (int px = 0; px < rp.width; ++px) {
            if (!rp.mask[static_cast<size_t>(py) * rp.width + px]) continue;
            const int h = anchor_row + py, w = anchor_col + px;
            double d;
            if (pd.kind == PatchDisparity::Kind::Constant) {
                d = pd.constant;
            } else {
                if (!sample.gt.is_valid(h, w))
                    throw InjectError("inject: ground-truth disparity missing at anchor region");
                d = sample.gt.at(h, w);
            }
            if (d < 0.0) throw InjectError("inject: negative patch disparity");
            if (static_cast<double>(w) - d < -0.5)
                throw InjectError("inject: patch exceeds image bounds in right view");
            disp[static_cast<size_t>(py) * rp.width + px] = d;
        }

    // pass 2: left view replacement
    for (int py = 0; py < rp.height; ++py)
        for (int px = 0; px < rp.width; ++px) {
            if (!rp.mask[static_cast<size_t>(py) * rp.width + px]) continue;
            const int h = anchor_row + py, w = anchor_col + px;
            if (ch == 3) {
                for (int c = 0; c < 3; ++c) out.left.at(h, w, c) = rp.rgb.at(py, px, c);
            } else {
                out.left.at(h, w, 0) = patch_value_for(sample.left, rp, py, px);
            }
            out.region_left.set(h, w);
            const size_t li = static_cast<size_t>(h) * W + w;
            out.patch_row[li] = py;
            out.patch_col[li] = px;
            out.pseudo_gt.at(h, w) = disp[static_cast<size_t>(py) * rp.width + px];
            out.pseudo_gt.set_valid(h, w, true);
        }

    // pass 3: right view; integer disparities write directly, fractional ones
    // use bilinear splatting with renormalization
    std::vector<double> acc(static_cast<size_t>(W) * H * ch, 0.0);
    std::vector<double> wgt(static_cast<size_t>(W) * H, 0.0);
    for (int py = 0; py < rp.height; ++py)
        for (int px = 0; px < rp.width; ++px) {
            if (!rp.mask[static_cast<size_t>(py) * rp.width + px]) continue;
            const int h = anchor_row + py, w = anchor_col + px;
            const double d = disp[static_cast<size_t>(py) * rp.width + px];
            const double xr = static_cast<double>(w) - d;
            const double x0f = std::floor(xr);
            const int x0 = static_cast<int>(x0f);
            const double t = xr - x0f;
            const double w0 = 1.0 - t, w1 = t;
            for (int k = 0; k < 2; ++k) {
                const int x = x0 + k;
                const double ww = (k == 0) ? w0 : w1;
                if (ww <= 0.0 || x < 0 || x >= W) continue;
                const size_t pi = static_cast<size_t>(h) * W + x;
                wgt[pi] += ww;
                for (int c = 0; c < ch; ++c) {
                    const double v = (ch == 3) ? rp.rgb.at(py, px, c) : patch_value_for(sample.right, rp, py, px);
                    acc[pi * ch + c] += ww * v;
                }
            }
        }
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            const size_t pi = static_cast<size_t>(h) * W + w;
            if (wgt[pi] >= 0.5) {
                for (int c = 0; c < ch; ++c) out.right.at(h, w, c) = acc[pi * ch + c] / wgt[pi];
                out.region_right.set(h, w);
            }
        }
    return out;
}

}  // namespace

InjectedPair inject(const StereoSample& sample, const Patch& patch, const Placement& placement,
                    const PatchDisparity& patch_disparity) {
    if (placement.occlusion_fraction < 0.0 || placement.occlusion_fraction >= 1.0)
        throw InjectError("inject: occlusion_fraction must be in [0,1)");
    RasterPatch rp = transform(to_raster(patch), placement.scale, placement.rotation_deg);
    occlude(rp, placement.occlusion_fraction, placement.occlusion_seed);
    return inject_raster(sample, rp, placement.anchor_row, placement.anchor_col, patch_disparity);
}

InjectedPair apply_view_transform(const StereoSample& sample, const Patch& patch,
                                  const Placement& placement, const PatchDisparity& patch_disparity,
                                  double rotation_deg, double occlusion_fraction,
                                  double brightness_scale, int blur_kernel) {
    if (rotation_deg < -45.0 || rotation_deg > 45.0)
        throw InjectError("apply_view_transform: rotation must be within [-45, 45] degrees");
    if (occlusion_fraction < 0.0 || occlusion_fraction >= 1.0)
        throw InjectError("apply_view_transform: occlusion_fraction must be in [0,1)");
    if (brightness_scale < 0.25 || brightness_scale > 4.0)
        throw InjectError("apply_view_transform: brightness_scale out of range [0.25, 4]");
    if (blur_kernel < 0 || blur_kernel > 31 || (blur_kernel > 1 && blur_kernel % 2 == 0))
        throw InjectError("apply_view_transform: blur kernel must be odd and <= 31");

    // photometric changes touch patched pixels only, so bake them into the
    // patch raster before injection
    Patch adjusted = patch;
    if (brightness_scale != 1.0)
        for (double& v : adjusted.pixels.data) v = std::clamp(v * brightness_scale, 0.0, 1.0);
    if (blur_kernel > 1) {
        const int radius = blur_kernel / 2;
        const double sigma = 0.3 * ((blur_kernel - 1) * 0.5 - 1.0) + 0.8;
        std::vector<double> k(blur_kernel);
        double sum = 0.0;
        for (int i = 0; i < blur_kernel; ++i) {
            const double d = i - radius;
            k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        Image& img = adjusted.pixels;
        Image tmp = img;
        for (int r = 0; r < img.height; ++r)
            for (int c = 0; c < img.width; ++c)
                for (int cc = 0; cc < img.channels; ++cc) {
                    double s = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        s += k[i + radius] * img.at(r, std::clamp(c + i, 0, img.width - 1), cc);
                    tmp.at(r, c, cc) = s;
                }
        for (int r = 0; r < img.height; ++r)
            for (int c = 0; c < img.width; ++c)
                for (int cc = 0; cc < img.channels; ++cc) {
                    double s = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        s += k[i + radius] * tmp.at(std::clamp(r + i, 0, img.height - 1), c, cc);
                    img.at(r, c, cc) = s;
                }
    }

    Placement pl = placement;
    pl.rotation_deg = rotation_deg;
    pl.occlusion_fraction = occlusion_fraction;
    return inject(sample, adjusted, pl, patch_disparity);
}

std::vector<SweepPoint> distance_sweep(const StereoSample& sample, const Patch& patch,
                                       const Placement& base, const std::vector<double>& depths_m,
                                       const CameraRig& rig, double reference_depth_m) {
    if (reference_depth_m <= 0.0) throw InjectError("distance_sweep: reference depth must be positive");
    std::vector<SweepPoint> out;
    const double base_cy = base.anchor_row + patch.height / 2.0;
    const double base_cx = base.anchor_col + patch.width / 2.0;
    for (double z : depths_m) {
        if (z <= 0.0) throw InjectError("distance_sweep: depths must be positive");
        SweepPoint pt;
        pt.depth_m = z;
        pt.disparity_px = rig.focal_length_px * rig.baseline_m / z;
        const double scale = reference_depth_m / z;
        const int pw = static_cast<int>(std::lround(patch.width * scale));
        const int ph = static_cast<int>(std::lround(patch.height * scale));
        if (pw < 8 || ph < 8) {
            out.push_back(std::move(pt));  // too small to render; skipped
            continue;
        }
        Placement pl = base;
        pl.scale = scale;
        pl.anchor_row = static_cast<int>(std::lround(base_cy - ph / 2.0));
        pl.anchor_col = static_cast<int>(std::lround(base_cx - pw / 2.0));
        pt.pair = inject(sample, patch, pl, PatchDisparity::constant_d(pt.disparity_px));
        out.push_back(std::move(pt));
    }
    return out;
}

}  // namespace stereopatch
