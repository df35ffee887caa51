#include "stereopatch/usc.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace stereopatch {

SyntheticDistribution make_sine_target(double frequency, int d_max) {
    if (d_max < 2) throw UscError("make_sine_target: d_max must be >= 2");
    SyntheticDistribution m;
    m.frequency = frequency;
    m.length = d_max;
    m.values.resize(d_max);
    double sum = 0.0;
    for (int d = 0; d < d_max; ++d) {
        m.values[d] = 1.0 + std::sin(2.0 * M_PI * frequency * d);
        sum += m.values[d];
    }
    for (double& v : m.values) v /= sum;
    return m;
}

namespace {

void validate_distribution(const std::vector<double>& p, const char* name) {
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw UscError(std::string("jsd: negative entry in ") + name);
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw UscError(std::string("jsd: ") + name + " does not sum to 1");
}

double xlogx_ratio(double a, double m) {
    return a > 0.0 ? a * std::log(a / m) : 0.0;  // 0*log(0/.) := 0
}

}  // namespace

double jsd(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw UscError("jsd: length mismatch");
    validate_distribution(p, "p");
    validate_distribution(q, "q");
    double s = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        const double m = 0.5 * (p[i] + q[i]);
        if (m <= 0.0) continue;
        s += 0.5 * xlogx_ratio(p[i], m) + 0.5 * xlogx_ratio(q[i], m);
    }
    return s;
}

double loss_stage1(const StageTrace& trace, const Region& region,
                   const DisparityMap& disparity_downscaled, StageGradients* grads) {
    const FeatureMap& fl = trace.features_left;
    const FeatureMap& fr = trace.features_right;
    if (fl.kind != FeatureMap::Kind::Dense)
        throw UscError("loss_stage1: dense feature maps required");
    const int h = fl.height, w = fl.width, K = fl.channels;
    const double eps = 1e-12;
    if (grads && grads->d_features_left.empty()) {
        grads->d_features_left.assign(static_cast<size_t>(h) * w * K, 0.0);
        grads->d_features_right.assign(static_cast<size_t>(h) * w * K, 0.0);
    }
    // count first so gradients carry the final 1/N
    long long n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!region.contains(r, c)) continue;
            const int cl = c - static_cast<int>(std::lround(disparity_downscaled.at(r, c)));
            if (cl >= 0 && cl < w) ++n;
        }
    if (n == 0) throw UscError("loss_stage1: empty region at feature scale");
    double total = 0.0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!region.contains(r, c)) continue;
            const int cl = c - static_cast<int>(std::lround(disparity_downscaled.at(r, c)));
            if (cl < 0 || cl >= w) continue;
            double dot = 0.0, na2 = 0.0, nb2 = 0.0;
            for (int k = 0; k < K; ++k) {
                const double a = fl.at(r, cl, k), b = fr.at(r, c, k);
                dot += a * b;
                na2 += a * a;
                nb2 += b * b;
            }
            const double na = std::sqrt(na2), nb = std::sqrt(nb2);
            const double denom = na * nb + eps;
            const double cosv = dot / denom;
            total += cosv;
            if (grads) {
                for (int k = 0; k < K; ++k) {
                    const double a = fl.at(r, cl, k), b = fr.at(r, c, k);
                    const double da = b / denom - dot / (denom * denom) * (nb * (na > 0 ? a / na : 0.0));
                    const double db = a / denom - dot / (denom * denom) * (na * (nb > 0 ? b / nb : 0.0));
                    grads->d_features_left[(static_cast<size_t>(r) * w + cl) * K + k] += da / n;
                    grads->d_features_right[(static_cast<size_t>(r) * w + c) * K + k] += db / n;
                }
            }
        }
    return total / n;
}

namespace {

// mean over region of JSD(softmax(-volume/T), target); gradient goes to g_vol
double distribution_loss(const CostVolume& vol, const Region& region,
                         const SyntheticDistribution& target, double temperature,
                         std::vector<double>* g_vol) {
    if (target.length != vol.d_max)
        throw UscError("distribution loss: target length != d_max");
    validate_distribution(target.values, "target");
    const int h = vol.height, w = vol.width, dm = vol.d_max;
    long long n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (region.contains(r, c)) ++n;
    if (n == 0) throw UscError("distribution loss: empty region");
    if (g_vol && g_vol->empty()) g_vol->assign(static_cast<size_t>(h) * w * dm, 0.0);
    double total = 0.0;
    std::vector<double> p(dm), gp(dm);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            if (!region.contains(r, c)) continue;
            double zmax = -vol.at(r, c, 0) / temperature;
            for (int d = 1; d < dm; ++d) zmax = std::max(zmax, -vol.at(r, c, d) / temperature);
            double zsum = 0.0;
            for (int d = 0; d < dm; ++d) {
                p[d] = std::exp(-vol.at(r, c, d) / temperature - zmax);
                zsum += p[d];
            }
            for (int d = 0; d < dm; ++d) p[d] /= zsum;
            double v = 0.0;
            for (int d = 0; d < dm; ++d) {
                const double m = 0.5 * (p[d] + target.values[d]);
                if (m <= 0.0) {
                    gp[d] = 0.0;
                    continue;
                }
                v += 0.5 * xlogx_ratio(p[d], m) + 0.5 * xlogx_ratio(target.values[d], m);
                gp[d] = p[d] > 0.0 ? 0.5 * std::log(p[d] / m) : 0.0;
            }
            total += v;
            if (g_vol) {
                double gdotp = 0.0;
                for (int d = 0; d < dm; ++d) gdotp += gp[d] * p[d];
                for (int d = 0; d < dm; ++d) {
                    const double gz = p[d] * (gp[d] - gdotp);
                    (*g_vol)[(static_cast<size_t>(r) * w + c) * dm + d] += (-gz / temperature) / n;
                }
            }
        }
    return total / n;
}

}  // namespace

double loss_stage2(const StageTrace& trace, const Region& region,
                   const SyntheticDistribution& target, double temperature, StageGradients* grads) {
    return distribution_loss(trace.cost_volume, region, target, temperature,
                             grads ? &grads->d_cost_volume : nullptr);
}

double loss_stage3(const StageTrace& trace, const Region& region,
                   const SyntheticDistribution& target, double temperature, StageGradients* grads) {
    return distribution_loss(trace.aggregated_volume, region, target, temperature,
                             grads ? &grads->d_aggregated : nullptr);
}

double loss_stage4(const DisparityMap& pred, const DisparityMap& gt, const Region& region,
                   StageGradients* grads, int /*d_max*/) {
    if (pred.width != gt.width || pred.height != gt.height)
        throw UscError("loss_stage4: shape mismatch");
    long long n = 0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c)
            if (region.contains(r, c) && gt.is_valid(r, c)) ++n;
    if (n == 0) throw UscError("loss_stage4: empty region");
    if (grads && grads->d_disparity.empty())
        grads->d_disparity.assign(static_cast<size_t>(gt.width) * gt.height, 0.0);
    double total = 0.0;
    for (int r = 0; r < gt.height; ++r)
        for (int c = 0; c < gt.width; ++c) {
            if (!region.contains(r, c) || !gt.is_valid(r, c)) continue;
            const double e = pred.at(r, c) - gt.at(r, c);
            total += -e * e;
            if (grads)
                grads->d_disparity[static_cast<size_t>(r) * gt.width + c] += -2.0 * e / n;
        }
    return total / n;
}

namespace {

// Route image-space gradients back to patch raster pixels, mirroring inject's
// left copy and right bilinear splat.
void gather_patch_gradient(const InjectedPair& pair, const ImageGradPair& ig, int patch_w,
                           int patch_h, std::vector<double>& grad_rgb) {
    const int W = pair.left.width, H = pair.left.height, ch = pair.left.channels;
    // right-view splat weights must be renormalized exactly as in inject
    std::vector<double> wgt(static_cast<size_t>(W) * H, 0.0);
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            const size_t li = static_cast<size_t>(h) * W + w;
            if (pair.patch_row[li] < 0) continue;
            const double d = pair.pseudo_gt.at(h, w);
            const double xr = w - d;
            const int x0 = static_cast<int>(std::floor(xr));
            const double t = xr - x0;
            if (x0 >= 0 && x0 < W) wgt[static_cast<size_t>(h) * W + x0] += 1.0 - t;
            if (t > 0.0 && x0 + 1 >= 0 && x0 + 1 < W) wgt[static_cast<size_t>(h) * W + x0 + 1] += t;
        }
    auto add = [&](int py, int px, int c, double g) {
        grad_rgb[(static_cast<size_t>(py) * patch_w + px) * 3 + c] += g;
    };
    for (int h = 0; h < H; ++h)
        for (int w = 0; w < W; ++w) {
            const size_t li = static_cast<size_t>(h) * W + w;
            const int py = pair.patch_row[li], px = pair.patch_col[li];
            if (py < 0) continue;
            // left view: direct copy (gray targets average the three channels)
            for (int c = 0; c < ch; ++c) {
                const double g = ig.d_left.at(h, w, c);
                if (ch == 3)
                    add(py, px, c, g);
                else
                    for (int k = 0; k < 3; ++k) add(py, px, k, g / 3.0);
            }
            // right view: same bilinear weights as the splat
            const double d = pair.pseudo_gt.at(h, w);
            const double xr = w - d;
            const int x0 = static_cast<int>(std::floor(xr));
            const double t = xr - x0;
            for (int k = 0; k < 2; ++k) {
                const int x = x0 + k;
                const double ww = (k == 0) ? 1.0 - t : t;
                if (ww <= 0.0 || x < 0 || x >= W) continue;
                const size_t pi = static_cast<size_t>(h) * W + x;
                if (wgt[pi] < 0.5 || !pair.region_right.contains(h, x)) continue;
                const double norm = ww / wgt[pi];
                for (int c = 0; c < ch; ++c) {
                    const double g = ig.d_right.at(h, x, c) * norm;
                    if (ch == 3)
                        add(py, px, c, g);
                    else
                        for (int kk = 0; kk < 3; ++kk) add(py, px, kk, g / 3.0);
                }
            }
        }
}

Patch tiled_patch(const OptimizerState& st, int patch_w, int patch_h) {
    Patch p;
    p.width = patch_w;
    p.height = patch_h;
    p.block_size = st.block_mode ? st.block_size : 0;
    p.pixels = Image(patch_w, patch_h, 3);
    p.visibility_mask.assign(static_cast<size_t>(patch_w) * patch_h, 1);
    if (!st.block_mode) {
        p.pixels = st.patch_pixels;
    } else {
        const int q = st.block_size;
        for (int y = 0; y < patch_h; ++y)
            for (int x = 0; x < patch_w; ++x)
                for (int c = 0; c < 3; ++c)
                    p.pixels.at(y, x, c) = st.patch_pixels.at(y % q, x % q, c);
    }
    return p;
}

}  // namespace

OptimizeResult optimize_patch(const MatcherConfig& backend, const std::vector<StereoSample>& samples,
                              const std::vector<StageLossSpec>& losses, const PlacementPolicy& place,
                              const PatchDisparity& patch_disparity, OptimizerState state,
                              uint64_t seed, int holdout_every) {
    if (backend.kind != MatcherKind::ToyDiff)
        throw UscError("optimize_patch: non-differentiable backend");
    if (samples.empty()) throw UscError("optimize_patch: need at least one sample");
    if (losses.empty()) throw UscError("optimize_patch: need at least one stage loss");
    for (const auto& l : losses) {
        if (l.stage < 1 || l.stage > 4) throw UscError("optimize_patch: stage must be 1..4");
        if (l.weight < 0.0) throw UscError("optimize_patch: negative loss weight");
        if ((l.stage == 2 || l.stage == 3) && !l.target)
            throw UscError("optimize_patch: stages 2-3 require a target distribution");
    }

    if (state.block_mode &&
        (state.patch_pixels.width != state.block_size || state.patch_pixels.height != state.block_size))
        throw UscError("optimize_patch: block mode expects a block_size x block_size decision raster");
    const int out_w = state.patch_width > 0 ? state.patch_width : state.patch_pixels.width;
    const int out_h = state.patch_height > 0 ? state.patch_height : state.patch_pixels.height;

    const size_t nvar = state.patch_pixels.data.size();
    state.m.assign(nvar, 0.0);
    state.v.assign(nvar, 0.0);
    const double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;

    std::mt19937_64 rng(seed);
    const size_t train_n = samples.size() > 1 ? samples.size() - 1 : samples.size();
    const StereoSample& holdout = samples.back();

    OptimizeResult result;
    double last_holdout = std::nan("");
    std::vector<double> loss_log;

    for (int it = 0; it < state.max_iters; ++it) {
        const auto idx = static_cast<size_t>(rng() % train_n);
        const StereoSample& sample = samples[idx];
        Patch patch = tiled_patch(state, out_w, out_h);
        const Placement pl = place(sample, static_cast<int>(idx));
        InjectedPair pair = inject(sample, patch, pl, patch_disparity);
        StageTrace trace = forward(backend, pair.left, pair.right);

        double loss = 0.0;
        StageGradients grads;
        for (const auto& ls : losses) {
            StageGradients g1;
            double lv = 0.0;
            switch (ls.stage) {
                case 1:
                    lv = loss_stage1(trace, pair.region_left, pair.pseudo_gt, &g1);
                    break;
                case 2:
                    lv = loss_stage2(trace, pair.region_left, *ls.target,
                                     backend.softarg_temperature, &g1);
                    break;
                case 3:
                    lv = loss_stage3(trace, pair.region_left, *ls.target,
                                     backend.softarg_temperature, &g1);
                    break;
                case 4:
                    lv = loss_stage4(trace.disparity, pair.pseudo_gt, pair.region_left, &g1);
                    break;
            }
            loss += ls.weight * lv;
            auto merge = [&](std::vector<double>& dst, const std::vector<double>& src) {
                if (src.empty()) return;
                if (dst.empty()) dst.assign(src.size(), 0.0);
                for (size_t i = 0; i < src.size(); ++i) dst[i] += ls.weight * src[i];
            };
            merge(grads.d_features_left, g1.d_features_left);
            merge(grads.d_features_right, g1.d_features_right);
            merge(grads.d_cost_volume, g1.d_cost_volume);
            merge(grads.d_aggregated, g1.d_aggregated);
            merge(grads.d_disparity, g1.d_disparity);
        }
        if (!std::isfinite(loss))
            throw UscError("optimize_patch: divergent loss at iteration " + std::to_string(it));

        ImageGradPair ig = backward(backend, pair.left, pair.right, trace, grads);
        std::vector<double> patch_grad(static_cast<size_t>(out_w) * out_h * 3, 0.0);
        gather_patch_gradient(pair, ig, out_w, out_h, patch_grad);

        // reduce to the decision variable (block mode: mean over tiled copies)
        std::vector<double> var_grad(nvar, 0.0);
        if (!state.block_mode) {
            var_grad = patch_grad;
        } else {
            const int q = state.block_size;
            std::vector<int> counts(nvar, 0);
            for (int y = 0; y < out_h; ++y)
                for (int x = 0; x < out_w; ++x)
                    for (int c = 0; c < 3; ++c) {
                        const size_t vi = (static_cast<size_t>(y % q) * q + (x % q)) * 3 + c;
                        var_grad[vi] += patch_grad[(static_cast<size_t>(y) * out_w + x) * 3 + c];
                        counts[vi]++;
                    }
            for (size_t i = 0; i < nvar; ++i)
                if (counts[i] > 0) var_grad[i] /= counts[i];
        }

        ++state.step;
        const double bc1 = 1.0 - std::pow(beta1, state.step);
        const double bc2 = 1.0 - std::pow(beta2, state.step);
        for (size_t i = 0; i < nvar; ++i) {
            state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * var_grad[i];
            state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * var_grad[i] * var_grad[i];
            const double mhat = state.m[i] / bc1;
            const double vhat = state.v[i] / bc2;
            double& px = state.patch_pixels.data[i];
            px -= state.learning_rate * mhat / (std::sqrt(vhat) + adam_eps);
            px = std::clamp(px, 0.0, 1.0);
        }

        loss_log.push_back(loss);
        if (holdout_every > 0 && (it % holdout_every == 0 || it + 1 == state.max_iters)) {
            Patch hp = tiled_patch(state, out_w, out_h);
            InjectedPair hpair = inject(holdout, hp, place(holdout, -1), patch_disparity);
            StageTrace ht = forward(backend, hpair.left, hpair.right);
            last_holdout = d1_all(ht.disparity, hpair.pseudo_gt, hpair.region_left);
        }
        result.history.push_back({it, loss, last_holdout});

        // plateau: relative change of the 50-iteration loss means over a
        // 100-iteration window
        if (loss_log.size() >= 100) {
            double a = 0.0, b = 0.0;
            const size_t n = loss_log.size();
            for (size_t i = n - 100; i < n - 50; ++i) a += loss_log[i];
            for (size_t i = n - 50; i < n; ++i) b += loss_log[i];
            a /= 50.0;
            b /= 50.0;
            if (std::abs(b - a) / (std::abs(a) + 1e-12) < 1e-5) {
                result.plateaued = true;
                break;
            }
        }
    }
    result.patch = tiled_patch(state, out_w, out_h);
    return result;
}

}  // namespace stereopatch
