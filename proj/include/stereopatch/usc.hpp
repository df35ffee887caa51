#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "stereopatch/core.hpp"
#include "stereopatch/injector.hpp"
#include "stereopatch/matchers.hpp"

namespace stereopatch {

// Multi-modal target distribution over disparity bins.
struct SyntheticDistribution {
    double frequency = 4.0 / 192.0;  // cycles per bin
    int length = 192;
    std::vector<double> values;  // non-negative, sums to 1
};

SyntheticDistribution make_sine_target(double frequency, int d_max);

struct StageLossSpec {
    int stage = 4;  // 1..4
    double weight = 1.0;
    std::optional<SyntheticDistribution> target;  // required for stages 2 and 3
};

struct UscError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Jensen-Shannon divergence with natural log; inputs must be distributions.
double jsd(const std::vector<double>& p, const std::vector<double>& q);

// Stage losses; each returns the loss value and optionally accumulates its
// gradient into `grads` (pass nullptr to skip).
double loss_stage1(const StageTrace& trace, const Region& region,
                   const DisparityMap& disparity_downscaled, StageGradients* grads = nullptr);
double loss_stage2(const StageTrace& trace, const Region& region,
                   const SyntheticDistribution& target, double temperature,
                   StageGradients* grads = nullptr);
double loss_stage3(const StageTrace& trace, const Region& region,
                   const SyntheticDistribution& target, double temperature,
                   StageGradients* grads = nullptr);
double loss_stage4(const DisparityMap& pred, const DisparityMap& gt, const Region& region,
                   StageGradients* grads = nullptr, int d_max = 0);

struct OptimizerState {
    Image patch_pixels;  // RGB decision variable, clamped to [0,1]
    int step = 0;
    double learning_rate = 0.004;
    int max_iters = 3000;
    std::vector<double> m;  // Adam first moment
    std::vector<double> v;  // Adam second moment
    bool block_mode = false;  // optimize one block, tile it over the patch
    int block_size = 15;
    int patch_width = 0;  // rendered patch size; defaults to patch_pixels dims
    int patch_height = 0;
};

struct LossHistoryRow {
    int iteration;
    double loss;
    double d1_all_holdout;
};

struct OptimizeResult {
    Patch patch;
    std::vector<LossHistoryRow> history;
    bool plateaued = false;
};

// Adam minimization of the (weighted) stage losses over the patch pixels,
// sampling one stereo pair per iteration. The holdout sample (last in the
// list) is scored every `holdout_every` iterations.
OptimizeResult optimize_patch(const MatcherConfig& backend, const std::vector<StereoSample>& samples,
                              const std::vector<StageLossSpec>& losses, const PlacementPolicy& place,
                              const PatchDisparity& patch_disparity, OptimizerState state,
                              uint64_t seed, int holdout_every = 50);

}  // namespace stereopatch
