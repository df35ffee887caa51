#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <vector>

#include "stereopatch/core.hpp"
#include "stereopatch/injector.hpp"
#include "stereopatch/matchers.hpp"
#include "stereopatch/ppd.hpp"

namespace stereopatch {

inline constexpr int kNumPrimitives = 9;

// Options per primitive, in table order:
// shape, hollowness, repetition, brightness, color, texture, frequency,
// orientation, blur.
std::array<int, kNumPrimitives> primitive_option_counts();

int config_option(const PatternConfig& c, int primitive);
void set_config_option(PatternConfig& c, int primitive, int option);

struct SearchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Reward oracle: render the action, drop it into k sampled stereo pairs, run
// the victim backend(s), reward = mean D1-all inside the patch region.
struct RewardOracle {
    std::vector<MatcherConfig> backends;  // >1 means an ensemble (mean reward)
    std::vector<StereoSample> samples;
    PlacementPolicy place;
    PatchDisparity patch_disparity = PatchDisparity::constant_d(40.0);
    int patch_width = 0;
    int patch_height = 0;
    int pairs_per_eval = 4;
    uint64_t render_seed = 0;
};

double oracle_reward(const RewardOracle& oracle, const PatternConfig& action, uint64_t seed);

struct EnvState {
    PatternConfig previous_action;  // canonical
};

struct EnvStep {
    double reward = 0.0;
    EnvState next_state;
};

EnvStep env_step(const EnvState& state, const PatternConfig& action, const RewardOracle& oracle,
                 uint64_t seed);

// Multi-head MLP policy: per-option 32-d embeddings -> shared two-layer trunk
// (32 -> 128 -> 128 per primitive, ReLU) -> flattened 1152-d feature ->
// per-primitive two-layer heads (1152 -> 64 -> |options|).
struct PolicyParams {
    std::vector<double> theta;
};

PolicyParams make_policy(uint64_t seed, double init_scale = 0.01);

using HeadDistributions = std::array<std::vector<double>, kNumPrimitives>;

HeadDistributions policy_forward(const PolicyParams& params, const EnvState& state);

enum class SampleMode { Stochastic, Greedy };

PatternConfig sample_action(const HeadDistributions& dists, SampleMode mode, std::mt19937_64& rng);

struct TrajectoryStep {
    EnvState state;
    PatternConfig action;  // canonical
    double reward = 0.0;
    std::array<double, kNumPrimitives> log_prob{};  // of the taken options
};

struct PpoState {
    int step = 0;
    std::vector<double> m;
    std::vector<double> v;
};

// One clipped-surrogate gradient step (Adam, policy-only). Returns the
// surrogate loss before the update.
double ppo_update(PolicyParams& params, const std::vector<TrajectoryStep>& trajectory,
                  double clip_eps, double learning_rate, PpoState& opt);

struct TrainResult {
    PatternConfig best_config;
    double best_reward = 0.0;
    std::vector<double> reward_curve;  // one entry per interaction step
    std::vector<double> surrogate_losses;
    PolicyParams params;
};

TrainResult train_agent(PolicyParams params, const RewardOracle& oracle, int budget,
                        double clip_eps, uint64_t seed, int max_epochs = 50,
                        int steps_per_epoch = 16);

struct SearchResult {
    PatternConfig best_config;
    double best_reward = 0.0;
    std::vector<double> best_curve;  // best-so-far per oracle call
};

PatternConfig random_config(std::mt19937_64& rng);

SearchResult random_search(const RewardOracle& oracle, int budget, uint64_t seed);

SearchResult ga_search(const RewardOracle& oracle, int population, int generations,
                       double crossover_rate, double mutation_rate, uint64_t seed);

}  // namespace stereopatch
