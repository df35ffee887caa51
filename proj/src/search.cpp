#include "stereopatch/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stereopatch {

std::array<int, kNumPrimitives> primitive_option_counts() {
    return {2, 3, 2, 3, 9, 9, 2, 8, 3};
}

int config_option(const PatternConfig& c, int primitive) {
    switch (primitive) {
        case 0: return static_cast<int>(c.shape);
        case 1: return static_cast<int>(c.hollowness);
        case 2: return c.block_repetition ? 1 : 0;
        case 3: return static_cast<int>(c.brightness);
        case 4: return c.color;
        case 5: return static_cast<int>(c.texture);
        case 6: return static_cast<int>(c.frequency);
        case 7: return static_cast<int>(c.orientation);
        case 8: return static_cast<int>(c.blur);
    }
    throw SearchError("config_option: primitive out of range");
}

void set_config_option(PatternConfig& c, int primitive, int option) {
    switch (primitive) {
        case 0: c.shape = static_cast<PatchShape>(option); return;
        case 1: c.hollowness = static_cast<Hollowness>(option); return;
        case 2: c.block_repetition = option != 0; return;
        case 3: c.brightness = static_cast<Brightness>(option); return;
        case 4: c.color = option; return;
        case 5: c.texture = static_cast<TextureType>(option); return;
        case 6: c.frequency = static_cast<Frequency>(option); return;
        case 7: c.orientation = static_cast<Orientation>(option); return;
        case 8: c.blur = static_cast<BlurLevel>(option); return;
    }
    throw SearchError("set_config_option: primitive out of range");
}

double oracle_reward(const RewardOracle& oracle, const PatternConfig& action, uint64_t seed) {
    if (oracle.samples.empty()) throw SearchError("oracle: no stereo samples");
    if (oracle.backends.empty()) throw SearchError("oracle: no backends");
    if (oracle.pairs_per_eval < 1) throw SearchError("oracle: pairs_per_eval must be >= 1");
    Patch patch = render(action, oracle.patch_width, oracle.patch_height, oracle.render_seed);
    std::mt19937_64 rng(seed);
    std::vector<int> picks(oracle.pairs_per_eval);
    for (int& p : picks) p = static_cast<int>(rng() % oracle.samples.size());
    std::vector<double> rewards(picks.size(), 0.0);
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < picks.size(); ++i) {
        const StereoSample& sample = oracle.samples[picks[i]];
        InjectedPair pair =
            inject(sample, patch, oracle.place(sample, picks[i]), oracle.patch_disparity);
        double sum = 0.0;
        for (const MatcherConfig& backend : oracle.backends) {
            StageTrace trace = forward(backend, pair.left, pair.right);
            sum += d1_all(trace.disparity, pair.pseudo_gt, pair.region_left);
        }
        rewards[i] = sum / oracle.backends.size();
    }
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / rewards.size();
    return std::clamp(mean, 0.0, 1.0);
}

EnvStep env_step(const EnvState& /*state*/, const PatternConfig& action, const RewardOracle& oracle,
                 uint64_t seed) {
    const PatternConfig canon = canonicalize(action);
    EnvStep out;
    out.reward = oracle_reward(oracle, canon, seed);
    out.next_state.previous_action = canon;
    return out;
}

namespace {

constexpr int kEmbedDim = 32;
constexpr int kTrunkDim = 128;
constexpr int kFlatDim = kNumPrimitives * kTrunkDim;  // 1152
constexpr int kHeadHidden = 64;

struct Layout {
    std::array<size_t, kNumPrimitives> embed;  // |O_k| x 32 each
    size_t w1, b1;                             // 128 x 32, 128 (shared trunk)
    size_t w2, b2;                             // 128 x 128, 128
    std::array<size_t, kNumPrimitives> head_w1, head_b1;  // 64 x 1152, 64
    std::array<size_t, kNumPrimitives> head_w2, head_b2;  // |O_k| x 64, |O_k|
    size_t total;
};

const Layout& layout() {
    static const Layout l = [] {
        Layout out{};
        const auto counts = primitive_option_counts();
        size_t off = 0;
        for (int k = 0; k < kNumPrimitives; ++k) {
            out.embed[k] = off;
            off += static_cast<size_t>(counts[k]) * kEmbedDim;
        }
        out.w1 = off; off += static_cast<size_t>(kTrunkDim) * kEmbedDim;
        out.b1 = off; off += kTrunkDim;
        out.w2 = off; off += static_cast<size_t>(kTrunkDim) * kTrunkDim;
        out.b2 = off; off += kTrunkDim;
        for (int k = 0; k < kNumPrimitives; ++k) {
            out.head_w1[k] = off; off += static_cast<size_t>(kHeadHidden) * kFlatDim;
            out.head_b1[k] = off; off += kHeadHidden;
            out.head_w2[k] = off; off += static_cast<size_t>(counts[k]) * kHeadHidden;
            out.head_b2[k] = off; off += counts[k];
        }
        out.total = off;
        return out;
    }();
    return l;
}

struct ForwardCache {
    std::array<int, kNumPrimitives> opts;
    std::array<std::array<double, kTrunkDim>, kNumPrimitives> h1;  // post-ReLU
    std::array<std::array<double, kTrunkDim>, kNumPrimitives> h2;
    std::vector<double> flat;  // 1152
    std::array<std::vector<double>, kNumPrimitives> head_hidden;  // post-ReLU, 64
    HeadDistributions probs;
};

void affine(const double* W, const double* b, const double* x, int in, int out, double* y) {
    for (int i = 0; i < out; ++i) {
        double s = b[i];
        const double* row = W + static_cast<size_t>(i) * in;
        for (int j = 0; j < in; ++j) s += row[j] * x[j];
        y[i] = s;
    }
}

ForwardCache run_policy(const PolicyParams& params, const EnvState& state) {
    const Layout& l = layout();
    if (params.theta.size() != l.total) throw SearchError("policy_forward: bad parameter size");
    const auto counts = primitive_option_counts();
    const double* th = params.theta.data();
    ForwardCache c;
    c.flat.resize(kFlatDim);
    for (int k = 0; k < kNumPrimitives; ++k) {
        const int opt = config_option(state.previous_action, k);
        if (opt < 0 || opt >= counts[k]) throw SearchError("policy_forward: option out of range");
        c.opts[k] = opt;
        const double* e = th + l.embed[k] + static_cast<size_t>(opt) * kEmbedDim;
        affine(th + l.w1, th + l.b1, e, kEmbedDim, kTrunkDim, c.h1[k].data());
        for (double& v : c.h1[k]) v = std::max(v, 0.0);
        affine(th + l.w2, th + l.b2, c.h1[k].data(), kTrunkDim, kTrunkDim, c.h2[k].data());
        for (double& v : c.h2[k]) v = std::max(v, 0.0);
        std::copy(c.h2[k].begin(), c.h2[k].end(), c.flat.begin() + k * kTrunkDim);
    }
    for (int k = 0; k < kNumPrimitives; ++k) {
        c.head_hidden[k].resize(kHeadHidden);
        affine(th + l.head_w1[k], th + l.head_b1[k], c.flat.data(), kFlatDim, kHeadHidden,
               c.head_hidden[k].data());
        for (double& v : c.head_hidden[k]) v = std::max(v, 0.0);
        std::vector<double> logits(counts[k]);
        affine(th + l.head_w2[k], th + l.head_b2[k], c.head_hidden[k].data(), kHeadHidden,
               counts[k], logits.data());
        const double zmax = *std::max_element(logits.begin(), logits.end());
        double zsum = 0.0;
        c.probs[k].resize(counts[k]);
        for (int i = 0; i < counts[k]; ++i) {
            c.probs[k][i] = std::exp(logits[i] - zmax);
            zsum += c.probs[k][i];
        }
        for (double& p : c.probs[k]) p /= zsum;
    }
    return c;
}

// Backprop d_logits (per head) into the parameter gradient.
void policy_backward(const PolicyParams& params, const ForwardCache& c,
                     const std::array<std::vector<double>, kNumPrimitives>& d_logits,
                     std::vector<double>& grad) {
    const Layout& l = layout();
    const auto counts = primitive_option_counts();
    const double* th = params.theta.data();
    std::vector<double> d_flat(kFlatDim, 0.0);
    for (int k = 0; k < kNumPrimitives; ++k) {
        std::vector<double> d_hidden(kHeadHidden, 0.0);
        const double* w2 = th + l.head_w2[k];
        for (int i = 0; i < counts[k]; ++i) {
            const double g = d_logits[k][i];
            if (g == 0.0) continue;
            grad[l.head_b2[k] + i] += g;
            for (int j = 0; j < kHeadHidden; ++j) {
                grad[l.head_w2[k] + static_cast<size_t>(i) * kHeadHidden + j] +=
                    g * c.head_hidden[k][j];
                d_hidden[j] += g * w2[static_cast<size_t>(i) * kHeadHidden + j];
            }
        }
        const double* w1 = th + l.head_w1[k];
        for (int j = 0; j < kHeadHidden; ++j) {
            if (c.head_hidden[k][j] <= 0.0) continue;  // ReLU gate
            const double g = d_hidden[j];
            if (g == 0.0) continue;
            grad[l.head_b1[k] + j] += g;
            for (int m = 0; m < kFlatDim; ++m) {
                grad[l.head_w1[k] + static_cast<size_t>(j) * kFlatDim + m] += g * c.flat[m];
                d_flat[m] += g * w1[static_cast<size_t>(j) * kFlatDim + m];
            }
        }
    }
    for (int k = 0; k < kNumPrimitives; ++k) {
        std::array<double, kTrunkDim> d_h2{};
        for (int i = 0; i < kTrunkDim; ++i)
            d_h2[i] = c.h2[k][i] > 0.0 ? d_flat[k * kTrunkDim + i] : 0.0;
        std::array<double, kTrunkDim> d_h1{};
        const double* w2 = th + l.w2;
        for (int i = 0; i < kTrunkDim; ++i) {
            const double g = d_h2[i];
            if (g == 0.0) continue;
            grad[l.b2 + i] += g;
            for (int j = 0; j < kTrunkDim; ++j) {
                grad[l.w2 + static_cast<size_t>(i) * kTrunkDim + j] += g * c.h1[k][j];
                d_h1[j] += g * w2[static_cast<size_t>(i) * kTrunkDim + j];
            }
        }
        const double* w1 = th + l.w1;
        const double* e = th + l.embed[k] + static_cast<size_t>(c.opts[k]) * kEmbedDim;
        for (int i = 0; i < kTrunkDim; ++i) {
            if (c.h1[k][i] <= 0.0) continue;
            const double g = d_h1[i];
            if (g == 0.0) continue;
            grad[l.b1 + i] += g;
            for (int j = 0; j < kEmbedDim; ++j) {
                grad[l.w1 + static_cast<size_t>(i) * kEmbedDim + j] += g * e[j];
                grad[l.embed[k] + static_cast<size_t>(c.opts[k]) * kEmbedDim + j] +=
                    g * w1[static_cast<size_t>(i) * kEmbedDim + j];
            }
        }
    }
}

}  // namespace

PolicyParams make_policy(uint64_t seed, double init_scale) {
    PolicyParams p;
    p.theta.assign(layout().total, 0.0);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, init_scale);
    const Layout& l = layout();
    // weights get small noise, biases stay zero
    auto fill = [&](size_t off, size_t n) {
        for (size_t i = 0; i < n; ++i) p.theta[off + i] = dist(rng);
    };
    const auto counts = primitive_option_counts();
    for (int k = 0; k < kNumPrimitives; ++k)
        fill(l.embed[k], static_cast<size_t>(counts[k]) * kEmbedDim);
    fill(l.w1, static_cast<size_t>(kTrunkDim) * kEmbedDim);
    fill(l.w2, static_cast<size_t>(kTrunkDim) * kTrunkDim);
    for (int k = 0; k < kNumPrimitives; ++k) {
        fill(l.head_w1[k], static_cast<size_t>(kHeadHidden) * kFlatDim);
        fill(l.head_w2[k], static_cast<size_t>(counts[k]) * kHeadHidden);
    }
    return p;
}

HeadDistributions policy_forward(const PolicyParams& params, const EnvState& state) {
    return run_policy(params, state).probs;
}

PatternConfig sample_action(const HeadDistributions& dists, SampleMode mode, std::mt19937_64& rng) {
    PatternConfig c;
    for (int k = 0; k < kNumPrimitives; ++k) {
        const auto& p = dists[k];
        int pick = 0;
        if (mode == SampleMode::Greedy) {
            for (size_t i = 1; i < p.size(); ++i)
                if (p[i] > p[pick]) pick = static_cast<int>(i);
        } else {
            std::uniform_real_distribution<double> u(0.0, 1.0);
            double r = u(rng), acc = 0.0;
            pick = static_cast<int>(p.size()) - 1;
            for (size_t i = 0; i < p.size(); ++i) {
                acc += p[i];
                if (r < acc) {
                    pick = static_cast<int>(i);
                    break;
                }
            }
        }
        set_config_option(c, k, pick);
    }
    return canonicalize(c);
}

double ppo_update(PolicyParams& params, const std::vector<TrajectoryStep>& trajectory,
                  double clip_eps, double learning_rate, PpoState& opt) {
    const size_t T = trajectory.size();
    if (T < 2) throw SearchError("ppo_update: trajectory length must be >= 2");
    const Layout& l = layout();
    if (opt.m.size() != l.total) {
        opt.m.assign(l.total, 0.0);
        opt.v.assign(l.total, 0.0);
        opt.step = 0;
    }

    double mean = 0.0;
    for (const auto& s : trajectory) mean += s.reward;
    mean /= T;
    double var = 0.0;
    for (const auto& s : trajectory) var += (s.reward - mean) * (s.reward - mean);
    const double sigma = std::sqrt(var / T);
    std::vector<double> adv(T);
    for (size_t t = 0; t < T; ++t) adv[t] = (trajectory[t].reward - mean) / (sigma + 1e-7);

    std::vector<double> grad(l.total, 0.0);  // gradient of the surrogate (to ascend)
    double surrogate = 0.0;
    const auto counts = primitive_option_counts();
    for (size_t t = 0; t < T; ++t) {
        const TrajectoryStep& step = trajectory[t];
        ForwardCache c = run_policy(params, step.state);
        double logp_new = 0.0, logp_old = 0.0;
        std::array<int, kNumPrimitives> taken{};
        for (int k = 0; k < kNumPrimitives; ++k) {
            taken[k] = config_option(step.action, k);
            logp_new += std::log(std::max(c.probs[k][taken[k]], 1e-300));
            logp_old += step.log_prob[k];
        }
        const double ratio = std::exp(logp_new - logp_old);
        const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
        surrogate += std::min(ratio * adv[t], clipped * adv[t]) / T;
        // clip-inactive steps contribute A * ratio * grad(log pi_new)
        const bool gated = (adv[t] >= 0.0 && ratio > 1.0 + clip_eps) ||
                           (adv[t] < 0.0 && ratio < 1.0 - clip_eps);
        if (gated) continue;
        const double scale = adv[t] * ratio / T;
        std::array<std::vector<double>, kNumPrimitives> d_logits;
        for (int k = 0; k < kNumPrimitives; ++k) {
            d_logits[k].assign(counts[k], 0.0);
            for (int i = 0; i < counts[k]; ++i)
                d_logits[k][i] = scale * ((i == taken[k] ? 1.0 : 0.0) - c.probs[k][i]);
        }
        policy_backward(params, c, d_logits, grad);
    }

    ++opt.step;
    const double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, opt.step);
    const double c2 = 1.0 - std::pow(b2, opt.step);
    for (size_t i = 0; i < l.total; ++i) {
        const double g = -grad[i];  // ascend the surrogate
        opt.m[i] = b1 * opt.m[i] + (1.0 - b1) * g;
        opt.v[i] = b2 * opt.v[i] + (1.0 - b2) * g * g;
        params.theta[i] -= learning_rate * (opt.m[i] / c1) / (std::sqrt(opt.v[i] / c2) + eps);
    }
    return surrogate;
}

TrainResult train_agent(PolicyParams params, const RewardOracle& oracle, int budget,
                        double clip_eps, uint64_t seed, int max_epochs, int steps_per_epoch) {
    if (budget < steps_per_epoch) throw SearchError("train_agent: budget below one epoch");
    TrainResult result;
    result.best_reward = -1.0;
    std::mt19937_64 rng(seed);
    PpoState opt;
    EnvState state;  // all-first-options config
    state.previous_action = canonicalize(PatternConfig{});
    int steps = 0;
    for (int epoch = 0; epoch < max_epochs && steps + steps_per_epoch <= budget; ++epoch) {
        std::vector<TrajectoryStep> traj;
        traj.reserve(steps_per_epoch);
        for (int t = 0; t < steps_per_epoch; ++t) {
            TrajectoryStep step;
            step.state = state;
            HeadDistributions dists = policy_forward(params, state);
            step.action = sample_action(dists, SampleMode::Stochastic, rng);
            for (int k = 0; k < kNumPrimitives; ++k)
                step.log_prob[k] =
                    std::log(std::max(dists[k][config_option(step.action, k)], 1e-300));
            EnvStep es = env_step(state, step.action, oracle, rng());
            step.reward = es.reward;
            state = es.next_state;
            if (step.reward > result.best_reward) {
                result.best_reward = step.reward;
                result.best_config = step.action;
            }
            result.reward_curve.push_back(step.reward);
            traj.push_back(std::move(step));
            ++steps;
        }
        result.surrogate_losses.push_back(ppo_update(params, traj, clip_eps, 0.001, opt));
    }
    result.params = std::move(params);
    return result;
}

PatternConfig random_config(std::mt19937_64& rng) {
    PatternConfig c;
    const auto counts = primitive_option_counts();
    for (int k = 0; k < kNumPrimitives; ++k)
        set_config_option(c, k, static_cast<int>(rng() % counts[k]));
    return canonicalize(c);
}

namespace {

void track(SearchResult& r, const PatternConfig& c, double reward) {
    if (r.best_curve.empty() || reward > r.best_reward) {
        r.best_reward = reward;
        r.best_config = c;
    }
    r.best_curve.push_back(r.best_reward);
}

}  // namespace

SearchResult random_search(const RewardOracle& oracle, int budget, uint64_t seed) {
    SearchResult result;
    result.best_reward = -1.0;
    std::mt19937_64 rng(seed);
    for (int i = 0; i < budget; ++i) {
        const PatternConfig c = random_config(rng);
        track(result, c, oracle_reward(oracle, c, rng()));
    }
    return result;
}

SearchResult ga_search(const RewardOracle& oracle, int population, int generations,
                       double crossover_rate, double mutation_rate, uint64_t seed) {
    if (population < 4) throw SearchError("ga_search: population must be >= 4");
    SearchResult result;
    result.best_reward = -1.0;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const auto counts = primitive_option_counts();

    std::vector<PatternConfig> pop(population);
    for (auto& c : pop) c = random_config(rng);
    std::vector<double> fitness(population);

    auto evaluate = [&](const std::vector<PatternConfig>& gen) {
        for (int i = 0; i < population; ++i) {
            fitness[i] = oracle_reward(oracle, gen[i], rng());
            track(result, gen[i], fitness[i]);
        }
    };
    auto tournament = [&]() -> const PatternConfig& {
        const int a = static_cast<int>(rng() % population);
        const int b = static_cast<int>(rng() % population);
        return fitness[a] >= fitness[b] ? pop[a] : pop[b];
    };

    evaluate(pop);
    for (int g = 1; g < generations; ++g) {
        std::vector<PatternConfig> next;
        next.reserve(population);
        // elitism: carry the current best through unchanged
        const int best = static_cast<int>(
            std::max_element(fitness.begin(), fitness.end()) - fitness.begin());
        next.push_back(pop[best]);
        while (static_cast<int>(next.size()) < population) {
            PatternConfig a = tournament();
            const PatternConfig& b = tournament();
            if (u(rng) < crossover_rate)
                for (int k = 0; k < kNumPrimitives; ++k)
                    if (rng() & 1) set_config_option(a, k, config_option(b, k));
            for (int k = 0; k < kNumPrimitives; ++k)
                if (u(rng) < mutation_rate)
                    set_config_option(a, k, static_cast<int>(rng() % counts[k]));
            next.push_back(canonicalize(a));
        }
        pop = std::move(next);
        evaluate(pop);
    }
    return result;
}

}  // namespace stereopatch
