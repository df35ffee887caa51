#include <CLI11.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <filesystem>
#include <iostream>
#include <sstream>

#include "stereopatch/harness.hpp"
#include "stereopatch/usc.hpp"

namespace fs = std::filesystem;
using namespace stereopatch;

namespace {

struct CommonArgs {
    std::string config_path;
    uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required = true) {
    auto* opt = cmd->add_option("--config", a.config_path, "experiment config file");
    if (config_required) opt->required();
    cmd->add_option("--seed", a.seed, "random seed");
    cmd->add_option("--out", a.out, "output file or directory");
}

fs::path out_dir_for(const CommonArgs& a, const std::string& mode) {
    if (!a.out.empty()) return a.out;
    return default_output_root() / (mode + "-" + std::to_string(a.seed));
}

MatcherConfig backend_from(const ConfigMap& cfg, const std::string& prefix) {
    MatcherConfig m;
    const std::string kind = cfg_get(cfg, prefix + ".kind", "sgm");
    if (kind == "bm")
        m.kind = MatcherKind::BlockMatching;
    else if (kind == "sgm")
        m.kind = MatcherKind::Sgm;
    else if (kind == "toy")
        m.kind = MatcherKind::ToyDiff;
    else
        throw HarnessError("unknown backend kind: " + kind);
    m.d_max = cfg_int(cfg, prefix + ".d_max", 64);
    m.window_radius = cfg_int(cfg, prefix + ".window_radius", 2);
    m.census_window = cfg_int(cfg, prefix + ".census_window", 5);
    m.sgm_paths = cfg_int(cfg, prefix + ".paths", 8);
    m.sgm_p1 = cfg_double(cfg, prefix + ".p1", -1.0);
    m.sgm_p2 = cfg_double(cfg, prefix + ".p2", -1.0);
    m.softarg_temperature = cfg_double(cfg, prefix + ".temperature", 0.05);
    return m;
}

Dataset dataset_from(const ConfigMap& cfg, uint64_t seed) {
    const std::string source = cfg_get(cfg, "dataset.source", "synthetic");
    if (source == "kitti") {
        const std::string dir = cfg_get(cfg, "dataset.dir", "");
        if (dir.empty()) throw HarnessError("dataset.dir required for kitti source");
        return load_kitti_format(dir, cfg_bool(cfg, "dataset.pad", false),
                                 cfg_int(cfg, "dataset.pad_height", 384),
                                 cfg_int(cfg, "dataset.pad_width", 1248));
    }
    if (source != "synthetic") throw HarnessError("unknown dataset source: " + source);
    const std::string scene = cfg_get(cfg, "dataset.scene", "random_dot");
    return make_synthetic(cfg_int(cfg, "dataset.count", 10),
                          scene == "textured_blocks" ? SceneKind::TexturedBlocks
                                                     : SceneKind::RandomDot,
                          cfg_int(cfg, "dataset.d_max", 32),
                          seed + cfg_int(cfg, "dataset.seed_offset", 0),
                          cfg_int(cfg, "dataset.width", 256), cfg_int(cfg, "dataset.height", 128));
}

PlacementPolicy center_place(const ConfigMap& cfg, int patch_w, int patch_h) {
    const int row = cfg_int(cfg, "patch.anchor_row", -1);
    const int col = cfg_int(cfg, "patch.anchor_col", -1);
    return [=](const StereoSample& s, int) {
        Placement p;
        p.anchor_row = row >= 0 ? row : (s.left.height - patch_h) / 2;
        p.anchor_col = col >= 0 ? col : (s.left.width - patch_w) / 2;
        return p;
    };
}

PatchDisparity patch_disparity_from(const ConfigMap& cfg) {
    const std::string d = cfg_get(cfg, "patch.disparity", "12");
    if (d == "gt") return PatchDisparity::from_gt();
    return PatchDisparity::constant_d(std::stod(d));
}

std::string pattern_text_from(const ConfigMap& cfg, const std::string& key) {
    const std::string t = cfg_get(cfg, key, "");
    if (t.empty()) throw HarnessError("missing pattern config key: " + key);
    return t;
}

void write_patch_files(const Patch& p, const fs::path& png_path) {
    save_image_png(p.pixels, png_path.string());
    fs::path mask = png_path;
    mask.replace_filename(png_path.stem().string() + "_mask.png");
    save_mask_png(p.visibility_mask, p.width, p.height, mask.string());
}

void write_report_csv(const AttackReport& r, const fs::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& row : r.rows)
        rows.push_back({std::to_string(row.sample_index), std::to_string(row.d1),
                        std::to_string(row.epe)});
    rows.push_back({"mean", std::to_string(r.mean_d1), std::to_string(r.mean_epe)});
    rows.push_back({"std_d1", std::to_string(r.std_d1), ""});
    write_rows_csv(path, {"sample", "d1_all", "epe"}, rows);
}

RewardOracle oracle_from(const ConfigMap& cfg, const Dataset& data, uint64_t seed) {
    RewardOracle o;
    std::string kinds = cfg_get(cfg, "search.backends", "");
    if (kinds.empty()) {
        o.backends.push_back(backend_from(cfg, "backend"));
    } else {
        std::istringstream ss(kinds);
        std::string tok;
        while (std::getline(ss, tok, ',')) o.backends.push_back(backend_from(cfg, tok));
    }
    o.samples = data.samples;
    o.patch_width = cfg_int(cfg, "patch.width", 48);
    o.patch_height = cfg_int(cfg, "patch.height", 48);
    o.place = center_place(cfg, o.patch_width, o.patch_height);
    o.patch_disparity = patch_disparity_from(cfg);
    o.pairs_per_eval = cfg_int(cfg, "search.pairs", 4);
    o.render_seed = seed;
    return o;
}

int cmd_render(const CommonArgs& a, const std::string& size) {
    // the config may be a full key=value file or just a bare pattern line
    std::ifstream in(a.config_path);
    if (!in) throw HarnessError("cannot open config " + a.config_path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    ConfigMap cfg;
    std::string pattern;
    if (text.find('=') != std::string::npos) {
        cfg = parse_config(text);
        pattern = cfg_get(cfg, "patch.pattern", "");
    } else {
        std::istringstream lines(text);
        std::string line;
        while (std::getline(lines, line) && pattern.empty()) {
            while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
            if (!line.empty() && line[0] != '#') pattern = line;
        }
    }
    if (pattern.empty()) throw HarnessError("render: no patch.pattern in config");
    int w = cfg_int(cfg, "patch.width", 150), h = cfg_int(cfg, "patch.height", 150);
    if (!size.empty()) {
        const auto x = size.find('x');
        if (x == std::string::npos) throw CLI::ValidationError("--size", "expected WIDTHxHEIGHT");
        w = std::stoi(size.substr(0, x));
        h = std::stoi(size.substr(x + 1));
    }
    const PatternConfig pc = config_from_text(pattern);
    const Patch p = render(pc, w, h, a.seed);
    fs::path out = a.out.empty() ? fs::path("patch.png") : fs::path(a.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_patch_files(p, out);
    fs::path cfg_out = out;
    cfg_out.replace_extension(".txt");
    std::ofstream(cfg_out) << config_to_text(canonicalize(pc)) << "\n";
    std::cout << "wrote " << out.string() << "\n";
    return 0;
}

int cmd_attack_usc(const CommonArgs& a) {
    ConfigMap cfg = load_config(a.config_path);
    RunContext run(out_dir_for(a, "usc"));
    run.log("start", {{"mode", "usc"}, {"seed", std::to_string(a.seed)}});
    Dataset data = dataset_from(cfg, a.seed);
    MatcherConfig backend = backend_from(cfg, "backend");
    backend.kind = MatcherKind::ToyDiff;
    backend.d_max = cfg_int(cfg, "backend.d_max", 32);

    OptimizerState st;
    st.learning_rate = cfg_double(cfg, "usc.lr", 0.004);
    st.max_iters = cfg_int(cfg, "usc.iters", 3000);
    st.block_mode = cfg_bool(cfg, "usc.block", false);
    st.block_size = cfg_int(cfg, "usc.block_size", 15);
    const int pw = cfg_int(cfg, "patch.width", 48), ph = cfg_int(cfg, "patch.height", 48);
    st.patch_width = pw;
    st.patch_height = ph;
    std::mt19937_64 rng(a.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    st.patch_pixels = st.block_mode ? Image(st.block_size, st.block_size, 3) : Image(pw, ph, 3);
    for (double& v : st.patch_pixels.data) v = u(rng);

    std::vector<StageLossSpec> losses;
    std::istringstream ss(cfg_get(cfg, "usc.stages", "4"));
    std::string tok;
    const double joint_w = cfg_double(cfg, "usc.weight", -1.0);
    std::vector<int> stages;
    while (std::getline(ss, tok, ',')) stages.push_back(std::stoi(tok));
    for (int s : stages) {
        StageLossSpec l;
        l.stage = s;
        l.weight = joint_w > 0 ? joint_w : (stages.size() > 1 ? 0.25 : 1.0);
        if (s == 2 || s == 3)
            l.target = make_sine_target(cfg_double(cfg, "usc.frequency", 4.0 / backend.d_max),
                                        backend.d_max);
        losses.push_back(l);
    }

    auto result = optimize_patch(backend, data.samples, losses, center_place(cfg, pw, ph),
                                 patch_disparity_from(cfg), st, a.seed,
                                 cfg_int(cfg, "usc.holdout_every", 50));
    write_patch_files(result.patch, run.dir() / "patch.png");
    std::vector<std::vector<std::string>> rows;
    for (const auto& h : result.history)
        rows.push_back({std::to_string(h.iteration), std::to_string(h.loss),
                        std::to_string(h.d1_all_holdout)});
    write_rows_csv(run.dir() / "history.csv", {"iteration", "loss", "d1_all_holdout"}, rows);
    run.log("done", {{"plateaued", result.plateaued ? "yes" : "no"},
                     {"iterations", std::to_string(result.history.size())}});
    std::cout << "usc attack finished after " << result.history.size() << " iterations\n";
    return 0;
}

int cmd_attack_search(const CommonArgs& a, const std::string& method) {
    ConfigMap cfg = load_config(a.config_path);
    RunContext run(out_dir_for(a, method));
    run.log("start", {{"mode", method}, {"seed", std::to_string(a.seed)}});
    Dataset data = dataset_from(cfg, a.seed);
    RewardOracle oracle = oracle_from(cfg, data, a.seed);
    const int budget = cfg_int(cfg, "search.budget", 800);

    PatternConfig best;
    double best_reward = 0.0;
    std::vector<double> curve;
    if (method == "ppo") {
        auto r = train_agent(make_policy(a.seed), oracle, budget,
                             cfg_double(cfg, "search.clip", 0.2), a.seed);
        best = r.best_config;
        best_reward = r.best_reward;
        curve = r.reward_curve;
    } else {
        const int pop = cfg_int(cfg, "search.population", 24);
        auto r = ga_search(oracle, pop, std::max(1, budget / pop),
                           cfg_double(cfg, "search.crossover", 0.8),
                           cfg_double(cfg, "search.mutation", 0.15), a.seed);
        best = r.best_config;
        best_reward = r.best_reward;
        curve = r.best_curve;
    }
    std::ofstream(run.dir() / "best_config.txt") << config_to_text(best) << "\n";
    std::vector<std::vector<std::string>> rows;
    std::vector<std::pair<double, double>> series;
    for (size_t i = 0; i < curve.size(); ++i) {
        rows.push_back({std::to_string(i), std::to_string(curve[i])});
        series.emplace_back(static_cast<double>(i), curve[i]);
    }
    write_rows_csv(run.dir() / "reward_curve.csv", {"step", "reward"}, rows);
    emit_line_plot(series, method + " reward", (run.dir() / "reward_curve.png").string());
    write_patch_files(render(best, oracle.patch_width, oracle.patch_height, a.seed),
                      run.dir() / "best_patch.png");
    run.log("done", {{"best_reward", std::to_string(best_reward)},
                     {"best_config", config_to_text(best)}});
    std::cout << "best reward " << best_reward << ": " << config_to_text(best) << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& a) {
    ConfigMap cfg = load_config(a.config_path);
    RunContext run(out_dir_for(a, "eval"));
    Dataset data = dataset_from(cfg, a.seed);
    MatcherConfig backend = backend_from(cfg, "backend");
    const std::string pattern = cfg_get(cfg, "patch.pattern", "");
    AttackReport report;
    if (pattern.empty()) {
        report = evaluate_baseline(data, backend);
    } else {
        const int pw = cfg_int(cfg, "patch.width", 48), ph = cfg_int(cfg, "patch.height", 48);
        Patch p = render(config_from_text(pattern), pw, ph, a.seed);
        report = evaluate_patch(p, data, backend, center_place(cfg, pw, ph),
                                patch_disparity_from(cfg));
    }
    write_report_csv(report, run.dir() / "report.csv");
    run.log("done", {{"mean_d1", std::to_string(report.mean_d1)},
                     {"provenance", report.provenance}});
    std::cout << "mean D1-all " << report.mean_d1 << ", mean EPE " << report.mean_epe << "\n";
    return 0;
}

int cmd_sweep(const CommonArgs& a) {
    ConfigMap cfg = load_config(a.config_path);
    RunContext run(out_dir_for(a, "sweep"));
    Dataset data = dataset_from(cfg, a.seed);
    MatcherConfig backend = backend_from(cfg, "backend");
    const int pw = cfg_int(cfg, "patch.width", 48), ph = cfg_int(cfg, "patch.height", 48);
    Patch p = render(config_from_text(pattern_text_from(cfg, "patch.pattern")), pw, ph, a.seed);
    Placement base;
    base.anchor_row = cfg_int(cfg, "patch.anchor_row", (data.samples[0].left.height - ph) / 2);
    base.anchor_col = cfg_int(cfg, "patch.anchor_col", (data.samples[0].left.width - pw) / 2);
    SweepAxes axes;
    axes.rig.focal_length_px = cfg_double(cfg, "rig.focal", 721.0);
    axes.rig.baseline_m = cfg_double(cfg, "rig.baseline", 0.54);
    axes.reference_depth_m = cfg_double(cfg, "sweep.reference_depth", 10.0);
    axes.depths_m = {7.5, 10.0, 15.0, 20.0};
    axes.rotations_deg = {0.0, 10.0, 20.0, 30.0};
    axes.occlusions = {0.0, 0.1, 0.2, 0.3};
    axes.brightness_scales = {0.5, 0.75, 1.0, 1.5};
    axes.blur_kernels = {1, 3, 5, 7};
    auto rows = run_robustness_sweep(p, data, backend, base, patch_disparity_from(cfg), axes);
    std::vector<std::vector<std::string>> csv;
    std::map<std::string, std::vector<std::pair<double, double>>> by_axis;
    for (const auto& r : rows) {
        csv.push_back({r.axis, std::to_string(r.level), std::to_string(r.d1)});
        by_axis[r.axis].emplace_back(r.level, r.d1);
    }
    write_rows_csv(run.dir() / "sweep.csv", {"axis", "level", "d1_all"}, csv);
    for (const auto& [axis, series] : by_axis)
        emit_line_plot(series, axis, (run.dir() / ("sweep_" + axis + ".png")).string());
    std::cout << "sweep wrote " << rows.size() << " rows\n";
    return 0;
}

int cmd_transfer(const CommonArgs& a) {
    ConfigMap cfg = load_config(a.config_path);
    RunContext run(out_dir_for(a, "transfer"));
    Dataset data = dataset_from(cfg, a.seed);
    std::vector<std::string> names;
    {
        std::istringstream ss(cfg_get(cfg, "transfer.backends", "bm,sgm,toy"));
        std::string tok;
        while (std::getline(ss, tok, ',')) names.push_back(tok);
    }
    std::vector<MatcherConfig> backends;
    for (const auto& n : names) {
        MatcherConfig m = backend_from(cfg, "backend");
        if (n == "bm") m.kind = MatcherKind::BlockMatching;
        else if (n == "sgm") m.kind = MatcherKind::Sgm;
        else if (n == "toy") m.kind = MatcherKind::ToyDiff;
        else throw HarnessError("unknown transfer backend: " + n);
        backends.push_back(m);
    }
    const int pw = cfg_int(cfg, "patch.width", 48), ph = cfg_int(cfg, "patch.height", 48);
    const PatchDisparity pd = patch_disparity_from(cfg);
    const PlacementPolicy place = center_place(cfg, pw, ph);

    // per-source patch: explicit pattern if given, else a short GA search
    std::vector<Patch> patches;
    for (size_t i = 0; i < names.size(); ++i) {
        const std::string key = "transfer.pattern." + names[i];
        std::string pattern = cfg_get(cfg, key, "");
        if (pattern.empty()) {
            RewardOracle o = oracle_from(cfg, data, a.seed);
            o.backends = {backends[i]};
            auto r = ga_search(o, cfg_int(cfg, "search.population", 8),
                               cfg_int(cfg, "transfer.generations", 4), 0.8, 0.15, a.seed + i);
            pattern = config_to_text(r.best_config);
        }
        patches.push_back(render(config_from_text(pattern), pw, ph, a.seed));
    }

    TransferMatrix m = run_transfer_matrix(backends, names, patches, data, place, pd);
    std::vector<std::vector<std::string>> csv;
    for (int s = 0; s < m.side(); ++s) {
        std::vector<std::string> row{names[s]};
        for (int t = 0; t < m.side(); ++t) row.push_back(std::to_string(m.at(s, t)));
        csv.push_back(row);
    }
    std::vector<std::string> header{"source"};
    for (const auto& n : names) header.push_back(n);
    write_rows_csv(run.dir() / "transfer.csv", header, csv);
    emit_heatmap(m, (run.dir() / "transfer_heatmap.png").string());

    std::vector<std::vector<std::string>> prows;
    for (double tau : {0.1, 0.2, 0.3, 0.5, 0.6, 0.7})
        prows.push_back({std::to_string(tau),
                         std::to_string(transfer_stat(m, TransferOp::Greater, tau)),
                         std::to_string(transfer_stat(m, TransferOp::Less, tau))});
    write_rows_csv(run.dir() / "transfer_stats.csv", {"tau", "p_greater", "p_less"}, prows);
    std::cout << "transfer matrix " << m.side() << "x" << m.side() << " written\n";
    return 0;
}

int cmd_ablate(const CommonArgs& a) {
    ConfigMap cfg = load_config(a.config_path);
    RunContext run(out_dir_for(a, "ablate"));
    Dataset data = dataset_from(cfg, a.seed);
    MatcherConfig backend = backend_from(cfg, "backend");
    const int pw = cfg_int(cfg, "patch.width", 48), ph = cfg_int(cfg, "patch.height", 48);
    const std::string attribute = cfg_get(cfg, "ablate.attribute", "hollowness");
    const PatternConfig base = config_from_text(pattern_text_from(cfg, "patch.pattern"));
    auto rows = run_ablation(base, attribute, pw, ph, a.seed, data, backend,
                             center_place(cfg, pw, ph), patch_disparity_from(cfg));
    std::vector<std::vector<std::string>> csv;
    for (const auto& r : rows)
        csv.push_back({r.variant, config_to_text(r.config), std::to_string(r.d1)});
    write_rows_csv(run.dir() / "ablation.csv", {"variant", "config", "d1_all"}, csv);
    for (const auto& r : rows) std::cout << attribute << "=" << r.variant << ": " << r.d1 << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stereo adversarial patch toolkit"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap worker threads");

    CommonArgs render_args, usc_args, search_args, eval_args, sweep_args, transfer_args,
        ablate_args;
    std::string render_size, search_method;

    auto* rdr = app.add_subcommand("render", "render a pattern config to patch files");
    add_common(rdr, render_args);
    rdr->add_option("--size", render_size, "patch size WIDTHxHEIGHT");

    auto* atk = app.add_subcommand("attack", "run an attack");
    atk->require_subcommand(1);
    auto* usc = atk->add_subcommand("usc", "gradient attack on the differentiable backend");
    add_common(usc, usc_args);
    auto* srch = atk->add_subcommand("search", "pattern search attack");
    srch->add_option("method", search_method, "ppo or ga")->required();
    add_common(srch, search_args);

    auto* evl = app.add_subcommand("eval", "evaluate a patch (or baseline) on a dataset");
    add_common(evl, eval_args);
    auto* swp = app.add_subcommand("sweep", "robustness sweep over view transforms");
    add_common(swp, sweep_args);
    auto* trf = app.add_subcommand("transfer", "cross-backend transfer matrix");
    add_common(trf, transfer_args);
    auto* abl = app.add_subcommand("ablate", "single-attribute ablation");
    add_common(abl, ablate_args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors are exit 1
    }

    try {
        if (threads > 0) {
#ifdef _OPENMP
            omp_set_num_threads(threads);
#endif
        }
        if (rdr->parsed()) return cmd_render(render_args, render_size);
        if (usc->parsed()) return cmd_attack_usc(usc_args);
        if (srch->parsed()) {
            if (search_method != "ppo" && search_method != "ga") {
                std::cerr << "search method must be ppo or ga\n";
                return 1;
            }
            return cmd_attack_search(search_args, search_method);
        }
        if (evl->parsed()) return cmd_eval(eval_args);
        if (swp->parsed()) return cmd_sweep(sweep_args);
        if (trf->parsed()) return cmd_transfer(transfer_args);
        if (abl->parsed()) return cmd_ablate(ablate_args);
    } catch (const CLI::Error& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
