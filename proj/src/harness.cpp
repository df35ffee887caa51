#include "stereopatch/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <json.hpp>

namespace fs = std::filesystem;

namespace stereopatch {

namespace {

cv::Mat to_mat(const Image& img) {
    cv::Mat m(img.height, img.width, CV_8UC3);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c) {
            auto& px = m.at<cv::Vec3b>(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                const double v = img.channels == 3 ? img.at(r, c, ch) : img.at(r, c, 0);
                px[2 - ch] = static_cast<uchar>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
            }
        }
    return m;
}

Image from_mat(const cv::Mat& m) {
    if (m.empty()) throw HarnessError("empty image");
    Image img(m.cols, m.rows, m.channels() >= 3 ? 3 : 1);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) {
            if (img.channels == 3) {
                const auto& px = m.at<cv::Vec3b>(r, c);
                for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = px[2 - ch] / 255.0;
            } else {
                img.at(r, c, 0) = m.at<uchar>(r, c) / 255.0;
            }
        }
    return img;
}

Image pad_image(const Image& img, int H, int W) {
    if (img.height > H || img.width > W) throw HarnessError("image larger than pad target");
    Image out(W, H, img.channels, 0.0);
    for (int r = 0; r < img.height; ++r)
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(r, c, ch);
    return out;
}

DisparityMap pad_disparity(const DisparityMap& d, int H, int W) {
    DisparityMap out(W, H, 0.0, false);  // padding is invalid
    for (int r = 0; r < d.height; ++r)
        for (int c = 0; c < d.width; ++c) {
            out.at(r, c) = d.at(r, c);
            out.set_valid(r, c, d.is_valid(r, c));
        }
    return out;
}

}  // namespace

void save_image_png(const Image& img, const std::string& path) {
    if (!cv::imwrite(path, to_mat(img))) throw HarnessError("failed to write " + path);
}

Image load_image_png(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty()) throw HarnessError("failed to read " + path);
    return from_mat(m);
}

void save_disparity_png16(const DisparityMap& d, const std::string& path) {
    cv::Mat m(d.height, d.width, CV_16UC1);
    for (int r = 0; r < d.height; ++r)
        for (int c = 0; c < d.width; ++c) {
            const double v = d.is_valid(r, c) ? d.at(r, c) * 256.0 : 0.0;
            m.at<uint16_t>(r, c) = static_cast<uint16_t>(std::lround(std::clamp(v, 0.0, 65535.0)));
        }
    if (!cv::imwrite(path, m)) throw HarnessError("failed to write " + path);
}

DisparityMap load_disparity_png16(const std::string& path) {
    cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
    if (m.empty() || m.type() != CV_16UC1)
        throw HarnessError("not a 16-bit disparity png: " + path);
    DisparityMap d(m.cols, m.rows, 0.0, false);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) {
            const uint16_t v = m.at<uint16_t>(r, c);
            if (v == 0) continue;  // invalid sentinel
            d.at(r, c) = v / 256.0;
            d.set_valid(r, c, true);
        }
    return d;
}

void save_mask_png(const std::vector<uint8_t>& mask, int width, int height,
                   const std::string& path) {
    cv::Mat m(height, width, CV_8UC1);
    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c)
            m.at<uchar>(r, c) = mask[static_cast<size_t>(r) * width + c] ? 255 : 0;
    if (!cv::imwrite(path, m)) throw HarnessError("failed to write " + path);
}

Dataset load_kitti_format(const std::string& dir, bool pad, int pad_height, int pad_width) {
    const fs::path root(dir);
    const fs::path disp_dir = root / "disp_occ_0";
    if (!fs::is_directory(disp_dir)) throw HarnessError("missing disp_occ_0 under " + dir);
    std::vector<fs::path> disp_files;
    for (const auto& e : fs::directory_iterator(disp_dir))
        if (e.path().extension() == ".png") disp_files.push_back(e.path());
    std::sort(disp_files.begin(), disp_files.end());
    Dataset out;
    out.source = DatasetSource::KittiFormat;
    for (const auto& dp : disp_files) {
        const fs::path lp = root / "image_2" / dp.filename();
        const fs::path rp = root / "image_3" / dp.filename();
        if (!fs::exists(lp) || !fs::exists(rp)) {
            std::cerr << "warning: skipping " << dp.filename() << " (missing view)\n";
            continue;
        }
        StereoSample s;
        s.left = load_image_png(lp.string());
        s.right = load_image_png(rp.string());
        s.gt = load_disparity_png16(dp.string());
        if (pad) {
            s.left = pad_image(s.left, pad_height, pad_width);
            s.right = pad_image(s.right, pad_height, pad_width);
            s.gt = pad_disparity(s.gt, pad_height, pad_width);
        }
        out.samples.push_back(std::move(s));
    }
    return out;
}

Dataset make_synthetic(int n, SceneKind scene, int d_max, uint64_t seed, int width, int height) {
    if (n < 1) throw HarnessError("make_synthetic: n must be >= 1");
    Dataset out;
    out.source = DatasetSource::Synthetic;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
        StereoSample s;
        s.left = Image(width, height, 3);
        DisparityMap disp(width, height, 0.0, true);
        if (scene == SceneKind::RandomDot) {
            // dense random dots at one constant shift: exact GT everywhere
            const int shift = 4 + static_cast<int>(rng() % std::max(1, d_max / 2));
            for (double& v : s.left.data) v = u(rng) < 0.5 ? 0.1 : 0.9;
            for (auto& v : disp.values) v = shift;
        } else {
            // piecewise-constant textured blocks at staggered disparities
            const int bg = 4 + static_cast<int>(rng() % std::max(1, d_max / 4));
            for (int r = 0; r < height; ++r)
                for (int c = 0; c < width; ++c)
                    for (int ch = 0; ch < 3; ++ch)
                        s.left.at(r, c, ch) = 0.25 + 0.5 * u(rng);
            for (auto& v : disp.values) v = bg;
            const int nblocks = 3;
            for (int b = 0; b < nblocks; ++b) {
                const int bw = width / 5, bh = height / 4;
                const int r0 = static_cast<int>(rng() % std::max(1, height - bh));
                const int c0 = static_cast<int>(rng() % std::max(1, width - bw - d_max));
                const int d = bg + 2 + static_cast<int>(rng() % std::max(1, d_max / 2 - bg));
                const double base = u(rng);
                for (int r = r0; r < r0 + bh; ++r)
                    for (int c = c0; c < c0 + bw; ++c) {
                        disp.at(r, c) = d;
                        for (int ch = 0; ch < 3; ++ch)
                            s.left.at(r, c, ch) =
                                std::clamp(base * 0.5 + 0.5 * u(rng), 0.0, 1.0);
                    }
            }
        }
        // right view: paint far-to-near so nearer surfaces win overlaps
        s.right = Image(width, height, 3);
        for (double& v : s.right.data) v = u(rng);  // revealed occlusion filler
        std::vector<int> order;  // unique disparities ascending
        {
            std::vector<double> ds(disp.values);
            std::sort(ds.begin(), ds.end());
            ds.erase(std::unique(ds.begin(), ds.end()), ds.end());
            for (double d : ds) order.push_back(static_cast<int>(d));
        }
        for (int d : order)
            for (int r = 0; r < height; ++r)
                for (int c = 0; c < width; ++c) {
                    if (static_cast<int>(disp.at(r, c)) != d) continue;
                    const int cr = c - d;
                    if (cr < 0) continue;
                    for (int ch = 0; ch < 3; ++ch) s.right.at(r, cr, ch) = s.left.at(r, c, ch);
                }
        s.gt = std::move(disp);
        out.samples.push_back(std::move(s));
    }
    return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& full, double search_fraction) {
    Dataset a, b;
    a.source = b.source = full.source;
    a.split = SplitKind::Search;
    b.split = SplitKind::Eval;
    const size_t cut = static_cast<size_t>(full.samples.size() * search_fraction);
    for (size_t i = 0; i < full.samples.size(); ++i)
        (i < cut ? a : b).samples.push_back(full.samples[i]);
    return {std::move(a), std::move(b)};
}

ConfigMap parse_config(const std::string& text) {
    ConfigMap out;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw HarnessError("config line " + std::to_string(lineno) + ": bad section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw HarnessError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw HarnessError("config line " + std::to_string(lineno) + ": empty key");
        out[section.empty() ? key : section + "." + key] = val;
    }
    return out;
}

ConfigMap load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw HarnessError("cannot open config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string cfg_get(const ConfigMap& c, const std::string& key, const std::string& fallback) {
    const auto it = c.find(key);
    return it == c.end() ? fallback : it->second;
}

int cfg_int(const ConfigMap& c, const std::string& key, int fallback) {
    const auto it = c.find(key);
    return it == c.end() ? fallback : std::stoi(it->second);
}

double cfg_double(const ConfigMap& c, const std::string& key, double fallback) {
    const auto it = c.find(key);
    return it == c.end() ? fallback : std::stod(it->second);
}

bool cfg_bool(const ConfigMap& c, const std::string& key, bool fallback) {
    const auto it = c.find(key);
    if (it == c.end()) return fallback;
    if (it->second == "yes" || it->second == "true" || it->second == "1") return true;
    if (it->second == "no" || it->second == "false" || it->second == "0") return false;
    throw HarnessError("config key " + key + ": expected boolean, got " + it->second);
}

std::filesystem::path default_output_root() {
    const char* env = std::getenv("STEREOPATCH_OUT");
    return env ? fs::path(env) : fs::path("runs");
}

RunContext::RunContext(const fs::path& out_dir) : dir_(out_dir) {
    fs::create_directories(dir_);
    const fs::path lock = dir_ / ".lock";
    // O_EXCL-style exclusivity: the lock must not already exist
    if (fs::exists(lock)) throw HarnessError("run directory is locked: " + dir_.string());
    std::ofstream(lock) << "pid\n";
    log_.open(dir_ / "run.jsonl", std::ios::app);
    if (!log_) throw HarnessError("cannot open run log in " + dir_.string());
}

RunContext::~RunContext() {
    std::error_code ec;
    fs::remove(dir_ / ".lock", ec);
}

void RunContext::log(const std::string& event, const std::map<std::string, std::string>& fields) {
    nlohmann::json j;
    j["event"] = event;
    for (const auto& [k, v] : fields) j[k] = v;
    log_ << j.dump() << "\n";
    log_.flush();
}

void write_rows_csv(const fs::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw HarnessError("cannot write " + path.string());
    for (size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << "\n";
    }
}

std::string content_digest(const std::string& bytes) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {

void finalize_report(AttackReport& r) {
    if (r.rows.empty()) throw HarnessError("report has no rows");
    double s = 0.0, se = 0.0;
    for (const auto& row : r.rows) {
        s += row.d1;
        se += row.epe;
    }
    r.mean_d1 = s / r.rows.size();
    r.mean_epe = se / r.rows.size();
    double var = 0.0;
    for (const auto& row : r.rows) var += (row.d1 - r.mean_d1) * (row.d1 - r.mean_d1);
    r.std_d1 = std::sqrt(var / r.rows.size());
}

}  // namespace

AttackReport evaluate_patch(const Patch& patch, const Dataset& data, const MatcherConfig& backend,
                            const PlacementPolicy& place, const PatchDisparity& pd) {
    if (data.samples.empty()) throw HarnessError("empty dataset");
    AttackReport r;
    r.rows.resize(data.samples.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < data.samples.size(); ++i) {
        const StereoSample& s = data.samples[i];
        InjectedPair pair = inject(s, patch, place(s, static_cast<int>(i)), pd);
        StageTrace trace = forward(backend, pair.left, pair.right);
        r.rows[i] = {static_cast<int>(i), d1_all(trace.disparity, pair.pseudo_gt, pair.region_left),
                     epe(trace.disparity, pair.pseudo_gt, pair.region_left)};
    }
    finalize_report(r);
    std::string bytes(reinterpret_cast<const char*>(patch.pixels.data.data()),
                      patch.pixels.data.size() * sizeof(double));
    r.provenance = content_digest(bytes);
    return r;
}

AttackReport evaluate_baseline(const Dataset& data, const MatcherConfig& backend) {
    if (data.samples.empty()) throw HarnessError("empty dataset");
    AttackReport r;
    r.rows.resize(data.samples.size());
#pragma omp parallel for schedule(dynamic)
    for (size_t i = 0; i < data.samples.size(); ++i) {
        const StereoSample& s = data.samples[i];
        StageTrace trace = forward(backend, s.left, s.right);
        Region all(s.left.width, s.left.height, true);
        r.rows[i] = {static_cast<int>(i), d1_all(trace.disparity, s.gt, all),
                     epe(trace.disparity, s.gt, all)};
    }
    finalize_report(r);
    r.provenance = content_digest("baseline");
    return r;
}

TransferMatrix run_transfer_matrix(const std::vector<MatcherConfig>& backends,
                                   const std::vector<std::string>& names,
                                   const std::vector<Patch>& source_patches, const Dataset& data,
                                   const PlacementPolicy& place, const PatchDisparity& pd) {
    if (backends.size() != names.size() || backends.size() != source_patches.size())
        throw HarnessError("transfer matrix: backends/names/patches size mismatch");
    TransferMatrix m;
    m.model_names = names;
    m.d1all.assign(names.size() * names.size(), 0.0);
    for (size_t s = 0; s < backends.size(); ++s)
        for (size_t t = 0; t < backends.size(); ++t)
            m.at(static_cast<int>(s), static_cast<int>(t)) =
                evaluate_patch(source_patches[s], data, backends[t], place, pd).mean_d1;
    return m;
}

std::vector<AblationRow> run_ablation(const PatternConfig& base, const std::string& attribute,
                                      int patch_w, int patch_h, uint64_t render_seed,
                                      const Dataset& data, const MatcherConfig& backend,
                                      const PlacementPolicy& place, const PatchDisparity& pd) {
    struct Option {
        std::string name;
        PatternConfig cfg;
    };
    std::vector<Option> variants;
    if (attribute == "hollowness") {
        for (auto [h, n] : {std::pair{Hollowness::None, "none"},
                            {Hollowness::LowDensity, "low"},
                            {Hollowness::HighDensity, "high"}}) {
            PatternConfig c = base;
            c.hollowness = h;
            variants.push_back({n, c});
        }
    } else if (attribute == "block_repetition") {
        for (auto [b, n] : {std::pair{true, "yes"}, {false, "no"}}) {
            PatternConfig c = base;
            c.block_repetition = b;
            variants.push_back({n, c});
        }
    } else if (attribute == "blur") {
        for (auto [b, n] : {std::pair{BlurLevel::None, "none"},
                            {BlurLevel::Slight, "slight"},
                            {BlurLevel::Heavy, "heavy"}}) {
            PatternConfig c = base;
            c.blur = b;
            variants.push_back({n, c});
        }
    } else {
        throw HarnessError("ablation: unknown attribute " + attribute);
    }
    std::vector<AblationRow> rows;
    for (const auto& v : variants) {
        const PatternConfig canon = canonicalize(v.cfg);
        Patch p = render(canon, patch_w, patch_h, render_seed);
        rows.push_back({v.name, canon, evaluate_patch(p, data, backend, place, pd).mean_d1});
    }
    return rows;
}

std::vector<SweepRow> run_robustness_sweep(const Patch& patch, const Dataset& data,
                                           const MatcherConfig& backend, const Placement& base,
                                           const PatchDisparity& pd, const SweepAxes& axes) {
    if (data.samples.empty()) throw HarnessError("empty dataset");
    std::vector<SweepRow> rows;
    auto score_pair = [&](const InjectedPair& pair) {
        StageTrace trace = forward(backend, pair.left, pair.right);
        return d1_all(trace.disparity, pair.pseudo_gt, pair.region_left);
    };
    auto transformed = [&](double rot, double occ, double bright, int blur) {
        double sum = 0.0;
        int n = 0;
        for (const auto& s : data.samples) {
            sum += score_pair(apply_view_transform(s, patch, base, pd, rot, occ, bright, blur));
            ++n;
        }
        return sum / n;
    };
    for (double z : axes.depths_m) {
        double sum = 0.0;
        int n = 0;
        for (const auto& s : data.samples) {
            auto pts = distance_sweep(s, patch, base, {z}, axes.rig, axes.reference_depth_m);
            if (pts.empty() || !pts[0].pair) continue;
            sum += score_pair(*pts[0].pair);
            ++n;
        }
        rows.push_back({"distance", z, n ? sum / n : 0.0});
    }
    for (double r : axes.rotations_deg) rows.push_back({"rotation", r, transformed(r, 0, 1.0, 1)});
    for (double o : axes.occlusions) rows.push_back({"occlusion", o, transformed(0, o, 1.0, 1)});
    for (double b : axes.brightness_scales)
        rows.push_back({"brightness", b, transformed(0, 0, b, 1)});
    for (int k : axes.blur_kernels)
        rows.push_back({"blur", static_cast<double>(k), transformed(0, 0, 1.0, k)});
    return rows;
}

void emit_heatmap(const TransferMatrix& m, const std::string& path) {
    const int n = m.side();
    if (n < 1) throw HarnessError("empty transfer matrix");
    const int cell = 72, margin = 64;
    cv::Mat img(margin + n * cell, margin + n * cell, CV_8UC3, cv::Scalar(255, 255, 255));
    for (int s = 0; s < n; ++s)
        for (int t = 0; t < n; ++t) {
            const double v = std::clamp(m.at(s, t), 0.0, 1.0);
            // darker cells = stronger attack
            const int shade = static_cast<int>(std::lround(235.0 * (1.0 - v)));
            cv::Rect rc(margin + t * cell, margin + s * cell, cell, cell);
            cv::rectangle(img, rc, cv::Scalar(shade, shade, shade), cv::FILLED);
            cv::rectangle(img, rc, cv::Scalar(80, 80, 80), 1);
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.3f", m.at(s, t));
            const cv::Scalar ink = v > 0.5 ? cv::Scalar(255, 255, 255) : cv::Scalar(0, 0, 0);
            cv::putText(img, buf, {rc.x + 8, rc.y + cell / 2 + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4,
                        ink, 1, cv::LINE_8);
        }
    for (int i = 0; i < n; ++i) {
        cv::putText(img, m.model_names[i], {margin + i * cell + 6, margin - 10},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_8);
        cv::putText(img, m.model_names[i], {6, margin + i * cell + cell / 2 + 4},
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1, cv::LINE_8);
    }
    if (!cv::imwrite(path, img)) throw HarnessError("failed to write " + path);
}

void emit_line_plot(const std::vector<std::pair<double, double>>& series, const std::string& title,
                    const std::string& path) {
    if (series.empty()) throw HarnessError("empty series");
    const int W = 640, H = 400, m = 48;
    cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
    double xmin = series.front().first, xmax = xmin, ymin = series.front().second, ymax = ymin;
    for (const auto& [x, y] : series) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    auto px = [&](double x, double y) {
        const int cx = m + static_cast<int>((x - xmin) / (xmax - xmin) * (W - 2 * m));
        const int cy = H - m - static_cast<int>((y - ymin) / (ymax - ymin) * (H - 2 * m));
        return cv::Point(cx, cy);
    };
    cv::line(img, {m, H - m}, {W - m, H - m}, cv::Scalar(0, 0, 0), 1);
    cv::line(img, {m, H - m}, {m, m}, cv::Scalar(0, 0, 0), 1);
    for (size_t i = 1; i < series.size(); ++i)
        cv::line(img, px(series[i - 1].first, series[i - 1].second),
                 px(series[i].first, series[i].second), cv::Scalar(180, 80, 0), 2);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g..%g", ymin, ymax);
    cv::putText(img, title, {m, m - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.5, cv::Scalar(0, 0, 0), 1,
                cv::LINE_8);
    cv::putText(img, buf, {4, m}, cv::FONT_HERSHEY_SIMPLEX, 0.35, cv::Scalar(0, 0, 0), 1,
                cv::LINE_8);
    if (!cv::imwrite(path, img)) throw HarnessError("failed to write " + path);
}

}  // namespace stereopatch
