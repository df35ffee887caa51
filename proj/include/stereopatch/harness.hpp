#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stereopatch/core.hpp"
#include "stereopatch/injector.hpp"
#include "stereopatch/matchers.hpp"
#include "stereopatch/ppd.hpp"
#include "stereopatch/search.hpp"

namespace stereopatch {

struct HarnessError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class DatasetSource { KittiFormat, Synthetic };
enum class SplitKind { Search, Eval };

struct Dataset {
    std::vector<StereoSample> samples;
    DatasetSource source = DatasetSource::Synthetic;
    SplitKind split = SplitKind::Eval;
};

// image_2/image_3 pairs plus disp_occ_0 16-bit disparity PNGs (value / 256,
// 0 = invalid). Optionally zero-pad everything to pad_height x pad_width.
Dataset load_kitti_format(const std::string& dir, bool pad = false, int pad_height = 384,
                          int pad_width = 1248);

enum class SceneKind { RandomDot, TexturedBlocks };

// Procedural stereo pairs with exact ground truth by construction.
Dataset make_synthetic(int n, SceneKind scene, int d_max, uint64_t seed, int width = 256,
                       int height = 128);

// Split a dataset into disjoint search/eval halves.
std::pair<Dataset, Dataset> split_dataset(const Dataset& full, double search_fraction = 0.5);

// Image / disparity persistence (PNG; images in [0,1], disparity KITTI 16-bit).
void save_image_png(const Image& img, const std::string& path);
Image load_image_png(const std::string& path);
void save_disparity_png16(const DisparityMap& d, const std::string& path);
DisparityMap load_disparity_png16(const std::string& path);
void save_mask_png(const std::vector<uint8_t>& mask, int width, int height,
                   const std::string& path);

// Flat line-oriented config: "[section]" headers, "key = value" lines, '#'
// comments. Keys are returned as "section.key".
using ConfigMap = std::map<std::string, std::string>;
ConfigMap load_config(const std::string& path);
ConfigMap parse_config(const std::string& text);
std::string cfg_get(const ConfigMap& c, const std::string& key, const std::string& fallback);
int cfg_int(const ConfigMap& c, const std::string& key, int fallback);
double cfg_double(const ConfigMap& c, const std::string& key, double fallback);
bool cfg_bool(const ConfigMap& c, const std::string& key, bool fallback);

// One run owns one output directory (lockfile); events go to run.jsonl.
class RunContext {
  public:
    explicit RunContext(const std::filesystem::path& out_dir);
    ~RunContext();
    RunContext(const RunContext&) = delete;
    RunContext& operator=(const RunContext&) = delete;

    const std::filesystem::path& dir() const { return dir_; }
    void log(const std::string& event, const std::map<std::string, std::string>& fields = {});

  private:
    std::filesystem::path dir_;
    std::ofstream log_;
};

// Default output root: $STEREOPATCH_OUT if set, else "runs".
std::filesystem::path default_output_root();

struct SampleRow {
    int sample_index = 0;
    double d1 = 0.0;
    double epe = 0.0;
};

struct AttackReport {
    std::vector<SampleRow> rows;
    double mean_d1 = 0.0;
    double std_d1 = 0.0;
    double mean_epe = 0.0;
    std::string provenance;  // content digest of patch + config + seed
};

void write_rows_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows);

// FNV-1a digest of arbitrary bytes, hex-encoded; report provenance.
std::string content_digest(const std::string& bytes);

// Inject `patch` into every sample and score the backend inside the patch
// region against the pseudo ground truth.
AttackReport evaluate_patch(const Patch& patch, const Dataset& data, const MatcherConfig& backend,
                            const PlacementPolicy& place, const PatchDisparity& pd);

// Baseline (no patch): prediction vs the sample's own ground truth.
AttackReport evaluate_baseline(const Dataset& data, const MatcherConfig& backend);

TransferMatrix run_transfer_matrix(const std::vector<MatcherConfig>& backends,
                                   const std::vector<std::string>& names,
                                   const std::vector<Patch>& source_patches, const Dataset& data,
                                   const PlacementPolicy& place, const PatchDisparity& pd);

struct AblationRow {
    std::string variant;
    PatternConfig config;
    double d1 = 0.0;
};

// Vary one attribute of a base pattern across its options, keep the rest fixed.
std::vector<AblationRow> run_ablation(const PatternConfig& base, const std::string& attribute,
                                      int patch_w, int patch_h, uint64_t render_seed,
                                      const Dataset& data, const MatcherConfig& backend,
                                      const PlacementPolicy& place, const PatchDisparity& pd);

struct SweepRow {
    std::string axis;
    double level = 0.0;
    double d1 = 0.0;
};

struct SweepAxes {
    std::vector<double> depths_m;           // metres (pinhole rescale)
    std::vector<double> rotations_deg;
    std::vector<double> occlusions;         // fraction of patch pixels hidden
    std::vector<double> brightness_scales;
    std::vector<int> blur_kernels;          // odd sizes; 1 = none
    CameraRig rig;
    double reference_depth_m = 10.0;
};

std::vector<SweepRow> run_robustness_sweep(const Patch& patch, const Dataset& data,
                                           const MatcherConfig& backend, const Placement& base,
                                           const PatchDisparity& pd, const SweepAxes& axes);

// Deterministic renderings of report artifacts.
void emit_heatmap(const TransferMatrix& m, const std::string& path);
void emit_line_plot(const std::vector<std::pair<double, double>>& series, const std::string& title,
                    const std::string& path);

}  // namespace stereopatch
