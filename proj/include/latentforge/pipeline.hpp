#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "latentforge/denoiser.hpp"
#include "latentforge/grid.hpp"
#include "latentforge/maskgen.hpp"
#include "latentforge/metrics.hpp"
#include "latentforge/refine.hpp"
#include "latentforge/sampler.hpp"
#include "latentforge/schedule.hpp"

namespace latentforge {

enum class BackendKind { Analytic, Attention };
enum class MaskSourceKind { Attention, Rect, File };
enum class EditKind { RigidObject, NonRigid };

struct ScheduleConfig {
    int steps = 50;
    ScheduleKind kind = ScheduleKind::ScaledLinear;
    double beta_start = 0.00085;
    double beta_end = 0.012;
    int base_steps = 1000;
};

struct MaskConfig {
    MaskSourceKind source = MaskSourceKind::Rect;
    RectSpec rect;               // used when source = rect
    std::string path;            // used when source = file
    double threshold = 0.3;      // attention-map binarization
};

struct RefineConfig {
    bool alpha_fixed = false;    // true: use `alpha` as-is, skip the area rule
    double alpha = 1.0;
    double alpha_min = 0.5;
    double alpha_max = 0.9;
    double noise_std = 1.0;
    double filter_sigma = 0.3;
    bool seed_set = false;       // false: derive the noise seed from the run seed
    uint64_t seed = 0;
};

// Whole-run description, loadable from strict JSON (unknown keys rejected).
// The source pass always runs unguided; only the edit passes take guidance.
struct PipelineConfig {
    std::string p_src;
    std::string p_tar;
    BackendKind backend = BackendKind::Analytic;
    uint64_t seed = 0;
    std::vector<std::string> world_words;  // empty: union of the prompt words
    int channels = 4;
    int height = 64;
    int width = 64;
    double prior_var = 0.05;
    ScheduleConfig schedule;
    double cfg_source = 1.0;
    double cfg_edit = 7.5;
    std::string z0_path;         // empty: draw the source latent from the world
    MaskConfig mask;
    RefineConfig refine;
    EditKind edit_kind = EditKind::RigidObject;
    bool t_r_set = false;        // true: use t_r_override instead of the blend
    int t_r_override = 0;
    std::vector<std::string> injection_layers = {"dec"};
    std::string out_dir = "out";

    void validate() const;
    std::pair<int, int> t_r_range() const;  // depth bounds from edit_kind
};

PipelineConfig config_from_json_text(const std::string& text);
PipelineConfig config_from_file(const std::string& path);
std::string config_to_json_text(const PipelineConfig& config);

// Immutable per-run objects, built once and shared by the branch functions.
struct PipelineContext {
    PipelineConfig config;
    NoiseSchedule sched;
    std::shared_ptr<const GaussianWorld> world;
    std::shared_ptr<const Denoiser> denoiser;
    PromptEmbedding p_src;
    PromptEmbedding p_tar;

    static PipelineContext make(const PipelineConfig& config);

    // The source latent: loaded from config.z0_path when set, otherwise
    // drawn from the world under the run seed.
    LatentGrid load_z0() const;
};

struct SourceBranchResult {
    LatentGrid z0;
    LatentGrid z_top;                     // fully inverted latent
    LatentGrid recon;                     // unguided reconstruction of z0
    FeatureCache cache;                   // sealed after recording
    std::vector<CrossAttentionMap> maps;  // per inversion step; empty for
                                          // backends without attention
};

// Inversion of the source latent plus unguided resampling with K/V recording
// on the configured layers; the cache comes back sealed.
SourceBranchResult run_source_branch(const PipelineContext& ctx);

// Edit pass from the reworked latent at full guidance, no injection.
LatentGrid run_target_branch(const PipelineContext& ctx, const LatentGrid& z_prime_top);

// Partial re-inversion of the mid image to depth t_r, then guided resampling
// with cached K/V injected at every step on the configured layers.
LatentGrid run_retarget_branch(const PipelineContext& ctx, const LatentGrid& i_mid,
                               FeatureCache& cache, int t_r);

struct EditReport {
    PipelineConfig config;
    double alpha = 0.0;
    bool alpha_overridden = false;
    int t_r = 0;
    bool t_r_overridden = false;
    double t_r_blend_area_ratio = 0.0;
    double t_r_blend_psnr_mid = 0.0;
    double t_r_blend_psnr_recon = 0.0;
    double mask_area_ratio = 0.0;
    bool mask_degenerate = false;
    std::vector<std::string> selected_words;        // attention mask path only
    std::map<std::string, MetricReport> metrics;    // "src_recon.whole", ...
    std::map<std::string, std::string> artifacts;   // logical name -> path
    std::map<std::string, double> timing_ms;        // per branch, wall clock
};

std::string report_to_json_text(const EditReport& report);

// Full run: source branch, mask, adaptive attenuation, rework, target
// branch, adaptive depth, retarget branch, metrics. Artifacts are flushed to
// config.out_dir as soon as each exists, so a failing stage leaves the
// earlier outputs on disk; failures carry the stage name.
EditReport edit(const PipelineConfig& config);

struct SweepRow {
    std::string band;  // "none" (untouched baseline), "low", or "high"
    double alpha = 1.0;
    double psnr_db = 0.0;
    double mse = 0.0;
    double ssim = 0.0;
};

// Frequency-role probe: invert z0 once, rescale one band of the inverted
// latent by each alpha, resample unguided, and score the reconstruction
// against z0. The first row is the untouched baseline.
std::vector<SweepRow> frequency_sweep(const LatentGrid& z0, const std::vector<double>& alphas,
                                      const PipelineContext& ctx);

std::string sweep_to_csv(const std::vector<SweepRow>& rows);

// One full edit per rectangle; each run writes under out_dir/ablate_<i>.
std::vector<EditReport> mask_size_ablation(const PipelineConfig& config,
                                           const std::vector<RectSpec>& rects);

// Process exit code for an escaped failure: 2 for config/format problems,
// 3 for numeric breakdowns, 4 for a missing injection feature, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace latentforge
