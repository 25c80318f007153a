#include "latentforge/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "latentforge/errors.hpp"
#include "latentforge/rng.hpp"
#include "latentforge/spectral.hpp"

namespace latentforge {

namespace {

using nlohmann::json;

// Stream ids under the run seed; 1 and 2 belong to GaussianWorld::sample_z0.
constexpr uint64_t kRefineNoiseStream = 3;

const char* backend_name(BackendKind b) {
    return b == BackendKind::Analytic ? "analytic" : "attention";
}

BackendKind backend_from_name(const std::string& s) {
    if (s == "analytic") {
        return BackendKind::Analytic;
    }
    if (s == "attention") {
        return BackendKind::Attention;
    }
    throw std::invalid_argument("config: unknown backend '" + s + "'");
}

const char* schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::Linear ? "linear" : "scaled-linear";
}

ScheduleKind schedule_kind_from_name(const std::string& s) {
    if (s == "linear") {
        return ScheduleKind::Linear;
    }
    if (s == "scaled-linear") {
        return ScheduleKind::ScaledLinear;
    }
    throw std::invalid_argument("config: unknown schedule kind '" + s + "'");
}

const char* mask_source_name(MaskSourceKind m) {
    switch (m) {
        case MaskSourceKind::Attention: return "attention";
        case MaskSourceKind::Rect: return "rect";
        default: return "file";
    }
}

MaskSourceKind mask_source_from_name(const std::string& s) {
    if (s == "attention") {
        return MaskSourceKind::Attention;
    }
    if (s == "rect") {
        return MaskSourceKind::Rect;
    }
    if (s == "file") {
        return MaskSourceKind::File;
    }
    throw std::invalid_argument("config: unknown mask source '" + s + "'");
}

const char* edit_kind_name(EditKind k) {
    return k == EditKind::RigidObject ? "rigid-object" : "non-rigid";
}

EditKind edit_kind_from_name(const std::string& s) {
    if (s == "rigid-object") {
        return EditKind::RigidObject;
    }
    if (s == "non-rigid") {
        return EditKind::NonRigid;
    }
    throw std::invalid_argument("config: unknown edit kind '" + s + "'");
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end()) {
            throw std::invalid_argument(std::string("config: unknown key '") + key + "' in " +
                                        where);
        }
    }
}

// Rethrows a stage failure with the stage name prepended, keeping the type
// so exit codes survive. InjectionMissError already names its (t, layer).
template <class Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const InjectionMissError&) {
        throw;
    } catch (const FormatError& e) {
        throw FormatError(std::string(name) + ": " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(std::string(name) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string(name) + ": " + e.what());
    } catch (const std::logic_error& e) {
        throw std::logic_error(std::string(name) + ": " + e.what());
    }
}

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
        .count();
}

json metric_to_json(const MetricReport& r) {
    json j;
    j["mse"] = r.mse;
    j["psnr_db"] = r.psnr;
    if (r.computed_over == "whole") {
        j["ssim"] = r.ssim;
    }
    j["over"] = r.computed_over;
    return j;
}

json config_to_json(const PipelineConfig& c) {
    json j;
    j["p_src"] = c.p_src;
    j["p_tar"] = c.p_tar;
    j["backend"] = backend_name(c.backend);
    j["seed"] = c.seed;
    j["world_words"] = c.world_words;
    j["channels"] = c.channels;
    j["height"] = c.height;
    j["width"] = c.width;
    j["prior_var"] = c.prior_var;
    j["schedule"] = {{"steps", c.schedule.steps},
                     {"kind", schedule_kind_name(c.schedule.kind)},
                     {"beta_start", c.schedule.beta_start},
                     {"beta_end", c.schedule.beta_end},
                     {"base_steps", c.schedule.base_steps}};
    j["cfg_source"] = c.cfg_source;
    j["cfg_edit"] = c.cfg_edit;
    j["z0_path"] = c.z0_path;
    json rect = json::parse(rect_to_json_text(c.mask.rect));
    j["mask"] = {{"source", mask_source_name(c.mask.source)},
                 {"rect", rect},
                 {"path", c.mask.path},
                 {"threshold", c.mask.threshold}};
    json refine;
    refine["alpha"] = c.refine.alpha_fixed ? json(c.refine.alpha) : json(nullptr);
    refine["alpha_min"] = c.refine.alpha_min;
    refine["alpha_max"] = c.refine.alpha_max;
    refine["noise_std"] = c.refine.noise_std;
    refine["filter_sigma"] = c.refine.filter_sigma;
    refine["seed"] = c.refine.seed_set ? json(c.refine.seed) : json(nullptr);
    j["refine"] = refine;
    j["edit_kind"] = edit_kind_name(c.edit_kind);
    j["t_r"] = c.t_r_set ? json(c.t_r_override) : json(nullptr);
    j["injection_layers"] = c.injection_layers;
    j["out_dir"] = c.out_dir;
    return j;
}

PipelineConfig config_from_json(const json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("config: expected a JSON object");
    }
    check_keys(j,
               {"p_src", "p_tar", "backend", "seed", "world_words", "channels", "height",
                "width", "prior_var", "schedule", "cfg_source", "cfg_edit", "z0_path", "mask",
                "refine", "edit_kind", "t_r", "injection_layers", "out_dir"},
               "the top-level object");
    PipelineConfig c;
    if (!j.contains("p_src") || !j.contains("p_tar")) {
        throw std::invalid_argument("config: p_src and p_tar are required");
    }
    c.p_src = j.at("p_src").get<std::string>();
    c.p_tar = j.at("p_tar").get<std::string>();
    if (j.contains("backend")) {
        c.backend = backend_from_name(j.at("backend").get<std::string>());
    }
    if (j.contains("seed")) {
        c.seed = j.at("seed").get<uint64_t>();
    }
    if (j.contains("world_words")) {
        c.world_words = j.at("world_words").get<std::vector<std::string>>();
    }
    if (j.contains("channels")) {
        c.channels = j.at("channels").get<int>();
    }
    if (j.contains("height")) {
        c.height = j.at("height").get<int>();
    }
    if (j.contains("width")) {
        c.width = j.at("width").get<int>();
    }
    if (j.contains("prior_var")) {
        c.prior_var = j.at("prior_var").get<double>();
    }
    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        check_keys(s, {"steps", "kind", "beta_start", "beta_end", "base_steps"}, "'schedule'");
        if (s.contains("steps")) {
            c.schedule.steps = s.at("steps").get<int>();
        }
        if (s.contains("kind")) {
            c.schedule.kind = schedule_kind_from_name(s.at("kind").get<std::string>());
        }
        if (s.contains("beta_start")) {
            c.schedule.beta_start = s.at("beta_start").get<double>();
        }
        if (s.contains("beta_end")) {
            c.schedule.beta_end = s.at("beta_end").get<double>();
        }
        if (s.contains("base_steps")) {
            c.schedule.base_steps = s.at("base_steps").get<int>();
        }
    }
    if (j.contains("cfg_source")) {
        c.cfg_source = j.at("cfg_source").get<double>();
    }
    if (j.contains("cfg_edit")) {
        c.cfg_edit = j.at("cfg_edit").get<double>();
    }
    if (j.contains("z0_path")) {
        c.z0_path = j.at("z0_path").get<std::string>();
    }
    if (j.contains("mask")) {
        const json& m = j.at("mask");
        check_keys(m, {"source", "rect", "path", "threshold"}, "'mask'");
        if (m.contains("source")) {
            c.mask.source = mask_source_from_name(m.at("source").get<std::string>());
        }
        if (m.contains("rect")) {
            c.mask.rect = rect_from_json_text(m.at("rect").dump());
        }
        if (m.contains("path")) {
            c.mask.path = m.at("path").get<std::string>();
        }
        if (m.contains("threshold")) {
            c.mask.threshold = m.at("threshold").get<double>();
        }
    }
    if (j.contains("refine")) {
        const json& r = j.at("refine");
        check_keys(r, {"alpha", "alpha_min", "alpha_max", "noise_std", "filter_sigma", "seed"},
                   "'refine'");
        if (r.contains("alpha") && !r.at("alpha").is_null()) {
            c.refine.alpha_fixed = true;
            c.refine.alpha = r.at("alpha").get<double>();
        }
        if (r.contains("alpha_min")) {
            c.refine.alpha_min = r.at("alpha_min").get<double>();
        }
        if (r.contains("alpha_max")) {
            c.refine.alpha_max = r.at("alpha_max").get<double>();
        }
        if (r.contains("noise_std")) {
            c.refine.noise_std = r.at("noise_std").get<double>();
        }
        if (r.contains("filter_sigma")) {
            c.refine.filter_sigma = r.at("filter_sigma").get<double>();
        }
        if (r.contains("seed") && !r.at("seed").is_null()) {
            c.refine.seed_set = true;
            c.refine.seed = r.at("seed").get<uint64_t>();
        }
    }
    if (j.contains("edit_kind")) {
        c.edit_kind = edit_kind_from_name(j.at("edit_kind").get<std::string>());
    }
    if (j.contains("t_r") && !j.at("t_r").is_null()) {
        c.t_r_set = true;
        c.t_r_override = j.at("t_r").get<int>();
    }
    if (j.contains("injection_layers")) {
        c.injection_layers = j.at("injection_layers").get<std::vector<std::string>>();
    }
    if (j.contains("out_dir")) {
        c.out_dir = j.at("out_dir").get<std::string>();
    }
    return c;
}

}  // namespace

void PipelineConfig::validate() const {
    if (split_words(p_src).empty() || split_words(p_tar).empty()) {
        throw std::invalid_argument("config: prompts must contain at least one word");
    }
    if (cfg_source != 1.0) {
        throw std::invalid_argument("config: the source pass is always unguided, cfg_source "
                                    "must be 1");
    }
    if (!(cfg_edit >= 1.0) || !std::isfinite(cfg_edit)) {
        throw std::invalid_argument("config: cfg_edit must be finite and >= 1");
    }
    if (channels < 1 || height < 1 || width < 1) {
        throw std::invalid_argument("config: latent dimensions must be positive");
    }
    if (backend == BackendKind::Attention && (height % 4 != 0 || width % 4 != 0)) {
        throw std::invalid_argument("config: the attention backend needs height and width "
                                    "divisible by its patch size 4");
    }
    if (!std::isfinite(prior_var) || prior_var < 0.0) {
        throw std::invalid_argument("config: prior_var must be finite and >= 0");
    }
    if (mask.source == MaskSourceKind::Attention && backend != BackendKind::Attention) {
        throw std::invalid_argument("config: the attention mask source needs the attention "
                                    "backend");
    }
    if (mask.source == MaskSourceKind::File && mask.path.empty()) {
        throw std::invalid_argument("config: mask source 'file' needs mask.path");
    }
    if (!std::isfinite(mask.threshold)) {
        throw std::invalid_argument("config: mask threshold must be finite");
    }
    if (!(refine.alpha_min >= 0.0 && refine.alpha_min <= refine.alpha_max &&
          refine.alpha_max <= 1.0)) {
        throw std::invalid_argument("config: need 0 <= alpha_min <= alpha_max <= 1");
    }
    if (refine.alpha_fixed && !(refine.alpha >= 0.0 && refine.alpha <= 1.0)) {
        throw std::invalid_argument("config: fixed alpha must be in [0, 1]");
    }
    if (!std::isfinite(refine.noise_std) || refine.noise_std < 0.0) {
        throw std::invalid_argument("config: noise_std must be finite and >= 0");
    }
    if (!std::isfinite(refine.filter_sigma) || refine.filter_sigma <= 0.0) {
        throw std::invalid_argument("config: filter_sigma must be > 0");
    }
    if (t_r_set && (t_r_override < 1 || t_r_override > schedule.steps)) {
        throw std::invalid_argument("config: t_r must lie in [1, steps]");
    }
    for (const std::string& layer : injection_layers) {
        const auto& known = ToyAttentionDenoiser::known_layers();
        if (std::find(known.begin(), known.end(), layer) == known.end()) {
            throw std::invalid_argument("config: unknown injection layer '" + layer + "'");
        }
    }
    if (out_dir.empty()) {
        throw std::invalid_argument("config: out_dir must be nonempty");
    }
}

std::pair<int, int> PipelineConfig::t_r_range() const {
    return edit_kind == EditKind::RigidObject ? std::pair<int, int>{10, 30}
                                              : std::pair<int, int>{30, 50};
}

PipelineConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config parse: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
}

PipelineConfig config_from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw FormatError("config: cannot open '" + path + "'");
    }
    std::stringstream buf;
    buf << f.rdbuf();
    return config_from_json_text(buf.str());
}

std::string config_to_json_text(const PipelineConfig& config) {
    return config_to_json(config).dump(2);
}

PipelineContext PipelineContext::make(const PipelineConfig& config) {
    config.validate();
    PipelineContext ctx;
    ctx.config = config;
    ctx.sched = make_schedule(config.schedule.steps, config.schedule.kind,
                              config.schedule.beta_start, config.schedule.beta_end,
                              config.schedule.base_steps);

    std::vector<std::string> words = config.world_words;
    if (words.empty()) {
        words = split_words(config.p_src);
        for (const std::string& w : split_words(config.p_tar)) {
            words.push_back(w);
        }
    }
    std::vector<std::string> unique_words;
    for (const std::string& w : words) {
        if (std::find(unique_words.begin(), unique_words.end(), w) == unique_words.end()) {
            unique_words.push_back(w);
        }
    }
    if (config.backend == BackendKind::Analytic) {
        for (const std::string& prompt : {config.p_src, config.p_tar}) {
            for (const std::string& w : split_words(prompt)) {
                if (std::find(unique_words.begin(), unique_words.end(), w) ==
                    unique_words.end()) {
                    throw std::invalid_argument(
                        "config: world_words must cover every prompt word for the analytic "
                        "backend, missing '" +
                        w + "'");
                }
            }
        }
    }
    ctx.world = std::make_shared<GaussianWorld>(render_world(
        unique_words, config.channels, config.height, config.width, config.prior_var));
    if (config.backend == BackendKind::Analytic) {
        ctx.denoiser = std::make_shared<AnalyticDenoiser>(ctx.world);
    } else {
        ctx.denoiser = std::make_shared<ToyAttentionDenoiser>(config.channels, config.seed);
    }
    ctx.p_src = embed_prompt(config.p_src);
    ctx.p_tar = embed_prompt(config.p_tar);
    return ctx;
}

LatentGrid PipelineContext::load_z0() const {
    if (!config.z0_path.empty()) {
        LatentGrid z = grid_read(config.z0_path);
        if (z.channels != config.channels || z.height != config.height ||
            z.width != config.width) {
            throw std::invalid_argument("load_z0: '" + config.z0_path +
                                        "' does not match the configured latent shape");
        }
        return z;
    }
    return world->sample_z0(p_src, config.seed);
}

SourceBranchResult run_source_branch(const PipelineContext& ctx) {
    SourceBranchResult res;
    res.z0 = ctx.load_z0();
    InversionResult inv =
        invert_loop(*ctx.denoiser, res.z0, ctx.p_src, ctx.p_tar, ctx.sched);
    res.z_top = inv.trajectory.final_z();
    res.maps = std::move(inv.maps);

    StepHooks hooks;
    hooks.mode = AttnMode::Record;
    hooks.cache = &res.cache;
    hooks.layers = &ctx.config.injection_layers;
    res.recon = sample_loop(*ctx.denoiser, res.z_top, ctx.p_src, ctx.config.cfg_source,
                            ctx.sched.steps, ctx.sched, hooks)
                    .final_z();
    res.cache.seal();
    return res;
}

LatentGrid run_target_branch(const PipelineContext& ctx, const LatentGrid& z_prime_top) {
    return sample_loop(*ctx.denoiser, z_prime_top, ctx.p_tar, ctx.config.cfg_edit,
                       ctx.sched.steps, ctx.sched)
        .final_z();
}

LatentGrid run_retarget_branch(const PipelineContext& ctx, const LatentGrid& i_mid,
                               FeatureCache& cache, int t_r) {
    if (!cache.sealed()) {
        throw std::logic_error("run_retarget_branch: feature cache must be sealed before "
                               "replay");
    }
    LatentGrid z2 = reinvert(i_mid, ctx.p_tar, t_r, ctx.sched, *ctx.denoiser);
    StepHooks hooks;
    hooks.mode = AttnMode::Replay;
    hooks.cache = &cache;
    hooks.layers = &ctx.config.injection_layers;
    return sample_loop(*ctx.denoiser, z2, ctx.p_tar, ctx.config.cfg_edit, t_r, ctx.sched, hooks)
        .final_z();
}

std::string report_to_json_text(const EditReport& report) {
    json j;
    j["alpha"] = report.alpha;
    j["alpha_overridden"] = report.alpha_overridden;
    j["t_r"] = report.t_r;
    j["t_r_overridden"] = report.t_r_overridden;
    j["t_r_blend"] = {{"area_ratio", report.t_r_blend_area_ratio},
                      {"psnr_mid", report.t_r_blend_psnr_mid},
                      {"psnr_recon", report.t_r_blend_psnr_recon}};
    j["mask"] = {{"area_ratio", report.mask_area_ratio},
                 {"degenerate", report.mask_degenerate},
                 {"selected_words", report.selected_words}};
    json metrics = json::object();
    for (const auto& [name, rep] : report.metrics) {
        metrics[name] = metric_to_json(rep);
    }
    j["metrics"] = metrics;
    j["artifacts"] = report.artifacts;
    j["timing_ms"] = report.timing_ms;
    j["config"] = config_to_json(report.config);
    return j.dump(2);
}

EditReport edit(const PipelineConfig& config) {
    PipelineContext ctx = stage("config", [&] { return PipelineContext::make(config); });
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) {
        throw FormatError("edit: cannot create output directory '" + config.out_dir + "': " +
                          ec.message());
    }

    EditReport rep;
    rep.config = config;
    auto save_grid = [&](const char* name, const LatentGrid& g) {
        const std::string path = config.out_dir + "/" + name + ".flxl";
        grid_write(g, path);
        rep.artifacts[name] = path;
    };
    auto save_preview = [&](const char* name, const LatentGrid& g) {
        const std::string path = config.out_dir + "/" + name + ".pgm";
        image_export(g, 0, path);
        rep.artifacts[std::string(name) + "_preview"] = path;
    };

    auto t0 = std::chrono::steady_clock::now();
    SourceBranchResult src = stage("source-branch", [&] { return run_source_branch(ctx); });
    rep.timing_ms["source_branch"] = ms_since(t0);
    save_grid("z0", src.z0);
    save_grid("z_top", src.z_top);
    save_grid("recon", src.recon);
    save_preview("z0", src.z0);
    save_preview("recon", src.recon);

    EditMask mask = stage("mask", [&] {
        switch (config.mask.source) {
            case MaskSourceKind::Attention: {
                TrigramSimilarityScorer scorer(ctx.world->caption());
                rep.selected_words =
                    select_edited_words(config.p_src, config.p_tar, src.z0, scorer);
                std::vector<int> indices;
                for (int i = 0; i < ctx.p_tar.count(); ++i) {
                    const std::string& w = ctx.p_tar.tokens[static_cast<std::size_t>(i)].word;
                    if (std::find(rep.selected_words.begin(), rep.selected_words.end(), w) !=
                        rep.selected_words.end()) {
                        indices.push_back(i);
                    }
                }
                if (indices.empty()) {
                    rep.mask_degenerate = true;
                    return EditMask(config.height, config.width, 0);
                }
                MaskExtraction ext = extract_mask(src.maps.front(), indices,
                                                  config.mask.threshold, config.height,
                                                  config.width);
                rep.mask_degenerate = ext.degenerate_range;
                return ext.mask;
            }
            case MaskSourceKind::Rect: {
                EditMask m = make_rect_mask(config.mask.rect);
                if (m.height != config.height || m.width != config.width) {
                    m = resample_nn(m, config.height, config.width);
                }
                return m;
            }
            default: {
                EditMask m = mask_read(config.mask.path);
                if (m.height != config.height || m.width != config.width) {
                    m = resample_nn(m, config.height, config.width);
                }
                return m;
            }
        }
    });
    rep.mask_area_ratio = area_ratio(mask);
    {
        const std::string path = config.out_dir + "/mask.pgm";
        mask_write(mask, path);
        rep.artifacts["mask"] = path;
    }

    LatentGrid z_prime = stage("refine", [&] {
        rep.alpha_overridden = config.refine.alpha_fixed;
        rep.alpha = config.refine.alpha_fixed
                        ? config.refine.alpha
                        : compute_alpha(rep.mask_area_ratio, config.refine.alpha_min,
                                        config.refine.alpha_max);
        RefineParams params;
        params.alpha = rep.alpha;
        params.alpha_min = config.refine.alpha_min;
        params.alpha_max = config.refine.alpha_max;
        params.noise_std = config.refine.noise_std;
        params.filter_sigma = config.refine.filter_sigma;
        params.seed = config.refine.seed_set
                          ? config.refine.seed
                          : CounterRng::substream(config.seed, kRefineNoiseStream);
        return refine_latent(src.z_top, mask, params);
    });
    save_grid("z_top_refined", z_prime);

    t0 = std::chrono::steady_clock::now();
    LatentGrid i_mid = stage("target-branch", [&] { return run_target_branch(ctx, z_prime); });
    rep.timing_ms["target_branch"] = ms_since(t0);
    save_grid("mid", i_mid);
    save_preview("mid", i_mid);

    stage("depth", [&] {
        rep.t_r_blend_area_ratio = rep.mask_area_ratio;
        rep.t_r_blend_psnr_recon = psnr_ref_range(src.z0, src.recon);
        rep.t_r_blend_psnr_mid = psnr_ref_range(src.z0, i_mid);
        if (config.t_r_set) {
            rep.t_r_overridden = true;
            rep.t_r = config.t_r_override;
        } else {
            const auto [r1, r2] = config.t_r_range();
            if (r2 > ctx.sched.steps) {
                throw std::invalid_argument("re-inversion range [" + std::to_string(r1) + ", " +
                                            std::to_string(r2) + "] exceeds the schedule depth " +
                                            std::to_string(ctx.sched.steps) +
                                            "; set t_r explicitly");
            }
            rep.t_r = compute_t_r(r1, r2, rep.t_r_blend_area_ratio, rep.t_r_blend_psnr_mid,
                                  rep.t_r_blend_psnr_recon);
        }
        return 0;
    });

    t0 = std::chrono::steady_clock::now();
    LatentGrid i_tar = stage("retarget-branch",
                             [&] { return run_retarget_branch(ctx, i_mid, src.cache, rep.t_r); });
    rep.timing_ms["retarget_branch"] = ms_since(t0);
    save_grid("target", i_tar);
    save_preview("target", i_tar);

    stage("metrics", [&] {
        const double peak = grid_max(src.z0) - grid_min(src.z0);
        const bool has_masked = mask.area_edit() > 0;
        const bool has_unmasked = mask.area_edit() < mask.area_total();
        const EditMask outside = has_unmasked ? complement(mask) : EditMask();
        const std::pair<const char*, const LatentGrid*> pairs[] = {
            {"src_recon", &src.recon}, {"src_mid", &i_mid}, {"src_tar", &i_tar}};
        for (const auto& [tag, g] : pairs) {
            MetricReport whole;
            whole.computed_over = "whole";
            whole.mse = mse(src.z0, *g);
            whole.psnr = psnr(src.z0, *g, peak);
            whole.ssim = ssim(src.z0, *g);
            rep.metrics[std::string(tag) + ".whole"] = whole;
            if (has_masked) {
                MetricReport inside;
                inside.computed_over = "masked";
                inside.mse = mse(src.z0, *g, &mask);
                inside.psnr = psnr(src.z0, *g, peak, &mask);
                rep.metrics[std::string(tag) + ".masked"] = inside;
            }
            if (has_unmasked) {
                MetricReport out;
                out.computed_over = "unmasked";
                out.mse = mse(src.z0, *g, &outside);
                out.psnr = psnr(src.z0, *g, peak, &outside);
                rep.metrics[std::string(tag) + ".unmasked"] = out;
            }
        }
        return 0;
    });

    const std::string report_path = config.out_dir + "/report.json";
    rep.artifacts["report"] = report_path;
    std::ofstream f(report_path, std::ios::trunc);
    if (!f) {
        throw FormatError("edit: cannot open '" + report_path + "'");
    }
    f << report_to_json_text(rep) << "\n";
    if (!f) {
        throw FormatError("edit: write failed for '" + report_path + "'");
    }
    return rep;
}

std::vector<SweepRow> frequency_sweep(const LatentGrid& z0, const std::vector<double>& alphas,
                                      const PipelineContext& ctx) {
    if (alphas.empty()) {
        throw std::invalid_argument("frequency_sweep: need at least one alpha");
    }
    for (double a : alphas) {
        if (!(a >= 0.0 && a <= 1.0)) {
            throw std::invalid_argument("frequency_sweep: alpha " + std::to_string(a) +
                                        " outside [0, 1]");
        }
    }
    const LatentGrid z_top =
        invert_loop(*ctx.denoiser, z0, ctx.p_src, ctx.p_tar, ctx.sched).trajectory.final_z();
    auto reconstruct = [&](const LatentGrid& top) {
        return sample_loop(*ctx.denoiser, top, ctx.p_src, 1.0, ctx.sched.steps, ctx.sched)
            .final_z();
    };
    auto score = [&](const char* band, double alpha, const LatentGrid& recon) {
        SweepRow row;
        row.band = band;
        row.alpha = alpha;
        row.psnr_db = psnr_ref_range(z0, recon);
        row.mse = mse(z0, recon);
        row.ssim = ssim(z0, recon);
        return row;
    };

    std::vector<SweepRow> rows;
    rows.push_back(score("none", 1.0, reconstruct(z_top)));
    const double sigma = ctx.config.refine.filter_sigma;
    for (Band band : {Band::Low, Band::High}) {
        for (double alpha : alphas) {
            const LatentGrid shaped = frequency_attenuated_latent(z_top, sigma, alpha, band);
            rows.push_back(
                score(band == Band::Low ? "low" : "high", alpha, reconstruct(shaped)));
        }
    }
    return rows;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
    std::string csv = "band,alpha,psnr_db,mse,ssim\n";
    char line[160];
    for (const SweepRow& r : rows) {
        std::snprintf(line, sizeof(line), "%s,%.10g,%.10g,%.10g,%.10g\n", r.band.c_str(),
                      r.alpha, r.psnr_db, r.mse, r.ssim);
        csv += line;
    }
    return csv;
}

std::vector<EditReport> mask_size_ablation(const PipelineConfig& config,
                                           const std::vector<RectSpec>& rects) {
    std::vector<EditReport> reports;
    reports.reserve(rects.size());
    for (std::size_t i = 0; i < rects.size(); ++i) {
        PipelineConfig c = config;
        c.mask.source = MaskSourceKind::Rect;
        c.mask.rect = rects[i];
        c.out_dir = config.out_dir + "/ablate_" + std::to_string(i);
        reports.push_back(edit(c));
    }
    return reports;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const InjectionMissError*>(&e) != nullptr) {
        return 4;
    }
    if (dynamic_cast<const NumericError*>(&e) != nullptr) {
        return 3;
    }
    if (dynamic_cast<const FormatError*>(&e) != nullptr) {
        return 2;
    }
    if (dynamic_cast<const std::invalid_argument*>(&e) != nullptr) {
        return 2;
    }
    return 1;
}

}  // namespace latentforge
