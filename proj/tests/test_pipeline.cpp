#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "latentforge/errors.hpp"
#include "latentforge/grid.hpp"
#include "latentforge/metrics.hpp"
#include "latentforge/pipeline.hpp"

using namespace latentforge;
using nlohmann::json;

namespace {

std::string tmp_dir(const char* name) {
    const std::string dir = std::string("test_tmp_pipeline/") + name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Small, fast analytic run with a rectangle mask.
PipelineConfig small_config(const std::string& out_dir) {
    PipelineConfig c;
    c.p_src = "cat";
    c.p_tar = "dog";
    c.backend = BackendKind::Analytic;
    c.seed = 11;
    c.channels = 2;
    c.height = 16;
    c.width = 16;
    c.schedule.steps = 12;
    c.cfg_edit = 7.5;
    c.mask.source = MaskSourceKind::Rect;
    c.mask.rect = RectSpec{4, 4, 12, 12, 16, 16};
    c.t_r_set = true;
    c.t_r_override = 6;
    c.out_dir = out_dir;
    return c;
}

// Attention-backend run on a patch-divisible grid.
PipelineConfig attention_config(const std::string& out_dir) {
    PipelineConfig c = small_config(out_dir);
    c.backend = BackendKind::Attention;
    c.mask.source = MaskSourceKind::Attention;
    c.mask.threshold = 0.3;
    return c;
}

}  // namespace

TEST_CASE("config json round trip preserves every field") {
    PipelineConfig c = small_config("outdir");
    c.world_words = {"cat", "dog", "boat"};
    c.prior_var = 0.07;
    c.schedule.kind = ScheduleKind::Linear;
    c.refine.alpha_fixed = true;
    c.refine.alpha = 0.8;
    c.refine.seed_set = true;
    c.refine.seed = 99;
    c.edit_kind = EditKind::NonRigid;
    c.injection_layers = {"enc", "dec"};
    c.z0_path = "z.flxl";
    c.mask.path = "m.pgm";

    PipelineConfig back = config_from_json_text(config_to_json_text(c));
    CHECK(back.p_src == "cat");
    CHECK(back.p_tar == "dog");
    CHECK(back.backend == BackendKind::Analytic);
    CHECK(back.seed == 11);
    CHECK(back.world_words == c.world_words);
    CHECK(back.channels == 2);
    CHECK(back.prior_var == 0.07);
    CHECK(back.schedule.steps == 12);
    CHECK(back.schedule.kind == ScheduleKind::Linear);
    CHECK(back.cfg_edit == 7.5);
    CHECK(back.z0_path == "z.flxl");
    CHECK(back.mask.source == MaskSourceKind::Rect);
    CHECK(back.mask.rect.x0 == 4);
    CHECK(back.mask.rect.height == 16);
    CHECK(back.refine.alpha_fixed);
    CHECK(back.refine.alpha == 0.8);
    CHECK(back.refine.seed_set);
    CHECK(back.refine.seed == 99);
    CHECK(back.edit_kind == EditKind::NonRigid);
    CHECK(back.t_r_set);
    CHECK(back.t_r_override == 6);
    CHECK(back.injection_layers == c.injection_layers);
    CHECK(back.out_dir == "outdir");
}

TEST_CASE("config parsing is strict about keys and types") {
    CHECK_THROWS_AS(config_from_json_text("{"), FormatError);
    CHECK_THROWS_AS(config_from_json_text(R"({"p_src":"a"})"), std::invalid_argument);
    CHECK_THROWS_AS(config_from_json_text(R"({"p_src":"a","p_tar":"b","bogus":1})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(config_from_json_text(R"({"p_src":"a","p_tar":"b","seed":"x"})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        config_from_json_text(R"({"p_src":"a","p_tar":"b","backend":"quantum"})"),
        std::invalid_argument);
    CHECK_THROWS_AS(
        config_from_json_text(R"({"p_src":"a","p_tar":"b","schedule":{"step":1}})"),
        std::invalid_argument);

    // minimal config gets all defaults
    PipelineConfig c = config_from_json_text(R"({"p_src":"a","p_tar":"b"})");
    CHECK(c.backend == BackendKind::Analytic);
    CHECK(c.schedule.steps == 50);
    CHECK(c.cfg_edit == 7.5);
    CHECK(!c.t_r_set);
    CHECK(!c.refine.alpha_fixed);
    CHECK(c.injection_layers == std::vector<std::string>{"dec"});

    // null means "derive": alpha from the area rule, t_r from the blend
    PipelineConfig n = config_from_json_text(
        R"({"p_src":"a","p_tar":"b","t_r":null,"refine":{"alpha":null,"seed":null}})");
    CHECK(!n.t_r_set);
    CHECK(!n.refine.alpha_fixed);
    CHECK(!n.refine.seed_set);
}

TEST_CASE("config validation rejects inconsistent runs") {
    PipelineConfig c = small_config("o");
    c.validate();

    PipelineConfig bad = c;
    bad.p_src = "";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.cfg_source = 2.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.cfg_edit = 0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.backend = BackendKind::Attention;
    bad.height = 15;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.mask.source = MaskSourceKind::Attention;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);  // needs the attention backend

    bad = c;
    bad.mask.source = MaskSourceKind::File;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);  // needs a path

    bad = c;
    bad.refine.alpha_min = 0.9;
    bad.refine.alpha_max = 0.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.refine.alpha_fixed = true;
    bad.refine.alpha = 1.5;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.t_r_override = 13;  // deeper than the 12-step schedule
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.injection_layers = {"mid"};
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    bad = c;
    bad.out_dir = "";
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

    CHECK(c.t_r_range() == std::pair{10, 30});
    PipelineConfig nr = c;
    nr.edit_kind = EditKind::NonRigid;
    CHECK(nr.t_r_range() == std::pair{30, 50});
}

TEST_CASE("context construction and source latent loading") {
    PipelineConfig c = small_config(tmp_dir("ctx"));
    PipelineContext ctx = PipelineContext::make(c);
    CHECK(ctx.sched.steps == 12);
    CHECK(ctx.p_src.count() == 1);
    REQUIRE(ctx.world != nullptr);
    CHECK(ctx.world->components().size() == 2);  // union of prompt words

    LatentGrid z0 = ctx.load_z0();
    CHECK(z0.channels == 2);
    CHECK(z0.height == 16);

    // an explicit world list wins over the union
    PipelineConfig w = c;
    w.world_words = {"cat", "dog", "boat"};
    CHECK(PipelineContext::make(w).world->components().size() == 3);

    // the analytic backend must know every prompt word
    PipelineConfig missing = c;
    missing.world_words = {"cat"};
    CHECK_THROWS_AS(PipelineContext::make(missing), std::invalid_argument);

    // loading a latent from disk enforces the configured shape
    LatentGrid wrong(1, 16, 16, 0.0f);
    const std::string zpath = c.out_dir + "/z0_wrong.flxl";
    grid_write(wrong, zpath);
    PipelineConfig withz = c;
    withz.z0_path = zpath;
    CHECK_THROWS_AS(PipelineContext::make(withz).load_z0(), std::invalid_argument);
}

TEST_CASE("source branch records a sealed full-depth cache") {
    PipelineConfig c = attention_config(tmp_dir("srcbranch"));
    PipelineContext ctx = PipelineContext::make(c);
    SourceBranchResult src = run_source_branch(ctx);

    CHECK(src.z0.same_shape(src.recon));
    CHECK(src.cache.sealed());
    CHECK(src.cache.entries_for_layer("dec") == 12);
    CHECK(src.maps.size() == 12);
    CHECK(src.maps.front().tokens == ctx.p_tar.count());
    CHECK(src.maps.front().height == 4);

    // the analytic backend runs the same branch without maps or entries
    PipelineConfig a = small_config(tmp_dir("srcbranch_analytic"));
    a.schedule.steps = 50;
    a.t_r_override = 10;
    PipelineContext actx = PipelineContext::make(a);
    SourceBranchResult asrc = run_source_branch(actx);
    CHECK(asrc.cache.sealed());
    CHECK(asrc.cache.size() == 0);
    CHECK(asrc.maps.empty());
    CHECK(relative_l2(asrc.recon, asrc.z0) < 0.15);
}

TEST_CASE("retarget branch demands a sealed cache and a valid depth") {
    PipelineConfig c = attention_config(tmp_dir("retarget"));
    PipelineContext ctx = PipelineContext::make(c);
    SourceBranchResult src = run_source_branch(ctx);

    LatentGrid i_tar = run_retarget_branch(ctx, src.recon, src.cache, 6);
    CHECK(i_tar.same_shape(src.recon));

    FeatureCache open_cache;
    CHECK_THROWS_AS(run_retarget_branch(ctx, src.recon, open_cache, 6), std::logic_error);
    CHECK_THROWS_AS(run_retarget_branch(ctx, src.recon, src.cache, 0), std::invalid_argument);
    CHECK_THROWS_AS(run_retarget_branch(ctx, src.recon, src.cache, 13), std::invalid_argument);
}

TEST_CASE("a full edit produces a complete report and artifact set") {
    const std::string dir = tmp_dir("edit_full");
    PipelineConfig c = small_config(dir);
    EditReport rep = edit(c);

    CHECK(rep.alpha == doctest::Approx(compute_alpha(rep.mask_area_ratio)));
    CHECK(!rep.alpha_overridden);
    CHECK(rep.t_r == 6);
    CHECK(rep.t_r_overridden);
    CHECK(rep.mask_area_ratio == doctest::Approx(64.0 / 256.0));
    CHECK(!rep.mask_degenerate);

    for (const char* key : {"src_recon.whole", "src_recon.masked", "src_recon.unmasked",
                            "src_mid.whole", "src_tar.whole", "src_tar.masked",
                            "src_tar.unmasked"}) {
        INFO(key);
        CHECK(rep.metrics.count(key) == 1);
    }
    CHECK(rep.metrics.at("src_recon.whole").psnr > 0.0);
    CHECK(rep.metrics.at("src_recon.masked").computed_over == "masked");

    for (const char* name : {"z0", "z_top", "z_top_refined", "recon", "mid", "target", "mask",
                             "report", "z0_preview", "recon_preview", "mid_preview",
                             "target_preview"}) {
        INFO(name);
        REQUIRE(rep.artifacts.count(name) == 1);
        CHECK(std::filesystem::exists(rep.artifacts.at(name)));
    }
    CHECK(rep.timing_ms.count("source_branch") == 1);
    CHECK(rep.timing_ms.count("target_branch") == 1);
    CHECK(rep.timing_ms.count("retarget_branch") == 1);

    // the report on disk parses and echoes the config
    std::ifstream f(rep.artifacts.at("report"));
    json j = json::parse(f);
    CHECK(j.at("alpha").get<double>() == doctest::Approx(rep.alpha));
    CHECK(j.at("config").at("p_src").get<std::string>() == "cat");
    CHECK(j.at("metrics").at("src_tar.whole").contains("psnr_db"));

    // the mask artifact holds the configured rectangle
    EditMask m = mask_read(rep.artifacts.at("mask"));
    CHECK(m.area_edit() == 64);
}

TEST_CASE("edits are deterministic end to end") {
    const std::string d1 = tmp_dir("edit_det1");
    const std::string d2 = tmp_dir("edit_det2");
    PipelineConfig c1 = small_config(d1);
    PipelineConfig c2 = small_config(d2);
    EditReport r1 = edit(c1);
    EditReport r2 = edit(c2);

    CHECK(r1.alpha == r2.alpha);
    CHECK(r1.t_r == r2.t_r);
    for (const auto& [key, m1] : r1.metrics) {
        const MetricReport& m2 = r2.metrics.at(key);
        CHECK(m1.mse == m2.mse);
        CHECK(m1.psnr == m2.psnr);
        CHECK(m1.ssim == m2.ssim);
    }
    for (const char* name : {"z0", "z_top", "z_top_refined", "recon", "mid", "target"}) {
        LatentGrid a = grid_read(r1.artifacts.at(name));
        LatentGrid b = grid_read(r2.artifacts.at(name));
        INFO(name);
        CHECK(a.data == b.data);
    }
}

TEST_CASE("the rework stage only touches the latent inside the mask") {
    const std::string dir = tmp_dir("edit_local");
    PipelineConfig c = small_config(dir);
    EditReport rep = edit(c);

    LatentGrid z_top = grid_read(rep.artifacts.at("z_top"));
    LatentGrid z_ref = grid_read(rep.artifacts.at("z_top_refined"));
    EditMask m = mask_read(rep.artifacts.at("mask"));
    REQUIRE(z_top.same_shape(z_ref));

    int changed = 0;
    for (int ch = 0; ch < z_top.channels; ++ch) {
        for (int y = 0; y < z_top.height; ++y) {
            for (int x = 0; x < z_top.width; ++x) {
                if (m.at(y, x) == 0) {
                    CHECK(z_top.at(ch, y, x) == z_ref.at(ch, y, x));
                } else if (z_top.at(ch, y, x) != z_ref.at(ch, y, x)) {
                    ++changed;
                }
            }
        }
    }
    CHECK(changed > 50);
}

TEST_CASE("an attention-backend edit derives its mask from the maps") {
    const std::string dir = tmp_dir("edit_attn");
    PipelineConfig c = attention_config(dir);
    c.t_r_set = true;
    c.t_r_override = 5;
    EditReport rep = edit(c);

    // the only candidate is the target-only word
    for (const std::string& w : rep.selected_words) {
        CHECK(w == "dog");
    }
    CHECK(std::filesystem::exists(rep.artifacts.at("mask")));
    EditMask m = mask_read(rep.artifacts.at("mask"));
    CHECK(m.height == 16);
    CHECK(m.width == 16);
    if (rep.mask_degenerate) {
        CHECK(m.area_edit() == 0);
    } else {
        CHECK(m.area_edit() > 0);
    }
}

TEST_CASE("the adaptive depth stage fills in the blend inputs") {
    const std::string dir = tmp_dir("edit_blend");
    PipelineConfig c = small_config(dir);
    c.schedule.steps = 40;
    c.t_r_set = false;
    c.edit_kind = EditKind::RigidObject;  // depth range [10, 30]
    EditReport rep = edit(c);

    CHECK(!rep.t_r_overridden);
    CHECK(rep.t_r >= 10);
    CHECK(rep.t_r <= 30);
    CHECK(rep.t_r_blend_psnr_recon > 0.0);
    CHECK(rep.t_r == compute_t_r(10, 30, rep.t_r_blend_area_ratio, rep.t_r_blend_psnr_mid,
                                 rep.t_r_blend_psnr_recon));

    // a schedule shallower than the depth range is a configuration error
    PipelineConfig shallow = small_config(tmp_dir("edit_blend_shallow"));
    shallow.t_r_set = false;
    shallow.schedule.steps = 12;
    CHECK_THROWS_AS(edit(shallow), std::invalid_argument);
}

TEST_CASE("stage failures carry the stage name and leave early artifacts") {
    const std::string dir = tmp_dir("edit_fail");
    PipelineConfig c = small_config(dir);
    c.mask.source = MaskSourceKind::File;
    c.mask.path = dir + "/absent.pgm";
    try {
        edit(c);
        FAIL("expected a mask-stage failure");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("mask") != std::string::npos);
    }
    CHECK(std::filesystem::exists(dir + "/z0.flxl"));
    CHECK(std::filesystem::exists(dir + "/z_top.flxl"));
    CHECK(!std::filesystem::exists(dir + "/report.json"));
}

TEST_CASE("frequency sweep scores the baseline first and hits both bands") {
    PipelineConfig c = small_config(tmp_dir("sweep"));
    PipelineContext ctx = PipelineContext::make(c);
    LatentGrid z0 = ctx.load_z0();

    std::vector<SweepRow> rows = frequency_sweep(z0, {0.0, 0.5, 1.0}, ctx);
    REQUIRE(rows.size() == 7);
    CHECK(rows[0].band == "none");
    CHECK(rows[0].alpha == 1.0);
    CHECK(rows[1].band == "low");
    CHECK(rows[4].band == "high");

    // alpha = 1 rows reproduce the baseline up to float serialization noise
    CHECK(rows[3].psnr_db == doctest::Approx(rows[0].psnr_db).epsilon(1e-3));
    CHECK(rows[6].psnr_db == doctest::Approx(rows[0].psnr_db).epsilon(1e-3));

    const std::string csv = sweep_to_csv(rows);
    CHECK(csv.rfind("band,alpha,psnr_db,mse,ssim\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);

    CHECK_THROWS_AS(frequency_sweep(z0, {}, ctx), std::invalid_argument);
    CHECK_THROWS_AS(frequency_sweep(z0, {1.5}, ctx), std::invalid_argument);
}

TEST_CASE("mask-size ablation runs one edit per rectangle") {
    PipelineConfig c = small_config(tmp_dir("ablate"));
    std::vector<RectSpec> rects;
    rects.push_back(RectSpec{0, 0, 4, 4, 16, 16});
    rects.push_back(RectSpec{0, 0, 12, 12, 16, 16});
    std::vector<EditReport> reports = mask_size_ablation(c, rects);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].mask_area_ratio < reports[1].mask_area_ratio);
    CHECK(reports[0].alpha <= reports[1].alpha);
    CHECK(std::filesystem::exists(c.out_dir + "/ablate_0/report.json"));
    CHECK(std::filesystem::exists(c.out_dir + "/ablate_1/report.json"));

    CHECK(mask_size_ablation(c, {}).empty());
}

TEST_CASE("escaped failures map onto the documented exit codes") {
    CHECK(exit_code_for(std::invalid_argument("x")) == 2);
    CHECK(exit_code_for(FormatError("x")) == 2);
    CHECK(exit_code_for(NumericError("x")) == 3);
    CHECK(exit_code_for(InjectionMissError(3, "dec")) == 4);
    CHECK(exit_code_for(std::logic_error("x")) == 1);
    CHECK(exit_code_for(std::runtime_error("x")) == 1);
}
