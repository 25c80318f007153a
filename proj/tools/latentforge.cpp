#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "latentforge/errors.hpp"
#include "latentforge/pipeline.hpp"

namespace lf = latentforge;

namespace {

// Config loader shared by every subcommand; LATENTFORGE_SEED overrides the
// config's seed when set.
lf::PipelineConfig load_config(const std::string& path) {
    lf::PipelineConfig config = lf::config_from_file(path);
    if (const char* env = std::getenv("LATENTFORGE_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0') {
            throw std::invalid_argument("LATENTFORGE_SEED: '" + std::string(env) +
                                        "' is not an unsigned integer");
        }
        config.seed = static_cast<uint64_t>(v);
    }
    return config;
}

void ensure_out_dir(const lf::PipelineConfig& config) {
    std::error_code ec;
    std::filesystem::create_directories(config.out_dir, ec);
    if (ec) {
        throw lf::FormatError("cannot create output directory '" + config.out_dir + "': " +
                              ec.message());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw lf::FormatError("cannot open '" + path + "'");
    }
    f << text;
    if (!f) {
        throw lf::FormatError("write failed for '" + path + "'");
    }
}

std::vector<double> parse_alpha_list(const std::string& text) {
    std::vector<double> alphas;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) {
            return;
        }
        std::size_t used = 0;
        const double v = std::stod(cur, &used);
        if (used != cur.size()) {
            throw std::invalid_argument("--alphas: bad value '" + cur + "'");
        }
        alphas.push_back(v);
        cur.clear();
    };
    for (char ch : text) {
        if (ch == ',') {
            flush();
        } else {
            cur.push_back(ch);
        }
    }
    flush();
    if (alphas.empty()) {
        throw std::invalid_argument("--alphas: need at least one value");
    }
    return alphas;
}

nlohmann::json metric_json(const lf::LatentGrid& a, const lf::LatentGrid& b,
                           const lf::EditMask* region, bool with_ssim) {
    nlohmann::json j;
    j["mse"] = lf::mse(a, b, region);
    j["psnr_db"] = lf::psnr_ref_range(a, b, region);
    if (with_ssim) {
        j["ssim"] = lf::ssim(a, b);
    }
    return j;
}

void cmd_invert(const std::string& config_path) {
    const lf::PipelineConfig config = load_config(config_path);
    const lf::PipelineContext ctx = lf::PipelineContext::make(config);
    ensure_out_dir(config);
    const lf::LatentGrid z0 = ctx.load_z0();
    const lf::InversionResult inv =
        lf::invert_loop(*ctx.denoiser, z0, ctx.p_src, ctx.p_tar, ctx.sched);
    lf::grid_write(z0, config.out_dir + "/z0.flxl");
    lf::grid_write(inv.trajectory.final_z(), config.out_dir + "/z_top.flxl");
    for (std::size_t i = 0; i < inv.maps.size(); ++i) {
        const lf::CrossAttentionMap& m = inv.maps[i];
        lf::LatentGrid g(m.tokens, m.height, m.width);
        g.data = m.data;
        lf::grid_write(g, config.out_dir + "/maps_t" + std::to_string(i + 1) + ".flxl");
    }
    std::cout << "inverted " << ctx.sched.steps << " steps -> " << config.out_dir
              << "/z_top.flxl (" << inv.maps.size() << " map dumps)\n";
}

void cmd_reconstruct(const std::string& config_path) {
    const lf::PipelineConfig config = load_config(config_path);
    const lf::PipelineContext ctx = lf::PipelineContext::make(config);
    ensure_out_dir(config);
    const lf::SourceBranchResult src = lf::run_source_branch(ctx);
    lf::grid_write(src.z0, config.out_dir + "/z0.flxl");
    lf::grid_write(src.recon, config.out_dir + "/recon.flxl");
    lf::image_export(src.recon, 0, config.out_dir + "/recon.pgm");
    nlohmann::json j;
    j["recon"] = metric_json(src.z0, src.recon, nullptr, true);
    j["artifacts"] = {{"z0", config.out_dir + "/z0.flxl"},
                      {"recon", config.out_dir + "/recon.flxl"},
                      {"recon_preview", config.out_dir + "/recon.pgm"}};
    std::cout << j.dump(2) << "\n";
}

void cmd_edit(const std::string& config_path) {
    const lf::PipelineConfig config = load_config(config_path);
    const lf::EditReport report = lf::edit(config);
    std::cout << lf::report_to_json_text(report) << "\n";
}

void cmd_sweep_freq(const std::string& config_path, const std::string& alphas_text) {
    const lf::PipelineConfig config = load_config(config_path);
    const std::vector<double> alphas = parse_alpha_list(alphas_text);
    const lf::PipelineContext ctx = lf::PipelineContext::make(config);
    ensure_out_dir(config);
    const lf::LatentGrid z0 = ctx.load_z0();
    const std::vector<lf::SweepRow> rows = lf::frequency_sweep(z0, alphas, ctx);
    const std::string csv = lf::sweep_to_csv(rows);
    write_text(config.out_dir + "/sweep_freq.csv", csv);
    std::cout << csv;
}

void cmd_sweep_mask(const std::string& config_path, const std::string& rects_path) {
    const lf::PipelineConfig config = load_config(config_path);
    const std::vector<lf::RectSpec> rects = lf::read_rect_list(rects_path);
    const std::vector<lf::EditReport> reports = lf::mask_size_ablation(config, rects);
    nlohmann::json arr = nlohmann::json::array();
    for (const lf::EditReport& rep : reports) {
        nlohmann::json j;
        j["out_dir"] = rep.config.out_dir;
        j["area_ratio"] = rep.mask_area_ratio;
        j["alpha"] = rep.alpha;
        j["t_r"] = rep.t_r;
        auto it = rep.metrics.find("src_tar.unmasked");
        if (it != rep.metrics.end()) {
            j["unmasked_psnr_db"] = it->second.psnr;
        }
        arr.push_back(j);
    }
    std::cout << arr.dump(2) << "\n";
}

void cmd_make_mask(const std::string& config_path, const std::string& mode,
                   const std::string& out_path) {
    lf::PipelineConfig config = load_config(config_path);
    if (mode == "rect") {
        lf::EditMask mask = lf::make_rect_mask(config.mask.rect);
        if (mask.height != config.height || mask.width != config.width) {
            mask = lf::resample_nn(mask, config.height, config.width);
        }
        lf::mask_write(mask, out_path);
    } else if (mode == "attention") {
        config.mask.source = lf::MaskSourceKind::Attention;
        const lf::PipelineContext ctx = lf::PipelineContext::make(config);
        const lf::LatentGrid z0 = ctx.load_z0();
        const lf::InversionResult inv =
            lf::invert_loop(*ctx.denoiser, z0, ctx.p_src, ctx.p_tar, ctx.sched);
        const lf::TrigramSimilarityScorer scorer(ctx.world->caption());
        const std::vector<std::string> words =
            lf::select_edited_words(config.p_src, config.p_tar, z0, scorer);
        std::vector<int> indices;
        for (int i = 0; i < ctx.p_tar.count(); ++i) {
            const std::string& w = ctx.p_tar.tokens[static_cast<std::size_t>(i)].word;
            if (std::find(words.begin(), words.end(), w) != words.end()) {
                indices.push_back(i);
            }
        }
        if (indices.empty()) {
            lf::mask_write(lf::EditMask(config.height, config.width, 0), out_path);
            std::cerr << "warning: no edit words selected, mask is empty\n";
        } else {
            const lf::MaskExtraction ext =
                lf::extract_mask(inv.maps.front(), indices, config.mask.threshold,
                                 config.height, config.width);
            if (ext.degenerate_range) {
                std::cerr << "warning: constant attention map, mask is empty\n";
            }
            lf::mask_write(ext.mask, out_path);
        }
    } else {
        throw std::invalid_argument("--mode must be 'attention' or 'rect'");
    }
    std::cout << "wrote " << out_path << "\n";
}

void cmd_metrics(const std::string& a_path, const std::string& b_path,
                 const std::string& mask_path) {
    const lf::LatentGrid a = lf::grid_read(a_path);
    const lf::LatentGrid b = lf::grid_read(b_path);
    nlohmann::json j;
    j["whole"] = metric_json(a, b, nullptr, true);
    if (!mask_path.empty()) {
        const lf::EditMask mask = lf::mask_read(mask_path);
        if (mask.height != a.height || mask.width != a.width) {
            throw std::invalid_argument("metrics: mask resolution does not match the grids");
        }
        if (mask.area_edit() > 0) {
            j["masked"] = metric_json(a, b, &mask, false);
        }
        if (mask.area_edit() < mask.area_total()) {
            const lf::EditMask outside = lf::complement(mask);
            j["unmasked"] = metric_json(a, b, &outside, false);
        }
    }
    std::cout << j.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"latent editing pipeline driver"};
    app.require_subcommand(1);

    std::string config_path;
    std::string alphas_text = "0,0.2,0.4,0.6,0.8,1";
    std::string rects_path;
    std::string mode;
    std::string out_path;
    std::string a_path;
    std::string b_path;
    std::string mask_path;

    CLI::App* invert = app.add_subcommand("invert", "invert the source latent, dump maps");
    invert->add_option("--config", config_path, "pipeline config JSON")->required();

    CLI::App* reconstruct =
        app.add_subcommand("reconstruct", "invert then resample unguided, report metrics");
    reconstruct->add_option("--config", config_path, "pipeline config JSON")->required();

    CLI::App* edit_cmd = app.add_subcommand("edit", "full three-branch edit run");
    edit_cmd->add_option("--config", config_path, "pipeline config JSON")->required();

    CLI::App* sweep_freq =
        app.add_subcommand("sweep-freq", "band-attenuation reconstruction sweep, CSV out");
    sweep_freq->add_option("--config", config_path, "pipeline config JSON")->required();
    sweep_freq->add_option("--alphas", alphas_text, "comma-separated attenuation factors");

    CLI::App* sweep_mask =
        app.add_subcommand("sweep-mask", "one edit per rectangle from a JSON list");
    sweep_mask->add_option("--config", config_path, "pipeline config JSON")->required();
    sweep_mask->add_option("--rects", rects_path, "JSON rectangle list")->required();

    CLI::App* make_mask = app.add_subcommand("make-mask", "write an edit mask as PGM");
    make_mask->add_option("--config", config_path, "pipeline config JSON")->required();
    make_mask->add_option("--mode", mode, "attention or rect")->required();
    make_mask->add_option("--out", out_path, "output PGM path")->required();

    CLI::App* metrics_cmd = app.add_subcommand("metrics", "compare two latent files");
    metrics_cmd->add_option("--a", a_path, "reference FLXL")->required();
    metrics_cmd->add_option("--b", b_path, "candidate FLXL")->required();
    metrics_cmd->add_option("--mask", mask_path, "optional region mask PGM");

    try {
        app.parse(argc, argv);
        if (invert->parsed()) {
            cmd_invert(config_path);
        } else if (reconstruct->parsed()) {
            cmd_reconstruct(config_path);
        } else if (edit_cmd->parsed()) {
            cmd_edit(config_path);
        } else if (sweep_freq->parsed()) {
            cmd_sweep_freq(config_path, alphas_text);
        } else if (sweep_mask->parsed()) {
            cmd_sweep_mask(config_path, rects_path);
        } else if (make_mask->parsed()) {
            cmd_make_mask(config_path, mode, out_path);
        } else if (metrics_cmd->parsed()) {
            cmd_metrics(a_path, b_path, mask_path);
        }
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return lf::exit_code_for(e);
    }
    return 0;
}
