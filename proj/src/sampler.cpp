#include "latentforge/sampler.hpp"

#include <stdexcept>
#include <string>
#include <utility>

#include "latentforge/errors.hpp"

namespace latentforge {

namespace {

// Rethrows denoiser failures with the loop name and step index prepended.
// InjectionMissError already names its (step, layer) and keeps its type so
// the CLI exit-code mapping stays intact; logic errors pass through.
template <class Fn>
LatentGrid eval_with_context(const char* loop, int t, Fn&& fn) {
    try {
        return fn();
    } catch (const InjectionMissError&) {
        throw;
    } catch (const NumericError& e) {
        throw NumericError(std::string(loop) + " step " + std::to_string(t) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(std::string(loop) + " step " + std::to_string(t) + ": " +
                                    e.what());
    }
}

LatentGrid predict_eps(const Denoiser& den, const LatentGrid& z, int t,
                       const PromptEmbedding& prompt, double cfg_scale,
                       const NoiseSchedule& sched, const StepHooks& hooks, const char* loop) {
    AttnRequest cond;
    cond.mode = hooks.mode;
    cond.cache = hooks.cache;
    cond.layers = hooks.layers;
    if (cfg_scale == 1.0) {
        return eval_with_context(loop, t, [&] { return den.eps(z, t, prompt, sched, cond); });
    }
    // Recording happens on the conditional pass only, so one cache entry
    // exists per (step, layer); replay substitutes on both passes.
    AttnRequest uncond = cond;
    if (uncond.mode == AttnMode::Record) {
        uncond.mode = AttnMode::Plain;
        uncond.cache = nullptr;
        uncond.layers = nullptr;
    }
    LatentGrid eps_u = eval_with_context(
        loop, t, [&] { return den.eps(z, t, PromptEmbedding::none(), sched, uncond); });
    LatentGrid eps_c =
        eval_with_context(loop, t, [&] { return den.eps(z, t, prompt, sched, cond); });
    return cfg_combine(eps_u, eps_c, cfg_scale);
}

void emit_point(const Trajectory& traj, const StepHooks& hooks, bool is_start) {
    const TrajectoryPoint& p = traj.points.back();
    if (!hooks.dump_dir.empty()) {
        const char* prefix = traj.direction == Direction::Denoising ? "den" : "inv";
        grid_write(p.z, hooks.dump_dir + "/" + prefix + "_t" + std::to_string(p.t) + ".flxl");
    }
    if (hooks.on_step && !is_start) {
        hooks.on_step(p.t, p.z);
    }
}

}  // namespace

Trajectory sample_loop(const Denoiser& den, const LatentGrid& z_start,
                       const PromptEmbedding& prompt, double cfg_scale, int start_t,
                       const NoiseSchedule& sched, const StepHooks& hooks) {
    require_nonempty(z_start, "sample_loop");
    sched.validate();
    if (start_t < 0 || start_t > sched.steps) {
        throw std::invalid_argument("sample_loop: start step " + std::to_string(start_t) +
                                    " outside [0, " + std::to_string(sched.steps) + "]");
    }
    if (!(cfg_scale >= 1.0)) {
        throw std::invalid_argument("sample_loop: guidance scale must be >= 1");
    }
    if (hooks.mode != AttnMode::Plain && hooks.cache == nullptr) {
        throw std::invalid_argument("sample_loop: record/replay hooks need a cache");
    }

    Trajectory traj;
    traj.direction = Direction::Denoising;
    traj.points.push_back(TrajectoryPoint{start_t, z_start});
    emit_point(traj, hooks, true);
    for (int t = start_t; t >= 1; --t) {
        const LatentGrid& z = traj.points.back().z;
        LatentGrid eps =
            predict_eps(den, z, t, prompt, cfg_scale, sched, hooks, "sample_loop");
        traj.points.push_back(TrajectoryPoint{t - 1, ddim_step(z, eps, t, sched)});
        emit_point(traj, hooks, false);
    }
    return traj;
}

InversionResult invert_loop(const Denoiser& den, const LatentGrid& z0,
                            const PromptEmbedding& p_src, const PromptEmbedding& p_tar,
                            const NoiseSchedule& sched, const StepHooks& hooks) {
    require_nonempty(z0, "invert_loop");
    sched.validate();
    if (hooks.mode != AttnMode::Plain) {
        throw std::invalid_argument("invert_loop: hooks are observation-only here");
    }

    InversionResult res;
    res.trajectory.direction = Direction::Inverting;
    res.trajectory.points.push_back(TrajectoryPoint{0, z0});
    emit_point(res.trajectory, hooks, true);
    const bool capture = den.exposes_attention();
    if (capture) {
        res.maps.reserve(static_cast<std::size_t>(sched.steps));
    }
    for (int t = 1; t <= sched.steps; ++t) {
        const LatentGrid& z_prev = res.trajectory.points.back().z;
        if (capture) {
            res.maps.push_back(den.cross_attention_map(z_prev, t, p_tar, sched));
        }
        LatentGrid eps = eval_with_context("invert_loop", t, [&] {
            return den.eps(z_prev, t, p_src, sched, AttnRequest{});
        });
        res.trajectory.points.push_back(
            TrajectoryPoint{t, ddim_invert_step(z_prev, eps, t, sched)});
        emit_point(res.trajectory, hooks, false);
    }
    return res;
}

LatentGrid reinvert(const LatentGrid& z_mid_0, const PromptEmbedding& p_tar, int t_r,
                    const NoiseSchedule& sched, const Denoiser& den) {
    require_nonempty(z_mid_0, "reinvert");
    sched.validate();
    if (t_r < 1 || t_r > sched.steps) {
        throw std::invalid_argument("reinvert: depth " + std::to_string(t_r) + " outside [1, " +
                                    std::to_string(sched.steps) + "]");
    }
    LatentGrid z = z_mid_0;
    for (int t = 1; t <= t_r; ++t) {
        LatentGrid eps = eval_with_context("reinvert", t, [&] {
            return den.eps(z, t, p_tar, sched, AttnRequest{});
        });
        z = ddim_invert_step(z, eps, t, sched);
    }
    return z;
}

}  // namespace latentforge
