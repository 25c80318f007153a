#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "latentforge/denoiser.hpp"
#include "latentforge/grid.hpp"
#include "latentforge/schedule.hpp"

namespace latentforge {

enum class Direction { Denoising, Inverting };

struct TrajectoryPoint {
    int t;
    LatentGrid z;
};

// Ordered latents along one deterministic pass; step indices strictly
// decrease when denoising and strictly increase when inverting. The first
// point is always the starting latent.
struct Trajectory {
    Direction direction = Direction::Denoising;
    std::vector<TrajectoryPoint> points;

    const LatentGrid& final_z() const { return points.back().z; }
};

// Per-step controls for a loop. `mode`/`cache`/`layers` select attention
// recording or replay on the denoiser calls; `on_step` observes each newly
// produced point and must not mutate it; a nonempty `dump_dir` writes every
// trajectory point as FLXL.
struct StepHooks {
    AttnMode mode = AttnMode::Plain;
    FeatureCache* cache = nullptr;
    const std::vector<std::string>* layers = nullptr;
    std::function<void(int t, const LatentGrid& z)> on_step;
    std::string dump_dir;
};

// Deterministic denoising from start_t down to 0. With cfg_scale = 1 the
// denoiser runs once per step on `prompt`; with cfg_scale > 1 it runs twice
// (unconditional then conditional) and the predictions are guidance-combined.
// Under Record mode the cache is written on the conditional pass only; under
// Replay cached features substitute on both passes. start_t = 0 returns a
// trajectory holding just the input.
Trajectory sample_loop(const Denoiser& den, const LatentGrid& z_start,
                       const PromptEmbedding& prompt, double cfg_scale, int start_t,
                       const NoiseSchedule& sched, const StepHooks& hooks = {});

struct InversionResult {
    Trajectory trajectory;                 // (0, z_0) through (T, z_T)
    std::vector<CrossAttentionMap> maps;   // one per step t = 1..T, empty for
                                           // backends without attention
};

// Full inversion of a clean latent at guidance scale 1. The noise prediction
// is conditioned on p_src; p_tar is used only to capture the cross-attention
// maps, one per step, evaluated at the step's input latent. Hooks here are
// observation-only: mode must be Plain.
InversionResult invert_loop(const Denoiser& den, const LatentGrid& z0,
                            const PromptEmbedding& p_src, const PromptEmbedding& p_tar,
                            const NoiseSchedule& sched, const StepHooks& hooks = {});

// Partial inversion of an edited latent: steps 1..t_r conditioned on p_tar
// at guidance scale 1. Returns the latent at step t_r.
LatentGrid reinvert(const LatentGrid& z_mid_0, const PromptEmbedding& p_tar, int t_r,
                    const NoiseSchedule& sched, const Denoiser& den);

}  // namespace latentforge
