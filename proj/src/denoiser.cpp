#include "latentforge/denoiser.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "latentforge/errors.hpp"
#include "latentforge/parallel.hpp"

namespace latentforge {

namespace {

void check_step(int t, const NoiseSchedule& sched, const char* op) {
    if (t < 1 || t > sched.steps) {
        throw std::invalid_argument(std::string(op) + ": step " + std::to_string(t) +
                                    " outside [1, " + std::to_string(sched.steps) + "]");
    }
}

LatentGrid mat_as_grid(const Mat& m) {
    LatentGrid g(1, m.rows, m.cols);
    g.data.assign(m.a.begin(), m.a.end());
    return g;
}

Mat add_mats(const Mat& x, const Mat& y) {
    if (!x.same_shape(y)) {
        throw std::invalid_argument("add_mats: shape mismatch");
    }
    Mat out(x.rows, x.cols);
    const std::size_t n = x.a.size();
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        out.a[static_cast<std::size_t>(i)] =
            x.a[static_cast<std::size_t>(i)] + y.a[static_cast<std::size_t>(i)];
    }
    return out;
}

bool list_has(const std::vector<std::string>& layers, const char* name) {
    return std::find(layers.begin(), layers.end(), name) != layers.end();
}

}  // namespace

bool AttnRequest::wants(const std::string& layer) const {
    return layers != nullptr && std::find(layers->begin(), layers->end(), layer) != layers->end();
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) {
                words.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(ch);
        }
    }
    if (!cur.empty()) {
        words.push_back(cur);
    }
    return words;
}

PromptEmbedding embed_prompt(const std::string& text) {
    const std::vector<std::string> words = split_words(text);
    if (words.empty()) {
        throw std::invalid_argument("embed_prompt: prompt must contain at least one word");
    }
    PromptEmbedding emb;
    emb.tokens.reserve(words.size());
    for (const std::string& w : words) {
        PromptToken tok;
        tok.word = w;
        tok.vec.resize(PromptEmbedding::kWidth);
        const uint64_t s = CounterRng::substream(hash64(w), 0xE3B);
        for (int i = 0; i < PromptEmbedding::kWidth; ++i) {
            tok.vec[static_cast<std::size_t>(i)] =
                static_cast<float>(CounterRng::gaussian_at(s, static_cast<uint64_t>(i)));
        }
        emb.tokens.push_back(std::move(tok));
    }
    return emb;
}

void FeatureCache::record(int step, const std::string& layer, FeatureKV kv) {
    if (sealed_) {
        throw std::logic_error("FeatureCache: record after seal");
    }
    if (kv.k.rows != kv.v.rows || kv.k.cols <= 0 || kv.v.cols <= 0) {
        throw std::invalid_argument("FeatureCache: inconsistent K/V dimensions");
    }
    auto key = std::make_pair(step, layer);
    if (entries_.count(key) != 0) {
        throw std::invalid_argument("FeatureCache: duplicate entry for step " +
                                    std::to_string(step) + ", layer '" + layer + "'");
    }
    entries_.emplace(std::move(key), std::move(kv));
}

const FeatureKV& FeatureCache::require(int step, const std::string& layer) const {
    if (!sealed_) {
        throw std::logic_error("FeatureCache: replay read before seal");
    }
    auto it = entries_.find(std::make_pair(step, layer));
    if (it == entries_.end()) {
        throw InjectionMissError(step, layer);
    }
    return it->second;
}

const FeatureKV* FeatureCache::find(int step, const std::string& layer) const {
    auto it = entries_.find(std::make_pair(step, layer));
    return it == entries_.end() ? nullptr : &it->second;
}

int FeatureCache::entries_for_layer(const std::string& layer) const {
    int n = 0;
    for (const auto& [key, kv] : entries_) {
        if (key.second == layer) {
            ++n;
        }
    }
    return n;
}

void FeatureCache::dump(const std::string& dir) const {
    for (const auto& [key, kv] : entries_) {
        const std::string stem = dir + "/t" + std::to_string(key.first) + "_" + key.second;
        grid_write(mat_as_grid(kv.k), stem + "_k.flxl");
        grid_write(mat_as_grid(kv.v), stem + "_v.flxl");
    }
}

CrossAttentionMap Denoiser::cross_attention_map(const LatentGrid&, int, const PromptEmbedding&,
                                                const NoiseSchedule&) const {
    throw std::logic_error("cross_attention_map: this backend exposes no attention maps");
}

GaussianWorld::GaussianWorld(std::vector<WorldComponent> components, double prior_var,
                             std::string caption)
    : components_(std::move(components)), prior_var_(prior_var), caption_(std::move(caption)) {
    if (components_.empty()) {
        throw std::invalid_argument("GaussianWorld: need at least one component");
    }
    if (!(prior_var_ >= 0.0) || !std::isfinite(prior_var_)) {
        throw std::invalid_argument("GaussianWorld: prior_var must be finite and >= 0");
    }
    for (std::size_t i = 1; i < components_.size(); ++i) {
        require_same_shape(components_[0].mean, components_[i].mean, "GaussianWorld");
    }
    for (const auto& comp : components_) {
        if (!(comp.weight > 0.0)) {
            throw std::invalid_argument("GaussianWorld: component weights must be positive");
        }
        validate_finite(comp.mean, "GaussianWorld");
    }
}

std::vector<int> GaussianWorld::active_components(const PromptEmbedding& prompt) const {
    std::vector<int> active;
    if (prompt.unconditional()) {
        active.resize(components_.size());
        for (std::size_t i = 0; i < components_.size(); ++i) {
            active[i] = static_cast<int>(i);
        }
        return active;
    }
    for (const PromptToken& tok : prompt.tokens) {
        int found = -1;
        for (std::size_t i = 0; i < components_.size(); ++i) {
            if (components_[i].word == tok.word) {
                found = static_cast<int>(i);
                break;
            }
        }
        if (found < 0) {
            throw std::invalid_argument("GaussianWorld: no component for word '" + tok.word + "'");
        }
        if (std::find(active.begin(), active.end(), found) == active.end()) {
            active.push_back(found);
        }
    }
    return active;
}

LatentGrid GaussianWorld::sample_z0(const PromptEmbedding& prompt, uint64_t seed) const {
    const std::vector<int> active = active_components(prompt);
    std::size_t pick = 0;
    if (active.size() > 1) {
        const double u = CounterRng::uniform_at(CounterRng::substream(seed, 1), 0);
        pick = std::min(active.size() - 1,
                        static_cast<std::size_t>(u * static_cast<double>(active.size())));
    }
    const LatentGrid& mean = components_[static_cast<std::size_t>(active[pick])].mean;
    CounterRng noise_rng(CounterRng::substream(seed, 2));
    LatentGrid noise = sample_gaussian(mean.channels, mean.height, mean.width,
                                       std::sqrt(prior_var_), noise_rng);
    return lincomb(1.0, mean, 1.0, noise, "sample_z0");
}

GaussianWorld render_world(const std::vector<std::string>& words, int channels, int height,
                           int width, double prior_var) {
    if (words.empty()) {
        throw std::invalid_argument("render_world: need at least one word");
    }
    std::vector<WorldComponent> comps;
    comps.reserve(words.size());
    std::string caption;
    for (const std::string& word : words) {
        if (!caption.empty()) {
            caption.push_back(' ');
        }
        caption += word;
        CounterRng rng(CounterRng::substream(hash64(word), 0x77));

        // one rectangle and one disc per word, geometry hashed from the word
        const int rx0 = static_cast<int>(rng.next_uniform() * (width / 2));
        const int ry0 = static_cast<int>(rng.next_uniform() * (height / 2));
        const int rw = std::max(1, width / 8) +
                       static_cast<int>(rng.next_uniform() * std::max(1, 3 * width / 8));
        const int rh = std::max(1, height / 8) +
                       static_cast<int>(rng.next_uniform() * std::max(1, 3 * height / 8));
        const int rx1 = std::min(width, rx0 + rw);
        const int ry1 = std::min(height, ry0 + rh);
        const double dcx = rng.next_uniform() * width;
        const double dcy = rng.next_uniform() * height;
        const double drad =
            std::max(1.0, rng.next_uniform() * (std::min(height, width) / 3.0));
        const double drad2 = drad * drad;

        LatentGrid mean(channels, height, width);
        for (int c = 0; c < channels; ++c) {
            const float backdrop = static_cast<float>(-0.2 + 0.4 * rng.next_uniform());
            const float rect_val = static_cast<float>(-1.0 + 2.0 * rng.next_uniform());
            const float disc_val = static_cast<float>(-1.0 + 2.0 * rng.next_uniform());
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    float v = backdrop;
                    if (x >= rx0 && x < rx1 && y >= ry0 && y < ry1) {
                        v = rect_val;
                    }
                    const double ddx = x - dcx;
                    const double ddy = y - dcy;
                    if (ddx * ddx + ddy * ddy <= drad2) {
                        v = disc_val;
                    }
                    mean.at(c, y, x) = std::clamp(v, -1.0f, 1.0f);
                }
            }
        }
        comps.push_back(WorldComponent{word, std::move(mean), 1.0});
    }
    return GaussianWorld(std::move(comps), prior_var, std::move(caption));
}

LatentGrid analytic_eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                        const GaussianWorld& world, const NoiseSchedule& sched) {
    check_step(t, sched, "analytic_eps");
    require_nonempty(z, "analytic_eps");
    require_same_shape(z, world.components()[0].mean, "analytic_eps");
    const double ab = sched.alpha_bar(t);
    const double sqrt_ab = std::sqrt(ab);
    const double s2 = ab * world.prior_var() + (1.0 - ab);
    const std::vector<int> active = world.active_components(prompt);

    // responsibilities of the mixture components at z, in log space
    std::vector<double> resp(active.size(), 1.0);
    if (active.size() > 1) {
        double wsum = 0.0;
        for (int idx : active) {
            wsum += world.components()[static_cast<std::size_t>(idx)].weight;
        }
        std::vector<double> log_r(active.size());
        for (std::size_t i = 0; i < active.size(); ++i) {
            const WorldComponent& comp = world.components()[static_cast<std::size_t>(active[i])];
            const double dist2 = chunked_sum(z.size(), [&](std::size_t j) {
                const double d = static_cast<double>(z.data[j]) -
                                 sqrt_ab * static_cast<double>(comp.mean.data[j]);
                return d * d;
            });
            log_r[i] = std::log(comp.weight / wsum) - dist2 / (2.0 * s2);
        }
        const double mx = *std::max_element(log_r.begin(), log_r.end());
        double norm = 0.0;
        for (std::size_t i = 0; i < active.size(); ++i) {
            resp[i] = std::exp(log_r[i] - mx);
            norm += resp[i];
        }
        for (double& r : resp) {
            r /= norm;
        }
    }

    LatentGrid mu_bar(z.channels, z.height, z.width);
    for (std::size_t i = 0; i < active.size(); ++i) {
        const LatentGrid& mean = world.components()[static_cast<std::size_t>(active[i])].mean;
        const double r = resp[i];
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(mu_bar.size()); ++j) {
            mu_bar.data[static_cast<std::size_t>(j)] += static_cast<float>(
                r * static_cast<double>(mean.data[static_cast<std::size_t>(j)]));
        }
    }

    const double coeff = std::sqrt(1.0 - ab) / s2;
    return lincomb(coeff, z, -coeff * sqrt_ab, mu_bar, "analytic_eps");
}

LatentGrid AnalyticDenoiser::eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                                 const NoiseSchedule& sched, const AttnRequest&) const {
    // no attention layers here; record/replay requests are inert by contract
    return analytic_eps(z, t, prompt, *world_, sched);
}

ToyAttentionDenoiser::ToyAttentionDenoiser(int channels, uint64_t seed, int patch, int d_model)
    : channels_(channels), patch_(patch), d_model_(d_model) {
    if (channels < 1 || patch < 1 || d_model < 1) {
        throw std::invalid_argument("ToyAttentionDenoiser: bad dimensions");
    }
    auto init = [seed](Mat& m, int rows, int cols, uint64_t which) {
        m = Mat(rows, cols);
        const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
        const uint64_t s = CounterRng::substream(seed, which);
        for (std::size_t i = 0; i < m.a.size(); ++i) {
            m.a[i] = static_cast<float>(scale * CounterRng::gaussian_at(s, i));
        }
    };
    const int pdim = patch_ * patch_ * channels_;
    init(w_embed_, pdim, d_model_, 1);
    init(wq_, d_model_, d_model_, 2);
    init(wk_, d_model_, d_model_, 3);
    init(wv_, d_model_, d_model_, 4);
    init(wq2_, d_model_, d_model_, 5);
    init(wk2_, PromptEmbedding::kWidth, d_model_, 6);
    init(wv2_, PromptEmbedding::kWidth, d_model_, 7);
    init(w_head_, d_model_, pdim, 8);
}

const std::vector<std::string>& ToyAttentionDenoiser::known_layers() {
    static const std::vector<std::string> layers = {"enc", "dec"};
    return layers;
}

ToyAttentionDenoiser::Forward ToyAttentionDenoiser::toy_attention_eps(
    const LatentGrid& z, int t, const PromptEmbedding& prompt, AttnMode mode, FeatureCache* cache,
    const std::vector<std::string>& layers, bool want_traces) const {
    require_nonempty(z, "toy_attention_eps");
    validate_finite(z, "toy_attention_eps");
    if (z.channels != channels_) {
        throw std::invalid_argument("toy_attention_eps: grid has " +
                                    std::to_string(z.channels) + " channels, backend expects " +
                                    std::to_string(channels_));
    }
    if (z.height % patch_ != 0 || z.width % patch_ != 0) {
        throw std::invalid_argument("toy_attention_eps: H and W must be divisible by patch size " +
                                    std::to_string(patch_));
    }
    if (t < 1) {
        throw std::invalid_argument("toy_attention_eps: step must be >= 1");
    }
    if (mode != AttnMode::Plain && cache == nullptr) {
        throw std::invalid_argument("toy_attention_eps: record/replay modes need a cache");
    }
    for (const std::string& layer : layers) {
        if (std::find(known_layers().begin(), known_layers().end(), layer) ==
            known_layers().end()) {
            throw std::invalid_argument("toy_attention_eps: unknown layer '" + layer + "'");
        }
    }

    const int th = z.height / patch_;
    const int tw = z.width / patch_;
    const int tokens = th * tw;
    const int pdim = patch_ * patch_ * channels_;

    Mat x(tokens, pdim);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < tokens; ++p) {
        const int ty = p / tw;
        const int tx = p % tw;
        for (int c = 0; c < channels_; ++c) {
            for (int py = 0; py < patch_; ++py) {
                for (int px = 0; px < patch_; ++px) {
                    x.at(p, (c * patch_ + py) * patch_ + px) =
                        z.at(c, ty * patch_ + py, tx * patch_ + px);
                }
            }
        }
    }

    Forward fwd;
    const Mat h0 = matmul(x, w_embed_);

    // self-attention, layer id "enc"
    const Mat q1 = matmul(h0, wq_);
    Mat k1 = matmul(h0, wk_);
    Mat v1 = matmul(h0, wv_);
    const Mat* k1_used = &k1;
    const Mat* v1_used = &v1;
    const bool on_enc = list_has(layers, "enc");
    if (mode == AttnMode::Record && on_enc) {
        cache->record(t, "enc", FeatureKV{k1, v1});
    }
    if (mode == AttnMode::Replay && on_enc) {
        const FeatureKV& kv = cache->require(t, "enc");
        k1_used = &kv.k;
        v1_used = &kv.v;
    }
    const Mat enc_out = attention_block(q1, *k1_used, *v1_used);
    if (want_traces) {
        fwd.traces["enc"] = AttnLayerTrace{q1, *k1_used, *v1_used, enc_out};
    }
    const Mat h1 = add_mats(h0, enc_out);

    // cross-attention over the prompt tokens, layer id "dec"
    Mat embed(std::max(1, prompt.count()), PromptEmbedding::kWidth);
    if (!prompt.unconditional()) {
        for (int n = 0; n < prompt.count(); ++n) {
            const PromptToken& tok = prompt.tokens[static_cast<std::size_t>(n)];
            if (static_cast<int>(tok.vec.size()) != PromptEmbedding::kWidth) {
                throw std::invalid_argument("toy_attention_eps: token vector width mismatch");
            }
            for (int i = 0; i < PromptEmbedding::kWidth; ++i) {
                embed.at(n, i) = tok.vec[static_cast<std::size_t>(i)];
            }
        }
    }
    const Mat q2 = matmul(h1, wq2_);
    Mat k2 = matmul(embed, wk2_);
    Mat v2 = matmul(embed, wv2_);
    const Mat* k2_used = &k2;
    const Mat* v2_used = &v2;
    const bool on_dec = list_has(layers, "dec");
    if (mode == AttnMode::Record && on_dec) {
        cache->record(t, "dec", FeatureKV{k2, v2});
    }
    if (mode == AttnMode::Replay && on_dec) {
        const FeatureKV& kv = cache->require(t, "dec");
        k2_used = &kv.k;
        v2_used = &kv.v;
    }
    Mat probs;
    const Mat dec_out = attention_block(q2, *k2_used, *v2_used, &probs);
    if (want_traces) {
        fwd.traces["dec"] = AttnLayerTrace{q2, *k2_used, *v2_used, dec_out};
    }
    const Mat h2 = add_mats(h1, dec_out);

    const Mat y = matmul(h2, w_head_);
    fwd.eps = LatentGrid(channels_, z.height, z.width);
#pragma omp parallel for schedule(static)
    for (int p = 0; p < tokens; ++p) {
        const int ty = p / tw;
        const int tx = p % tw;
        for (int c = 0; c < channels_; ++c) {
            for (int py = 0; py < patch_; ++py) {
                for (int px = 0; px < patch_; ++px) {
                    fwd.eps.at(c, ty * patch_ + py, tx * patch_ + px) =
                        y.at(p, (c * patch_ + py) * patch_ + px);
                }
            }
        }
    }
    validate_finite(fwd.eps, "toy_attention_eps");

    fwd.maps.height = th;
    fwd.maps.width = tw;
    fwd.maps.tokens = probs.cols;
    fwd.maps.data.resize(static_cast<std::size_t>(probs.cols) * th * tw);
    for (int n = 0; n < probs.cols; ++n) {
        for (int p = 0; p < tokens; ++p) {
            fwd.maps.at(n, p / tw, p % tw) = probs.at(p, n);
        }
    }
    return fwd;
}

LatentGrid ToyAttentionDenoiser::eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                                     const NoiseSchedule& sched, const AttnRequest& req) const {
    check_step(t, sched, "ToyAttentionDenoiser::eps");
    static const std::vector<std::string> no_layers;
    const std::vector<std::string>& layers = req.layers != nullptr ? *req.layers : no_layers;
    return toy_attention_eps(z, t, prompt, req.mode, req.cache, layers).eps;
}

CrossAttentionMap ToyAttentionDenoiser::cross_attention_map(const LatentGrid& z, int t,
                                                            const PromptEmbedding& prompt,
                                                            const NoiseSchedule& sched) const {
    check_step(t, sched, "cross_attention_map");
    return toy_attention_eps(z, t, prompt, AttnMode::Plain, nullptr, {}).maps;
}

}  // namespace latentforge
