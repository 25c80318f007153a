#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "latentforge/grid.hpp"
#include "latentforge/mat.hpp"
#include "latentforge/schedule.hpp"

namespace latentforge {

// Whitespace-tokenized prompt with one fixed-width vector per word, derived
// deterministically from the word's hash. An empty token list is the
// unconditional ("null") prompt.
struct PromptToken {
    std::string word;
    std::vector<float> vec;
};

struct PromptEmbedding {
    static constexpr int kWidth = 32;

    std::vector<PromptToken> tokens;

    int count() const { return static_cast<int>(tokens.size()); }
    bool unconditional() const { return tokens.empty(); }
    static PromptEmbedding none() { return PromptEmbedding{}; }
};

// Whitespace word split shared by prompt embedding and word selection.
std::vector<std::string> split_words(const std::string& text);

PromptEmbedding embed_prompt(const std::string& text);

// Attention K/V recorded per (step, layer). Write phase ends with seal();
// reads require a sealed cache so replay can never race a record.
struct FeatureKV {
    Mat k;
    Mat v;
};

class FeatureCache {
public:
    void record(int step, const std::string& layer, FeatureKV kv);
    const FeatureKV& require(int step, const std::string& layer) const;
    const FeatureKV* find(int step, const std::string& layer) const;
    void seal() { sealed_ = true; }
    bool sealed() const { return sealed_; }
    std::size_t size() const { return entries_.size(); }
    int entries_for_layer(const std::string& layer) const;
    // Debug dump: one FLXL file per (step, layer, K|V), named
    // t{step}_{layer}_{k|v}.flxl inside dir.
    void dump(const std::string& dir) const;

private:
    std::map<std::pair<int, std::string>, FeatureKV> entries_;
    bool sealed_ = false;
};

enum class AttnMode { Plain, Record, Replay };

// How a denoiser call should treat its attention layers. Record stores K/V
// of the listed layers under (t, layer); Replay substitutes cached K/V.
// Backends without attention ignore this.
struct AttnRequest {
    AttnMode mode = AttnMode::Plain;
    FeatureCache* cache = nullptr;
    const std::vector<std::string>* layers = nullptr;

    bool wants(const std::string& layer) const;
};

// Cross-attention probabilities reshaped onto the query token grid:
// (height x width) query cells by `tokens` prompt tokens.
struct CrossAttentionMap {
    int height = 0;
    int width = 0;
    int tokens = 0;
    std::vector<float> data;  // indexed ((n*height + y)*width + x)

    float at(int n, int y, int x) const {
        return data[(static_cast<std::size_t>(n) * height + y) * width + x];
    }
    float& at(int n, int y, int x) {
        return data[(static_cast<std::size_t>(n) * height + y) * width + x];
    }
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual LatentGrid eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                           const NoiseSchedule& sched, const AttnRequest& req = {}) const = 0;
    virtual bool exposes_attention() const { return false; }
    // Cross-attention map for the prompt at (z, t); throws for backends
    // without attention.
    virtual CrossAttentionMap cross_attention_map(const LatentGrid& z, int t,
                                                  const PromptEmbedding& prompt,
                                                  const NoiseSchedule& sched) const;
};

/*
 * Analytic backend: the data distribution is a Gaussian mixture with one
 * component per vocabulary word, so the marginal at step t and its score are
 * closed-form and the noise prediction is exactly checkable.
 */

struct WorldComponent {
    std::string word;
    LatentGrid mean;
    double weight = 1.0;
};

class GaussianWorld {
public:
    GaussianWorld(std::vector<WorldComponent> components, double prior_var, std::string caption);

    const std::vector<WorldComponent>& components() const { return components_; }
    double prior_var() const { return prior_var_; }
    const std::string& caption() const { return caption_; }

    // Component indices conditioned on by a prompt: every component whose
    // word appears in the prompt; the unconditional prompt selects all.
    // A prompt word with no component is an error.
    std::vector<int> active_components(const PromptEmbedding& prompt) const;

    // Deterministic draw of a clean latent: pick one active component
    // (uniformly among them), add N(0, prior_var) around its mean.
    LatentGrid sample_z0(const PromptEmbedding& prompt, uint64_t seed) const;

private:
    std::vector<WorldComponent> components_;
    double prior_var_;
    std::string caption_;
};

// One component per word: a flat background with one filled rectangle and
// one filled disc, all parameters hashed from the word. Sharp edges on
// purpose, so the means carry real high-frequency content. Values in [-1,1].
GaussianWorld render_world(const std::vector<std::string>& words, int channels, int height,
                           int width, double prior_var = 0.05);

// Exact noise prediction under the mixture marginal
// z_t ~ sum_i w_i N(sqrt(ab)*mu_i, (ab*prior_var + 1 - ab) I): the
// responsibility-weighted single-component predictions. Responsibilities are
// computed in log space with max subtraction.
LatentGrid analytic_eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                        const GaussianWorld& world, const NoiseSchedule& sched);

class AnalyticDenoiser : public Denoiser {
public:
    explicit AnalyticDenoiser(std::shared_ptr<const GaussianWorld> world)
        : world_(std::move(world)) {}

    LatentGrid eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                   const NoiseSchedule& sched, const AttnRequest& req = {}) const override;

    const GaussianWorld& world() const { return *world_; }

private:
    std::shared_ptr<const GaussianWorld> world_;
};

/*
 * Attention backend: patchify -> linear embed -> one self-attention layer
 * ("enc") -> one cross-attention layer over the prompt tokens ("dec", the
 * decoder tap) -> linear head -> unpatchify. Weights are drawn once from the
 * seed at construction; there is no training. The "dec" layer's post-softmax
 * scores are the cross-attention maps.
 */

struct AttnLayerTrace {
    Mat q;       // queries as computed for this call
    Mat k_used;  // keys actually used (cached ones under replay)
    Mat v_used;
    Mat out;     // the layer's attention output (before the residual add)
};

class ToyAttentionDenoiser : public Denoiser {
public:
    struct Forward {
        LatentGrid eps;
        CrossAttentionMap maps;
        std::map<std::string, AttnLayerTrace> traces;  // filled when requested
    };

    ToyAttentionDenoiser(int channels, uint64_t seed, int patch = 4, int d_model = 32);

    // Full forward pass with all intermediates exposed.
    Forward toy_attention_eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                              AttnMode mode, FeatureCache* cache,
                              const std::vector<std::string>& layers,
                              bool want_traces = false) const;

    LatentGrid eps(const LatentGrid& z, int t, const PromptEmbedding& prompt,
                   const NoiseSchedule& sched, const AttnRequest& req = {}) const override;
    bool exposes_attention() const override { return true; }
    CrossAttentionMap cross_attention_map(const LatentGrid& z, int t,
                                          const PromptEmbedding& prompt,
                                          const NoiseSchedule& sched) const override;

    int channels() const { return channels_; }
    int patch() const { return patch_; }
    int d_model() const { return d_model_; }

    static const std::vector<std::string>& known_layers();

private:
    int channels_;
    int patch_;
    int d_model_;
    Mat w_embed_;                      // (patch*patch*channels) x d
    Mat wq_, wk_, wv_;                 // d x d, self-attention "enc"
    Mat wq2_, wk2_, wv2_;              // d x d and kWidth x d, cross "dec"
    Mat w_head_;                       // d x (patch*patch*channels)
};

}  // namespace latentforge
