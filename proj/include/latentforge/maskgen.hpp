#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latentforge/denoiser.hpp"
#include "latentforge/grid.hpp"

namespace latentforge {

// Binary edit region at a fixed resolution. Cells are 0 or 1; the ratio of
// 1-cells to total cells drives the adaptive attenuation and re-inversion
// depth.
struct EditMask {
    int height = 0;
    int width = 0;
    std::vector<uint8_t> data;  // row-major, strictly 0 or 1

    EditMask() = default;
    EditMask(int height, int width, uint8_t fill = 0);

    uint8_t at(int y, int x) const {
        return data[static_cast<std::size_t>(y) * width + x];
    }
    uint8_t& at(int y, int x) {
        return data[static_cast<std::size_t>(y) * width + x];
    }
    std::size_t area_total() const { return data.size(); }
    std::size_t area_edit() const;
};

// Fraction of 1-cells, in [0, 1].
double area_ratio(const EditMask& mask);

// 1 inside the half-open rectangle [x0,x1) x [y0,y1), 0 outside.
EditMask rect_mask(int x0, int y0, int x1, int y1, int height, int width);

// Nearest-neighbor resample; exact block replication (and thus exact area
// ratio) when the target is an integer multiple of the source.
EditMask resample_nn(const EditMask& mask, int out_height, int out_width);

// Cell-wise complement, for unmasked-region metrics.
EditMask complement(const EditMask& mask);

// Deterministic image/text similarity; higher means more similar.
class SimilarityScorer {
public:
    virtual ~SimilarityScorer() = default;
    virtual double score(const LatentGrid& image, const std::string& text) const = 0;
};

// Test-only stand-in for a learned image/text score: cosine similarity of
// character-trigram counts between the query text and a fixed caption that
// describes the image. The image argument is ignored.
class TrigramSimilarityScorer : public SimilarityScorer {
public:
    explicit TrigramSimilarityScorer(std::string caption) : caption_(std::move(caption)) {}

    double score(const LatentGrid& image, const std::string& text) const override;

private:
    std::string caption_;
};

// Which prompt difference supplies the candidate edit words. Target-minus-
// source is the default; the reversed rule exists for comparison runs only.
enum class CandidateRule { TargetMinusSource, SourceMinusTarget };

// Candidate words scored against the per-image threshold score(image, p_src);
// a candidate is selected when it scores strictly below that threshold.
// Candidate order follows the prompt they came from; duplicates collapse.
std::vector<std::string> select_edited_words(const std::string& p_src, const std::string& p_tar,
                                             const LatentGrid& image,
                                             const SimilarityScorer& scorer,
                                             CandidateRule rule = CandidateRule::TargetMinusSource);

struct MaskExtraction {
    EditMask mask;
    bool degenerate_range = false;  // constant map; mask forced all-zero
};

// Mean of the selected word maps, min-max normalized to [0,1], binarized at
// strictly > threshold, nearest-neighbor upsampled to the output resolution.
// A constant mean map has no usable range: the result is all-zero with the
// warning flag set.
MaskExtraction extract_mask(const CrossAttentionMap& maps, const std::vector<int>& word_indices,
                            double threshold = 0.3, int out_height = 64, int out_width = 64);

// Binary PGM (P5, maxval 255) round trip; values >= 128 read back as 1.
void mask_write(const EditMask& mask, const std::string& path);
EditMask mask_read(const std::string& path);

// Rectangle masks as JSON objects {"x0","y0","x1","y1","res":[H,W]}.
struct RectSpec {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;
    int height = 64;
    int width = 64;
};

RectSpec rect_from_json_text(const std::string& text);
std::string rect_to_json_text(const RectSpec& r);
std::vector<RectSpec> read_rect_list(const std::string& path);
EditMask make_rect_mask(const RectSpec& r);

}  // namespace latentforge
