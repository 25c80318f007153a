#include "latentforge/maskgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "latentforge/errors.hpp"

namespace latentforge {

namespace {

void check_dims(int height, int width, const char* op) {
    if (height < 1 || width < 1) {
        throw std::invalid_argument(std::string(op) + ": resolution must be positive, got " +
                                    std::to_string(height) + "x" + std::to_string(width));
    }
}

std::map<std::string, int> trigram_counts(const std::string& text) {
    std::string low;
    low.reserve(text.size());
    for (char ch : text) {
        low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
    std::map<std::string, int> counts;
    if (low.size() < 3) {
        if (!low.empty()) {
            ++counts[low];
        }
        return counts;
    }
    for (std::size_t i = 0; i + 3 <= low.size(); ++i) {
        ++counts[low.substr(i, 3)];
    }
    return counts;
}

bool word_in(const std::vector<std::string>& words, const std::string& w) {
    return std::find(words.begin(), words.end(), w) != words.end();
}

}  // namespace

EditMask::EditMask(int height_, int width_, uint8_t fill) : height(height_), width(width_) {
    check_dims(height_, width_, "EditMask");
    if (fill > 1) {
        throw std::invalid_argument("EditMask: cells are binary, fill must be 0 or 1");
    }
    data.assign(static_cast<std::size_t>(height_) * width_, fill);
}

std::size_t EditMask::area_edit() const {
    std::size_t n = 0;
    for (uint8_t v : data) {
        n += v;
    }
    return n;
}

double area_ratio(const EditMask& mask) {
    if (mask.data.empty()) {
        throw std::invalid_argument("area_ratio: empty mask");
    }
    return static_cast<double>(mask.area_edit()) / static_cast<double>(mask.area_total());
}

EditMask rect_mask(int x0, int y0, int x1, int y1, int height, int width) {
    check_dims(height, width, "rect_mask");
    if (x0 < 0 || x0 >= x1 || x1 > width || y0 < 0 || y0 >= y1 || y1 > height) {
        throw std::invalid_argument("rect_mask: rectangle (" + std::to_string(x0) + "," +
                                    std::to_string(y0) + ")-(" + std::to_string(x1) + "," +
                                    std::to_string(y1) + ") does not fit " +
                                    std::to_string(width) + "x" + std::to_string(height));
    }
    EditMask mask(height, width, 0);
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            mask.at(y, x) = 1;
        }
    }
    return mask;
}

EditMask resample_nn(const EditMask& mask, int out_height, int out_width) {
    if (mask.data.empty()) {
        throw std::invalid_argument("resample_nn: empty mask");
    }
    check_dims(out_height, out_width, "resample_nn");
    EditMask out(out_height, out_width, 0);
    for (int y = 0; y < out_height; ++y) {
        const int sy = static_cast<int>((static_cast<long long>(y) * mask.height) / out_height);
        for (int x = 0; x < out_width; ++x) {
            const int sx = static_cast<int>((static_cast<long long>(x) * mask.width) / out_width);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

EditMask complement(const EditMask& mask) {
    if (mask.data.empty()) {
        throw std::invalid_argument("complement: empty mask");
    }
    EditMask out = mask;
    for (uint8_t& v : out.data) {
        v = v != 0 ? 0 : 1;
    }
    return out;
}

double TrigramSimilarityScorer::score(const LatentGrid& image, const std::string& text) const {
    (void)image;
    const auto a = trigram_counts(text);
    const auto b = trigram_counts(caption_);
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (const auto& [gram, n] : a) {
        na += static_cast<double>(n) * n;
        auto it = b.find(gram);
        if (it != b.end()) {
            dot += static_cast<double>(n) * it->second;
        }
    }
    for (const auto& [gram, n] : b) {
        nb += static_cast<double>(n) * n;
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::string> select_edited_words(const std::string& p_src, const std::string& p_tar,
                                             const LatentGrid& image,
                                             const SimilarityScorer& scorer, CandidateRule rule) {
    const std::vector<std::string> src_words = split_words(p_src);
    const std::vector<std::string> tar_words = split_words(p_tar);
    if (src_words.empty() || tar_words.empty()) {
        throw std::invalid_argument("select_edited_words: both prompts must be nonempty");
    }
    const std::vector<std::string>& primary =
        rule == CandidateRule::TargetMinusSource ? tar_words : src_words;
    const std::vector<std::string>& other =
        rule == CandidateRule::TargetMinusSource ? src_words : tar_words;

    std::vector<std::string> candidates;
    for (const std::string& w : primary) {
        if (!word_in(other, w) && !word_in(candidates, w)) {
            candidates.push_back(w);
        }
    }
    const double threshold = scorer.score(image, p_src);
    std::vector<std::string> selected;
    for (const std::string& w : candidates) {
        if (scorer.score(image, w) < threshold) {
            selected.push_back(w);
        }
    }
    return selected;
}

MaskExtraction extract_mask(const CrossAttentionMap& maps, const std::vector<int>& word_indices,
                            double threshold, int out_height, int out_width) {
    if (maps.height < 1 || maps.width < 1 || maps.tokens < 1) {
        throw std::invalid_argument("extract_mask: empty attention maps");
    }
    if (word_indices.empty()) {
        throw std::invalid_argument("extract_mask: need at least one word index");
    }
    for (int idx : word_indices) {
        if (idx < 0 || idx >= maps.tokens) {
            throw std::invalid_argument("extract_mask: word index " + std::to_string(idx) +
                                        " outside [0, " + std::to_string(maps.tokens) + ")");
        }
    }
    if (!std::isfinite(threshold)) {
        throw std::invalid_argument("extract_mask: threshold must be finite");
    }
    check_dims(out_height, out_width, "extract_mask");

    std::vector<double> mean(static_cast<std::size_t>(maps.height) * maps.width, 0.0);
    for (int idx : word_indices) {
        for (int y = 0; y < maps.height; ++y) {
            for (int x = 0; x < maps.width; ++x) {
                mean[static_cast<std::size_t>(y) * maps.width + x] +=
                    static_cast<double>(maps.at(idx, y, x));
            }
        }
    }
    for (double& v : mean) {
        v /= static_cast<double>(word_indices.size());
    }

    const auto [lo_it, hi_it] = std::minmax_element(mean.begin(), mean.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    MaskExtraction res;
    if (hi == lo) {
        res.mask = EditMask(out_height, out_width, 0);
        res.degenerate_range = true;
        return res;
    }

    EditMask native(maps.height, maps.width, 0);
    const double range = hi - lo;
    for (int y = 0; y < maps.height; ++y) {
        for (int x = 0; x < maps.width; ++x) {
            const double v = (mean[static_cast<std::size_t>(y) * maps.width + x] - lo) / range;
            native.at(y, x) = v > threshold ? 1 : 0;
        }
    }
    res.mask = resample_nn(native, out_height, out_width);
    return res;
}

void mask_write(const EditMask& mask, const std::string& path) {
    if (mask.data.empty()) {
        throw std::invalid_argument("mask_write: empty mask");
    }
    std::string buf = "P5\n" + std::to_string(mask.width) + " " + std::to_string(mask.height) +
                      "\n255\n";
    buf.reserve(buf.size() + mask.data.size());
    for (uint8_t v : mask.data) {
        buf.push_back(v != 0 ? static_cast<char>(255) : static_cast<char>(0));
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw FormatError("mask_write: cannot open '" + path + "'");
    }
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) {
        throw FormatError("mask_write: write failed for '" + path + "'");
    }
}

namespace {

// Reads one PGM header token, skipping whitespace and '#' comments.
std::string pgm_token(std::istream& in, const std::string& path) {
    int ch = in.get();
    while (ch != EOF &&
           (std::isspace(ch) || ch == '#')) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') {
                ch = in.get();
            }
        }
        ch = in.get();
    }
    std::string tok;
    while (ch != EOF && !std::isspace(ch)) {
        tok.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    if (tok.empty()) {
        throw FormatError("mask_read: truncated PGM header in '" + path + "'");
    }
    return tok;
}

int pgm_int(std::istream& in, const std::string& path, const char* what) {
    const std::string tok = pgm_token(in, path);
    try {
        std::size_t used = 0;
        const int v = std::stoi(tok, &used);
        if (used != tok.size()) {
            throw std::invalid_argument(tok);
        }
        return v;
    } catch (const std::exception&) {
        throw FormatError("mask_read: bad " + std::string(what) + " '" + tok + "' in '" + path +
                          "'");
    }
}

}  // namespace

EditMask mask_read(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw FormatError("mask_read: cannot open '" + path + "'");
    }
    if (pgm_token(f, path) != "P5") {
        throw FormatError("mask_read: '" + path + "' is not a binary PGM");
    }
    const int width = pgm_int(f, path, "width");
    const int height = pgm_int(f, path, "height");
    const int maxval = pgm_int(f, path, "maxval");
    if (width < 1 || height < 1) {
        throw FormatError("mask_read: bad dimensions in '" + path + "'");
    }
    if (maxval != 255) {
        throw FormatError("mask_read: unsupported maxval " + std::to_string(maxval) + " in '" +
                          path + "'");
    }
    std::vector<char> raw(static_cast<std::size_t>(width) * height);
    f.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (f.gcount() != static_cast<std::streamsize>(raw.size())) {
        throw FormatError("mask_read: truncated pixel data in '" + path + "'");
    }
    EditMask mask(height, width, 0);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        mask.data[i] = static_cast<uint8_t>(raw[i]) >= 128 ? 1 : 0;
    }
    return mask;
}

RectSpec rect_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("rect parse: ") + e.what());
    }
    if (!j.is_object()) {
        throw std::invalid_argument("rect parse: expected a JSON object");
    }
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (key != "x0" && key != "y0" && key != "x1" && key != "y1" && key != "res") {
            throw std::invalid_argument("rect parse: unknown key '" + key + "'");
        }
    }
    RectSpec r;
    try {
        r.x0 = j.at("x0").get<int>();
        r.y0 = j.at("y0").get<int>();
        r.x1 = j.at("x1").get<int>();
        r.y1 = j.at("y1").get<int>();
        const auto& res = j.at("res");
        if (!res.is_array() || res.size() != 2) {
            throw std::invalid_argument("rect parse: 'res' must be [height, width]");
        }
        r.height = res.at(0).get<int>();
        r.width = res.at(1).get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("rect parse: ") + e.what());
    }
    return r;
}

std::string rect_to_json_text(const RectSpec& r) {
    nlohmann::json j;
    j["x0"] = r.x0;
    j["y0"] = r.y0;
    j["x1"] = r.x1;
    j["y1"] = r.y1;
    j["res"] = {r.height, r.width};
    return j.dump(2);
}

std::vector<RectSpec> read_rect_list(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw FormatError("read_rect_list: cannot open '" + path + "'");
    }
    std::stringstream buf;
    buf << f.rdbuf();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(buf.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("read_rect_list: '" + path + "': " + e.what());
    }
    std::vector<RectSpec> rects;
    if (j.is_object()) {
        rects.push_back(rect_from_json_text(j.dump()));
    } else if (j.is_array()) {
        for (const auto& item : j) {
            rects.push_back(rect_from_json_text(item.dump()));
        }
    } else {
        throw std::invalid_argument("read_rect_list: expected an object or array in '" + path +
                                    "'");
    }
    return rects;
}

EditMask make_rect_mask(const RectSpec& r) {
    return rect_mask(r.x0, r.y0, r.x1, r.y1, r.height, r.width);
}

}  // namespace latentforge
