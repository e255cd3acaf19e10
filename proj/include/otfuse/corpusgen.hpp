#pragma once

// Seeded synthetic corpus generator. Two domains share function words,
// adjectives and verbs but use disjoint noun sets, so models trained on
// different domains overlap partially. Every verb has a synonym partner,
// which yields aligned paraphrase references for multi-reference scoring.

#include "otfuse/common.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace otfuse::gen {

using Line = std::vector<std::string>;

struct GenConfig {
    std::string domain = "a";  // "a" or "b"
    std::size_t sequences = 200;
    std::uint64_t seed = 0;
};

struct GeneratedCorpus {
    std::vector<Line> lines;
    std::vector<Line> paraphrases;  // same lines with each verb swapped for its synonym
};

namespace detail {

inline const std::array<std::string, 6>& nouns(const std::string& domain) {
    static const std::array<std::string, 6> a = {"cat", "dog", "bird", "fish", "mouse", "horse"};
    static const std::array<std::string, 6> b = {"ship", "rover", "probe", "drone", "beacon", "lander"};
    if (domain == "a") return a;
    if (domain == "b") return b;
    throw Error("gen.generate_text", "unknown domain '" + domain + "', expected 'a' or 'b'");
}

// Verbs come in synonym pairs; partner(i) flips the low bit.
inline const std::array<std::string, 8>& verbs() {
    static const std::array<std::string, 8> v = {"sees", "spots", "likes",  "loves",
                                                 "finds", "locates", "holds", "keeps"};
    return v;
}

inline const std::array<std::string, 6>& adjectives() {
    static const std::array<std::string, 6> adj = {"big", "small", "red", "blue", "old", "new"};
    return adj;
}

}  // namespace detail

/// Sentences follow a handful of templates whose verb never sits in the
/// first two positions, so a 2-token prompt pins down subject but not verb.
inline GeneratedCorpus generate_text(const GenConfig& cfg) {
    const std::string op = "gen.generate_text";
    if (cfg.sequences == 0) throw Error(op, "sequences must be positive");
    const auto& nn = detail::nouns(cfg.domain);
    const auto& vv = detail::verbs();
    const auto& aa = detail::adjectives();

    Rng rng(derive_seed(cfg.seed, "gen." + cfg.domain));
    auto noun = [&] { return nn[uniform_index(rng, nn.size())]; };
    auto adj = [&] { return aa[uniform_index(rng, aa.size())]; };

    GeneratedCorpus out;
    out.lines.reserve(cfg.sequences);
    out.paraphrases.reserve(cfg.sequences);
    for (std::size_t s = 0; s < cfg.sequences; ++s) {
        std::size_t tmpl = uniform_index(rng, 5);
        std::size_t verb_id = uniform_index(rng, vv.size());
        const std::string& verb = vv[verb_id];
        const std::string& twin = vv[verb_id ^ 1];

        Line line;
        std::size_t verb_pos = 0;
        switch (tmpl) {
            case 0: line = {"the", noun(), verb, "the", noun()}; verb_pos = 2; break;
            case 1: line = {"the", noun(), verb, "a", adj(), noun()}; verb_pos = 2; break;
            case 2: line = {"the", adj(), noun(), verb, "the", noun()}; verb_pos = 3; break;
            case 3: line = {"a", noun(), verb, "the", adj(), noun()}; verb_pos = 2; break;
            default: line = {"the", noun(), verb, "the", adj(), noun()}; verb_pos = 2; break;
        }
        Line twin_line = line;
        twin_line[verb_pos] = twin;
        out.lines.push_back(std::move(line));
        out.paraphrases.push_back(std::move(twin_line));
    }
    return out;
}

inline void write_token_lines(const std::vector<Line>& lines, std::ostream& out) {
    for (const auto& line : lines) {
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (i) out << ' ';
            out << line[i];
        }
        out << '\n';
    }
}

inline void write_token_lines(const std::vector<Line>& lines, const std::string& path,
                              const std::string& config_line = "") {
    std::ofstream out(path);
    if (!out) throw Error("gen.write_token_lines", "cannot open '" + path + "' for writing");
    if (!config_line.empty()) out << "# " << config_line << '\n';
    write_token_lines(lines, out);
}

}  // namespace otfuse::gen
