#pragma once

// Text-quality metrics over token-id sequences: corpus BLEU-4 with
// multi-reference clipping, pooled type/token ratio, a seeded prompt-noise
// attack, and per-domain evaluation.

#include "otfuse/common.hpp"
#include "otfuse/net.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace otfuse::metrics {

using Sequence = std::vector<std::size_t>;

namespace detail {

inline std::map<Sequence, std::size_t> ngram_counts(const Sequence& seq, std::size_t n) {
    std::map<Sequence, std::size_t> counts;
    if (seq.size() >= n)
        for (std::size_t i = 0; i + n <= seq.size(); ++i)
            ++counts[Sequence(seq.begin() + static_cast<std::ptrdiff_t>(i),
                              seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return counts;
}

/// Reference length closest to the hypothesis length; ties go to the shorter.
inline std::size_t closest_ref_length(std::size_t hyp_len, const std::vector<Sequence>& refs) {
    std::size_t best = refs.front().size();
    auto dist = [hyp_len](std::size_t len) {
        return len > hyp_len ? len - hyp_len : hyp_len - len;
    };
    for (const auto& ref : refs) {
        std::size_t len = ref.size();
        if (dist(len) < dist(best) || (dist(len) == dist(best) && len < best)) best = len;
    }
    return best;
}

}  // namespace detail

/// Corpus-level BLEU-4 in [0, 100]. Modified n-gram precisions are pooled
/// over the corpus with per-hypothesis clipping against the maximum count
/// across that hypothesis' references. Zero higher-order precisions get
/// add-one smoothing; a zero unigram precision does not and yields 0. The
/// brevity penalty uses the per-hypothesis closest reference length.
inline double bleu(const std::vector<Sequence>& hypotheses,
                   const std::vector<std::vector<Sequence>>& references) {
    const std::string op = "metrics.bleu";
    if (hypotheses.empty()) throw Error(op, "empty hypothesis set");
    if (references.size() != hypotheses.size())
        throw Error(op, "hypothesis/reference count mismatch: " +
                            std::to_string(hypotheses.size()) + " vs " +
                            std::to_string(references.size()));
    for (std::size_t i = 0; i < references.size(); ++i)
        if (references[i].empty())
            throw Error(op, "no references for hypothesis " + std::to_string(i));

    constexpr std::size_t max_n = 4;
    std::size_t matched[max_n] = {0, 0, 0, 0};
    std::size_t total[max_n] = {0, 0, 0, 0};
    std::size_t hyp_len_sum = 0, ref_len_sum = 0;

    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
        const auto& hyp = hypotheses[i];
        const auto& refs = references[i];
        hyp_len_sum += hyp.size();
        ref_len_sum += detail::closest_ref_length(hyp.size(), refs);
        for (std::size_t n = 1; n <= max_n; ++n) {
            auto hyp_counts = detail::ngram_counts(hyp, n);
            std::vector<std::map<Sequence, std::size_t>> ref_counts;
            ref_counts.reserve(refs.size());
            for (const auto& ref : refs) ref_counts.push_back(detail::ngram_counts(ref, n));
            for (const auto& [gram, count] : hyp_counts) {
                std::size_t clip = 0;
                for (const auto& rc : ref_counts) {
                    auto it = rc.find(gram);
                    if (it != rc.end()) clip = std::max(clip, it->second);
                }
                matched[n - 1] += std::min(count, clip);
            }
            total[n - 1] += hyp.size() >= n ? hyp.size() - n + 1 : 0;
        }
    }

    if (total[0] == 0) throw Error(op, "all hypotheses are empty");

    double log_precision_sum = 0.0;
    for (std::size_t n = 1; n <= max_n; ++n) {
        double num = static_cast<double>(matched[n - 1]);
        double den = static_cast<double>(total[n - 1]);
        if (matched[n - 1] == 0) {
            if (n == 1) return 0.0;
            num += 1.0;
            den += 1.0;
        }
        log_precision_sum += std::log(num / den);
    }
    double geo_mean = std::exp(log_precision_sum / static_cast<double>(max_n));

    double bp = 1.0;
    if (hyp_len_sum < ref_len_sum)
        bp = std::exp(1.0 - static_cast<double>(ref_len_sum) / static_cast<double>(hyp_len_sum));
    return 100.0 * bp * geo_mean;
}

/// Pooled type/token ratio: distinct tokens over total tokens across all
/// sequences.
inline double ttr(const std::vector<Sequence>& sequences) {
    std::set<std::size_t> types;
    std::size_t tokens = 0;
    for (const auto& seq : sequences) {
        tokens += seq.size();
        types.insert(seq.begin(), seq.end());
    }
    if (tokens == 0) throw Error("metrics.ttr", "no tokens");
    return static_cast<double>(types.size()) / static_cast<double>(tokens);
}

namespace detail {

struct PromptSet {
    std::vector<Sequence> prompts;     // first k tokens of each sequence
    std::vector<Sequence> references;  // the remainder
};

inline PromptSet split_prompts(const net::Corpus& corpus, std::size_t context_width,
                               const std::string& op) {
    if (corpus.sequences.empty()) throw Error(op, "empty corpus");
    PromptSet set;
    for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
        const auto& seq = corpus.sequences[s];
        if (seq.size() <= context_width)
            throw Error(op, "sequence " + std::to_string(s) + " has " +
                                std::to_string(seq.size()) + " tokens, need more than " +
                                std::to_string(context_width));
        set.prompts.emplace_back(seq.begin(),
                                 seq.begin() + static_cast<std::ptrdiff_t>(context_width));
        set.references.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(context_width),
                                    seq.end());
    }
    return set;
}

inline std::vector<Sequence> continuations(const net::LayeredNet& model, const PromptSet& set) {
    std::vector<Sequence> out;
    out.reserve(set.prompts.size());
    for (std::size_t i = 0; i < set.prompts.size(); ++i)
        out.push_back(net::generate(model, set.prompts[i], set.references[i].size()));
    return out;
}

inline std::vector<std::vector<Sequence>> single_refs(const std::vector<Sequence>& refs) {
    std::vector<std::vector<Sequence>> out;
    out.reserve(refs.size());
    for (const auto& r : refs) out.push_back({r});
    return out;
}

}  // namespace detail

struct Continuations {
    std::vector<Sequence> hypotheses;  // greedy continuations, one per sequence
    std::vector<Sequence> references;  // the held-out remainders
};

/// Split every corpus sequence into prompt (first k tokens) and reference
/// (the rest), then continue each prompt greedily for the reference length.
inline Continuations model_continuations(const net::LayeredNet& model,
                                         const net::Corpus& corpus) {
    auto set = detail::split_prompts(corpus, model.context_width, "metrics.continuations");
    return {detail::continuations(model, set), set.references};
}

/// BLEU of the model's greedy continuations against the held-out remainders
/// of the corpus sequences (prompt = first k tokens).
inline double corpus_bleu(const net::LayeredNet& model, const net::Corpus& corpus) {
    auto c = model_continuations(model, corpus);
    return bleu(c.hypotheses, detail::single_refs(c.references));
}

struct AttackResult {
    double bleu_clean = 0.0;
    double bleu_noised = 0.0;
    double drop = 0.0;  // bleu_noised - bleu_clean
};

/// Replace floor(noise_ratio * k) seeded prompt positions with the unknown
/// token and measure the BLEU change of the continuations.
inline AttackResult attack(const net::LayeredNet& model, const net::Corpus& corpus,
                           double noise_ratio, std::uint64_t seed) {
    const std::string op = "metrics.attack";
    if (!(noise_ratio >= 0.0 && noise_ratio <= 1.0))
        throw Error(op, "noise_ratio must lie in [0, 1]");
    auto set = detail::split_prompts(corpus, model.context_width, op);
    auto refs = detail::single_refs(set.references);

    AttackResult result;
    result.bleu_clean = bleu(detail::continuations(model, set), refs);

    const std::size_t k = model.context_width;
    const std::size_t n_replace =
        static_cast<std::size_t>(std::floor(noise_ratio * static_cast<double>(k)));
    Rng rng(derive_seed(seed, "attack"));
    for (auto& prompt : set.prompts) {
        std::vector<std::size_t> positions(k);
        for (std::size_t i = 0; i < k; ++i) positions[i] = i;
        for (std::size_t i = 0; i < n_replace; ++i) {
            std::size_t j = i + uniform_index(rng, k - i);
            std::swap(positions[i], positions[j]);
            prompt[positions[i]] = model.vocab.unk_id;
        }
    }
    result.bleu_noised = bleu(detail::continuations(model, set), refs);
    result.drop = result.bleu_noised - result.bleu_clean;
    return result;
}

struct DomainScore {
    std::string tag;
    double bleu = 0.0;
};

struct DomainEval {
    std::vector<DomainScore> domains;
    double average = 0.0;  // unweighted mean over domains
};

inline DomainEval domain_eval(const net::LayeredNet& model,
                              const std::vector<net::Corpus>& corpora) {
    if (corpora.empty()) throw Error("metrics.domain_eval", "no corpora");
    DomainEval eval;
    double sum = 0.0;
    for (const auto& corpus : corpora) {
        double score = corpus_bleu(model, corpus);
        eval.domains.push_back({corpus.domain_tag, score});
        sum += score;
    }
    eval.average = sum / static_cast<double>(corpora.size());
    return eval;
}

struct EvalReport {
    DomainEval domains;
    double ttr = 0.0;
    std::optional<double> multi_ref_bleu;
    std::optional<AttackResult> attack;
};

inline nlohmann::json report_to_json(const EvalReport& report) {
    nlohmann::json domains = nlohmann::json::array();
    for (const auto& d : report.domains.domains)
        domains.push_back({{"tag", d.tag}, {"bleu", d.bleu}});
    nlohmann::json j{{"domains", domains},
                     {"average_bleu", report.domains.average},
                     {"ttr", report.ttr}};
    if (report.multi_ref_bleu) j["multi_ref_bleu"] = *report.multi_ref_bleu;
    if (report.attack)
        j["attack"] = {{"bleu_clean", report.attack->bleu_clean},
                       {"bleu_noised", report.attack->bleu_noised},
                       {"drop", report.attack->drop}};
    return j;
}

}  // namespace otfuse::metrics
