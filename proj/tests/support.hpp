#pragma once

// Shared fixtures for the unit and acceptance suites.

#include "otfuse/common.hpp"
#include "otfuse/net.hpp"
#include "otfuse/ot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace support {

inline otfuse::net::Vocab tiny_vocab(std::size_t size) {
    otfuse::net::Vocab v;
    v.unk_id = 0;
    v.tokens.push_back("<unk>");
    for (std::size_t i = 1; i < size; ++i) v.tokens.push_back("t" + std::to_string(i));
    return v;
}

inline otfuse::net::Corpus random_corpus(const otfuse::net::Vocab& vocab, std::size_t n_seq,
                                         std::size_t len, std::uint64_t seed) {
    otfuse::net::Corpus c;
    c.vocab = vocab;
    otfuse::Rng rng(seed);
    for (std::size_t s = 0; s < n_seq; ++s) {
        std::vector<std::size_t> seq(len);
        for (auto& t : seq) t = otfuse::uniform_index(rng, vocab.size());
        c.sequences.push_back(std::move(seq));
    }
    return c;
}

inline otfuse::net::LayeredNet small_net(std::size_t vocab_size, std::size_t k, std::size_t d,
                                         const std::vector<std::size_t>& widths,
                                         std::uint64_t seed,
                                         otfuse::net::Activation act = otfuse::net::Activation::Relu) {
    return otfuse::net::init_net(tiny_vocab(vocab_size), k, d, widths,
                                 std::vector<otfuse::net::Activation>(widths.size(), act), seed);
}

inline std::vector<std::vector<std::size_t>> random_contexts(std::size_t vocab_size,
                                                             std::size_t k, std::size_t count,
                                                             std::uint64_t seed) {
    otfuse::Rng rng(seed);
    std::vector<std::vector<std::size_t>> out(count, std::vector<std::size_t>(k));
    for (auto& ctx : out)
        for (auto& t : ctx) t = otfuse::uniform_index(rng, vocab_size);
    return out;
}

/// Largest absolute difference between the two models' output distributions
/// over seeded random contexts.
inline double max_output_divergence(const otfuse::net::LayeredNet& a,
                                    const otfuse::net::LayeredNet& b, std::size_t contexts,
                                    std::uint64_t seed) {
    auto ctxs = random_contexts(a.vocab.size(), a.context_width, contexts, seed);
    double worst = 0.0;
    for (const auto& ctx : ctxs) {
        auto pa = otfuse::net::forward(a, ctx);
        auto pb = otfuse::net::forward(b, ctx);
        for (std::size_t v = 0; v < pa.size(); ++v)
            worst = std::max(worst, std::abs(pa[v] - pb[v]));
    }
    return worst;
}

/// Independent oracle for the exact solver: enumerate all permutations.
inline double brute_force_assignment(const otfuse::Matrix& cost) {
    std::vector<std::size_t> perm(cost.rows);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    const double mass = 1.0 / static_cast<double>(cost.rows);
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < cost.rows; ++i) total += mass * cost(i, perm[i]);
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

inline otfuse::ot::CostMatrix random_cost(std::size_t n, std::size_t m, otfuse::Rng& rng) {
    otfuse::ot::CostMatrix cost;
    cost.c = otfuse::Matrix(n, m);
    for (auto& x : cost.c.data) x = otfuse::uniform_real(rng, 0.0, 1.0);
    return cost;
}

/// Net whose logits are all zero: embeddings, weights and out_proj vanish,
/// so every prediction is uniform and the cross entropy is exactly ln V.
inline otfuse::net::LayeredNet zero_net(std::size_t vocab_size, std::size_t k) {
    otfuse::net::LayeredNet m;
    m.vocab = tiny_vocab(vocab_size);
    m.context_width = k;
    m.embed = otfuse::Matrix(vocab_size, 1);
    otfuse::net::HiddenLayer layer;
    layer.weight = otfuse::Matrix(1, k);
    layer.bias = {0.0};
    layer.activation = otfuse::net::Activation::Relu;
    m.hidden = {layer};
    m.out_proj = otfuse::Matrix(vocab_size, 1);
    return m;
}

/// Net that predicts token `hot` with probability exactly 1: the hidden unit
/// is pinned to 1 and the out_proj spreads logits to +-1000, so the softmax
/// saturates to a one-hot vector in double precision.
inline otfuse::net::LayeredNet spike_net(std::size_t vocab_size, std::size_t hot) {
    otfuse::net::LayeredNet m;
    m.vocab = tiny_vocab(vocab_size);
    m.context_width = 1;
    m.embed = otfuse::Matrix(vocab_size, 1);
    otfuse::net::HiddenLayer layer;
    layer.weight = otfuse::Matrix(1, 1);
    layer.bias = {1.0};
    layer.activation = otfuse::net::Activation::Relu;
    m.hidden = {layer};
    m.out_proj = otfuse::Matrix(vocab_size, 1, -1000.0);
    m.out_proj(hot, 0) = 1000.0;
    return m;
}

/// Worst relative error between the analytic gradient and central finite
/// differences on `n_coords` seeded random coordinates.
inline double max_grad_rel_error(const otfuse::net::LayeredNet& model,
                                 const otfuse::net::Corpus& corpus, std::size_t n_coords,
                                 std::uint64_t seed) {
    auto pairs = otfuse::net::extract_pairs(corpus, model.context_width, "support.grad_check");
    auto grad = otfuse::net::loss_gradient(model, pairs);
    auto base = otfuse::net::to_params(model);
    otfuse::Rng rng(seed);
    double worst = 0.0;
    for (std::size_t c = 0; c < n_coords; ++c) {
        std::size_t i = otfuse::uniform_index(rng, base.size());
        double h = 1e-5 * std::max(1.0, std::abs(base[i]));
        auto probe = base;
        probe[i] = base[i] + h;
        double up = otfuse::net::loss(otfuse::net::from_params(model, probe), corpus);
        probe[i] = base[i] - h;
        double down = otfuse::net::loss(otfuse::net::from_params(model, probe), corpus);
        double fd = (up - down) / (2.0 * h);
        double rel = std::abs(grad[i] - fd) / std::max({1e-8, std::abs(grad[i]), std::abs(fd)});
        worst = std::max(worst, rel);
    }
    return worst;
}

/// Scratch directory under the current working directory, recreated fresh.
class TempDir {
public:
    explicit TempDir(const std::string& name)
        : path_(std::filesystem::current_path() / "scratch" / name) {
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    std::string file(const std::string& base) const { return (path_ / base).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw otfuse::Error("support.read_file", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline bool files_identical(const std::string& a, const std::string& b) {
    return read_file(a) == read_file(b);
}

}  // namespace support
