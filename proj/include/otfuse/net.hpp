#pragma once

// Layered token-prediction network: vocabulary, corpus, forward pass with
// activation capture, cross-entropy loss, SGD training, greedy decoding,
// and the text model format.
//
// forward / forward_with_activations / loss are pure given an immutable
// net and safe to call from many threads; train works on a private copy.

#include "otfuse/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace otfuse::net {

// --- vocabulary and corpus ----------------------------------------------

struct Vocab {
    std::vector<std::string> tokens;  // index -> token, all distinct
    std::size_t unk_id = 0;           // reserved noise/unknown token

    std::size_t size() const { return tokens.size(); }

    std::size_t id_of(const std::string& token) const {
        for (std::size_t i = 0; i < tokens.size(); ++i)
            if (tokens[i] == token) return i;
        return unk_id;
    }
};

inline void validate_vocab(const Vocab& v, const std::string& context) {
    if (v.tokens.empty()) throw Error(context, "empty vocabulary");
    if (v.unk_id >= v.tokens.size())
        throw Error(context, "unk_id " + std::to_string(v.unk_id) + " out of range (V=" +
                                 std::to_string(v.tokens.size()) + ")");
    std::unordered_set<std::string> seen;
    for (const auto& t : v.tokens) {
        if (t.empty() || t.find_first_of(" \t\r\n") != std::string::npos)
            throw Error(context, "token '" + t + "' is empty or contains whitespace");
        if (!seen.insert(t).second) throw Error(context, "duplicate token '" + t + "'");
    }
}

/// Tokenized sequences over a shared vocabulary. domain_tag is a free
/// label used to keep in-domain and out-domain evaluation sets apart.
struct Corpus {
    std::vector<std::vector<std::size_t>> sequences;
    Vocab vocab;
    std::string domain_tag;
};

/// Vocabulary from whitespace-tokenized lines: <unk> gets id 0, the rest
/// are assigned ids in order of first appearance.
inline Vocab build_vocab(const std::vector<std::vector<std::string>>& lines,
                         const std::string& unk_token = "<unk>") {
    Vocab v;
    v.tokens.push_back(unk_token);
    v.unk_id = 0;
    std::unordered_map<std::string, std::size_t> index{{unk_token, 0}};
    for (const auto& line : lines)
        for (const auto& tok : line)
            if (index.emplace(tok, v.tokens.size()).second) v.tokens.push_back(tok);
    return v;
}

/// One whitespace-tokenized sequence per line. Blank lines and lines whose
/// first token starts with '#' (provenance comments) are skipped.
inline std::vector<std::vector<std::string>> read_token_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("net.load_corpus", "cannot open '" + path + "'");
    std::vector<std::vector<std::string>> lines;
    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::vector<std::string> toks;
        std::string tok;
        while (ss >> tok) toks.push_back(tok);
        if (toks.empty() || toks.front().front() == '#') continue;
        lines.push_back(std::move(toks));
    }
    return lines;
}

/// Load a corpus against an existing vocabulary; unknown tokens map to unk.
inline Corpus load_corpus(const std::string& path, const Vocab& vocab,
                          const std::string& domain_tag = "") {
    Corpus c;
    c.vocab = vocab;
    c.domain_tag = domain_tag;
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < vocab.tokens.size(); ++i) index[vocab.tokens[i]] = i;
    for (const auto& line : read_token_lines(path)) {
        std::vector<std::size_t> seq;
        seq.reserve(line.size());
        for (const auto& tok : line) {
            auto it = index.find(tok);
            seq.push_back(it == index.end() ? vocab.unk_id : it->second);
        }
        c.sequences.push_back(std::move(seq));
    }
    if (c.sequences.empty()) throw Error("net.load_corpus", "'" + path + "' has no sequences");
    return c;
}

/// Load a training corpus, building its vocabulary from the file itself.
inline Corpus load_corpus_build_vocab(const std::string& path,
                                      const std::string& domain_tag = "") {
    auto lines = read_token_lines(path);
    if (lines.empty()) throw Error("net.load_corpus", "'" + path + "' has no sequences");
    return load_corpus(path, build_vocab(lines), domain_tag);
}

// --- the network ----------------------------------------------------------

enum class Activation { Relu, Tanh };

inline const char* activation_name(Activation a) {
    return a == Activation::Relu ? "relu" : "tanh";
}

inline std::optional<Activation> activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    return std::nullopt;
}

struct HiddenLayer {
    Matrix weight;             // n_out x n_in
    std::vector<double> bias;  // n_out
    Activation activation = Activation::Relu;
};

/// k-context feed-forward next-token model. The input of the first hidden
/// layer is the concatenation of the k embedded context tokens (k*d wide).
struct LayeredNet {
    Vocab vocab;
    std::size_t context_width = 0;    // k
    Matrix embed;                     // V x d
    std::vector<HiddenLayer> hidden;  // shapes compose front to back
    Matrix out_proj;                  // V x n_out(last)

    std::size_t embed_dim() const { return embed.cols; }
    std::size_t input_width() const { return context_width * embed.cols; }
};

inline void validate_shapes(const LayeredNet& net, const std::string& context) {
    const std::size_t v = net.vocab.size();
    if (v == 0) throw Error(context, "empty vocabulary");
    if (net.context_width == 0) throw Error(context, "context width must be positive");
    if (net.embed.rows != v)
        throw Error(context, "embedding has " + std::to_string(net.embed.rows) +
                                 " rows, vocabulary has " + std::to_string(v) + " tokens");
    if (net.hidden.empty()) throw Error(context, "no hidden layers");
    std::size_t in_width = net.input_width();
    for (std::size_t l = 0; l < net.hidden.size(); ++l) {
        const auto& layer = net.hidden[l];
        if (layer.weight.cols != in_width)
            throw Error(context, "hidden layer " + std::to_string(l) + ": weight is " +
                                     std::to_string(layer.weight.rows) + "x" +
                                     std::to_string(layer.weight.cols) + " but input has width " +
                                     std::to_string(in_width));
        if (layer.bias.size() != layer.weight.rows)
            throw Error(context, "hidden layer " + std::to_string(l) + ": bias length " +
                                     std::to_string(layer.bias.size()) + " != " +
                                     std::to_string(layer.weight.rows));
        in_width = layer.weight.rows;
    }
    if (net.out_proj.cols != in_width)
        throw Error(context, "output projection: weight is " + std::to_string(net.out_proj.rows) +
                                 "x" + std::to_string(net.out_proj.cols) +
                                 " but last hidden width is " + std::to_string(in_width));
    if (net.out_proj.rows != v)
        throw Error(context, "output projection has " + std::to_string(net.out_proj.rows) +
                                 " rows, vocabulary has " + std::to_string(v) + " tokens");
}

/// Seeded init, uniform in [-1/sqrt(n_in), +1/sqrt(n_in)] per tensor
/// (embedding uses n_in = d, the output projection n_in = last width).
inline LayeredNet init_net(const Vocab& vocab, std::size_t context_width, std::size_t embed_dim,
                           const std::vector<std::size_t>& hidden_widths,
                           const std::vector<Activation>& activations, std::uint64_t seed) {
    validate_vocab(vocab, "net.init");
    if (hidden_widths.empty()) throw Error("net.init", "at least one hidden layer required");
    if (activations.size() != hidden_widths.size())
        throw Error("net.init", "one activation per hidden layer required");
    if (context_width == 0 || embed_dim == 0)
        throw Error("net.init", "context width and embedding dim must be positive");

    Rng rng(derive_seed(seed, "init"));
    auto fill = [&rng](Matrix& m, double bound) {
        for (auto& x : m.data) x = uniform_real(rng, -bound, bound);
    };

    LayeredNet net;
    net.vocab = vocab;
    net.context_width = context_width;
    net.embed = Matrix(vocab.size(), embed_dim);
    fill(net.embed, 1.0 / std::sqrt(static_cast<double>(embed_dim)));

    std::size_t in_width = context_width * embed_dim;
    for (std::size_t l = 0; l < hidden_widths.size(); ++l) {
        HiddenLayer layer;
        layer.activation = activations[l];
        layer.weight = Matrix(hidden_widths[l], in_width);
        double bound = 1.0 / std::sqrt(static_cast<double>(in_width));
        fill(layer.weight, bound);
        layer.bias.resize(hidden_widths[l]);
        for (auto& b : layer.bias) b = uniform_real(rng, -bound, bound);
        net.hidden.push_back(std::move(layer));
        in_width = hidden_widths[l];
    }
    net.out_proj = Matrix(vocab.size(), in_width);
    fill(net.out_proj, 1.0 / std::sqrt(static_cast<double>(in_width)));
    return net;
}

// --- flat parameter view ---------------------------------------------------
//
// Order: embed row-major, then per hidden layer W row-major followed by b,
// then out_proj row-major. from_params(to_params(net)) is bit-exact.

using ParamVector = std::vector<double>;

inline std::size_t param_count(const LayeredNet& net) {
    std::size_t n = net.embed.data.size() + net.out_proj.data.size();
    for (const auto& l : net.hidden) n += l.weight.data.size() + l.bias.size();
    return n;
}

inline ParamVector to_params(const LayeredNet& net) {
    ParamVector p;
    p.reserve(param_count(net));
    p.insert(p.end(), net.embed.data.begin(), net.embed.data.end());
    for (const auto& l : net.hidden) {
        p.insert(p.end(), l.weight.data.begin(), l.weight.data.end());
        p.insert(p.end(), l.bias.begin(), l.bias.end());
    }
    p.insert(p.end(), net.out_proj.data.begin(), net.out_proj.data.end());
    return p;
}

/// Rebuild a net with the architecture of `shape` and parameters `p`.
inline LayeredNet from_params(const LayeredNet& shape, const ParamVector& p) {
    if (p.size() != param_count(shape))
        throw Error("net.from_params", "expected " + std::to_string(param_count(shape)) +
                                           " parameters, got " + std::to_string(p.size()));
    LayeredNet net = shape;
    std::size_t off = 0;
    auto take = [&](double* dst, std::size_t n) {
        std::copy(p.begin() + off, p.begin() + off + n, dst);
        off += n;
    };
    take(net.embed.data.data(), net.embed.data.size());
    for (auto& l : net.hidden) {
        take(l.weight.data.data(), l.weight.data.size());
        take(l.bias.data(), l.bias.size());
    }
    take(net.out_proj.data.data(), net.out_proj.data.size());
    return net;
}

/// Human-readable location of a flat parameter index, e.g. "hidden[1].W[3][2]".
inline std::string param_name(const LayeredNet& net, std::size_t index) {
    std::size_t off = 0;
    auto in_block = [&](std::size_t n) {
        bool hit = index < off + n;
        if (!hit) off += n;
        return hit;
    };
    if (in_block(net.embed.data.size())) {
        std::size_t i = index - off;
        return "embed[" + std::to_string(i / net.embed.cols) + "][" +
               std::to_string(i % net.embed.cols) + "]";
    }
    for (std::size_t l = 0; l < net.hidden.size(); ++l) {
        const auto& layer = net.hidden[l];
        if (in_block(layer.weight.data.size())) {
            std::size_t i = index - off;
            return "hidden[" + std::to_string(l) + "].W[" + std::to_string(i / layer.weight.cols) +
                   "][" + std::to_string(i % layer.weight.cols) + "]";
        }
        if (in_block(layer.bias.size()))
            return "hidden[" + std::to_string(l) + "].b[" + std::to_string(index - off) + "]";
    }
    if (in_block(net.out_proj.data.size())) {
        std::size_t i = index - off;
        return "out_proj[" + std::to_string(i / net.out_proj.cols) + "][" +
               std::to_string(i % net.out_proj.cols) + "]";
    }
    return "param[" + std::to_string(index) + "]";
}

// --- forward pass ------------------------------------------------------------

namespace detail {

inline double apply_activation(Activation a, double z) {
    return a == Activation::Relu ? (z > 0.0 ? z : 0.0) : std::tanh(z);
}

inline void check_context(const LayeredNet& net, const std::vector<std::size_t>& context,
                          const std::string& op) {
    if (context.size() != net.context_width)
        throw Error(op, "context has " + std::to_string(context.size()) + " tokens, expected " +
                            std::to_string(net.context_width));
    for (std::size_t id : context)
        if (id >= net.vocab.size())
            throw Error(op, "token id " + std::to_string(id) + " out of range (V=" +
                                std::to_string(net.vocab.size()) + ")");
}

struct ForwardTrace {
    std::vector<double> input;                    // concatenated embeddings, k*d
    std::vector<std::vector<double>> pre;         // z per hidden layer
    std::vector<std::vector<double>> activations; // post-activation per hidden layer
    std::vector<double> logits;                   // V
    double log_norm = 0.0;                        // logsumexp(logits)
};

inline ForwardTrace run_forward(const LayeredNet& net, const std::vector<std::size_t>& context,
                                const std::string& op) {
    validate_shapes(net, op);
    check_context(net, context, op);

    ForwardTrace t;
    const std::size_t d = net.embed_dim();
    t.input.resize(net.input_width());
    for (std::size_t p = 0; p < context.size(); ++p)
        for (std::size_t j = 0; j < d; ++j) t.input[p * d + j] = net.embed(context[p], j);

    const std::vector<double>* h = &t.input;
    for (const auto& layer : net.hidden) {
        std::vector<double> z = matvec(layer.weight, *h);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
        std::vector<double> a(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) a[i] = apply_activation(layer.activation, z[i]);
        t.pre.push_back(std::move(z));
        t.activations.push_back(std::move(a));
        h = &t.activations.back();
    }
    t.logits = matvec(net.out_proj, *h);

    // softmax normalizer with max-subtraction
    double mx = *std::max_element(t.logits.begin(), t.logits.end());
    double sum = 0.0;
    for (double z : t.logits) sum += std::exp(z - mx);
    t.log_norm = mx + std::log(sum);
    return t;
}

inline std::vector<double> probabilities(const ForwardTrace& t) {
    std::vector<double> p(t.logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(t.logits[i] - t.log_norm);
    return p;
}

}  // namespace detail

/// Predictive distribution over the vocabulary for one context window.
inline std::vector<double> forward(const LayeredNet& net, const std::vector<std::size_t>& context) {
    return detail::probabilities(detail::run_forward(net, context, "net.forward"));
}

struct ForwardResult {
    std::vector<double> probabilities;
    std::vector<std::vector<double>> activations;  // one vector per hidden layer
};

inline ForwardResult forward_with_activations(const LayeredNet& net,
                                              const std::vector<std::size_t>& context) {
    auto t = detail::run_forward(net, context, "net.forward_with_activations");
    return {detail::probabilities(t), std::move(t.activations)};
}

// --- loss --------------------------------------------------------------------

struct ContextPair {
    std::vector<std::size_t> context;
    std::size_t target;
};

/// All (context, next-token) pairs from sliding a width-k window over the
/// corpus. Every sequence must be longer than k.
inline std::vector<ContextPair> extract_pairs(const Corpus& corpus, std::size_t k,
                                              const std::string& op) {
    if (corpus.sequences.empty()) throw Error(op, "empty corpus");
    std::vector<ContextPair> pairs;
    for (std::size_t s = 0; s < corpus.sequences.size(); ++s) {
        const auto& seq = corpus.sequences[s];
        if (seq.size() <= k)
            throw Error(op, "sequence " + std::to_string(s) + " has length " +
                                std::to_string(seq.size()) + ", need > context width " +
                                std::to_string(k));
        for (std::size_t t = k; t < seq.size(); ++t) {
            ContextPair p;
            p.context.assign(seq.begin() + (t - k), seq.begin() + t);
            p.target = seq[t];
            pairs.push_back(std::move(p));
        }
    }
    return pairs;
}

namespace detail {

inline void check_params_finite(const LayeredNet& net, const std::string& op) {
    ParamVector p = to_params(net);
    for (std::size_t i = 0; i < p.size(); ++i)
        if (!std::isfinite(p[i]))
            throw Error(op, "non-finite parameter at " + param_name(net, i));
}

inline double pair_cross_entropy(const LayeredNet& net, const ContextPair& pair,
                                 const std::string& op) {
    auto t = run_forward(net, pair.context, op);
    return t.log_norm - t.logits[pair.target];  // -ln p(target)
}

}  // namespace detail

/// Mean token-level cross-entropy (natural log) over all window pairs.
inline double loss(const LayeredNet& net, const Corpus& corpus) {
    const std::string op = "net.loss";
    detail::check_params_finite(net, op);
    auto pairs = extract_pairs(corpus, net.context_width, op);
    double total = 0.0;
    for (const auto& p : pairs) total += detail::pair_cross_entropy(net, p, op);
    double mean = total / static_cast<double>(pairs.size());
    if (!std::isfinite(mean)) throw Error(op, "non-finite loss value");
    return mean;
}

// --- gradients and training ---------------------------------------------------

/// Mean analytic gradient over the given pairs, as a flat ParamVector in
/// to_params order. Also reports the mean cross-entropy of the batch.
inline ParamVector loss_gradient(const LayeredNet& net, const std::vector<ContextPair>& pairs,
                                 double* batch_loss = nullptr) {
    const std::string op = "net.loss_gradient";
    if (pairs.empty()) throw Error(op, "no pairs");

    LayeredNet grad = net;  // same shapes, zeroed storage
    std::fill(grad.embed.data.begin(), grad.embed.data.end(), 0.0);
    for (auto& l : grad.hidden) {
        std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
        std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
    std::fill(grad.out_proj.data.begin(), grad.out_proj.data.end(), 0.0);

    const std::size_t d = net.embed_dim();
    double total = 0.0;
    for (const auto& pair : pairs) {
        auto t = detail::run_forward(net, pair.context, op);
        total += t.log_norm - t.logits[pair.target];

        // d(loss)/d(logits) = softmax - onehot(target)
        std::vector<double> dlogits = detail::probabilities(t);
        dlogits[pair.target] -= 1.0;

        const auto& h_last = t.activations.back();
        for (std::size_t i = 0; i < net.out_proj.rows; ++i)
            for (std::size_t j = 0; j < net.out_proj.cols; ++j)
                grad.out_proj(i, j) += dlogits[i] * h_last[j];

        std::vector<double> dh(net.out_proj.cols, 0.0);
        for (std::size_t i = 0; i < net.out_proj.rows; ++i)
            for (std::size_t j = 0; j < net.out_proj.cols; ++j)
                dh[j] += net.out_proj(i, j) * dlogits[i];

        for (std::size_t l = net.hidden.size(); l-- > 0;) {
            const auto& layer = net.hidden[l];
            auto& glayer = grad.hidden[l];
            std::vector<double> dz(dh.size());
            for (std::size_t i = 0; i < dz.size(); ++i) {
                double deriv = layer.activation == Activation::Relu
                                   ? (t.pre[l][i] > 0.0 ? 1.0 : 0.0)
                                   : 1.0 - t.activations[l][i] * t.activations[l][i];
                dz[i] = dh[i] * deriv;
            }
            const std::vector<double>& h_prev = l == 0 ? t.input : t.activations[l - 1];
            for (std::size_t i = 0; i < layer.weight.rows; ++i) {
                for (std::size_t j = 0; j < layer.weight.cols; ++j)
                    glayer.weight(i, j) += dz[i] * h_prev[j];
                glayer.bias[i] += dz[i];
            }
            std::vector<double> dprev(layer.weight.cols, 0.0);
            for (std::size_t i = 0; i < layer.weight.rows; ++i)
                for (std::size_t j = 0; j < layer.weight.cols; ++j)
                    dprev[j] += layer.weight(i, j) * dz[i];
            dh = std::move(dprev);
        }

        // dh is now w.r.t. the concatenated embedding input
        for (std::size_t p = 0; p < pair.context.size(); ++p)
            for (std::size_t j = 0; j < d; ++j) grad.embed(pair.context[p], j) += dh[p * d + j];
    }

    ParamVector g = to_params(grad);
    double inv = 1.0 / static_cast<double>(pairs.size());
    for (auto& x : g) x *= inv;
    if (batch_loss) *batch_loss = total * inv;
    return g;
}

struct TrainConfig {
    double lr = 0.1;
    std::size_t steps = 100;
    std::size_t batch = 16;
    std::uint64_t seed = 0;
    std::string optimizer = "sgd";
};

struct TrainResult {
    LayeredNet net;
    std::vector<double> loss_history;  // pre-update batch loss per step
};

/// Plain SGD on minibatches sampled uniformly with replacement.
/// Deterministic for a fixed seed.
inline TrainResult train(const LayeredNet& start, const Corpus& corpus, const TrainConfig& cfg) {
    const std::string op = "net.train";
    if (cfg.lr <= 0.0) throw Error(op, "learning rate must be positive");
    if (cfg.batch == 0) throw Error(op, "batch size must be positive");
    if (cfg.optimizer != "sgd") throw Error(op, "unknown optimizer '" + cfg.optimizer + "'");
    validate_shapes(start, op);

    auto pairs = extract_pairs(corpus, start.context_width, op);
    Rng rng(derive_seed(cfg.seed, "train"));

    TrainResult result;
    result.net = start;
    ParamVector params = to_params(start);
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::vector<ContextPair> batch;
        batch.reserve(cfg.batch);
        for (std::size_t b = 0; b < cfg.batch; ++b)
            batch.push_back(pairs[uniform_index(rng, pairs.size())]);

        double batch_loss = 0.0;
        ParamVector g = loss_gradient(result.net, batch, &batch_loss);
        if (!std::isfinite(batch_loss))
            throw Error(op, "diverged: non-finite loss at step " + std::to_string(step));
        result.loss_history.push_back(batch_loss);

        for (std::size_t i = 0; i < params.size(); ++i) {
            params[i] -= cfg.lr * g[i];
            if (!std::isfinite(params[i]))
                throw Error(op, "diverged: non-finite parameter " +
                                    param_name(result.net, i) + " after step " +
                                    std::to_string(step));
        }
        result.net = from_params(result.net, params);
    }
    return result;
}

// --- generation ------------------------------------------------------------

/// Greedy argmax decoding for `length` tokens; ties break to the lowest id.
inline std::vector<std::size_t> generate(const LayeredNet& net,
                                         const std::vector<std::size_t>& prompt,
                                         std::size_t length) {
    detail::check_context(net, prompt, "net.generate");
    std::vector<std::size_t> context = prompt;
    std::vector<std::size_t> out;
    out.reserve(length);
    for (std::size_t i = 0; i < length; ++i) {
        std::vector<double> p = forward(net, context);
        std::size_t best = 0;
        for (std::size_t t = 1; t < p.size(); ++t)
            if (p[t] > p[best]) best = t;
        out.push_back(best);
        context.erase(context.begin());
        context.push_back(best);
    }
    return out;
}

// --- model text format -------------------------------------------------------
//
//   otfuse-net v1
//   vocab <V> <unk_id>
//   <V token lines>
//   context <k>
//   embed <V> <d>         followed by V rows of d floats
//   hidden <H>
//   layer <act> <n_out> <n_in>   followed by n_out weight rows, then one bias row
//   out_proj <V> <n_last>        followed by V rows
//
// '#' comment lines may precede the header (the CLI records its invocation
// there). Floats are written with 17 significant digits, so save/load
// round-trips are exact.

inline void save_model(const LayeredNet& net, std::ostream& out) {
    validate_shapes(net, "net.save_model");
    validate_vocab(net.vocab, "net.save_model");
    auto write_matrix = [&out](const Matrix& m) {
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t j = 0; j < m.cols; ++j) {
                if (j) out << ' ';
                out << fmt_g17(m(i, j));
            }
            out << '\n';
        }
    };
    out << "otfuse-net v1\n";
    out << "vocab " << net.vocab.size() << ' ' << net.vocab.unk_id << '\n';
    for (const auto& t : net.vocab.tokens) out << t << '\n';
    out << "context " << net.context_width << '\n';
    out << "embed " << net.embed.rows << ' ' << net.embed.cols << '\n';
    write_matrix(net.embed);
    out << "hidden " << net.hidden.size() << '\n';
    for (const auto& l : net.hidden) {
        out << "layer " << activation_name(l.activation) << ' ' << l.weight.rows << ' '
            << l.weight.cols << '\n';
        write_matrix(l.weight);
        for (std::size_t i = 0; i < l.bias.size(); ++i) {
            if (i) out << ' ';
            out << fmt_g17(l.bias[i]);
        }
        out << '\n';
    }
    out << "out_proj " << net.out_proj.rows << ' ' << net.out_proj.cols << '\n';
    write_matrix(net.out_proj);
}

inline void save_model(const LayeredNet& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("net.save_model", "cannot open '" + path + "' for writing");
    save_model(net, out);
    if (!out) throw Error("net.save_model", "write to '" + path + "' failed");
}

namespace detail {

class LineReader {
public:
    LineReader(std::istream& in, const std::string& op) : in_(in), op_(op) {}

    std::string next(const std::string& what) {
        std::string line;
        if (!std::getline(in_, line))
            throw Error(op_, "line " + std::to_string(line_no_ + 1) + ": expected " + what +
                                 ", got end of file");
        ++line_no_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    }

    std::size_t line_no() const { return line_no_; }

    [[noreturn]] void fail(const std::string& detail) {
        throw Error(op_, "line " + std::to_string(line_no_) + ": " + detail);
    }

private:
    std::istream& in_;
    std::string op_;
    std::size_t line_no_ = 0;
};

inline std::vector<double> parse_floats(LineReader& r, const std::string& line,
                                        std::size_t expect) {
    std::istringstream ss(line);
    std::vector<double> vals;
    std::string tok;
    while (ss >> tok) {
        char* end = nullptr;
        double x = std::strtod(tok.c_str(), &end);
        if (end != tok.c_str() + tok.size()) r.fail("bad float '" + tok + "'");
        vals.push_back(x);
    }
    if (vals.size() != expect)
        r.fail("expected " + std::to_string(expect) + " values, got " +
               std::to_string(vals.size()));
    return vals;
}

inline Matrix parse_matrix(LineReader& r, std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        auto vals = parse_floats(r, r.next("matrix row"), cols);
        std::copy(vals.begin(), vals.end(), m.data.begin() + i * cols);
    }
    return m;
}

}  // namespace detail

inline LayeredNet load_model(std::istream& in) {
    const std::string op = "net.load_model";
    detail::LineReader r(in, op);

    std::string header = r.next("header");
    while (!header.empty() && header.front() == '#') header = r.next("header");
    if (header != "otfuse-net v1") r.fail("bad header, expected 'otfuse-net v1'");

    auto expect_fields = [&r](const std::string& line, const std::string& keyword,
                              std::size_t nvals) {
        std::istringstream ss(line);
        std::string kw;
        ss >> kw;
        if (kw != keyword) r.fail("expected '" + keyword + "', got '" + kw + "'");
        std::vector<std::size_t> vals;
        std::size_t v;
        while (ss >> v) vals.push_back(v);
        if (vals.size() != nvals)
            r.fail("'" + keyword + "' needs " + std::to_string(nvals) + " fields");
        return vals;
    };

    LayeredNet net;
    auto vocab_fields = expect_fields(r.next("vocab line"), "vocab", 2);
    net.vocab.unk_id = vocab_fields[1];
    for (std::size_t i = 0; i < vocab_fields[0]; ++i) net.vocab.tokens.push_back(r.next("token"));
    validate_vocab(net.vocab, op);

    net.context_width = expect_fields(r.next("context line"), "context", 1)[0];

    auto embed_dims = expect_fields(r.next("embed line"), "embed", 2);
    net.embed = detail::parse_matrix(r, embed_dims[0], embed_dims[1]);

    std::size_t n_hidden = expect_fields(r.next("hidden line"), "hidden", 1)[0];
    for (std::size_t l = 0; l < n_hidden; ++l) {
        std::istringstream ss(r.next("layer line"));
        std::string kw, act;
        std::size_t n_out = 0, n_in = 0;
        if (!(ss >> kw >> act >> n_out >> n_in) || kw != "layer")
            r.fail("expected 'layer <act> <n_out> <n_in>'");
        auto a = activation_from_name(act);
        if (!a) r.fail("unknown activation '" + act + "'");
        HiddenLayer layer;
        layer.activation = *a;
        layer.weight = detail::parse_matrix(r, n_out, n_in);
        layer.bias = detail::parse_floats(r, r.next("bias row"), n_out);
        net.hidden.push_back(std::move(layer));
    }

    auto out_dims = expect_fields(r.next("out_proj line"), "out_proj", 2);
    net.out_proj = detail::parse_matrix(r, out_dims[0], out_dims[1]);

    validate_shapes(net, op);
    detail::check_params_finite(net, op);
    return net;
}

inline LayeredNet load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("net.load_model", "cannot open '" + path + "'");
    return load_model(in);
}

}  // namespace otfuse::net
