// otfuse: train, fuse and probe small feed-forward token-prediction models.
//
// Every artifact embeds the invocation (command, flags, seed) so runs are
// reproducible; repeating a subcommand with the same seed and the same
// output basenames yields byte-identical files. Path-valued flags are
// recorded as basenames so artifacts do not depend on where they live.

#include "otfuse/common.hpp"
#include "otfuse/corpusgen.hpp"
#include "otfuse/fusion.hpp"
#include "otfuse/metrics.hpp"
#include "otfuse/net.hpp"
#include "otfuse/ot.hpp"
#include "otfuse/probes.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using otfuse::Error;

namespace {

std::string base_name(const std::string& path) { return fs::path(path).filename().string(); }
std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

// Invocation record embedded into every artifact, as a '#' line in text
// outputs and a "config" object in JSON ones.
class Echo {
public:
    explicit Echo(std::string command) : command_(std::move(command)) {}

    Echo& set(const std::string& key, const std::string& value) {
        fields_.emplace_back(key, value);
        return *this;
    }
    Echo& set(const std::string& key, const char* value) { return set(key, std::string(value)); }
    Echo& set(const std::string& key, double value) { return set(key, otfuse::fmt_g17(value)); }
    Echo& set(const std::string& key, unsigned long long value) {
        return set(key, std::to_string(value));
    }
    Echo& set(const std::string& key, bool value) {
        return set(key, value ? std::string("true") : std::string("false"));
    }
    Echo& path(const std::string& key, const std::string& p) { return set(key, base_name(p)); }

    std::string line() const {
        std::string s = "otfuse " + command_;
        for (const auto& [k, v] : fields_) s += ' ' + k + '=' + v;
        return s;
    }

    json to_json() const {
        json j{{"command", command_}};
        for (const auto& [k, v] : fields_) j[k] = v;
        return j;
    }

private:
    std::string command_;
    std::vector<std::pair<std::string, std::string>> fields_;
};

std::ofstream open_out(const std::string& path, const std::string& op) {
    std::ofstream out(path);
    if (!out) throw Error(op, "cannot open '" + path + "' for writing");
    return out;
}

void write_json_file(const json& j, const std::string& path, const std::string& op) {
    auto out = open_out(path, op);
    out << j.dump(2) << '\n';
    if (!out) throw Error(op, "write to '" + path + "' failed");
}

void write_model_file(const otfuse::net::LayeredNet& model, const std::string& path,
                      const Echo& echo) {
    auto out = open_out(path, "net.save_model");
    out << "# " << echo.line() << '\n';
    otfuse::net::save_model(model, out);
    if (!out) throw Error("net.save_model", "write to '" + path + "' failed");
}

std::vector<std::size_t> parse_widths(const std::string& spec, const std::string& op) {
    std::vector<std::size_t> widths;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        std::size_t pos = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &pos);
        } catch (const std::exception&) {
            throw Error(op, "bad hidden width '" + item + "'");
        }
        if (pos != item.size() || v == 0) throw Error(op, "bad hidden width '" + item + "'");
        widths.push_back(v);
    }
    if (widths.empty()) throw Error(op, "need at least one hidden width");
    return widths;
}

std::vector<otfuse::net::Activation> parse_activations(const std::string& spec,
                                                       std::size_t n_layers,
                                                       const std::string& op) {
    std::vector<otfuse::net::Activation> acts;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        auto a = otfuse::net::activation_from_name(item);
        if (!a) throw Error(op, "unknown activation '" + item + "'");
        acts.push_back(*a);
    }
    if (acts.empty()) throw Error(op, "need at least one activation");
    if (acts.size() == 1) acts.resize(n_layers, acts.front());
    if (acts.size() != n_layers)
        throw Error(op, "got " + std::to_string(acts.size()) + " activations for " +
                            std::to_string(n_layers) + " hidden layers");
    return acts;
}

otfuse::ot::Metric parse_metric(const std::string& name, const std::string& op) {
    auto m = otfuse::ot::metric_from_name(name);
    if (!m) throw Error(op, "unknown metric '" + name + "'");
    return *m;
}

// --- gen -------------------------------------------------------------------

struct GenOpts {
    std::string out;
    std::string paraphrase_out;
    std::string domain = "a";
    std::size_t sequences = 200;
    std::uint64_t seed = 0;
};

void run_gen(const GenOpts& o) {
    otfuse::gen::GenConfig cfg;
    cfg.domain = o.domain;
    cfg.sequences = o.sequences;
    cfg.seed = o.seed;
    auto corpus = otfuse::gen::generate_text(cfg);

    Echo echo("gen");
    echo.set("domain", o.domain)
        .set("sequences", static_cast<unsigned long long>(o.sequences))
        .set("seed", static_cast<unsigned long long>(o.seed))
        .path("out", o.out);
    otfuse::gen::write_token_lines(corpus.lines, o.out, echo.line());
    if (!o.paraphrase_out.empty()) {
        Echo para("gen");
        para.set("domain", o.domain)
            .set("sequences", static_cast<unsigned long long>(o.sequences))
            .set("seed", static_cast<unsigned long long>(o.seed))
            .set("paraphrase", true)
            .path("out", o.paraphrase_out);
        otfuse::gen::write_token_lines(corpus.paraphrases, o.paraphrase_out, para.line());
    }
}

// --- train -------------------------------------------------------------------

struct TrainOpts {
    std::string corpus;
    std::string out;
    std::string trajectory;  // default: <out>.trajectory.csv
    std::string init;        // continue from an existing model
    std::size_t context = 2;
    std::size_t embed_dim = 8;
    std::string hidden = "16,16";
    std::string activations = "relu";
    double lr = 0.1;
    std::size_t steps = 200;
    std::size_t batch = 16;
    std::uint64_t seed = 0;
    bool arch_flags_given = false;
};

void run_train(const TrainOpts& o) {
    const std::string op = "cli.train";
    otfuse::net::LayeredNet start;
    otfuse::net::Corpus corpus;
    if (!o.init.empty()) {
        if (o.arch_flags_given)
            throw Error(op, "--init conflicts with --context/--embed-dim/--hidden/--activations");
        start = otfuse::net::load_model(o.init);
        corpus = otfuse::net::load_corpus(o.corpus, start.vocab, stem_of(o.corpus));
    } else {
        corpus = otfuse::net::load_corpus_build_vocab(o.corpus, stem_of(o.corpus));
        auto widths = parse_widths(o.hidden, op);
        auto acts = parse_activations(o.activations, widths.size(), op);
        start = otfuse::net::init_net(corpus.vocab, o.context, o.embed_dim, widths, acts, o.seed);
    }

    otfuse::net::TrainConfig cfg;
    cfg.lr = o.lr;
    cfg.steps = o.steps;
    cfg.batch = o.batch;
    cfg.seed = o.seed;
    auto result = otfuse::net::train(start, corpus, cfg);
    double final_loss = otfuse::net::loss(result.net, corpus);

    Echo echo("train");
    echo.path("corpus", o.corpus);
    if (!o.init.empty())
        echo.path("init", o.init);
    else
        echo.set("context", static_cast<unsigned long long>(o.context))
            .set("embed_dim", static_cast<unsigned long long>(o.embed_dim))
            .set("hidden", o.hidden)
            .set("activations", o.activations);
    echo.set("lr", o.lr)
        .set("steps", static_cast<unsigned long long>(o.steps))
        .set("batch", static_cast<unsigned long long>(o.batch))
        .set("seed", static_cast<unsigned long long>(o.seed))
        .path("out", o.out);

    write_model_file(result.net, o.out, echo);

    std::string traj = o.trajectory.empty() ? o.out + ".trajectory.csv" : o.trajectory;
    auto csv = open_out(traj, op);
    csv << "# " << echo.line() << '\n';
    csv << "# final_loss=" << otfuse::fmt_g17(final_loss) << '\n';
    csv << "step,loss\n";
    for (std::size_t i = 0; i < result.loss_history.size(); ++i)
        csv << (i + 1) << ',' << otfuse::fmt_g17(result.loss_history[i]) << '\n';
}

// --- fuse -------------------------------------------------------------------

struct FuseOpts {
    std::string anchor;
    std::string source;
    std::string probe;
    std::string out;
    std::string trace;  // default: <out>.trace.json
    double lambda = 0.9;
    std::size_t samples = 64;
    std::string solver = "exact";
    double epsilon = 0.1;
    std::string metric = "euclidean";
    bool swap_roles = false;
    std::uint64_t seed = 0;
};

void run_fuse(const FuseOpts& o) {
    const std::string op = "cli.fuse";
    auto anchor = otfuse::net::load_model(o.anchor);
    auto source = otfuse::net::load_model(o.source);
    if (o.swap_roles) std::swap(anchor, source);
    if (anchor.vocab.tokens != source.vocab.tokens ||
        anchor.vocab.unk_id != source.vocab.unk_id)
        throw Error(op, "models have different vocabularies");

    otfuse::fusion::FusionConfig cfg;
    cfg.lambda_pt = o.lambda;
    cfg.probe_samples = o.samples;
    cfg.metric = parse_metric(o.metric, op);
    cfg.seed = o.seed;
    if (o.solver == "sinkhorn")
        cfg.solver = {otfuse::ot::SolverTag::Kind::Sinkhorn, o.epsilon};
    else if (o.solver != "exact")
        throw Error(op, "unknown solver '" + o.solver + "'");

    auto probe = otfuse::net::load_corpus(o.probe, anchor.vocab, stem_of(o.probe));
    auto result = otfuse::fusion::fuse_models(anchor, source, probe, cfg);

    Echo echo("fuse");
    echo.path("anchor", o.anchor)
        .path("source", o.source)
        .path("probe", o.probe)
        .set("lambda", o.lambda)
        .set("samples", static_cast<unsigned long long>(o.samples))
        .set("solver", cfg.solver.str())
        .set("metric", o.metric)
        .set("swap_roles", o.swap_roles)
        .set("seed", static_cast<unsigned long long>(o.seed))
        .path("out", o.out);

    write_model_file(result.model, o.out, echo);

    std::string trace_path = o.trace.empty() ? o.out + ".trace.json" : o.trace;
    fs::path tp(trace_path);
    std::vector<std::string> plan_names;
    for (std::size_t l = 0; l < result.trace.layers.size(); ++l) {
        std::string name = tp.stem().string() + "_plan_layer" + std::to_string(l) + ".csv";
        otfuse::ot::write_plan_csv(result.trace.layers[l].plan,
                                   (tp.parent_path() / name).string());
        plan_names.push_back(name);  // relative to the trace file
    }
    json j{{"config", echo.to_json()},
           {"trace", otfuse::fusion::trace_to_json(result.trace, plan_names)}};
    write_json_file(j, trace_path, op);
}

// --- landscape ---------------------------------------------------------------

struct LandscapeOpts {
    std::string base;
    std::string target;
    std::string aux;
    std::string corpus;
    std::string out;
    std::string metadata;  // default: <out>.meta.json
    double alpha_min = -0.5, alpha_max = 1.5;
    double beta_min = -0.5, beta_max = 1.5;
    std::size_t grid = 25;
};

void run_landscape(const LandscapeOpts& o) {
    const std::string op = "cli.landscape";
    auto m0 = otfuse::net::load_model(o.base);
    auto m1 = otfuse::net::load_model(o.target);
    auto m2 = otfuse::net::load_model(o.aux);
    otfuse::fusion::require_same_architecture(m0, m1, op);
    otfuse::fusion::require_same_architecture(m0, m2, op);

    otfuse::probes::LandscapeSpec spec;
    spec.theta0 = otfuse::net::to_params(m0);
    spec.theta1 = otfuse::net::to_params(m1);
    spec.theta2 = otfuse::net::to_params(m2);
    spec.eval_corpus = otfuse::net::load_corpus(o.corpus, m0.vocab, stem_of(o.corpus));
    spec.base = std::move(m0);
    spec.alpha_lo = o.alpha_min;
    spec.alpha_hi = o.alpha_max;
    spec.beta_lo = o.beta_min;
    spec.beta_hi = o.beta_max;
    spec.grid_n = o.grid;
    auto grid = otfuse::probes::loss_surface(spec);

    Echo echo("landscape");
    echo.path("base", o.base)
        .path("target", o.target)
        .path("aux", o.aux)
        .path("corpus", o.corpus)
        .set("alpha_min", o.alpha_min)
        .set("alpha_max", o.alpha_max)
        .set("beta_min", o.beta_min)
        .set("beta_max", o.beta_max)
        .set("grid", static_cast<unsigned long long>(o.grid))
        .path("out", o.out);

    auto csv = open_out(o.out, op);
    otfuse::probes::write_landscape_csv(grid, csv, echo.line());

    std::string meta = o.metadata.empty() ? o.out + ".meta.json" : o.metadata;
    json j{{"config", echo.to_json()}, {"surface", otfuse::probes::landscape_metadata(grid)}};
    write_json_file(j, meta, op);
}

// --- entropy -----------------------------------------------------------------

struct EntropyOpts {
    std::string model;
    std::string corpus;
    std::string out;
    std::size_t bins = 10;
};

void run_entropy(const EntropyOpts& o) {
    const std::string op = "cli.entropy";
    auto model = otfuse::net::load_model(o.model);
    auto corpus = otfuse::net::load_corpus(o.corpus, model.vocab, stem_of(o.corpus));
    auto hist = otfuse::probes::entropy_histogram(
        model, corpus, otfuse::probes::uniform_bin_edges(model.vocab.size(), o.bins));
    double mean = otfuse::probes::mean_entropy(model, corpus);

    Echo echo("entropy");
    echo.path("model", o.model)
        .path("corpus", o.corpus)
        .set("bins", static_cast<unsigned long long>(o.bins))
        .path("out", o.out);

    auto csv = open_out(o.out, op);
    csv << "# " << echo.line() << '\n';
    csv << "# mean_entropy=" << otfuse::fmt_g17(mean) << " total_tokens=" << hist.total_tokens
        << '\n';
    otfuse::probes::write_entropy_csv(hist, csv);
}

// --- eval --------------------------------------------------------------------

struct EvalOpts {
    std::string model;
    std::vector<std::string> corpora;
    std::string out;
    std::string extra_refs;  // paraphrase file aligned with the first corpus
    std::optional<double> noise_ratio;
    std::uint64_t seed = 0;
};

void run_eval(const EvalOpts& o) {
    const std::string op = "cli.eval";
    auto model = otfuse::net::load_model(o.model);
    std::vector<otfuse::net::Corpus> corpora;
    for (const auto& path : o.corpora)
        corpora.push_back(otfuse::net::load_corpus(path, model.vocab, stem_of(path)));

    otfuse::metrics::EvalReport report;
    report.domains = otfuse::metrics::domain_eval(model, corpora);

    std::vector<otfuse::metrics::Sequence> all_hyps;
    std::vector<otfuse::metrics::Continuations> conts;
    for (const auto& corpus : corpora) {
        conts.push_back(otfuse::metrics::model_continuations(model, corpus));
        all_hyps.insert(all_hyps.end(), conts.back().hypotheses.begin(),
                        conts.back().hypotheses.end());
    }
    report.ttr = otfuse::metrics::ttr(all_hyps);

    if (!o.extra_refs.empty()) {
        auto para = otfuse::net::load_corpus(o.extra_refs, model.vocab, "paraphrase");
        const auto& first = conts.front();
        if (para.sequences.size() != first.references.size())
            throw Error(op, "paraphrase file has " + std::to_string(para.sequences.size()) +
                                " sequences, first corpus has " +
                                std::to_string(first.references.size()));
        std::vector<std::vector<otfuse::metrics::Sequence>> refs;
        const std::size_t k = model.context_width;
        for (std::size_t i = 0; i < para.sequences.size(); ++i) {
            const auto& seq = para.sequences[i];
            if (seq.size() <= k)
                throw Error(op, "paraphrase sequence " + std::to_string(i) + " has " +
                                    std::to_string(seq.size()) + " tokens, need more than " +
                                    std::to_string(k));
            refs.push_back({first.references[i],
                            otfuse::metrics::Sequence(
                                seq.begin() + static_cast<std::ptrdiff_t>(k), seq.end())});
        }
        report.multi_ref_bleu = otfuse::metrics::bleu(first.hypotheses, refs);
    }

    if (o.noise_ratio)
        report.attack = otfuse::metrics::attack(model, corpora.front(), *o.noise_ratio, o.seed);

    Echo echo("eval");
    echo.path("model", o.model);
    std::string corpus_list;
    for (const auto& path : o.corpora) {
        if (!corpus_list.empty()) corpus_list += ',';
        corpus_list += base_name(path);
    }
    echo.set("corpora", corpus_list);
    if (!o.extra_refs.empty()) echo.path("extra_refs", o.extra_refs);
    if (o.noise_ratio) echo.set("noise_ratio", *o.noise_ratio);
    echo.set("seed", static_cast<unsigned long long>(o.seed)).path("out", o.out);

    json j = otfuse::metrics::report_to_json(report);
    j["config"] = echo.to_json();
    write_json_file(j, o.out, op);
}

// --- attack ------------------------------------------------------------------

struct AttackOpts {
    std::string model;
    std::string corpus;
    std::string out;
    double noise_ratio = 0.1;
    std::uint64_t seed = 0;
};

void run_attack(const AttackOpts& o) {
    const std::string op = "cli.attack";
    auto model = otfuse::net::load_model(o.model);
    auto corpus = otfuse::net::load_corpus(o.corpus, model.vocab, stem_of(o.corpus));
    auto result = otfuse::metrics::attack(model, corpus, o.noise_ratio, o.seed);

    Echo echo("attack");
    echo.path("model", o.model)
        .path("corpus", o.corpus)
        .set("noise_ratio", o.noise_ratio)
        .set("seed", static_cast<unsigned long long>(o.seed))
        .path("out", o.out);

    json j{{"config", echo.to_json()},
           {"bleu_clean", result.bleu_clean},
           {"bleu_noised", result.bleu_noised},
           {"drop", result.drop}};
    write_json_file(j, o.out, op);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"train, fuse and probe small feed-forward token-prediction models"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read option defaults from a TOML file (flags override)");

    GenOpts gen;
    auto* cmd_gen = app.add_subcommand("gen", "generate a synthetic two-domain corpus");
    cmd_gen->add_option("--out", gen.out, "corpus file to write")->required();
    cmd_gen->add_option("--paraphrase-out", gen.paraphrase_out,
                        "aligned paraphrase corpus (verbs swapped for synonyms)");
    cmd_gen->add_option("--domain", gen.domain, "noun domain")
        ->check(CLI::IsMember({"a", "b"}));
    cmd_gen->add_option("--sequences", gen.sequences, "number of lines");
    cmd_gen->add_option("--seed", gen.seed, "random seed");
    cmd_gen->callback([&gen] { run_gen(gen); });

    TrainOpts train;
    auto* cmd_train = app.add_subcommand("train", "train a model with plain SGD");
    cmd_train->add_option("--corpus", train.corpus, "training corpus")->required();
    cmd_train->add_option("--out", train.out, "model file to write")->required();
    cmd_train->add_option("--trajectory", train.trajectory,
                          "loss CSV (default: <out>.trajectory.csv)");
    cmd_train->add_option("--init", train.init, "start from this model instead of random init");
    auto* f_ctx = cmd_train->add_option("--context", train.context, "context width k");
    auto* f_dim = cmd_train->add_option("--embed-dim", train.embed_dim, "embedding dimension");
    auto* f_hid = cmd_train->add_option("--hidden", train.hidden,
                                        "comma-separated hidden widths, e.g. 16,12");
    auto* f_act = cmd_train->add_option("--activations", train.activations,
                                        "relu|tanh, single value or one per layer");
    cmd_train->add_option("--lr", train.lr, "learning rate");
    cmd_train->add_option("--steps", train.steps, "SGD steps");
    cmd_train->add_option("--batch", train.batch, "minibatch size");
    cmd_train->add_option("--seed", train.seed, "random seed");
    cmd_train->callback([&train, f_ctx, f_dim, f_hid, f_act] {
        train.arch_flags_given =
            f_ctx->count() || f_dim->count() || f_hid->count() || f_act->count();
        run_train(train);
    });

    FuseOpts fuse;
    auto* cmd_fuse = app.add_subcommand("fuse", "fuse two models via optimal transport");
    cmd_fuse->add_option("--anchor", fuse.anchor, "anchor model (kept basis)")->required();
    cmd_fuse->add_option("--source", fuse.source, "source model (aligned onto the anchor)")
        ->required();
    cmd_fuse->add_option("--probe", fuse.probe, "corpus supplying probe contexts")->required();
    cmd_fuse->add_option("--out", fuse.out, "fused model file")->required();
    cmd_fuse->add_option("--trace", fuse.trace, "alignment trace JSON (default: <out>.trace.json)");
    cmd_fuse->add_option("--lambda", fuse.lambda, "anchor weight in the blend")
        ->check(CLI::Range(0.0, 1.0));
    cmd_fuse->add_option("--samples", fuse.samples, "probe contexts to sample");
    cmd_fuse->add_option("--solver", fuse.solver, "transport solver")
        ->check(CLI::IsMember({"exact", "sinkhorn"}));
    cmd_fuse->add_option("--epsilon", fuse.epsilon, "Sinkhorn regularization");
    cmd_fuse->add_option("--metric", fuse.metric, "activation distance")
        ->check(CLI::IsMember({"euclidean", "squared_euclidean", "one_minus_cosine"}));
    cmd_fuse->add_flag("--swap-roles", fuse.swap_roles, "treat --source as the anchor");
    cmd_fuse->add_option("--seed", fuse.seed, "random seed");
    cmd_fuse->callback([&fuse] { run_fuse(fuse); });

    LandscapeOpts land;
    auto* cmd_land = app.add_subcommand("landscape", "2D loss slice through three snapshots");
    cmd_land->add_option("--base", land.base, "start point theta0")->required();
    cmd_land->add_option("--target", land.target, "theta1, spans the alpha axis")->required();
    cmd_land->add_option("--aux", land.aux, "theta2, spans the beta axis")->required();
    cmd_land->add_option("--corpus", land.corpus, "evaluation corpus")->required();
    cmd_land->add_option("--out", land.out, "surface CSV")->required();
    cmd_land->add_option("--metadata", land.metadata,
                         "metadata JSON (default: <out>.meta.json)");
    cmd_land->add_option("--alpha-min", land.alpha_min, "alpha range start");
    cmd_land->add_option("--alpha-max", land.alpha_max, "alpha range end");
    cmd_land->add_option("--beta-min", land.beta_min, "beta range start");
    cmd_land->add_option("--beta-max", land.beta_max, "beta range end");
    cmd_land->add_option("--grid", land.grid, "points per axis");
    cmd_land->callback([&land] { run_landscape(land); });

    EntropyOpts entropy;
    auto* cmd_ent = app.add_subcommand("entropy", "predictive-entropy histogram");
    cmd_ent->add_option("--model", entropy.model, "model file")->required();
    cmd_ent->add_option("--corpus", entropy.corpus, "corpus of contexts")->required();
    cmd_ent->add_option("--out", entropy.out, "histogram CSV")->required();
    cmd_ent->add_option("--bins", entropy.bins, "uniform bins over [0, ln V]");
    cmd_ent->callback([&entropy] { run_entropy(entropy); });

    EvalOpts eval;
    auto* cmd_eval = app.add_subcommand("eval", "BLEU, TTR and robustness report");
    cmd_eval->add_option("--model", eval.model, "model file")->required();
    cmd_eval->add_option("--corpus", eval.corpora, "evaluation corpus (repeatable)")
        ->required();
    cmd_eval->add_option("--out", eval.out, "report JSON")->required();
    cmd_eval->add_option("--extra-refs", eval.extra_refs,
                         "paraphrase references aligned with the first corpus");
    cmd_eval->add_option("--noise-ratio", eval.noise_ratio,
                         "also run the prompt-noise attack on the first corpus")
        ->check(CLI::Range(0.0, 1.0));
    cmd_eval->add_option("--seed", eval.seed, "random seed");
    cmd_eval->callback([&eval] { run_eval(eval); });

    AttackOpts attack;
    auto* cmd_att = app.add_subcommand("attack", "prompt-noise robustness check");
    cmd_att->add_option("--model", attack.model, "model file")->required();
    cmd_att->add_option("--corpus", attack.corpus, "evaluation corpus")->required();
    cmd_att->add_option("--out", attack.out, "result JSON")->required();
    cmd_att->add_option("--noise-ratio", attack.noise_ratio, "share of prompt tokens replaced")
        ->check(CLI::Range(0.0, 1.0));
    cmd_att->add_option("--seed", attack.seed, "random seed");
    cmd_att->callback([&attack] { run_attack(attack); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
